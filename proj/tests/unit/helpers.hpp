#pragma once

#include <filesystem>
#include <string>

#include "npmix/linalg.hpp"
#include "npmix/random.hpp"

namespace testing {

inline npmix::Matrix random_spd(npmix::Index p, npmix::Rng& rng, double ridge = 0.5) {
    npmix::Matrix a(p, p);
    for (npmix::Index i = 0; i < p; ++i)
        for (npmix::Index j = 0; j < p; ++j) a(i, j) = rng.normal();
    npmix::Matrix m = a * a.transpose() / static_cast<double>(p) + ridge * npmix::Matrix::Identity(p, p);
    return npmix::symmetrize(m);
}

inline npmix::Matrix random_symmetric(npmix::Index p, npmix::Rng& rng) {
    npmix::Matrix a(p, p);
    for (npmix::Index i = 0; i < p; ++i)
        for (npmix::Index j = 0; j < p; ++j) a(i, j) = rng.normal();
    return npmix::symmetrize(a);
}

// Sample covariance of n standard-normal draws mixed through a random factor.
inline npmix::Matrix random_scatter(npmix::Index p, npmix::Index n, npmix::Rng& rng) {
    npmix::Matrix f = random_spd(p, rng, 0.2);
    npmix::Matrix x(n, p);
    for (npmix::Index i = 0; i < n; ++i)
        for (npmix::Index j = 0; j < p; ++j) x(i, j) = rng.normal();
    x = x * f;
    npmix::Matrix c = x.rowwise() - x.colwise().mean();
    return npmix::symmetrize(c.transpose() * c / static_cast<double>(n));
}

inline std::string temp_dir(const std::string& name) {
    const auto dir = std::filesystem::path(NPMIX_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace testing
