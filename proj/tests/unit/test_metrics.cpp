#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "npmix/metrics.hpp"
#include "npmix/simgen.hpp"

using namespace npmix;

namespace {

MixtureParams random_mixture(Index K, Index G, Index p, Rng& rng) {
    MixtureParams mp = MixtureParams::zeros(K, GridSpec::uniform(0, 1, G), p);
    for (Index g = 0; g < G; ++g) {
        double total = 0;
        for (Index k = 0; k < K; ++k) {
            mp.pi(k, g) = 0.2 + rng.uniform();
            total += mp.pi(k, g);
            mp.mu[k][g] = Vector::Zero(p);
            mp.theta[k][g] = testing::random_spd(p, rng);
        }
        mp.pi.col(g) /= total;
    }
    return mp;
}

}  // namespace

TEST_CASE("alignment") {
    Rng rng(4);
    const MixtureParams truth = random_mixture(2, 4, 3, rng);
    CHECK(align_labels(truth, truth) == std::vector<Index>{0, 1});
    CHECK(align_labels(permute_components(truth, {1, 0}), truth) == std::vector<Index>{1, 0});

    const MixtureParams three = random_mixture(3, 5, 4, rng);
    MixtureParams est = permute_components(three, {1, 2, 0});
    for (auto& row : est.theta)
        for (auto& t : row) t += Matrix::Constant(4, 4, 1e-3);
    // component k of est is component perm[k] of truth; the inverse maps back
    const auto a = align_labels(est, three);
    for (Index k = 0; k < 3; ++k) CHECK(est.theta[a[k]][0].isApprox(three.theta[k][0] + Matrix::Constant(4, 4, 1e-3)));
    CHECK(a == std::vector<Index>{2, 0, 1});

    // identity wins exact ties
    MixtureParams twin = truth;
    twin.theta[1] = twin.theta[0];
    CHECK(align_labels(twin, twin) == std::vector<Index>{0, 1});

    CHECK_THROWS_AS(align_labels(random_mixture(2, 4, 3, rng), random_mixture(3, 4, 3, rng)), DimensionMismatch);
}

TEST_CASE("Hungarian matches exhaustive search") {
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const Index n = 2 + rep % 5;
        Matrix c(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) c(i, j) = rng.uniform();
        const auto h = hungarian(c);
        double hc = 0;
        for (Index i = 0; i < n; ++i) hc += c(i, h[i]);
        std::vector<Index> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        double best = 1e300;
        do {
            double s = 0;
            for (Index i = 0; i < n; ++i) s += c(i, perm[i]);
            best = std::min(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(hc == doctest::Approx(best).epsilon(1e-12));
    }
    Rng r2(6);
    const MixtureParams eight = random_mixture(8, 2, 3, r2);
    std::vector<Index> perm{3, 7, 0, 5, 1, 6, 2, 4};
    const auto a = align_labels(permute_components(eight, perm), eight);
    for (Index k = 0; k < 8; ++k) CHECK(perm[a[k]] == k);
}

TEST_CASE("KL loss") {
    CHECK(kl_loss(Matrix::Identity(3, 3), Matrix::Identity(3, 3)) == doctest::Approx(0.0));
    CHECK(std::abs(kl_loss(Matrix::Identity(1, 1), Matrix::Constant(1, 1, 2.0)) - 0.30685281944005469) < 1e-14);
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        const Matrix s = testing::random_spd(4, rng);
        const Matrix t = testing::random_spd(4, rng);
        Matrix m(4, 4);
        for (Index i = 0; i < 4; ++i)
            for (Index j = 0; j < 4; ++j) m(i, j) = rng.normal();
        m += 3 * Matrix::Identity(4, 4);
        const Matrix mi = m.inverse();
        const double a = kl_loss(s, t);
        const double b = kl_loss(symmetrize(m * s * m.transpose()), symmetrize(mi.transpose() * t * mi));
        CHECK(a >= 0.0);
        CHECK(std::abs(a - b) < 1e-9 * (1 + a));
        CHECK(kl_loss(s, s.inverse()) < 1e-9);
    }
    Matrix bad = Matrix::Identity(2, 2);
    bad(0, 0) = -1;
    CHECK_THROWS_AS(kl_loss(Matrix::Identity(2, 2), bad), NotPositiveDefinite);
}

TEST_CASE("edge rates") {
    Matrix truth = Matrix::Identity(3, 3);
    truth(0, 1) = truth(1, 0) = 0.3;
    Matrix est = truth;
    est(0, 2) = est(2, 0) = 0.1;
    const auto r = edge_rates(truth, est);
    CHECK(r.tpr == 1.0);
    CHECK(r.fpr == 0.5);

    const auto none = edge_rates(Matrix::Identity(3, 3), Matrix::Identity(3, 3));
    CHECK(none.tpr == 1.0);
    CHECK(none.fpr == 0.0);
    const auto dense = edge_rates(Matrix::Identity(3, 3), Matrix::Constant(3, 3, 0.1) + Matrix::Identity(3, 3));
    CHECK(dense.tpr == 1.0);
    CHECK(dense.fpr == 1.0);
    Matrix tiny = Matrix::Identity(3, 3);
    tiny(1, 2) = tiny(2, 1) = 1e-300;
    CHECK(edge_rates(Matrix::Identity(3, 3), tiny).fpr == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("report") {
    const Scenario sc = build_scenario(scenario_preset("desk_ar_block"));
    const EvalReport same = report(sc.truth, sc.truth);
    CHECK(same.atpr == 1.0);
    CHECK(same.afpr == 0.0);
    CHECK(same.asl == 0.0);
    CHECK(same.afl == 0.0);
    CHECK(same.akl < 1e-9);
    CHECK(same.rase_pi == 0.0);

    const EvalReport swapped = report(permute_components(sc.truth, {1, 0}), sc.truth);
    CHECK(swapped.alignment == std::vector<Index>{1, 0});
    CHECK(swapped.afl == 0.0);
    CHECK(swapped.rase_pi == 0.0);
    CHECK(swapped.akl < 1e-9);

    MixtureParams dense = sc.truth;
    for (auto& row : dense.theta)
        for (auto& t : row) t += Matrix::Constant(10, 10, 1e-4);
    const EvalReport d = report(dense, sc.truth);
    CHECK(d.atpr == 1.0);
    CHECK(d.afpr == 1.0);

    Rng rng(3);
    for (int rep = 0; rep < 5; ++rep) {
        const MixtureParams a = random_mixture(2, 3, 4, rng);
        const MixtureParams b = random_mixture(2, 3, 4, rng);
        const EvalReport r = report(a, b);
        CHECK(r.asl <= r.afl + 1e-12);
        CHECK(r.akl >= 0.0);
        CHECK(r.rase_pi == doctest::Approx(std::sqrt(r.rase_pi_sq)));
        CHECK(r.atpr >= 0.0);
        CHECK(r.atpr <= 1.0);
        CHECK(r.afpr >= 0.0);
        CHECK(r.afpr <= 1.0);
    }
}

TEST_CASE("adjacent alignment") {
    const Scenario sc = build_scenario(scenario_preset("desk_ar_block"));
    CHECK(adjacent_identity_rate(sc.truth) == 1.0);
    MixtureParams flip = sc.truth;
    std::swap(flip.theta[0][5], flip.theta[1][5]);
    CHECK(adjacent_alignment(flip, 4) == std::vector<Index>{1, 0});
    CHECK(adjacent_identity_rate(flip) == doctest::Approx(0.8));
}
