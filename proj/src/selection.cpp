#include "npmix/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "npmix/parallel.hpp"

namespace npmix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t sz(Index i) { return static_cast<std::size_t>(i); }

template <class T>
void check_list(const std::vector<T>& v, const char* name) {
    if (v.empty()) throw EmptyGrid(std::string("selection grid: ") + name + " is empty");
    if (!std::is_sorted(v.begin(), v.end()))
        throw InvalidInput(std::string("selection grid: ") + name + " must be sorted");
}

double log_sum_exp(const std::vector<double>& v) {
    double m = -kInf;
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace

void SelectionGrid::validate() const {
    check_list(K_values, "K_values");
    check_list(lambda_values, "lambda_values");
    check_list(h_values, "h_values");
    for (Index k : K_values)
        if (k < 1) throw InvalidInput("selection grid: K values must be positive");
    for (double l : lambda_values)
        if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidInput("selection grid: lambda must be nonnegative");
    for (double h : h_values)
        if (!(h > 0.0) || !std::isfinite(h)) throw InvalidInput("selection grid: h must be positive");
    if (cv_folds < 2) throw InvalidInput("selection grid: cv_folds must be at least 2");
}

double observed_loglik(const Dataset& data, const MixtureParams& params) {
    const Index K = params.components();
    double total = 0.0;
    std::vector<double> terms(sz(K));
    // Covariate values repeat in grid-sampled data; interpolate once per value.
    double last_z = std::numeric_limits<double>::quiet_NaN();
    PointParams pp;
    for (Index n = 0; n < data.size(); ++n) {
        if (!(data.z(n) == last_z)) {
            pp = interpolate(params, data.z(n));
            last_z = data.z(n);
        }
        const Vector x = data.x.row(n).transpose();
        for (Index k = 0; k < K; ++k) {
            const auto& c = pp[sz(k)];
            terms[sz(k)] = (c.pi > 0.0 ? std::log(c.pi) : -kInf) + log_density(x, c.mu, c.theta);
        }
        total += log_sum_exp(terms);
    }
    return total;
}

double degrees_of_freedom(const MixtureParams& params, const KernelConstants& kconst) {
    const Index K = params.components();
    const Index G = params.grid_size();
    const Index p = params.dim();
    double per_grid = 0.0;
    for (Index g = 0; g < G; ++g) {
        double count = static_cast<double>(K * p);
        for (Index k = 0; k < K; ++k) {
            const Matrix& t = params.theta[sz(k)][sz(g)];
            for (Index j = 0; j < p; ++j)
                for (Index i = 0; i <= j; ++i)
                    if (t(i, j) != 0.0) count += 1.0;
        }
        per_grid += count;
    }
    return (static_cast<double>(K - 1) + per_grid / static_cast<double>(G)) * kconst.df_unit;
}

double covariate_span(const Dataset& data) {
    const double span = data.z_max() - data.z_min();
    return span > 0.0 ? span : 1.0;
}

BicRecord bic_record(const Dataset& data, const FitResult& fit, const KernelSpec& kernel) {
    BicRecord r;
    r.K = fit.params.components();
    r.h = kernel.bandwidth;
    r.loglik = observed_loglik(data, fit.params);
    r.df = degrees_of_freedom(fit.params, kernel_constants(kernel, covariate_span(data)));
    r.bic = -2.0 * r.loglik + std::log(static_cast<double>(data.size())) * r.df;
    r.ok = std::isfinite(r.bic);
    if (!r.ok) r.status = "non-finite score";
    return r;
}

const FitCache::Entry& FitCache::get(const Dataset& data, const EMConfig& config) {
    const Key key{config.K, config.lambda, config.kernel.bandwidth, config.seed};
    {
        std::lock_guard lock(mutex_);
        auto it = entries_.find(key);
        if (it != entries_.end()) return *it->second;
    }
    auto entry = std::make_shared<Entry>();
    try {
        auto result = std::make_shared<FitResult>(fit(data, config));
        entry->record = bic_record(data, *result, config.kernel);
        entry->fit = std::move(result);
    } catch (const Error& e) {
        entry->record.ok = false;
        entry->record.status = e.what();
        entry->record.loglik = -kInf;
        entry->record.df = 0.0;
        entry->record.bic = kInf;
    }
    entry->record.K = config.K;
    entry->record.lambda = config.lambda;
    entry->record.h = config.kernel.bandwidth;
    std::lock_guard lock(mutex_);
    auto [it, inserted] = entries_.emplace(key, entry);
    return *it->second;
}

std::size_t FitCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

BicRecord bic_score(const Dataset& data, const EMConfig& config, FitCache* cache) {
    FitCache local;
    return (cache ? *cache : local).get(data, config).record;
}

std::vector<BicRecord> bic_sweep(const Dataset& data, const SelectionGrid& grid,
                                 const EMConfig& base, FitCache* cache) {
    grid.validate();
    std::vector<EMConfig> configs;
    for (Index K : grid.K_values)
        for (double lambda : grid.lambda_values)
            for (double h : grid.h_values) {
                EMConfig c = base;
                c.K = K;
                c.lambda = lambda;
                c.kernel.bandwidth = h;
                c.threads = 1;
                configs.push_back(c);
            }
    FitCache local;
    FitCache& store = cache ? *cache : local;
    std::vector<BicRecord> records(configs.size());
    parallel_for(static_cast<std::int64_t>(configs.size()), base.threads, [&](std::int64_t i) {
        records[static_cast<std::size_t>(i)] = store.get(data, configs[static_cast<std::size_t>(i)]).record;
    });
    return records;
}

std::vector<int> cv_fold_ids(const Dataset& data, int folds) {
    if (folds < 2) throw InvalidInput("cross-validation needs at least 2 folds");
    const Index N = data.size();
    if (N < folds) throw InvalidInput("cross-validation: fewer observations than folds");
    std::vector<Index> order(sz(N));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return data.z(a) < data.z(b); });
    std::vector<int> ids(sz(N));
    for (std::size_t r = 0; r < order.size(); ++r)
        ids[sz(order[r])] = static_cast<int>(r % static_cast<std::size_t>(folds));
    return ids;
}

namespace {

bool better_min(double candidate, double best) { return candidate < best; }

}  // namespace

Index select_K(const std::vector<BicRecord>& records) {
    std::map<Index, double> best;
    for (const auto& r : records) {
        auto [it, inserted] = best.emplace(r.K, r.bic);
        if (!inserted) it->second = std::min(it->second, r.bic);
    }
    if (best.empty()) throw EmptyGrid("select_K: no records");
    Index chosen = best.begin()->first;
    double score = best.begin()->second;
    for (const auto& [K, b] : best)
        if (better_min(b, score)) {
            chosen = K;
            score = b;
        }
    return chosen;
}

Index select_K_at_h(const std::vector<BicRecord>& records, double h) {
    std::vector<BicRecord> at;
    for (const auto& r : records)
        if (r.h == h) at.push_back(r);
    return select_K(at);
}

double select_lambda_at_h(const std::vector<BicRecord>& records, Index K, double h) {
    std::vector<BicRecord> at;
    for (const auto& r : records)
        if (r.h == h && r.K == K) at.push_back(r);
    return select_lambda(at, K);
}

double select_lambda(const std::vector<BicRecord>& records, Index K) {
    std::map<double, double> best;
    for (const auto& r : records) {
        if (r.K != K) continue;
        auto [it, inserted] = best.emplace(r.lambda, r.bic);
        if (!inserted) it->second = std::min(it->second, r.bic);
    }
    if (best.empty()) throw EmptyGrid("select_lambda: no records for this K");
    // Walk from the largest lambda so ties keep the sparser model.
    auto it = best.rbegin();
    double chosen = it->first;
    double score = it->second;
    for (; it != best.rend(); ++it)
        if (better_min(it->second, score)) {
            chosen = it->first;
            score = it->second;
        }
    return chosen;
}

std::vector<CvRecord> cross_validate_h(const Dataset& data, Index K, double lambda,
                                       const std::vector<double>& h_values, int folds,
                                       const EMConfig& base) {
    const std::vector<int> ids = cv_fold_ids(data, folds);
    std::vector<std::vector<Index>> train(sz(folds)), test(sz(folds));
    for (Index n = 0; n < data.size(); ++n)
        for (int f = 0; f < folds; ++f)
            (ids[sz(n)] == f ? test : train)[sz(f)].push_back(n);

    const std::size_t H = h_values.size();
    std::vector<double> scores(H * sz(folds), -kInf);
    parallel_for(static_cast<std::int64_t>(H * sz(folds)), base.threads, [&](std::int64_t task) {
        const std::size_t hi = static_cast<std::size_t>(task) / sz(folds);
        const std::size_t f = static_cast<std::size_t>(task) % sz(folds);
        EMConfig c = base;
        c.K = K;
        c.lambda = lambda;
        c.kernel.bandwidth = h_values[hi];
        c.threads = 1;
        try {
            const Dataset tr = data.subset(train[f]);
            const Dataset te = data.subset(test[f]);
            const FitResult result = fit(tr, c);
            scores[static_cast<std::size_t>(task)] = observed_loglik(te, result.params);
        } catch (const Error&) {
            scores[static_cast<std::size_t>(task)] = -kInf;
        }
    });

    std::vector<CvRecord> out(H);
    for (std::size_t hi = 0; hi < H; ++hi) {
        out[hi].h = h_values[hi];
        double total = 0.0;
        for (std::size_t f = 0; f < sz(folds); ++f) {
            const double s = scores[hi * sz(folds) + f];
            if (!std::isfinite(s)) ++out[hi].failed_folds;
            total += s;
        }
        out[hi].mean_loglik = total / static_cast<double>(data.size());
    }
    return out;
}

SelectionResult select(const Dataset& data, const SelectionGrid& grid, const EMConfig& base,
                       FitCache* cache) {
    grid.validate();
    SelectionResult out;
    out.records = bic_sweep(data, grid, base, cache);
    out.K = select_K(out.records);
    out.lambda = select_lambda(out.records, out.K);
    if (grid.h_values.size() == 1) {
        out.h = grid.h_values.front();
        return out;
    }
    out.cv = cross_validate_h(data, out.K, out.lambda, grid.h_values, grid.cv_folds, base);
    // Largest h first so ties keep the smoother fit.
    out.h = out.cv.back().h;
    double score = out.cv.back().mean_loglik;
    for (auto it = out.cv.rbegin(); it != out.cv.rend(); ++it)
        if (it->mean_loglik > score) {
            out.h = it->h;
            score = it->mean_loglik;
        }
    return out;
}

}  // namespace npmix
