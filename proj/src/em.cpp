#include "npmix/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "npmix/parallel.hpp"
#include "npmix/random.hpp"

namespace npmix {

// ---------------------------------------------------------------------------
// Domain types

void Dataset::validate() const {
    if (x.rows() != z.size()) throw DimensionMismatch("dataset: x and z have different lengths");
    if (size() < 2) throw InvalidInput("dataset: need at least 2 observations");
    if (dim() < 1) throw InvalidInput("dataset: need at least 1 variable");
    if (!x.allFinite() || !z.allFinite()) throw InvalidInput("dataset: non-finite entries");
}

Dataset Dataset::subset(std::span<const Index> rows) const {
    Dataset out;
    out.x.resize(static_cast<Index>(rows.size()), dim());
    out.z.resize(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.x.row(static_cast<Index>(i)) = x.row(rows[i]);
        out.z(static_cast<Index>(i)) = z(rows[i]);
    }
    return out;
}

GridSpec GridSpec::uniform(double lo, double hi, Index count) {
    if (count < 1) throw InvalidInput("grid: need at least one point");
    GridSpec grid;
    grid.points.resize(static_cast<std::size_t>(count));
    if (count == 1) {
        grid.points[0] = lo;
        return grid;
    }
    for (Index i = 0; i < count; ++i)
        grid.points[static_cast<std::size_t>(i)] =
            lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    grid.points.back() = hi;
    return grid;
}

void GridSpec::validate(Index min_points) const {
    if (size() < min_points)
        throw InvalidInput("grid: need at least " + std::to_string(min_points) + " points");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!std::isfinite(points[i])) throw InvalidInput("grid: non-finite point");
        if (i > 0 && !(points[i] > points[i - 1]))
            throw InvalidInput("grid: points must be strictly increasing");
    }
}

MixtureParams MixtureParams::zeros(Index components, const GridSpec& grid, Index dim) {
    MixtureParams mp;
    mp.grid = grid;
    const Index G = grid.size();
    mp.pi = Matrix::Zero(components, G);
    mp.mu.assign(static_cast<std::size_t>(components),
                 std::vector<Vector>(static_cast<std::size_t>(G), Vector::Zero(dim)));
    mp.theta.assign(static_cast<std::size_t>(components),
                    std::vector<Matrix>(static_cast<std::size_t>(G), Matrix::Identity(dim, dim)));
    return mp;
}

void EMConfig::validate() const {
    if (K < 1) throw InvalidInput("em: K must be positive");
    if (lambda < 0.0 || !std::isfinite(lambda)) throw InvalidInput("em: lambda must be nonnegative");
    if (max_iters < 1) throw InvalidInput("em: max_iters must be at least 1");
    if (!(rel_tol > 0.0)) throw InvalidInput("em: rel_tol must be positive");
    if (restarts < 1) throw InvalidInput("em: restarts must be at least 1");
    kernel.validate();
}

// ---------------------------------------------------------------------------
// Densities and single steps

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

std::size_t sz(Index i) { return static_cast<std::size_t>(i); }

// One mixture at one covariate value, with its precision factorized.
struct Component {
    double log_pi = 0.0;
    Vector mu;
    Matrix lower;
    double half_logdet = 0.0;
};

Component make_component(double pi, const Vector& mu, const Matrix& theta) {
    Component c;
    c.log_pi = pi > 0.0 ? std::log(pi) : -std::numeric_limits<double>::infinity();
    c.mu = mu;
    CholeskyFactor f = cholesky(theta);
    c.half_logdet = 0.5 * f.log_det();
    c.lower = std::move(f.lower);
    return c;
}

// log phi(x_n | mu, theta) for the given rows.
Vector log_phi_rows(const Matrix& x, const std::vector<Index>& rows, const Component& c) {
    const Index p = x.cols();
    const Index m = static_cast<Index>(rows.size());
    Matrix d(m, p);
    for (Index i = 0; i < m; ++i) d.row(i) = x.row(rows[sz(i)]) - c.mu.transpose();
    const Matrix y = d * c.lower.triangularView<Eigen::Lower>();
    const double base = -0.5 * static_cast<double>(p) * kLog2Pi + c.half_logdet;
    return (base - 0.5 * y.rowwise().squaredNorm().array()).matrix();
}

double log_sum_exp(const double* v, Index k) {
    double m = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < k; ++i) m = std::max(m, v[i]);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (Index i = 0; i < k; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

// Column-wise normalization of log-terms into probabilities.
void normalize_columns(Matrix& logterms) {
    const Index K = logterms.rows();
    for (Index n = 0; n < logterms.cols(); ++n) {
        double m = -std::numeric_limits<double>::infinity();
        for (Index k = 0; k < K; ++k) m = std::max(m, logterms(k, n));
        double s = 0.0;
        for (Index k = 0; k < K; ++k) {
            const double e = std::isfinite(m) ? std::exp(logterms(k, n) - m) : 1.0;
            logterms(k, n) = e;
            s += e;
        }
        for (Index k = 0; k < K; ++k) logterms(k, n) /= s;
    }
}

Matrix interpolate_theta(const Matrix& lo, const Matrix& hi, double t) {
    if (t == 0.0) return lo;
    Matrix theta = symmetrize((1.0 - t) * lo + t * hi);
    if (!try_cholesky(theta)) theta = jitter_until_pd(theta, 1e-8);
    return theta;
}

}  // namespace

GridBracket bracket(const GridSpec& grid, double z) {
    const auto& u = grid.points;
    const Index G = grid.size();
    if (G <= 1 || z <= u.front()) return {0, 0, 0.0};
    if (z >= u.back()) return {G - 1, G - 1, 0.0};
    const auto it = std::upper_bound(u.begin(), u.end(), z);
    const Index upper = static_cast<Index>(it - u.begin());
    const Index lower = upper - 1;
    const double t = (z - u[sz(lower)]) / (u[sz(upper)] - u[sz(lower)]);
    if (t == 0.0) return {lower, lower, 0.0};
    return {lower, upper, t};
}

double log_density(const Vector& x, const Vector& mu, const Matrix& theta) {
    if (x.size() != mu.size() || theta.rows() != x.size())
        throw DimensionMismatch("log_density: dimension mismatch");
    const CholeskyFactor f = cholesky(theta);
    const Vector y = f.lower.transpose() * (x - mu);
    return -0.5 * static_cast<double>(x.size()) * kLog2Pi + 0.5 * f.log_det() -
           0.5 * y.squaredNorm();
}

Responsibilities e_step(const Dataset& data, std::span<const PointParams> params) {
    const Index N = data.size();
    if (static_cast<Index>(params.size()) != N)
        throw DimensionMismatch("e_step: need parameters for every observation");
    const Index K = N > 0 ? static_cast<Index>(params[0].size()) : 0;
    Matrix logterms(K, N);
    for (Index n = 0; n < N; ++n) {
        const Vector x = data.x.row(n).transpose();
        for (Index k = 0; k < K; ++k) {
            const auto& c = params[sz(n)][sz(k)];
            const double lp = c.pi > 0.0 ? std::log(c.pi) : -std::numeric_limits<double>::infinity();
            logterms(k, n) = lp + log_density(x, c.mu, c.theta);
        }
    }
    normalize_columns(logterms);
    return Responsibilities{std::move(logterms)};
}

Vector m_step_pi(const Responsibilities& gamma, const Vector& weights) {
    const double total = weights.sum();
    if (!(total > 0.0)) throw AllWeightsZero(std::numeric_limits<double>::quiet_NaN());
    Vector pi = (gamma.gamma * weights) / total;
    pi /= pi.sum();
    return pi;
}

Vector m_step_mu(const Dataset& data, const Vector& gamma_k, const Vector& weights) {
    const Vector c = gamma_k.cwiseProduct(weights);
    const double a = c.sum();
    if (!(a > 0.0)) throw DegenerateComponent("m_step_mu: mixture has no weight");
    return data.x.transpose() * c / a;
}

Matrix weighted_scatter(const Dataset& data, const Vector& gamma_k, const Vector& weights,
                        const Vector& mu) {
    const Vector c = gamma_k.cwiseProduct(weights);
    const double a = c.sum();
    if (!(a > 0.0)) throw DegenerateComponent("weighted_scatter: mixture has no weight");
    const Matrix d = data.x.rowwise() - mu.transpose();
    return symmetrize(d.transpose() * (c.asDiagonal() * d) / a);
}

GlassoSolution m_step_theta(const Dataset& data, const Vector& gamma_k, const Vector& weights,
                            const Vector& mu, double lambda, const GlassoSolution* warm_start) {
    const double a = gamma_k.cwiseProduct(weights).sum();
    GlassoProblem problem;
    problem.scatter = repair_scatter(weighted_scatter(data, gamma_k, weights, mu));
    problem.lambda = effective_lambda(lambda, data.size(), a);
    return glasso_solve(problem, warm_start);
}

PointParams interpolate(const MixtureParams& params, double z) {
    const GridBracket b = bracket(params.grid, z);
    const Index K = params.components();
    PointParams out(sz(K));
    double total = 0.0;
    for (Index k = 0; k < K; ++k) {
        auto& c = out[sz(k)];
        const auto& mus = params.mu[sz(k)];
        const auto& thetas = params.theta[sz(k)];
        if (b.t == 0.0) {
            c.pi = params.pi(k, b.lower);
            c.mu = mus[sz(b.lower)];
            c.theta = thetas[sz(b.lower)];
        } else {
            c.pi = (1.0 - b.t) * params.pi(k, b.lower) + b.t * params.pi(k, b.upper);
            c.mu = (1.0 - b.t) * mus[sz(b.lower)] + b.t * mus[sz(b.upper)];
            c.theta = interpolate_theta(thetas[sz(b.lower)], thetas[sz(b.upper)], b.t);
        }
        total += c.pi;
    }
    if (total > 0.0)
        for (auto& c : out) c.pi /= total;
    return out;
}

double local_objective(const Dataset& data, const MixtureParams& params, Index g,
                       const Vector& weights, double lambda) {
    const Index K = params.components();
    std::vector<Index> rows;
    for (Index n = 0; n < data.size(); ++n)
        if (weights(n) > 0.0) rows.push_back(n);
    Matrix terms(K, static_cast<Index>(rows.size()));
    double penalty = 0.0;
    for (Index k = 0; k < K; ++k) {
        const Component c =
            make_component(params.pi(k, g), params.mu[sz(k)][sz(g)], params.theta[sz(k)][sz(g)]);
        terms.row(k) = (c.log_pi + log_phi_rows(data.x, rows, c).array()).matrix().transpose();
        penalty += offdiag_l1(params.theta[sz(k)][sz(g)]);
    }
    double s = 0.0;
    for (Index i = 0; i < terms.cols(); ++i)
        s += weights(rows[sz(i)]) * log_sum_exp(terms.col(i).data(), K);
    return s / static_cast<double>(data.size()) - lambda * penalty;
}

Matrix grid_weights(const Dataset& data, const KernelSpec& kernel, const GridSpec& grid) {
    const Index G = grid.size();
    Matrix w(G, data.size());
    const std::span<const double> zs(data.z.data(), sz(data.size()));
    for (Index g = 0; g < G; ++g)
        w.row(g) = kernel_weights(kernel, zs, grid.points[sz(g)]).transpose();
    return w;
}

// ---------------------------------------------------------------------------
// EM engine

namespace {

constexpr int kMaxFrozenStreak = 10;

enum class Mode {
    Local,             // pi, mu, theta all local to each grid point
    SharedComponents,  // local pi; (mu, theta) shared across grid points
};

// Everything about the data/grid layout that stays fixed during a fit.
struct Layout {
    const Dataset* data = nullptr;
    GridSpec grid;
    Matrix weights;                              // G x N
    std::vector<double> weight_totals;           // per grid point
    std::vector<std::vector<Index>> support;     // rows with positive weight, per grid point
    std::vector<std::vector<Index>> group_rows;  // observations sharing one z value
    std::vector<GridBracket> group_bracket;
    Index K = 1;
    double lambda = 0.0;
    Mode mode = Mode::Local;
    int threads = 1;

    Index N() const { return data->size(); }
    Index G() const { return grid.size(); }
};

Layout make_layout(const Dataset& data, const GridSpec& grid, Matrix weights, Index K,
                   double lambda, Mode mode, int threads) {
    Layout L;
    L.data = &data;
    L.grid = grid;
    L.weights = std::move(weights);
    L.K = K;
    L.lambda = lambda;
    L.mode = mode;
    L.threads = threads;
    const Index G = grid.size();
    const Index N = data.size();
    L.weight_totals.resize(sz(G));
    L.support.resize(sz(G));
    for (Index g = 0; g < G; ++g) {
        double total = 0.0;
        for (Index n = 0; n < N; ++n) {
            total += L.weights(g, n);
            if (L.weights(g, n) > 0.0) L.support[sz(g)].push_back(n);
        }
        if (!(total > 0.0)) throw AllWeightsZero(grid.points[sz(g)]);
        L.weight_totals[sz(g)] = total;
    }
    std::vector<Index> order(sz(N));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return data.z(a) < data.z(b); });
    for (std::size_t i = 0; i < order.size(); ++i) {
        const Index n = order[i];
        if (i == 0 || data.z(n) != data.z(order[i - 1])) {
            L.group_rows.emplace_back();
            L.group_bracket.push_back(G == 1 ? GridBracket{} : bracket(grid, data.z(n)));
        }
        L.group_rows.back().push_back(n);
    }
    return L;
}

struct State {
    MixtureParams params;
    std::vector<std::vector<GlassoSolution>> solutions;  // [k][g]; empty theta = none yet
    std::vector<std::vector<int>> frozen;                // consecutive frozen iterations
    Responsibilities gamma;
};

// Factorized components at every grid point: [g][k].
std::vector<std::vector<Component>> factor_grid(const MixtureParams& params) {
    const Index G = params.grid_size();
    const Index K = params.components();
    std::vector<std::vector<Component>> out(sz(G), std::vector<Component>(sz(K)));
    for (Index g = 0; g < G; ++g)
        for (Index k = 0; k < K; ++k)
            out[sz(g)][sz(k)] =
                make_component(params.pi(k, g), params.mu[sz(k)][sz(g)], params.theta[sz(k)][sz(g)]);
    return out;
}

// Shared E-step at the observation points using interpolated parameters.
Responsibilities engine_e_step(const Layout& L, const MixtureParams& params,
                               const std::vector<std::vector<Component>>& grid_comps) {
    const Index K = L.K;
    Matrix logterms(K, L.N());
    const auto groups = static_cast<std::int64_t>(L.group_rows.size());
    parallel_for(groups, L.threads, [&](std::int64_t gi) {
        const auto& rows = L.group_rows[sz(gi)];
        const GridBracket& b = L.group_bracket[sz(gi)];
        std::vector<Component> local;
        const std::vector<Component>* comps = &grid_comps[sz(b.lower)];
        if (b.t != 0.0) {
            const PointParams pp = interpolate(params, L.data->z(rows.front()));
            local.reserve(sz(K));
            for (const auto& c : pp) local.push_back(make_component(c.pi, c.mu, c.theta));
            comps = &local;
        }
        for (Index k = 0; k < K; ++k) {
            const Component& c = (*comps)[sz(k)];
            const Vector lp = log_phi_rows(L.data->x, rows, c);
            for (std::size_t i = 0; i < rows.size(); ++i)
                logterms(k, rows[i]) = c.log_pi + lp(static_cast<Index>(i));
        }
    });
    normalize_columns(logterms);
    return Responsibilities{std::move(logterms)};
}

std::vector<double> engine_objectives(const Layout& L, const MixtureParams& params,
                                      const std::vector<std::vector<Component>>& grid_comps) {
    const Index G = L.G();
    const Index K = L.K;
    std::vector<double> obj(sz(G));
    parallel_for(G, L.threads, [&](std::int64_t gi) {
        const Index g = static_cast<Index>(gi);
        const auto& rows = L.support[sz(g)];
        Matrix terms(K, static_cast<Index>(rows.size()));
        double penalty = 0.0;
        for (Index k = 0; k < K; ++k) {
            const Component& c = grid_comps[sz(g)][sz(k)];
            terms.row(k) = (c.log_pi + log_phi_rows(L.data->x, rows, c).array()).matrix().transpose();
            penalty += offdiag_l1(params.theta[sz(k)][sz(g)]);
        }
        double s = 0.0;
        for (Index i = 0; i < terms.cols(); ++i)
            s += L.weights(g, rows[sz(i)]) * log_sum_exp(terms.col(i).data(), K);
        obj[sz(g)] = s / static_cast<double>(L.N()) - L.lambda * penalty;
    });
    return obj;
}

// Updates (mu_k, theta_k) from observation weights c. Returns false when the
// mixture is degenerate (the caller decides whether to freeze it).
bool update_component(const Layout& L, const Vector& c, double mass_floor, Vector& mu,
                      Matrix& theta, GlassoSolution& solution) {
    const double a = c.sum();
    if (!(a >= mass_floor) || !(a > 0.0)) return false;
    const Dataset& data = *L.data;
    const Vector new_mu = data.x.transpose() * c / a;
    const Matrix d = data.x.rowwise() - new_mu.transpose();
    GlassoProblem problem;
    problem.scatter = repair_scatter(symmetrize(d.transpose() * (c.asDiagonal() * d) / a));
    problem.lambda = effective_lambda(L.lambda, L.N(), a);

    const bool has_previous = solution.theta.size() != 0;
    GlassoSolution next = glasso_solve(problem, has_previous ? &solution : nullptr);
    // Generalized M-step: never accept a theta that is worse for this
    // subproblem than the one already held.
    if (has_previous && glasso_objective(problem, solution.theta) > glasso_objective(problem, next.theta)) {
        next = solution;
    }
    mu = new_mu;
    theta = next.theta;
    solution = std::move(next);
    return true;
}

// M-step at every grid point from the shared responsibilities. Returns false
// when some mixture stays degenerate too long (the restart has failed).
bool engine_m_step(const Layout& L, State& s) {
    const Index G = L.G();
    const Index K = L.K;
    const Matrix& gamma = s.gamma.gamma;

    for (Index g = 0; g < G; ++g) {
        const Vector w = L.weights.row(g).transpose();
        Vector pi = gamma * w / L.weight_totals[sz(g)];
        pi /= pi.sum();
        s.params.pi.col(g) = pi;
    }

    std::vector<char> ok;
    if (L.mode == Mode::Local) {
        ok.assign(sz(G * K), 1);
        parallel_for(G * K, L.threads, [&](std::int64_t task) {
            const Index g = static_cast<Index>(task) / K;
            const Index k = static_cast<Index>(task) % K;
            const Vector c = gamma.row(k).transpose().cwiseProduct(L.weights.row(g).transpose());
            const double floor_mass = 1e-12 * L.weight_totals[sz(g)];
            auto& sol = s.solutions[sz(k)][sz(g)];
            if (update_component(L, c, floor_mass, s.params.mu[sz(k)][sz(g)],
                                 s.params.theta[sz(k)][sz(g)], sol)) {
                s.frozen[sz(k)][sz(g)] = 0;
            } else if (sol.theta.size() == 0 || ++s.frozen[sz(k)][sz(g)] >= kMaxFrozenStreak) {
                ok[sz(task)] = 0;
            }
        });
    } else {
        ok.assign(sz(K), 1);
        parallel_for(K, L.threads, [&](std::int64_t task) {
            const Index k = static_cast<Index>(task);
            const Vector c = gamma.row(k).transpose();
            auto& sol = s.solutions[sz(k)][0];
            Vector mu = s.params.mu[sz(k)][0];
            Matrix theta = s.params.theta[sz(k)][0];
            if (update_component(L, c, 1e-12 * static_cast<double>(L.N()), mu, theta, sol)) {
                s.frozen[sz(k)][0] = 0;
            } else if (sol.theta.size() == 0 || ++s.frozen[sz(k)][0] >= kMaxFrozenStreak) {
                ok[sz(task)] = 0;
            }
            for (Index g = 0; g < G; ++g) {
                s.params.mu[sz(k)][sz(g)] = mu;
                s.params.theta[sz(k)][sz(g)] = theta;
            }
        });
    }
    return std::all_of(ok.begin(), ok.end(), [](char v) { return v != 0; });
}

struct EngineRun {
    State state;
    std::vector<std::vector<double>> trace;  // [g][t]
    bool converged = false;
    bool failed = false;
    int iterations = 0;
    double mean_objective = -std::numeric_limits<double>::infinity();
};

State empty_state(const Layout& L) {
    State s;
    s.params = MixtureParams::zeros(L.K, L.grid, L.data->dim());
    s.solutions.assign(sz(L.K), std::vector<GlassoSolution>(sz(L.G())));
    s.frozen.assign(sz(L.K), std::vector<int>(sz(L.G()), 0));
    return s;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

void record(EngineRun& run, const std::vector<double>& obj) {
    for (std::size_t g = 0; g < obj.size(); ++g) run.trace[g].push_back(obj[g]);
    run.mean_objective = mean_of(obj);
}

EngineRun iterate(const Layout& L, State state, int max_iters, double rel_tol) {
    EngineRun run;
    run.trace.assign(sz(L.G()), {});
    auto comps = factor_grid(state.params);
    std::vector<double> obj = engine_objectives(L, state.params, comps);
    record(run, obj);

    for (int it = 1; it <= max_iters; ++it) {
        state.gamma = engine_e_step(L, state.params, comps);
        if (!engine_m_step(L, state)) {
            run.failed = true;
            break;
        }
        comps = factor_grid(state.params);
        std::vector<double> next = engine_objectives(L, state.params, comps);
        double change = 0.0;
        for (std::size_t g = 0; g < next.size(); ++g) {
            const double denom = std::max(std::abs(obj[g]), std::numeric_limits<double>::min());
            change += std::abs(next[g] - obj[g]) / denom;
        }
        change /= static_cast<double>(next.size());
        obj = std::move(next);
        record(run, obj);
        run.iterations = it;
        if (change <= rel_tol) {
            run.converged = true;
            break;
        }
    }
    run.state = std::move(state);
    return run;
}

// Random responsibilities from a symmetric Dirichlet(1) per observation.
Responsibilities dirichlet_responsibilities(Index K, Index N, std::uint64_t seed) {
    Rng rng(seed);
    Matrix g(K, N);
    for (Index n = 0; n < N; ++n) {
        double s = 0.0;
        for (Index k = 0; k < K; ++k) {
            g(k, n) = rng.exponential();
            s += g(k, n);
        }
        g.col(n) /= s;
    }
    return Responsibilities{std::move(g)};
}

// One restart: initial M-step from random responsibilities, then EM.
EngineRun run_restart(const Layout& L, std::uint64_t seed, int max_iters, double rel_tol) {
    State s = empty_state(L);
    s.gamma = dirichlet_responsibilities(L.K, L.N(), seed);
    if (!engine_m_step(L, s)) {
        EngineRun failed;
        failed.failed = true;
        return failed;
    }
    return iterate(L, std::move(s), max_iters, rel_tol);
}

EngineRun run_from(const Layout& L, const MixtureParams& init, int max_iters, double rel_tol) {
    if (init.components() != L.K || init.grid_size() != L.G() || init.dim() != L.data->dim())
        throw DimensionMismatch("fit: initial model does not match the data / grid");
    State s = empty_state(L);
    s.params = init;
    s.params.grid = L.grid;
    for (Index k = 0; k < L.K; ++k)
        for (Index g = 0; g < L.G(); ++g) {
            auto& sol = s.solutions[sz(k)][sz(g)];
            sol.theta = init.theta[sz(k)][sz(g)];
            sol.w = invert_spd(sol.theta);
        }
    // Responsibilities matching the starting point.
    s.gamma = engine_e_step(L, s.params, factor_grid(s.params));
    State start = s;
    EngineRun run = iterate(L, std::move(s), max_iters, rel_tol);
    // The shared E-step can lose a little objective near a fixed point; a
    // refit from a saved model must not end below where it began.
    const double start_objective = run.trace.empty() || run.trace[0].empty() ? run.mean_objective : [&] {
        double sum = 0.0;
        for (const auto& tr : run.trace) sum += tr.front();
        return sum / static_cast<double>(run.trace.size());
    }();
    if (!run.failed && run.mean_objective < start_objective) {
        run.state = std::move(start);
        run.mean_objective = start_objective;
        for (auto& tr : run.trace) tr.push_back(tr.front());
    }
    return run;
}

FitResult best_of(const Layout& L, int restarts, std::uint64_t seed, int max_iters,
                  double rel_tol) {
    FitResult best;
    bool found = false;
    for (int r = 0; r < restarts; ++r) {
        EngineRun run;
        try {
            run = run_restart(L, derive_seed(seed, static_cast<std::uint64_t>(r)), max_iters, rel_tol);
        } catch (const DegenerateComponent&) {
            continue;
        }
        if (run.failed) continue;
        if (!found || run.mean_objective > best.mean_objective) {
            found = true;
            best.params = std::move(run.state.params);
            best.gamma = std::move(run.state.gamma);
            best.objective_trace = std::move(run.trace);
            best.converged = run.converged;
            best.iterations = run.iterations;
            best.mean_objective = run.mean_objective;
            best.restart = r;
        }
    }
    if (!found) throw AllInitializationsFailed("every EM restart hit a degenerate mixture");
    return best;
}

FitResult to_result(EngineRun run) {
    if (run.failed) throw AllInitializationsFailed("EM run hit a degenerate mixture");
    FitResult out;
    out.params = std::move(run.state.params);
    out.gamma = std::move(run.state.gamma);
    out.objective_trace = std::move(run.trace);
    out.converged = run.converged;
    out.iterations = run.iterations;
    out.mean_objective = run.mean_objective;
    return out;
}

GridSpec single_point_grid() {
    GridSpec g;
    g.points = {0.0};
    return g;
}

}  // namespace

FitResult fit(const Dataset& data, const EMConfig& config, const MixtureParams* init) {
    data.validate();
    config.validate();
    config.grid.validate(2);
    Layout L = make_layout(data, config.grid, grid_weights(data, config.kernel, config.grid),
                           config.K, config.lambda, Mode::Local, config.threads);
    if (init) return to_result(run_from(L, *init, config.max_iters, config.rel_tol));
    return best_of(L, config.restarts, config.seed, config.max_iters, config.rel_tol);
}

TimeVaryingFit time_varying_fit(const Dataset& data, double lambda, const KernelSpec& kernel,
                                const GridSpec& grid) {
    data.validate();
    kernel.validate();
    grid.validate(2);
    const Matrix w = grid_weights(data, kernel, grid);
    const Vector ones = Vector::Ones(data.size());
    TimeVaryingFit out;
    out.grid = grid;
    for (Index g = 0; g < grid.size(); ++g) {
        const Vector wg = w.row(g).transpose();
        out.mu.push_back(m_step_mu(data, ones, wg));
        out.solutions.push_back(m_step_theta(data, ones, wg, out.mu.back(), lambda));
    }
    return out;
}

FitResult finite_mixture_fit(const Dataset& data, Index K, double lambda, int restarts,
                             std::uint64_t seed, int max_iters, double rel_tol) {
    data.validate();
    EMConfig check;
    check.K = K;
    check.lambda = lambda;
    check.restarts = restarts;
    check.max_iters = max_iters;
    check.rel_tol = rel_tol;
    check.validate();
    Layout L = make_layout(data, single_point_grid(), Matrix::Ones(1, data.size()), K, lambda,
                           Mode::Local, 1);
    return best_of(L, restarts, seed, max_iters, rel_tol);
}

namespace {

// Stage two of the semiparametric fit: EM over global (mu, theta) with the
// per-observation mixing proportions held fixed.
FitResult frozen_pi_em(const Dataset& data, const Matrix& log_pi, double lambda,
                       const MixtureParams& start, int max_iters, double rel_tol) {
    const Index K = log_pi.rows();
    const Index N = data.size();
    Layout L = make_layout(data, single_point_grid(), Matrix::Ones(1, N), K, lambda,
                           Mode::SharedComponents, 1);
    std::vector<Index> all(sz(N));
    std::iota(all.begin(), all.end(), Index{0});

    std::vector<Vector> mu(sz(K));
    std::vector<Matrix> theta(sz(K));
    std::vector<GlassoSolution> sols(sz(K));
    for (Index k = 0; k < K; ++k) {
        mu[sz(k)] = start.mu[sz(k)][0];
        theta[sz(k)] = start.theta[sz(k)][0];
        sols[sz(k)].theta = theta[sz(k)];
        sols[sz(k)].w = invert_spd(theta[sz(k)]);
    }

    auto evaluate = [&](Matrix& terms) {
        double penalty = 0.0;
        for (Index k = 0; k < K; ++k) {
            const Component c = make_component(1.0, mu[sz(k)], theta[sz(k)]);
            terms.row(k) = log_pi.row(k) + log_phi_rows(data.x, all, c).transpose();
            penalty += offdiag_l1(theta[sz(k)]);
        }
        double s = 0.0;
        for (Index n = 0; n < N; ++n) s += log_sum_exp(terms.col(n).data(), K);
        return s / static_cast<double>(N) - lambda * penalty;
    };

    Matrix terms(K, N);
    FitResult out;
    out.objective_trace.assign(1, {});
    double obj = evaluate(terms);
    out.objective_trace[0].push_back(obj);
    Matrix gamma = terms;
    normalize_columns(gamma);
    for (int it = 1; it <= max_iters; ++it) {
        for (Index k = 0; k < K; ++k) {
            // An empty mixture keeps its previous parameters.
            const Vector c = gamma.row(k).transpose();
            update_component(L, c, 1e-12 * static_cast<double>(N), mu[sz(k)], theta[sz(k)],
                             sols[sz(k)]);
        }
        const double next = evaluate(terms);
        out.objective_trace[0].push_back(next);
        out.iterations = it;
        out.gamma.gamma = gamma;
        const double change = std::abs(next - obj) / std::max(std::abs(obj), std::numeric_limits<double>::min());
        obj = next;
        gamma = terms;
        normalize_columns(gamma);
        if (change <= rel_tol) {
            out.converged = true;
            break;
        }
    }
    if (out.gamma.gamma.size() == 0) out.gamma.gamma = gamma;
    out.mean_objective = obj;
    out.params = start;
    for (Index k = 0; k < K; ++k)
        for (Index g = 0; g < start.grid_size(); ++g) {
            out.params.mu[sz(k)][sz(g)] = mu[sz(k)];
            out.params.theta[sz(k)][sz(g)] = theta[sz(k)];
        }
    return out;
}

}  // namespace

FitResult semiparametric_fit(const Dataset& data, const EMConfig& config) {
    data.validate();
    config.validate();
    config.grid.validate(2);
    Layout L = make_layout(data, config.grid, grid_weights(data, config.kernel, config.grid),
                           config.K, config.lambda, Mode::SharedComponents, config.threads);
    FitResult stage1 = best_of(L, config.restarts, config.seed, config.max_iters, config.rel_tol);

    const Index K = config.K;
    Matrix log_pi(K, data.size());
    for (Index n = 0; n < data.size(); ++n) {
        const PointParams pp = interpolate(stage1.params, data.z(n));
        for (Index k = 0; k < K; ++k)
            log_pi(k, n) = pp[sz(k)].pi > 0.0 ? std::log(pp[sz(k)].pi)
                                              : -std::numeric_limits<double>::infinity();
    }
    FitResult stage2 =
        frozen_pi_em(data, log_pi, config.lambda, stage1.params, config.max_iters, config.rel_tol);
    stage2.restart = stage1.restart;
    return stage2;
}

StationarityReport check_stationarity(const Dataset& data, const EMConfig& config,
                                      const FitResult& result) {
    const MixtureParams& params = result.params;
    const Index G = params.grid_size();
    const Index K = params.components();
    const Matrix w = G == 1 ? Matrix(Matrix::Ones(1, data.size()))
                            : grid_weights(data, config.kernel, params.grid);
    StationarityReport rep;
    for (Index g = 0; g < G; ++g) {
        const Vector wg = w.row(g).transpose();
        const double floor_mass = 1e-12 * wg.sum();
        for (Index k = 0; k < K; ++k) {
            const Vector gk = result.gamma.gamma.row(k).transpose();
            if (!(gk.cwiseProduct(wg).sum() >= floor_mass)) continue;
            const Vector mu = m_step_mu(data, gk, wg);
            GlassoProblem problem;
            problem.scatter = repair_scatter(weighted_scatter(data, gk, wg, mu));
            problem.lambda = effective_lambda(config.lambda, data.size(), gk.cwiseProduct(wg).sum());
            rep.max_kkt_residual = std::max(rep.max_kkt_residual,
                                            kkt_residual(problem, params.theta[sz(k)][sz(g)]));
        }
    }
    std::vector<PointParams> at_obs;
    at_obs.reserve(sz(data.size()));
    for (Index n = 0; n < data.size(); ++n) at_obs.push_back(interpolate(params, data.z(n)));
    const Responsibilities fresh = e_step(data, at_obs);
    for (Index g = 0; g < G; ++g) {
        const Vector pi = m_step_pi(fresh, w.row(g).transpose());
        rep.max_pi_drift = std::max(rep.max_pi_drift, (pi - params.pi.col(g)).cwiseAbs().maxCoeff());
    }
    return rep;
}

}  // namespace npmix
