#include "npmix/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <Eigen/Eigenvalues>

namespace npmix {

namespace {

std::size_t sz(Index i) { return static_cast<std::size_t>(i); }

using Pair = std::pair<Index, Index>;

// k distinct elements of `pool` (partial Fisher-Yates, order of draw kept).
std::vector<Pair> draw(std::vector<Pair> pool, Index k, Rng& rng) {
    if (k > static_cast<Index>(pool.size())) k = static_cast<Index>(pool.size());
    for (Index i = 0; i < k; ++i) {
        const auto j = sz(i) + rng.below(pool.size() - sz(i));
        std::swap(pool[sz(i)], pool[j]);
    }
    pool.resize(sz(k));
    return pool;
}

std::vector<Pair> pairs_in(Index lo, Index hi) {
    std::vector<Pair> out;
    for (Index i = lo; i < hi; ++i)
        for (Index j = i + 1; j < hi; ++j) out.emplace_back(i, j);
    return out;
}

void lift_to(Matrix& m, double floor_eig) {
    const double lo = min_eigenvalue(m);
    if (lo < floor_eig) m.diagonal().array() += floor_eig - lo;
}

constexpr double kMinEig = 0.01;

}  // namespace

std::string to_string(Structure s) {
    switch (s) {
        case Structure::Ar1: return "ar1";
        case Structure::Block: return "block";
        case Structure::RandomSparse: return "random_sparse";
        case Structure::Diagonal: return "diagonal";
    }
    return "?";
}

Structure parse_structure(const std::string& name) {
    if (name == "ar1") return Structure::Ar1;
    if (name == "block") return Structure::Block;
    if (name == "random_sparse") return Structure::RandomSparse;
    if (name == "diagonal") return Structure::Diagonal;
    throw InvalidInput("unknown structure '" + name + "'");
}

std::string to_string(AddPool p) {
    switch (p) {
        case AddPool::Lag2: return "lag2";
        case AddPool::WithinBlock: return "within_block";
        case AddPool::Any: return "any";
    }
    return "?";
}

AddPool parse_add_pool(const std::string& name) {
    if (name == "lag2") return AddPool::Lag2;
    if (name == "within_block") return AddPool::WithinBlock;
    if (name == "any") return AddPool::Any;
    throw InvalidInput("unknown add pool '" + name + "'");
}

void ScenarioSpec::validate() const {
    if (p < 1) throw InvalidInput("scenario: p must be positive");
    if (grid_points < 2) throw InvalidInput("scenario: need at least 2 grid points");
    if (!(z_hi > z_lo)) throw InvalidInput("scenario: z_hi must exceed z_lo");
    if (n_per_point < 1) throw InvalidInput("scenario: n_per_point must be positive");
    if (components.empty()) throw InvalidInput("scenario: need at least one component");
    for (const auto& c : components) {
        if (c.structure == Structure::Ar1 && !(std::abs(c.rho) < 1.0))
            throw InvalidInput("scenario: |rho| must be below 1");
        if (c.structure != Structure::Ar1 && !(c.diagonal > 0.0))
            throw InvalidInput("scenario: diagonal must be positive");
        if (c.adds_per_step < 0 || c.removes_per_step < 0)
            throw InvalidInput("scenario: edge counts must be nonnegative");
        if (c.edge_lo > c.edge_hi || c.add_lo > c.add_hi)
            throw InvalidInput("scenario: value ranges need lo <= hi");
    }
}

Vector mixing_proportions(double z, Index K, double slope) {
    if (K < 1) throw InvalidInput("mixing_proportions: K must be positive");
    Vector pi(K);
    if (K == 1) {
        pi(0) = 1.0;
    } else if (K == 2) {
        pi(0) = 1.0 / (1.0 + std::exp(-slope * z));
        pi(1) = 1.0 - pi(0);
    } else {
        pi.setConstant(1.0 / static_cast<double>(K));
    }
    return pi;
}

Matrix ar1_covariance(Index p, double rho) {
    Matrix s(p, p);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) s(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
    return s;
}

Matrix ar1_precision(Index p, double rho) {
    Matrix t = Matrix::Zero(p, p);
    if (p == 1) {
        t(0, 0) = 1.0;
        return t;
    }
    const double c = 1.0 / (1.0 - rho * rho);
    for (Index i = 0; i < p; ++i) {
        t(i, i) = (i == 0 || i == p - 1) ? c : (1.0 + rho * rho) * c;
        if (i + 1 < p) {
            t(i, i + 1) = -rho * c;
            t(i + 1, i) = -rho * c;
        }
    }
    return t;
}

double min_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

Matrix block_diagonal_precision(Index p, Index edges_per_block, double lo, double hi,
                                double diagonal, Rng& rng) {
    Matrix t = Matrix::Identity(p, p) * diagonal;
    const Index split = p / 2;
    for (const auto& [a, b] : {Pair{0, split}, Pair{split, p}}) {
        auto pool = pairs_in(a, b);
        if (edges_per_block > static_cast<Index>(pool.size()))
            throw NotEnoughEdges("block_diagonal_precision: block has too few pairs");
        for (const auto& [i, j] : draw(std::move(pool), edges_per_block, rng)) {
            const double v = rng.uniform(lo, hi);
            t(i, j) = v;
            t(j, i) = v;
        }
    }
    lift_to(t, kMinEig);
    return t;
}

Matrix random_sparse_precision(Index p, Index edges, double lo, double hi, double diagonal,
                               Rng& rng) {
    Matrix t = Matrix::Identity(p, p) * diagonal;
    auto pool = pairs_in(0, p);
    if (edges > static_cast<Index>(pool.size()))
        throw NotEnoughEdges("random_sparse_precision: too many edges requested");
    for (const auto& [i, j] : draw(std::move(pool), edges, rng)) {
        const double v = rng.uniform(lo, hi);
        t(i, j) = v;
        t(j, i) = v;
    }
    lift_to(t, kMinEig);
    return t;
}

std::vector<Matrix> evolve_edges(const Matrix& theta0, const EdgeSchedule& schedule, Index G,
                                 Rng& rng, double* shift) {
    const Index p = theta0.rows();
    struct Edge {
        Pair at;
        double target;
        Index added;    // 0 for edges present at the first grid point
        Index removed;  // G if never removed
    };
    std::vector<Edge> edges;
    std::set<Pair> used;
    for (Index j = 0; j < p; ++j)
        for (Index i = 0; i < j; ++i)
            if (theta0(i, j) != 0.0) {
                edges.push_back({{i, j}, theta0(i, j), 0, G});
                used.insert({i, j});
            }

    auto unused = [&](const std::vector<Pair>& candidates) {
        std::vector<Pair> out;
        for (const auto& pr : candidates)
            if (!used.count(pr)) out.push_back(pr);
        return out;
    };

    for (Index step = 1; step < G; ++step) {
        if (schedule.removes_per_step > 0) {
            std::vector<Pair> live;
            std::map<Pair, std::size_t> where;
            for (std::size_t e = 0; e < edges.size(); ++e)
                if (edges[e].added <= step - 1 && edges[e].removed == G) {
                    live.push_back(edges[e].at);
                    where[edges[e].at] = e;
                }
            if (static_cast<Index>(live.size()) < schedule.removes_per_step)
                throw NotEnoughEdges("evolve_edges: step " + std::to_string(step) + " has " +
                                     std::to_string(live.size()) + " removable edges");
            for (const auto& pr : draw(std::move(live), schedule.removes_per_step, rng))
                edges[where[pr]].removed = step;
        }

        std::vector<std::vector<Pair>> pools;
        if (schedule.pool == AddPool::Lag2) {
            std::vector<Pair> c;
            for (Index i = 0; i + 2 < p; ++i) c.emplace_back(i, i + 2);
            pools.push_back(unused(c));
        } else if (schedule.pool == AddPool::WithinBlock) {
            const Index split = schedule.block_split > 0 ? schedule.block_split : p / 2;
            pools.push_back(unused(pairs_in(0, split)));
            pools.push_back(unused(pairs_in(split, p)));
        } else {
            pools.push_back(unused(pairs_in(0, p)));
        }
        for (auto& pool : pools)
            for (const auto& pr : draw(std::move(pool), schedule.adds_per_step, rng)) {
                edges.push_back({pr, rng.uniform(schedule.add_lo, schedule.add_hi), step, G});
                used.insert(pr);
            }
    }

    std::vector<Matrix> path(sz(G), Matrix(theta0.diagonal().asDiagonal()));
    const double last = static_cast<double>(G - 1);
    for (const auto& e : edges) {
        for (Index g = 0; g < G; ++g) {
            const double x = static_cast<double>(g);
            double up = 1.0;
            if (e.added > 0) {
                const double start = static_cast<double>(e.added - 1);
                up = std::clamp((x - start) / (last - start), 0.0, 1.0);
            }
            double down = 1.0;
            if (e.removed < G) down = std::clamp((static_cast<double>(e.removed) - x) / static_cast<double>(e.removed), 0.0, 1.0);
            const double v = e.target * std::min(up, down);
            path[sz(g)](e.at.first, e.at.second) = v;
            path[sz(g)](e.at.second, e.at.first) = v;
        }
    }

    double delta = 0.0;
    for (const auto& m : path) delta = std::max(delta, kMinEig - min_eigenvalue(m));
    if (delta > 0.0)
        for (auto& m : path) m.diagonal().array() += delta;
    if (shift) *shift = std::max(delta, 0.0);
    return path;
}

Scenario build_scenario(const ScenarioSpec& spec) {
    spec.validate();
    const Index p = spec.p;
    const Index K = static_cast<Index>(spec.components.size());
    const GridSpec grid = GridSpec::uniform(spec.z_lo, spec.z_hi, spec.grid_points);
    const Index G = grid.size();

    Scenario sc;
    sc.spec = spec;
    sc.truth = MixtureParams::zeros(K, grid, p);
    for (Index g = 0; g < G; ++g)
        sc.truth.pi.col(g) = mixing_proportions(grid.points[sz(g)], K, spec.pi_slope);

    for (Index k = 0; k < K; ++k) {
        const ComponentSpec& c = spec.components[sz(k)];
        Rng rng(derive_seed(spec.seed, 1000 + static_cast<std::uint64_t>(k)));
        Matrix theta0;
        switch (c.structure) {
            case Structure::Ar1:
                theta0 = ar1_precision(p, c.rho);
                break;
            case Structure::Block: {
                // default: ceil(p/2) per block, capped by the smaller block's pairs
                const Index half = p / 2;
                const Index e = c.initial_edges >= 0 ? c.initial_edges
                                                     : std::min((p + 1) / 2, half * (half - 1) / 2);
                theta0 = block_diagonal_precision(p, e, c.edge_lo, c.edge_hi, c.diagonal, rng);
                break;
            }
            case Structure::RandomSparse: {
                Index e = c.initial_edges;
                if (e < 0) e = p == 100 ? 100 : static_cast<Index>(std::ceil(1.1 * static_cast<double>(p) - 1e-9));
                theta0 = random_sparse_precision(p, e, c.edge_lo, c.edge_hi, c.diagonal, rng);
                break;
            }
            case Structure::Diagonal:
                theta0 = Matrix::Identity(p, p) * c.diagonal;
                break;
        }
        EdgeSchedule schedule;
        schedule.adds_per_step = c.adds_per_step;
        schedule.removes_per_step = c.removes_per_step;
        schedule.add_lo = c.add_lo;
        schedule.add_hi = c.add_hi;
        schedule.pool = c.pool;
        schedule.block_split = p / 2;
        double shift = 0.0;
        const auto path = evolve_edges(theta0, schedule, G, rng, &shift);
        sc.pd_shift = std::max(sc.pd_shift, shift);
        for (Index g = 0; g < G; ++g) {
            sc.truth.theta[sz(k)][sz(g)] = path[sz(g)];
            sc.truth.mu[sz(k)][sz(g)] = Vector::Constant(p, c.mean);
        }
    }
    return sc;
}

Sample sample(const Scenario& scenario, std::uint64_t seed) {
    const MixtureParams& t = scenario.truth;
    const Index G = t.grid_size();
    const Index K = t.components();
    const Index p = t.dim();
    const Index m = scenario.spec.n_per_point;
    Rng rng(seed);

    // Sigma = theta^{-1} = L^{-T} L^{-1}, so x = mu + L^{-T} e has covariance Sigma.
    std::vector<std::vector<Matrix>> lower(sz(K), std::vector<Matrix>(sz(G)));
    for (Index k = 0; k < K; ++k)
        for (Index g = 0; g < G; ++g) lower[sz(k)][sz(g)] = cholesky(t.theta[sz(k)][sz(g)]).lower;

    Sample out;
    out.data.x.resize(G * m, p);
    out.data.z.resize(G * m);
    out.labels.resize(sz(G * m));
    Vector e(p);
    for (Index g = 0; g < G; ++g) {
        for (Index i = 0; i < m; ++i) {
            const Index n = g * m + i;
            const double u = rng.uniform();
            Index k = 0;
            double acc = t.pi(0, g);
            while (k + 1 < K && u >= acc) {
                ++k;
                acc += t.pi(k, g);
            }
            for (Index j = 0; j < p; ++j) e(j) = rng.normal();
            const Vector x = lower[sz(k)][sz(g)].transpose().triangularView<Eigen::Upper>().solve(e);
            out.data.x.row(n) = (t.mu[sz(k)][sz(g)] + x).transpose();
            out.data.z(n) = t.grid.points[sz(g)];
            out.labels[sz(n)] = static_cast<int>(k);
        }
    }
    return out;
}

namespace {

ComponentSpec ar1_component(Index adds, Index removes, AddPool pool) {
    ComponentSpec c;
    c.structure = Structure::Ar1;
    c.adds_per_step = adds;
    c.removes_per_step = removes;
    c.pool = pool;
    return c;
}

ComponentSpec block_component(Index adds) {
    ComponentSpec c;
    c.structure = Structure::Block;
    c.adds_per_step = adds;
    c.pool = AddPool::WithinBlock;
    return c;
}

ComponentSpec sparse_component(Index adds, Index removes) {
    ComponentSpec c;
    c.structure = Structure::RandomSparse;
    c.edge_lo = -0.25;
    c.edge_hi = -0.22;
    c.add_lo = -0.25;
    c.add_hi = -0.22;
    c.adds_per_step = adds;
    c.removes_per_step = removes;
    c.pool = AddPool::Any;
    return c;
}

}  // namespace

ScenarioSpec scenario_preset(const std::string& name) {
    ScenarioSpec s;
    s.name = name;
    if (name == "ar_block") {
        s.p = 50;
        s.components = {ar1_component(5, 0, AddPool::Lag2), block_component(5)};
    } else if (name == "ar_sparse") {
        s.p = 50;
        s.components = {ar1_component(5, 5, AddPool::Any), sparse_component(5, 5)};
    } else if (name == "desk_ar_block") {
        s.p = 10;
        s.components = {ar1_component(2, 0, AddPool::Lag2), block_component(2)};
    } else if (name == "desk_ar_sparse") {
        s.p = 12;
        s.components = {ar1_component(1, 1, AddPool::Any), sparse_component(1, 1)};
    } else if (name == "desk_null") {
        s.p = 10;
        s.components = {ar1_component(2, 0, AddPool::Lag2)};
    } else if (name == "desk_constant") {
        s.p = 10;
        s.components = {ar1_component(0, 0, AddPool::Lag2), block_component(0)};
    } else if (name == "tiny") {
        s.p = 3;
        s.grid_points = 5;
        s.n_per_point = 20;
        ComponentSpec d;
        d.structure = Structure::Diagonal;
        s.components = {ar1_component(0, 0, AddPool::Lag2), d};
    } else {
        throw InvalidInput("unknown scenario preset '" + name + "'");
    }
    return s;
}

std::vector<std::string> preset_names() {
    return {"ar_block", "ar_sparse", "desk_ar_block", "desk_ar_sparse", "desk_null", "desk_constant", "tiny"};
}

}  // namespace npmix
