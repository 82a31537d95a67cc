#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "npmix/em.hpp"
#include "npmix/random.hpp"

namespace npmix {

enum class Structure { Ar1, Block, RandomSparse, Diagonal };
// Where new edges are drawn from.
enum class AddPool { Lag2, WithinBlock, Any };

std::string to_string(Structure s);
Structure parse_structure(const std::string& name);
std::string to_string(AddPool p);
AddPool parse_add_pool(const std::string& name);

struct ComponentSpec {
    Structure structure = Structure::Ar1;
    double rho = 0.4;           // Ar1
    double diagonal = 0.25;     // Block, RandomSparse, Diagonal
    Index initial_edges = -1;   // per block (Block) or total (RandomSparse); -1 = default
    double edge_lo = -0.2;
    double edge_hi = -0.1;
    Index adds_per_step = 0;    // per block for WithinBlock
    Index removes_per_step = 0;
    double add_lo = -0.2;
    double add_hi = -0.1;
    AddPool pool = AddPool::Any;
    double mean = 0.0;          // every coordinate of the mean vector
};

struct ScenarioSpec {
    std::string name = "custom";
    Index p = 10;
    Index grid_points = 11;
    double z_lo = 0.0;
    double z_hi = 1.0;
    Index n_per_point = 50;
    double pi_slope = 0.5;
    std::vector<ComponentSpec> components;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Scenario {
    ScenarioSpec spec;
    MixtureParams truth;  // true pi, mu, theta at every grid point
    double pd_shift = 0.0;  // largest diagonal increase applied by PD repair
};

// pi_k(z): K=1 gives 1; K=2 gives the logistic pair exp(sz)/(1+exp(sz));
// larger K gives equal proportions.
Vector mixing_proportions(double z, Index K, double slope = 0.5);

Matrix ar1_covariance(Index p, double rho = 0.4);
// Tridiagonal closed form of the inverse of ar1_covariance.
Matrix ar1_precision(Index p, double rho = 0.4);

// Two equal diagonal blocks, `edges_per_block` random entries in each from
// U[lo, hi], constant diagonal. A uniform diagonal increase keeps the
// smallest eigenvalue at or above 0.01.
Matrix block_diagonal_precision(Index p, Index edges_per_block, double lo, double hi,
                                double diagonal, Rng& rng);
Matrix random_sparse_precision(Index p, Index edges, double lo, double hi, double diagonal,
                               Rng& rng);

struct EdgeSchedule {
    Index adds_per_step = 0;
    Index removes_per_step = 0;
    double add_lo = -0.2;
    double add_hi = -0.1;
    AddPool pool = AddPool::Any;
    Index block_split = 0;  // first index of the second block (WithinBlock)
};

// Script of edge changes at grid steps 1..G-1. An edge added at step a is 0
// at grid index a-1 and grows linearly to its target at index G-1; an edge
// removed at step r decays linearly from index 0 so it is 0 from index r on.
// Each path is PD-repaired by one uniform diagonal increase (reported in
// `shift`). Throws NotEnoughEdges when removals exceed the live support.
std::vector<Matrix> evolve_edges(const Matrix& theta0, const EdgeSchedule& schedule, Index G,
                                 Rng& rng, double* shift = nullptr);

// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& m);

Scenario build_scenario(const ScenarioSpec& spec);

struct Sample {
    Dataset data;
    std::vector<int> labels;  // true mixture of every observation
};

// n_per_point draws at every grid point: a mixture from pi(u_g), then
// x ~ N(mu_k, theta_k^{-1}). z_n = u_g.
Sample sample(const Scenario& scenario, std::uint64_t seed);

// Named presets: "ar_block" and "ar_sparse" at p=50, their desk-scale
// counterparts "desk_ar_block" (p=10) and "desk_ar_sparse" (p=12),
// "desk_null" (one mixture), "desk_constant" (two mixtures, fixed graphs)
// and "tiny".
ScenarioSpec scenario_preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace npmix
