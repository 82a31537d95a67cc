#pragma once

#include <optional>
#include <string>
#include <vector>

#include "npmix/metrics.hpp"
#include "npmix/selection.hpp"
#include "npmix/simgen.hpp"

namespace npmix {

struct SimulationOptions {
    SelectionGrid grid;
    EMConfig base;  // kernel family and EM settings; K, lambda, h and grid are overridden
    int replications = 1;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct BandwidthOutcome {
    double h = 0.0;
    Index K_hat = 0;  // min over lambda of BIC at this h
    double lambda_hat = 0.0;  // at the true K
    bool evaluated = false;
    EvalReport report;
    double coherence = 0.0;  // adjacent-grid identity rate of the fitted mixtures
    std::string status = "ok";
};

struct ReplicationResult {
    int replication = 0;
    std::uint64_t seed = 0;
    Index K_hat = 0;  // min over (lambda, h)
    std::vector<BandwidthOutcome> per_h;
    std::vector<BicRecord> records;
    Sample sample;
};

struct SimulationResult {
    Scenario scenario;
    SimulationOptions options;
    std::vector<ReplicationResult> replications;
};

// One replication: sample, BIC sweep, K choice per bandwidth and overall,
// and metrics at the true K with the BIC-chosen lambda for each bandwidth.
ReplicationResult run_replication(const Scenario& scenario, const SimulationOptions& options,
                                  int replication);

// All replications, in parallel over replications.
SimulationResult run_simulation(const Scenario& scenario, const SimulationOptions& options);

struct AggregateRow {
    double h = 0.0;
    std::string metric;
    double mean = 0.0;
    std::optional<double> se;  // empty for a single replication
    int count = 0;
};
std::vector<AggregateRow> aggregate(const SimulationResult& result);

struct FrequencyRow {
    std::string rule;  // "h=<value>" or "min_lambda_h"
    std::vector<int> counts;  // aligned with options.grid.K_values
};
std::vector<FrequencyRow> k_frequencies(const SimulationResult& result);

// (K, lambda, h) grid used with the desk-scale presets.
SelectionGrid desk_selection_grid();

}  // namespace npmix
