#include "npmix/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "npmix/io.hpp"
#include "npmix/parallel.hpp"

namespace npmix {

ReplicationResult run_replication(const Scenario& scenario, const SimulationOptions& options,
                                  int replication) {
    ReplicationResult out;
    out.replication = replication;
    out.seed = derive_seed(options.seed, static_cast<std::uint64_t>(replication));
    out.sample = sample(scenario, out.seed);

    EMConfig base = options.base;
    base.grid = scenario.truth.grid;
    base.seed = derive_seed(out.seed, 0xe3);
    base.threads = 1;

    FitCache cache;
    out.records = bic_sweep(out.sample.data, options.grid, base, &cache);
    out.K_hat = select_K(out.records);

    const Index K_true = scenario.truth.components();
    const bool has_true_K = std::find(options.grid.K_values.begin(), options.grid.K_values.end(),
                                      K_true) != options.grid.K_values.end();
    for (double h : options.grid.h_values) {
        BandwidthOutcome b;
        b.h = h;
        b.K_hat = select_K_at_h(out.records, h);
        if (has_true_K) {
            b.lambda_hat = select_lambda_at_h(out.records, K_true, h);
            EMConfig c = base;
            c.K = K_true;
            c.lambda = b.lambda_hat;
            c.kernel.bandwidth = h;
            const auto& entry = cache.get(out.sample.data, c);
            if (entry.fit) {
                b.report = report(entry.fit->params, scenario.truth);
                b.coherence = adjacent_identity_rate(entry.fit->params);
                b.evaluated = true;
            } else {
                b.status = entry.record.status;
            }
        } else {
            b.status = "true K not in grid";
        }
        out.per_h.push_back(std::move(b));
    }
    return out;
}

SimulationResult run_simulation(const Scenario& scenario, const SimulationOptions& options) {
    options.grid.validate();
    if (options.replications < 1) throw InvalidInput("simulate: replications must be positive");
    SimulationResult res;
    res.scenario = scenario;
    res.options = options;
    res.replications.resize(static_cast<std::size_t>(options.replications));
    parallel_for(options.replications, options.threads, [&](std::int64_t r) {
        res.replications[static_cast<std::size_t>(r)] = run_replication(scenario, options, static_cast<int>(r));
    });
    return res;
}

std::vector<AggregateRow> aggregate(const SimulationResult& result) {
    static const char* names[] = {"asl", "afl", "akl", "rase_pi", "atpr", "afpr", "coherence"};
    std::vector<AggregateRow> rows;
    const auto& hs = result.options.grid.h_values;
    for (std::size_t hi = 0; hi < hs.size(); ++hi) {
        for (const char* name : names) {
            std::vector<double> v;
            for (const auto& rep : result.replications) {
                const BandwidthOutcome& b = rep.per_h[hi];
                if (!b.evaluated) continue;
                const EvalReport& r = b.report;
                const std::string m = name;
                double x = 0.0;
                if (m == "asl") x = r.asl;
                else if (m == "afl") x = r.afl;
                else if (m == "akl") x = r.akl;
                else if (m == "rase_pi") x = r.rase_pi;
                else if (m == "atpr") x = r.atpr;
                else if (m == "afpr") x = r.afpr;
                else x = b.coherence;
                v.push_back(x);
            }
            AggregateRow row;
            row.h = hs[hi];
            row.metric = name;
            row.count = static_cast<int>(v.size());
            if (!v.empty()) {
                double s = 0.0;
                for (double x : v) s += x;
                row.mean = s / static_cast<double>(v.size());
                if (v.size() > 1) {
                    double ss = 0.0;
                    for (double x : v) ss += (x - row.mean) * (x - row.mean);
                    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
                    row.se = sd / std::sqrt(static_cast<double>(v.size()));
                }
            } else {
                row.mean = std::nan("");
            }
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<FrequencyRow> k_frequencies(const SimulationResult& result) {
    const auto& Ks = result.options.grid.K_values;
    auto index_of = [&](Index K) {
        return static_cast<std::size_t>(std::find(Ks.begin(), Ks.end(), K) - Ks.begin());
    };
    std::vector<FrequencyRow> rows;
    const auto& hs = result.options.grid.h_values;
    for (std::size_t hi = 0; hi < hs.size(); ++hi) {
        FrequencyRow row;
        row.rule = "h=" + format_double(hs[hi]);
        row.counts.assign(Ks.size(), 0);
        for (const auto& rep : result.replications) ++row.counts[index_of(rep.per_h[hi].K_hat)];
        rows.push_back(std::move(row));
    }
    FrequencyRow overall;
    overall.rule = "min_lambda_h";
    overall.counts.assign(Ks.size(), 0);
    for (const auto& rep : result.replications) ++overall.counts[index_of(rep.K_hat)];
    rows.push_back(std::move(overall));
    return rows;
}

SelectionGrid desk_selection_grid() {
    SelectionGrid g;
    g.K_values = {1, 2, 3};
    g.lambda_values = {0.01, 0.02, 0.04, 0.08};
    g.h_values = {0.3, 0.65, 1.05, 1.45};
    return g;
}

}  // namespace npmix
