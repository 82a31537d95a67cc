#include "npmix/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "npmix/io.hpp"
#include "npmix/metrics.hpp"
#include "npmix/simulate.hpp"

namespace npmix {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string out = ".";
};

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string csv_header(const std::string& columns) {
    return "# schema_version: " + std::to_string(kSchemaVersion) + "\n" + columns + "\n";
}

RunConfig config_of(const Common& c) { return c.config.empty() ? RunConfig{} : load_config(c.config); }

GridSpec grid_for(const RunConfig& rc, const Dataset& data) {
    if (rc.grid) return *rc.grid;
    return GridSpec::uniform(data.z_min(), data.z_max(), rc.grid_count.value_or(11));
}

EMConfig em_for(const RunConfig& rc, const Common& c, const Dataset& data) {
    EMConfig em = rc.em.value_or(EMConfig{});
    if (rc.kernel) em.kernel = *rc.kernel;
    em.grid = grid_for(rc, data);
    if (c.seed) em.seed = *c.seed;
    em.threads = c.threads;
    return em;
}

std::string trace_csv(const FitResult& fit) {
    std::ostringstream s;
    s << csv_header("grid_index,z,iteration,objective");
    for (std::size_t g = 0; g < fit.objective_trace.size(); ++g) {
        const double z = fit.objective_trace.size() == fit.params.grid.points.size() ? fit.params.grid.points[g] : std::nan("");
        for (std::size_t t = 0; t < fit.objective_trace[g].size(); ++t)
            s << g << "," << format_double(z) << "," << t << "," << format_double(fit.objective_trace[g][t]) << "\n";
    }
    return s.str();
}

int cmd_fit(const Common& c, const std::string& data_path, const std::string& init_flag, std::ostream& out) {
    const Dataset data = read_csv(data_path);
    const RunConfig rc = config_of(c);
    const EMConfig em = em_for(rc, c, data);
    std::optional<StoredModel> init;
    const std::string init_path = !init_flag.empty() ? init_flag : rc.init_model.value_or("");
    if (!init_path.empty()) init = load_model(init_path);
    const FitResult result = fit(data, em, init ? &init->params : nullptr);
    save_model(join(c.out, "model.json"), stored_model(result, em));
    write_text(join(c.out, "trace.csv"), trace_csv(result));
    out << "fit: K=" << em.K << " lambda=" << format_double(em.lambda) << " h=" << format_double(em.kernel.bandwidth)
        << " iterations=" << result.iterations << " converged=" << (result.converged ? "yes" : "no")
        << " objective=" << format_double(result.mean_objective) << "\n";
    return kExitOk;
}

int cmd_select(const Common& c, const std::string& data_path, std::ostream& out) {
    const Dataset data = read_csv(data_path);
    const RunConfig rc = config_of(c);
    if (!rc.selection) throw InvalidInput("select: the config needs a 'selection' section");
    EMConfig em = em_for(rc, c, data);
    FitCache cache;
    const SelectionResult sel = select(data, *rc.selection, em, &cache);

    std::ostringstream s;
    s << csv_header("K,lambda,h,loglik,df,bic,status");
    for (const auto& r : sel.records)
        s << r.K << "," << format_double(r.lambda) << "," << format_double(r.h) << "," << format_double(r.loglik) << ","
          << format_double(r.df) << "," << format_double(r.bic) << "," << (r.ok ? "ok" : "failed") << "\n";
    write_text(join(c.out, "selection.csv"), s.str());

    std::ostringstream cv;
    cv << csv_header("h,mean_heldout_loglik,failed_folds");
    for (const auto& r : sel.cv)
        cv << format_double(r.h) << "," << format_double(r.mean_loglik) << "," << r.failed_folds << "\n";
    write_text(join(c.out, "cv.csv"), cv.str());

    ojson chosen;
    chosen["schema_version"] = kSchemaVersion;
    chosen["K"] = sel.K;
    chosen["lambda"] = sel.lambda;
    chosen["h"] = sel.h;
    write_text(join(c.out, "chosen.json"), chosen.dump(1) + "\n");

    em.K = sel.K;
    em.lambda = sel.lambda;
    em.kernel.bandwidth = sel.h;
    em.threads = 1;
    const auto& entry = cache.get(data, em);
    if (!entry.fit) throw AllInitializationsFailed("select: chosen model failed to fit: " + entry.record.status);
    save_model(join(c.out, "model.json"), stored_model(*entry.fit, em));
    out << "select: K=" << sel.K << " lambda=" << format_double(sel.lambda) << " h=" << format_double(sel.h) << "\n";
    return kExitOk;
}

ScenarioSpec scenario_for(const RunConfig& rc, const std::string& preset) {
    if (!preset.empty()) {
        if (rc.scenario) throw InvalidInput("give the scenario either by --preset or in the config, not both");
        return scenario_preset(preset);
    }
    if (rc.scenario) return *rc.scenario;
    throw InvalidInput("no scenario: use --preset or a 'scenario' config section");
}

std::string optional_number(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

int cmd_simulate(const Common& c, const std::string& preset, std::optional<int> reps_flag, bool write_data,
                 std::ostream& out) {
    const RunConfig rc = config_of(c);
    const Scenario scenario = build_scenario(scenario_for(rc, preset));
    SimulationOptions opt;
    opt.grid = rc.selection.value_or(desk_selection_grid());
    opt.base = rc.em.value_or(EMConfig{});
    if (rc.kernel) opt.base.kernel.family = rc.kernel->family;
    opt.replications = reps_flag.value_or(rc.replications.value_or(1));
    opt.seed = c.seed.value_or(opt.base.seed);
    opt.threads = c.threads;
    const SimulationResult res = run_simulation(scenario, opt);

    write_text(join(c.out, "scenario.json"), scenario_to_json(scenario.spec).dump(1) + "\n");

    std::ostringstream agg;
    agg << csv_header("h,metric,mean,se");
    for (const auto& r : aggregate(res))
        agg << format_double(r.h) << "," << r.metric << "," << format_double(r.mean) << "," << optional_number(r.se) << "\n";
    write_text(join(c.out, "aggregate.csv"), agg.str());

    std::ostringstream freq;
    std::string cols = "rule";
    for (Index K : opt.grid.K_values) cols += ",K=" + std::to_string(K);
    freq << csv_header(cols);
    for (const auto& r : k_frequencies(res)) {
        freq << r.rule;
        for (int n : r.counts) freq << "," << n;
        freq << "\n";
    }
    write_text(join(c.out, "frequencies.csv"), freq.str());

    std::ostringstream reps;
    reps << csv_header("replication,seed,K_hat,h,K_hat_h,lambda_hat,asl,afl,akl,rase_pi,atpr,afpr,coherence,status");
    for (const auto& r : res.replications)
        for (const auto& b : r.per_h) {
            reps << r.replication << "," << r.seed << "," << r.K_hat << "," << format_double(b.h) << "," << b.K_hat << ","
                 << format_double(b.lambda_hat);
            if (b.evaluated) {
                const EvalReport& e = b.report;
                for (double v : {e.asl, e.afl, e.akl, e.rase_pi, e.atpr, e.afpr, b.coherence}) reps << "," << format_double(v);
            } else {
                reps << ",,,,,,,";
            }
            reps << "," << (b.evaluated ? "ok" : "failed") << "\n";
        }
    write_text(join(c.out, "replications.csv"), reps.str());

    if (write_data)
        for (const auto& r : res.replications) {
            std::ostringstream d;
            write_csv(d, r.sample.data, &r.sample.labels);
            char name[32];
            std::snprintf(name, sizeof(name), "rep_%03d.csv", r.replication);
            write_text(join(join(c.out, "data"), name), d.str());
        }
    out << "simulate: " << scenario.spec.name << ", " << opt.replications << " replication(s)\n";
    return kExitOk;
}

int cmd_eval(const Common& c, const std::string& model_path, const std::string& preset, std::ostream& out) {
    const RunConfig rc = config_of(c);
    const StoredModel model = load_model(model_path);
    const Scenario scenario = build_scenario(scenario_for(rc, preset));
    const EvalReport r = report(model.params, scenario.truth);
    ojson j;
    j["schema_version"] = kSchemaVersion;
    j["scenario"] = scenario.spec.name;
    j["asl"] = r.asl;
    j["afl"] = r.afl;
    j["akl"] = r.akl;
    j["rase_pi"] = r.rase_pi;
    j["rase_pi_sq"] = r.rase_pi_sq;
    j["atpr"] = r.atpr;
    j["afpr"] = r.afpr;
    j["alignment"] = r.alignment;
    write_text(join(c.out, "report.json"), j.dump(1) + "\n");
    out << "eval: atpr=" << format_double(r.atpr) << " afpr=" << format_double(r.afpr) << "\n";
    return kExitOk;
}

int exit_code_for(const Error& e) {
    if (dynamic_cast<const EmptyGrid*>(&e) || dynamic_cast<const AllWeightsZero*>(&e)) return kExitBadGrid;
    if (dynamic_cast<const InvalidInput*>(&e) || dynamic_cast<const DimensionMismatch*>(&e) ||
        dynamic_cast<const NotEnoughEdges*>(&e))
        return kExitBadInput;
    return kExitFitFailure;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Kernel-smoothed mixtures of sparse Gaussian graphical models"};
    app.require_subcommand(1);
    Common common;
    std::uint64_t seed_value = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "JSON config file");
        sub->add_option("--seed", seed_value, "random seed");
        sub->add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", common.out, "output directory");
    };

    std::string data_path, init_path, model_path, preset;
    int replications = 0;
    bool no_data = false;

    auto* fit_cmd = app.add_subcommand("fit", "fit the model to DATA.csv");
    fit_cmd->add_option("data", data_path, "input CSV")->required();
    fit_cmd->add_option("--init", init_path, "warm-start from a saved model");
    add_common(fit_cmd);

    auto* select_cmd = app.add_subcommand("select", "choose K, lambda and h for DATA.csv");
    select_cmd->add_option("data", data_path, "input CSV")->required();
    add_common(select_cmd);

    auto* sim_cmd = app.add_subcommand("simulate", "run replications of a scenario");
    sim_cmd->add_option("--preset", preset, "scenario preset name");
    sim_cmd->add_option("--replications", replications, "number of replications")->check(CLI::PositiveNumber);
    sim_cmd->add_flag("--no-data", no_data, "skip writing the simulated datasets");
    add_common(sim_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "score a saved model against a scenario's truth");
    eval_cmd->add_option("model", model_path, "model JSON")->required();
    eval_cmd->add_option("--preset", preset, "scenario preset name");
    add_common(eval_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitBadInput;
    }

    for (auto* sub : {fit_cmd, select_cmd, sim_cmd, eval_cmd})
        if (sub->count("--seed") > 0) common.seed = seed_value;

    try {
        if (*fit_cmd) return cmd_fit(common, data_path, init_path, out);
        if (*select_cmd) return cmd_select(common, data_path, out);
        if (*sim_cmd)
            return cmd_simulate(common, preset, replications > 0 ? std::optional<int>(replications) : std::nullopt, !no_data,
                                out);
        if (*eval_cmd) return cmd_eval(common, model_path, preset, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
    return kExitBadInput;
}

}  // namespace npmix
