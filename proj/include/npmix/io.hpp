#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "npmix/em.hpp"
#include "npmix/selection.hpp"
#include "npmix/simgen.hpp"

namespace npmix {

inline constexpr int kSchemaVersion = 1;

// Shortest decimal text that reads back to the same double; "nan", "inf",
// "-inf" for non-finite values.
std::string format_double(double x);

// Reads a CSV with a header row; the column named `z` is the covariate and
// every other column is a variable. Errors name the row and column.
Dataset parse_csv(std::istream& in, const std::string& source = "input");
Dataset read_csv(const std::string& path);
void write_csv(std::ostream& out, const Dataset& data, const std::vector<int>* labels = nullptr);

// Everything persisted for a fitted model.
struct StoredModel {
    MixtureParams params;
    KernelSpec kernel;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    bool converged = false;
    int iterations = 0;
    double mean_objective = 0.0;
    int restart = 0;
    Matrix responsibilities;                           // K x N, may be empty
    std::vector<std::vector<double>> objective_trace;  // [g][t]
};

StoredModel stored_model(const FitResult& fit, const EMConfig& config);
nlohmann::ordered_json model_to_json(const StoredModel& model);
StoredModel model_from_json(const nlohmann::ordered_json& j);
std::string dump_model(const StoredModel& model);
void save_model(const std::string& path, const StoredModel& model);
StoredModel load_model(const std::string& path);

// Parsed --config file. Sections absent from the file stay empty.
struct RunConfig {
    std::optional<KernelSpec> kernel;
    std::optional<GridSpec> grid;
    std::optional<Index> grid_count;  // uniform grid over the data range
    std::optional<EMConfig> em;
    std::optional<std::string> init_model;
    std::optional<SelectionGrid> selection;
    std::optional<ScenarioSpec> scenario;
    std::optional<int> replications;
};

// Unknown keys and wrong types are InvalidInput errors.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

nlohmann::ordered_json scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);

// Writes text to path, creating parent directories.
void write_text(const std::string& path, const std::string& text);

}  // namespace npmix
