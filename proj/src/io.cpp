#include "npmix/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace npmix {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (*b == '+') ++b;
    const auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e && std::isfinite(out);
}

}  // namespace

Dataset parse_csv(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        header = split_fields(t);
        break;
    }
    if (header.empty()) throw InvalidInput(source + ": missing header row");
    std::ptrdiff_t z_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == "z") {
            if (z_col >= 0) throw InvalidInput(source + ": column 'z' appears twice");
            z_col = static_cast<std::ptrdiff_t>(c);
        }
    if (z_col < 0) throw InvalidInput(source + ": missing covariate column 'z'");
    const std::size_t width = header.size();
    if (width < 2) throw InvalidInput(source + ": need at least one variable column besides 'z'");

    std::vector<std::vector<double>> rows;
    std::vector<double> zs;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto fields = split_fields(t);
        if (fields.size() != width)
            throw InvalidInput(source + ": line " + std::to_string(line_no) + ": expected " +
                               std::to_string(width) + " fields, found " + std::to_string(fields.size()));
        std::vector<double> row;
        row.reserve(width - 1);
        for (std::size_t c = 0; c < width; ++c) {
            double v = 0.0;
            if (!parse_number(fields[c], v))
                throw InvalidInput(source + ": line " + std::to_string(line_no) + ", column '" +
                                   header[c] + "': not a finite number: '" + fields[c] + "'");
            if (static_cast<std::ptrdiff_t>(c) == z_col) zs.push_back(v);
            else row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    Dataset d;
    d.x.resize(static_cast<Index>(rows.size()), static_cast<Index>(width - 1));
    d.z.resize(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c + 1 < width; ++c) d.x(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
        d.z(static_cast<Index>(r)) = zs[r];
    }
    d.validate();
    return d;
}

Dataset read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open '" + path + "'");
    return parse_csv(in, path);
}

void write_csv(std::ostream& out, const Dataset& data, const std::vector<int>* labels) {
    out << "z";
    for (Index j = 0; j < data.dim(); ++j) out << ",x" << (j + 1);
    if (labels) out << ",label";
    out << "\n";
    for (Index n = 0; n < data.size(); ++n) {
        out << format_double(data.z(n));
        for (Index j = 0; j < data.dim(); ++j) out << "," << format_double(data.x(n, j));
        if (labels) out << "," << (*labels)[static_cast<std::size_t>(n)];
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// Models

namespace {

ojson matrix_rows(const Matrix& m) {
    ojson a = ojson::array();
    for (Index i = 0; i < m.rows(); ++i) {
        ojson row = ojson::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        a.push_back(std::move(row));
    }
    return a;
}

ojson flat(const Matrix& m) {
    ojson a = ojson::array();
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
    return a;
}

template <class J>
const J& require(const J& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key))
        throw InvalidInput(where + ": missing field '" + key + "'");
    return j.at(key);
}

template <class T, class J>
T get_as(const J& j, const std::string& where) {
    try {
        return j.template get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InvalidInput(where + ": wrong type");
    }
}

template <class J>
Matrix read_rows(const J& j, Index rows, Index cols, const std::string& where) {
    if (!j.is_array() || static_cast<Index>(j.size()) != rows)
        throw InvalidInput(where + ": expected " + std::to_string(rows) + " rows");
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto& r = j[static_cast<std::size_t>(i)];
        if (!r.is_array() || static_cast<Index>(r.size()) != cols)
            throw InvalidInput(where + ": row " + std::to_string(i) + " needs " + std::to_string(cols) + " entries");
        for (Index c = 0; c < cols; ++c)
            m(i, c) = get_as<double>(r[static_cast<std::size_t>(c)], where);
    }
    return m;
}

template <class J>
Matrix read_flat(const J& j, Index rows, Index cols, const std::string& where) {
    if (!j.is_array() || static_cast<Index>(j.size()) != rows * cols)
        throw InvalidInput(where + ": expected " + std::to_string(rows * cols) + " entries");
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index c = 0; c < cols; ++c)
            m(i, c) = get_as<double>(j[static_cast<std::size_t>(i * cols + c)], where);
    return m;
}

}  // namespace

StoredModel stored_model(const FitResult& fit, const EMConfig& config) {
    StoredModel m;
    m.params = fit.params;
    m.kernel = config.kernel;
    m.lambda = config.lambda;
    m.seed = config.seed;
    m.converged = fit.converged;
    m.iterations = fit.iterations;
    m.mean_objective = fit.mean_objective;
    m.restart = fit.restart;
    m.responsibilities = fit.gamma.gamma;
    m.objective_trace = fit.objective_trace;
    return m;
}

ojson model_to_json(const StoredModel& model) {
    const MixtureParams& p = model.params;
    ojson j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "npmix_model";
    j["K"] = p.components();
    j["p"] = p.dim();
    j["grid"] = p.grid.points;
    j["kernel"] = {{"family", to_string(model.kernel.family)}, {"bandwidth", model.kernel.bandwidth}};
    j["lambda"] = model.lambda;
    j["seed"] = model.seed;
    j["pi"] = matrix_rows(p.pi);
    ojson comps = ojson::array();
    for (Index k = 0; k < p.components(); ++k) {
        ojson c;
        ojson mus = ojson::array();
        ojson thetas = ojson::array();
        for (Index g = 0; g < p.grid_size(); ++g) {
            mus.push_back(flat(p.mu[static_cast<std::size_t>(k)][static_cast<std::size_t>(g)].transpose()));
            thetas.push_back(flat(p.theta[static_cast<std::size_t>(k)][static_cast<std::size_t>(g)]));
        }
        c["mu"] = std::move(mus);
        c["theta"] = std::move(thetas);
        comps.push_back(std::move(c));
    }
    j["components"] = std::move(comps);
    j["fit"] = {{"converged", model.converged},
                {"iterations", model.iterations},
                {"mean_objective", model.mean_objective},
                {"restart", model.restart}};
    j["responsibilities"] = matrix_rows(model.responsibilities);
    j["objective_trace"] = model.objective_trace;
    return j;
}

StoredModel model_from_json(const ojson& j) {
    const std::string w = "model";
    if (get_as<int>(require(j, "schema_version", w), w) != kSchemaVersion)
        throw InvalidInput("model: unsupported schema_version");
    StoredModel m;
    const Index K = get_as<Index>(require(j, "K", w), w);
    const Index p = get_as<Index>(require(j, "p", w), w);
    if (K < 1 || p < 1) throw InvalidInput("model: K and p must be positive");
    GridSpec grid;
    grid.points = get_as<std::vector<double>>(require(j, "grid", w), "model.grid");
    grid.validate(1);
    const Index G = grid.size();
    const auto& kj = require(j, "kernel", w);
    m.kernel.family = parse_kernel_family(get_as<std::string>(require(kj, "family", "model.kernel"), "model.kernel"));
    m.kernel.bandwidth = get_as<double>(require(kj, "bandwidth", "model.kernel"), "model.kernel");
    m.lambda = get_as<double>(require(j, "lambda", w), w);
    m.seed = get_as<std::uint64_t>(require(j, "seed", w), w);

    m.params = MixtureParams::zeros(K, grid, p);
    m.params.pi = read_rows(require(j, "pi", w), K, G, "model.pi");
    const auto& comps = require(j, "components", w);
    if (!comps.is_array() || static_cast<Index>(comps.size()) != K)
        throw InvalidInput("model.components: expected " + std::to_string(K) + " entries");
    for (Index k = 0; k < K; ++k) {
        const auto& c = comps[static_cast<std::size_t>(k)];
        const std::string wc = "model.components[" + std::to_string(k) + "]";
        const auto& mus = require(c, "mu", wc);
        const auto& thetas = require(c, "theta", wc);
        if (!mus.is_array() || !thetas.is_array() || static_cast<Index>(mus.size()) != G ||
            static_cast<Index>(thetas.size()) != G)
            throw InvalidInput(wc + ": need one mu and theta per grid point");
        for (Index g = 0; g < G; ++g) {
            m.params.mu[static_cast<std::size_t>(k)][static_cast<std::size_t>(g)] =
                read_flat(mus[static_cast<std::size_t>(g)], 1, p, wc + ".mu").transpose();
            m.params.theta[static_cast<std::size_t>(k)][static_cast<std::size_t>(g)] =
                read_flat(thetas[static_cast<std::size_t>(g)], p, p, wc + ".theta");
        }
    }
    if (j.contains("fit")) {
        const auto& f = j.at("fit");
        m.converged = get_as<bool>(require(f, "converged", "model.fit"), "model.fit");
        m.iterations = get_as<int>(require(f, "iterations", "model.fit"), "model.fit");
        m.mean_objective = get_as<double>(require(f, "mean_objective", "model.fit"), "model.fit");
        m.restart = get_as<int>(require(f, "restart", "model.fit"), "model.fit");
    }
    if (j.contains("responsibilities")) {
        const auto& r = j.at("responsibilities");
        if (!r.is_array()) throw InvalidInput("model.responsibilities: expected an array");
        const Index cols = r.empty() ? 0 : static_cast<Index>(r[0].size());
        m.responsibilities = r.empty() ? Matrix() : read_rows(r, static_cast<Index>(r.size()), cols, "model.responsibilities");
    }
    if (j.contains("objective_trace"))
        m.objective_trace = get_as<std::vector<std::vector<double>>>(j.at("objective_trace"), "model.objective_trace");
    return m;
}

std::string dump_model(const StoredModel& model) { return model_to_json(model).dump(1) + "\n"; }

void write_text(const std::string& path, const std::string& text) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write '" + path + "'");
    out << text;
}

void save_model(const std::string& path, const StoredModel& model) { write_text(path, dump_model(model)); }

StoredModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open '" + path + "'");
    ojson j;
    try {
        j = ojson::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(path + ": " + e.what());
    }
    return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Config

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw InvalidInput(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw InvalidInput(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void maybe(const json& j, const char* key, T& target, const std::string& where) {
    if (j.contains(key)) target = get_as<T>(j.at(key), where + "." + key);
}

ComponentSpec component_from_json(const json& j, const std::string& where) {
    check_keys(j, {"structure", "rho", "diagonal", "initial_edges", "edge_lo", "edge_hi", "adds_per_step",
                   "removes_per_step", "add_lo", "add_hi", "pool", "mean"}, where);
    ComponentSpec c;
    if (j.contains("structure")) c.structure = parse_structure(get_as<std::string>(j.at("structure"), where));
    maybe(j, "rho", c.rho, where);
    maybe(j, "diagonal", c.diagonal, where);
    maybe(j, "initial_edges", c.initial_edges, where);
    maybe(j, "edge_lo", c.edge_lo, where);
    maybe(j, "edge_hi", c.edge_hi, where);
    maybe(j, "adds_per_step", c.adds_per_step, where);
    maybe(j, "removes_per_step", c.removes_per_step, where);
    maybe(j, "add_lo", c.add_lo, where);
    maybe(j, "add_hi", c.add_hi, where);
    if (j.contains("pool")) c.pool = parse_add_pool(get_as<std::string>(j.at("pool"), where));
    maybe(j, "mean", c.mean, where);
    return c;
}

}  // namespace

ScenarioSpec scenario_from_json(const json& j) {
    const std::string w = "scenario";
    check_keys(j, {"preset", "name", "p", "grid_points", "z_lo", "z_hi", "n_per_point", "pi_slope", "seed",
                   "components"}, w);
    ScenarioSpec s;
    if (j.contains("preset")) s = scenario_preset(get_as<std::string>(j.at("preset"), w + ".preset"));
    maybe(j, "name", s.name, w);
    maybe(j, "p", s.p, w);
    maybe(j, "grid_points", s.grid_points, w);
    maybe(j, "z_lo", s.z_lo, w);
    maybe(j, "z_hi", s.z_hi, w);
    maybe(j, "n_per_point", s.n_per_point, w);
    maybe(j, "pi_slope", s.pi_slope, w);
    maybe(j, "seed", s.seed, w);
    if (j.contains("components")) {
        const auto& cs = j.at("components");
        if (!cs.is_array()) throw InvalidInput("scenario.components: expected an array");
        s.components.clear();
        for (std::size_t i = 0; i < cs.size(); ++i)
            s.components.push_back(component_from_json(cs[i], "scenario.components[" + std::to_string(i) + "]"));
    }
    s.validate();
    return s;
}

ojson scenario_to_json(const ScenarioSpec& s) {
    ojson j;
    j["name"] = s.name;
    j["p"] = s.p;
    j["grid_points"] = s.grid_points;
    j["z_lo"] = s.z_lo;
    j["z_hi"] = s.z_hi;
    j["n_per_point"] = s.n_per_point;
    j["pi_slope"] = s.pi_slope;
    j["seed"] = s.seed;
    ojson cs = ojson::array();
    for (const auto& c : s.components) {
        cs.push_back({{"structure", to_string(c.structure)},
                      {"rho", c.rho},
                      {"diagonal", c.diagonal},
                      {"initial_edges", c.initial_edges},
                      {"edge_lo", c.edge_lo},
                      {"edge_hi", c.edge_hi},
                      {"adds_per_step", c.adds_per_step},
                      {"removes_per_step", c.removes_per_step},
                      {"add_lo", c.add_lo},
                      {"add_hi", c.add_hi},
                      {"pool", to_string(c.pool)},
                      {"mean", c.mean}});
    }
    j["components"] = std::move(cs);
    return j;
}

RunConfig parse_config(const json& j) {
    check_keys(j, {"kernel", "grid", "em", "selection", "scenario", "simulate"}, "config");
    RunConfig rc;
    if (j.contains("kernel")) {
        const auto& k = j.at("kernel");
        check_keys(k, {"family", "bandwidth"}, "kernel");
        KernelSpec spec;
        if (k.contains("family")) spec.family = parse_kernel_family(get_as<std::string>(k.at("family"), "kernel.family"));
        maybe(k, "bandwidth", spec.bandwidth, "kernel");
        spec.validate();
        rc.kernel = spec;
    }
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        check_keys(g, {"points", "lo", "hi", "count"}, "grid");
        if (g.contains("points")) {
            if (g.contains("lo") || g.contains("hi") || g.contains("count"))
                throw InvalidInput("grid: give either 'points' or 'lo'/'hi'/'count'");
            GridSpec spec;
            spec.points = get_as<std::vector<double>>(g.at("points"), "grid.points");
            if (spec.points.empty()) throw EmptyGrid("grid: 'points' is empty");
            spec.validate(1);
            rc.grid = spec;
        } else if (g.contains("lo") || g.contains("hi")) {
            if (!g.contains("lo") || !g.contains("hi") || !g.contains("count"))
                throw InvalidInput("grid: 'lo', 'hi' and 'count' go together");
            const Index count = get_as<Index>(g.at("count"), "grid.count");
            if (count < 1) throw EmptyGrid("grid: count must be positive");
            rc.grid = GridSpec::uniform(get_as<double>(g.at("lo"), "grid.lo"), get_as<double>(g.at("hi"), "grid.hi"), count);
            rc.grid->validate(1);
        } else if (g.contains("count")) {
            const Index count = get_as<Index>(g.at("count"), "grid.count");
            if (count < 1) throw EmptyGrid("grid: count must be positive");
            rc.grid_count = count;
        }
    }
    if (j.contains("em")) {
        const auto& e = j.at("em");
        check_keys(e, {"K", "lambda", "max_iters", "rel_tol", "restarts", "seed", "init_model"}, "em");
        EMConfig c;
        maybe(e, "K", c.K, "em");
        maybe(e, "lambda", c.lambda, "em");
        maybe(e, "max_iters", c.max_iters, "em");
        maybe(e, "rel_tol", c.rel_tol, "em");
        maybe(e, "restarts", c.restarts, "em");
        maybe(e, "seed", c.seed, "em");
        if (e.contains("init_model")) rc.init_model = get_as<std::string>(e.at("init_model"), "em.init_model");
        c.validate();
        rc.em = c;
    }
    if (j.contains("selection")) {
        const auto& s = j.at("selection");
        check_keys(s, {"K_values", "lambda_values", "h_values", "cv_folds"}, "selection");
        SelectionGrid g;
        maybe(s, "K_values", g.K_values, "selection");
        maybe(s, "lambda_values", g.lambda_values, "selection");
        maybe(s, "h_values", g.h_values, "selection");
        maybe(s, "cv_folds", g.cv_folds, "selection");
        g.validate();
        rc.selection = g;
    }
    if (j.contains("scenario")) rc.scenario = scenario_from_json(j.at("scenario"));
    if (j.contains("simulate")) {
        const auto& s = j.at("simulate");
        check_keys(s, {"replications"}, "simulate");
        int r = 1;
        maybe(s, "replications", r, "simulate");
        if (r < 1) throw InvalidInput("simulate.replications must be positive");
        rc.replications = r;
    }
    return rc;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(path + ": " + e.what());
    }
    return parse_config(j);
}

}  // namespace npmix
