#include "hetexp/cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <yaml-cpp/yaml.h>

#include "hetexp/bistable.hpp"
#include "hetexp/economy.hpp"
#include "hetexp/expectations.hpp"
#include "hetexp/hash.hpp"
#include "hetexp/muth.hpp"
#include "hetexp/rl.hpp"
#include "hetexp/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hetexp::cli {

namespace {

std::string join(const std::vector<std::string>& items, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
    return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : InvalidInput("invalid configuration: " + join(problems, "; ")), problems_(std::move(problems)) {}

// ---------------------------------------------------------------------------
// Strict YAML reading
// ---------------------------------------------------------------------------

namespace {

/// Reads one YAML mapping, records every value it hands out into `normalized`
/// and reports keys nobody asked for.
class Block {
public:
    Block(YAML::Node node, std::string path, std::vector<std::string>& problems)
        : node_(std::move(node)), path_(std::move(path)), problems_(problems) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) {
            problem("", "must be a mapping");
            node_ = YAML::Node();
        }
    }

    bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

    double number(const std::string& key, double fallback, const std::function<bool(double)>& ok = nullptr,
                  const char* requirement = nullptr) {
        double v = fallback;
        if (auto n = lookup(key); n && !n.IsNull()) {
            try {
                v = n.as<double>();
            } catch (const YAML::Exception&) {
                problem(key, "must be a number");
                return fallback;
            }
            if (!std::isfinite(v)) problem(key, "must be finite");
        }
        if (ok && !ok(v)) problem(key, requirement ? requirement : "is out of range");
        normalized[key] = v;
        return v;
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback, std::uint64_t minimum = 0) {
        std::uint64_t v = fallback;
        if (auto n = lookup(key); n && !n.IsNull()) {
            try {
                const auto text = n.as<std::string>();
                if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) throw YAML::Exception({}, "");
                v = std::stoull(text);
            } catch (const std::exception&) {
                problem(key, "must be a non-negative integer");
                return fallback;
            }
        }
        if (v < minimum) problem(key, "must be at least " + std::to_string(minimum));
        normalized[key] = v;
        return v;
    }

    bool flag(const std::string& key, bool fallback) {
        bool v = fallback;
        if (auto n = lookup(key); n && !n.IsNull()) {
            try {
                v = n.as<bool>();
            } catch (const YAML::Exception&) {
                problem(key, "must be true or false");
            }
        }
        normalized[key] = v;
        return v;
    }

    std::string choice(const std::string& key, const std::string& fallback, const std::vector<std::string>& allowed) {
        std::string v = fallback;
        if (auto n = lookup(key); n && !n.IsNull()) {
            try {
                v = n.as<std::string>();
            } catch (const YAML::Exception&) {
                problem(key, "must be a string");
                return fallback;
            }
        }
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v) == allowed.end())
            problem(key, "must be one of " + join(allowed, ", ") + " (got '" + v + "')");
        normalized[key] = v;
        return v;
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
        std::vector<double> v = std::move(fallback);
        if (auto n = lookup(key); n && !n.IsNull()) {
            try {
                v = n.as<std::vector<double>>();
            } catch (const YAML::Exception&) {
                problem(key, "must be a list of numbers");
            }
        }
        normalized[key] = v;
        return v;
    }

    std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback,
                                     const std::vector<std::string>& allowed) {
        std::vector<std::string> v = std::move(fallback);
        if (auto n = lookup(key); n && !n.IsNull()) {
            try {
                v = n.as<std::vector<std::string>>();
            } catch (const YAML::Exception&) {
                problem(key, "must be a list of strings");
            }
        }
        for (const auto& item : v)
            if (std::find(allowed.begin(), allowed.end(), item) == allowed.end())
                problem(key, "entries must be among " + join(allowed, ", ") + " (got '" + item + "')");
        normalized[key] = v;
        return v;
    }

    /// Nested block; absent blocks read as empty so every default is filled in.
    Block child(const std::string& key) {
        used_.insert(key);
        return Block(has(key) ? node_[key] : YAML::Node(), sub(key), problems_);
    }

    void adopt(const std::string& key, Block& child) {
        child.finish();
        normalized[key] = child.normalized;
    }

    void finish() {
        if (finished_) return;
        finished_ = true;
        if (!node_ || !node_.IsMap()) return;
        for (const auto& item : node_) {
            const auto key = item.first.as<std::string>();
            if (!used_.count(key)) problems_.push_back("unknown key '" + sub(key) + "'");
        }
    }

    void problem(const std::string& key, const std::string& message) {
        problems_.push_back("'" + (key.empty() ? path_ : sub(key)) + "' " + message);
    }

    json normalized = json::object();

private:
    YAML::Node lookup(const std::string& key) {
        used_.insert(key);
        if (!has(key)) return YAML::Node();
        auto n = node_[key];
        if (n.IsNull()) return YAML::Node();
        return n;
    }

    std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    YAML::Node node_;
    std::string path_;
    std::vector<std::string>& problems_;
    std::set<std::string> used_;
    bool finished_ = false;
};

const std::vector<std::string> kKinds = {"muth", "aiyagari", "ks", "temporary-eq", "rl-mdp", "bistable"};
const std::vector<std::string> kBlocks = {"muth", "economy", "steady_state", "fixed_point", "learning", "rl", "bistable"};

std::set<std::string> blocks_for(const std::string& kind) {
    if (kind == "muth") return {"muth"};
    if (kind == "aiyagari") return {"economy", "steady_state"};
    if (kind == "ks") return {"economy", "fixed_point"};
    if (kind == "temporary-eq") return {"economy", "learning"};
    if (kind == "rl-mdp") return {"rl"};
    if (kind == "bistable") return {"bistable"};
    return {};
}

auto positive = [](double v) { return v > 0.0; };
auto non_negative = [](double v) { return v >= 0.0; };
auto unit_open = [](double v) { return v > 0.0 && v < 1.0; };
auto gain = [](double v) { return v > 0.0 && v <= 1.0; };

void read_muth(Block& b) {
    b.number("demand_slope", 1.0, positive, "must be > 0");
    b.number("supply_slope", 1.0, positive, "must be > 0");
    b.number("rho", 0.5, [](double v) { return std::abs(v) < 1.0; }, "must satisfy |rho| < 1");
    b.number("sigma_eps", 0.1, non_negative, "must be >= 0");
    b.count("horizon", 50000, 1);
    b.choice("belief", "rls", {"rational", "rls", "sample_average", "adaptive", "fixed"});
    b.number("adaptive_gain", 0.1, gain, "must lie in (0, 1]");
    b.numbers("fixed_theta", {0.0, 0.0});
    const bool explicit_u0 = b.has("u0");
    b.number("u0", 0.0);
    if (!explicit_u0) b.normalized["u0"] = nullptr;
}

void read_economy(Block& b) {
    b.number("beta", 0.99, [](double v) { return v >= 0.0 && v < 1.0; }, "must lie in [0, 1)");
    b.number("sigma_c", 2.0, positive, "must be > 0");
    b.number("alpha_k", 0.36, unit_open, "must lie in (0, 1)");
    b.number("delta", 0.025, unit_open, "must lie in (0, 1)");
    auto assets = b.child("assets");
    assets.number("min", 0.0);
    assets.number("max", 0.0);
    assets.count("count", 100, 2);
    assets.number("curvature", 3.0, non_negative, "must be >= 0");
    b.adopt("assets", assets);
    auto income = b.child("income");
    income.number("rho", 0.9, [](double v) { return std::abs(v) < 1.0; }, "must satisfy |rho| < 1");
    income.number("sd", 0.2, non_negative, "must be >= 0");
    income.count("states", 2, 1);
    b.adopt("income", income);
    auto aggregate = b.child("aggregate");
    const auto levels = aggregate.numbers("levels", {0.99, 1.01});
    if (levels.empty()) aggregate.problem("levels", "must not be empty");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!(levels[i] > 0.0)) aggregate.problem("levels", "entries must be > 0");
        if (i > 0 && !(levels[i] > levels[i - 1])) aggregate.problem("levels", "must be strictly increasing");
    }
    aggregate.number("persistence", 0.875, gain, "must lie in (0, 1]");
    b.adopt("aggregate", aggregate);
}

void read_steady_state(Block& b) {
    b.number("bellman_tolerance", 1e-10, positive, "must be > 0");
    b.number("distribution_tolerance", 1e-13, positive, "must be > 0");
    b.number("root_tolerance", 1e-12, positive, "must be > 0");
}

void read_fixed_point(Block& b) {
    b.choice("plm", "price", {"moment", "price"});
    b.number("tolerance", 1e-4, positive, "must be > 0");
    b.count("max_iterations", 100, 1);
    b.count("horizon", 11000, 10);
    b.count("burn_in", 1000);
    b.number("damping", 0.5, gain, "must lie in (0, 1]");
    b.count("grid_nodes", 9, 1);
    b.number("grid_half_width", 0.15, positive, "must be > 0");
    b.count("validation_horizon", 11000);
}

void read_learning(Block& b) {
    b.choice("plm", "price", {"moment", "price"});
    b.choice("mode", "rls", {"fixed", "rls"});
    b.choice("initial", "stationary", {"stationary", "fixed_point"});
    b.count("horizon", 20000, 1);
    b.number("relearn_threshold", 1e-3);
    b.number("clamp_ceiling", 0.05, non_negative, "must be >= 0");
    b.count("grid_nodes", 9, 1);
    b.number("grid_half_width", 0.15, positive, "must be > 0");
    b.number("prior_weight", 100.0, positive, "must be > 0");
    b.number("prior_spread", 0.005, positive, "must be > 0");
    b.count("window", 5000, 30);
    b.choice("scale", "sample", {"sample", "belief"});
    if (b.has("regime")) {
        auto regime = b.child("regime");
        regime.count("period", 1, 1);
        regime.number("delta", 0.025, unit_open, "must lie in (0, 1)");
        b.adopt("regime", regime);
    } else {
        b.child("regime");
        b.normalized["regime"] = nullptr;
    }
}

void read_rl(Block& b) {
    const auto task = b.choice("task", "q", {"td", "q"});
    b.count("states", task == "td" ? 10 : 5, 1);
    b.count("actions", 3, 1);
    b.number("beta", 0.9, [](double v) { return v >= 0.0 && v < 1.0; }, "must lie in [0, 1)");
    b.count("steps", task == "td" ? 200000 : 100000, 1);
    b.number("epsilon", 1.0, gain, "must lie in (0, 1]");
    b.flag("sarsa", false);
    b.number("min_action_gap", 0.01, non_negative, "must be >= 0");
    auto schedule = b.child("schedule");
    schedule.choice("kind", task == "td" ? "power" : "harmonic", {"harmonic", "constant", "power"});
    schedule.number("value", 1.0, gain, "must lie in (0, 1]");
    schedule.number("exponent", 0.7, positive, "must be > 0");
    b.adopt("schedule", schedule);
}

void read_bistable(Block& b) {
    b.number("quartic", 1.0, positive, "must be > 0");
    b.number("quadratic", 1.0, positive, "must be > 0");
    b.number("sigma", 0.7, non_negative, "must be >= 0");
    b.number("dt", 0.01, [](double v) { return v > 0.0 && v <= bistable::DoubleWellSpec::kMaxDt; },
             "must lie in (0, 0.05]");
    b.choice("kind", "continuous", {"continuous", "discrete_map"});
    b.count("steps", 1000000, 1);
    b.number("x0", -1.0);
    b.number("threshold", 0.5, positive, "must be > 0");
    b.count("path_stride", 100, 1);
    b.number("lo", -3.0);
    b.number("hi", 3.0);
    b.count("points", 601, 2);
    b.count("bins", 20, 1);
}

}  // namespace

std::string ScenarioConfig::hash() const {
    json hashed = config;
    hashed.erase("output");
    return hex64(fnv1a64(hashed.dump()));
}

ScenarioConfig parse_config(const std::string& yaml_text, const RunOverrides& overrides) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ConfigError({std::string("YAML syntax error: ") + e.what()});
    }
    std::vector<std::string> problems;
    if (!root.IsMap()) throw ConfigError({"top level must be a mapping"});
    Block top(root, "", problems);

    ScenarioConfig cfg;
    if (!top.has("scenario")) problems.push_back("missing required key 'scenario'");
    cfg.kind = top.choice("scenario", "", kKinds);
    cfg.seed = top.count("seed", 0);
    if (overrides.seed) {
        cfg.seed = *overrides.seed;
        top.normalized["seed"] = cfg.seed;
    }

    auto output = top.child("output");
    cfg.output_directory = output.choice("directory", "out/" + (cfg.kind.empty() ? std::string("run") : cfg.kind), {});
    cfg.formats = output.strings("formats", {"csv", "json"}, {"csv", "json"});
    if (overrides.output_directory) {
        cfg.output_directory = *overrides.output_directory;
        output.normalized["directory"] = cfg.output_directory;
    }
    top.adopt("output", output);

    const auto needed = blocks_for(cfg.kind);
    for (const auto& name : kBlocks) {
        if (!needed.count(name)) {
            if (top.has(name)) problems.push_back("block '" + name + "' is not used by scenario kind '" + cfg.kind + "'");
            top.child(name);  // mark as seen; reported above
            continue;
        }
        auto block = top.child(name);
        if (name == "muth") read_muth(block);
        else if (name == "economy") read_economy(block);
        else if (name == "steady_state") read_steady_state(block);
        else if (name == "fixed_point") read_fixed_point(block);
        else if (name == "learning") read_learning(block);
        else if (name == "rl") read_rl(block);
        else if (name == "bistable") read_bistable(block);
        top.adopt(name, block);
    }
    top.finish();
    if (!problems.empty()) throw ConfigError(problems);
    cfg.config = top.normalized;
    return cfg;
}

ScenarioConfig load_config(const std::string& path, const RunOverrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot read config file '" + path + "'"});
    std::stringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), overrides);
}

// ---------------------------------------------------------------------------
// Scenario pipelines
// ---------------------------------------------------------------------------

namespace {

struct Artifacts {
    ScenarioConfig cfg;
    fs::path dir;
    std::vector<std::string> files;
    json statistics = json::object();

    bool csv() const { return std::find(cfg.formats.begin(), cfg.formats.end(), "csv") != cfg.formats.end(); }
    bool want_json() const { return std::find(cfg.formats.begin(), cfg.formats.end(), "json") != cfg.formats.end(); }

    template <typename Writer>
    void write_csv(const std::string& name, Writer&& writer) {
        if (!csv()) return;
        std::ofstream out(dir / name);
        out << "# config_hash=" << cfg.hash() << " seed=" << cfg.seed << '\n';
        writer(out);
        if (!out) throw std::runtime_error("failed to write " + (dir / name).string());
        files.push_back(name);
    }

    void write_json(const std::string& name, json body) {
        if (!want_json()) return;
        body["config_hash"] = cfg.hash();
        std::ofstream out(dir / name);
        out << body.dump(2) << '\n';
        if (!out) throw std::runtime_error("failed to write " + (dir / name).string());
        files.push_back(name);
    }
};

economy::EconomyParams economy_params(const json& e) {
    economy::EconomyParams p;
    p.beta = e["beta"];
    p.sigma_c = e["sigma_c"];
    p.alpha_k = e["alpha_k"];
    p.delta = e["delta"];
    p.assets.min = e["assets"]["min"];
    p.assets.max = e["assets"]["max"];
    p.assets.count = e["assets"]["count"];
    p.assets.curvature = e["assets"]["curvature"];

    const int ny = e["income"]["states"];
    const double rho = e["income"]["rho"];
    const double sd = e["income"]["sd"];
    if (ny == 1 || sd == 0.0) {
        p.income = MarkovChain::degenerate(1.0);
    } else {
        const auto log_income = discretize_ar1(rho, sd * std::sqrt(1.0 - rho * rho), ny);
        const Eigen::VectorXd pi = stationary_distribution(log_income);
        std::vector<double> levels;
        double mean = 0.0;
        for (std::size_t j = 0; j < log_income.size(); ++j) {
            levels.push_back(std::exp(log_income.state(j)));
            mean += pi[static_cast<Eigen::Index>(j)] * levels.back();
        }
        for (auto& y : levels) y /= mean;
        p.income = MarkovChain(levels, log_income.transition());
    }

    const std::vector<double> z = e["aggregate"]["levels"];
    const double persistence = e["aggregate"]["persistence"];
    const auto nz = static_cast<Eigen::Index>(z.size());
    Eigen::MatrixXd pz = Eigen::MatrixXd::Constant(nz, nz, nz > 1 ? (1.0 - persistence) / static_cast<double>(nz - 1) : 0.0);
    for (Eigen::Index i = 0; i < nz; ++i) pz(i, i) = nz > 1 ? persistence : 1.0;
    p.aggregate = MarkovChain(z, pz);
    p.validate();
    return p;
}

StepSizeSchedule schedule_from(const json& s) {
    const std::string kind = s["kind"];
    if (kind == "constant") return StepSizeSchedule::constant(s["value"]);
    if (kind == "power") return StepSizeSchedule::power(s["value"], s["exponent"]);
    return StepSizeSchedule::harmonic();
}

void run_muth(Artifacts& a) {
    const auto& m = a.cfg.config["muth"];
    muth::CobwebParams params{m["demand_slope"], m["supply_slope"], m["rho"], m["sigma_eps"]};
    const std::string kind = m["belief"];
    std::unique_ptr<BeliefModel> belief;
    if (kind == "rational") belief = std::make_unique<muth::RationalBelief>(params);
    else if (kind == "rls") belief = std::make_unique<muth::RlsBelief>();
    else if (kind == "sample_average") belief = std::make_unique<muth::SampleAverageBelief>();
    else if (kind == "adaptive") belief = std::make_unique<muth::AdaptiveBelief>(m["adaptive_gain"].get<double>());
    else {
        const std::vector<double> theta = m["fixed_theta"];
        if (theta.size() != 2) throw ConfigError({"'muth.fixed_theta' must have two entries"});
        belief = std::make_unique<muth::FixedLinearBelief>(theta[0], theta[1]);
    }
    std::optional<double> u0;
    if (!m["u0"].is_null()) u0 = m["u0"].get<double>();
    RngStream rng(a.cfg.seed, 1);
    const auto path = muth::run_cobweb(params, *belief, m["horizon"].get<std::size_t>(), rng, u0);
    a.write_csv("cobweb.csv", [&](std::ostream& out) { path.write_csv(out); });

    const auto fixed = muth::t_map_fixed_point(params);
    const auto coef = belief->coefficients();
    double mean_error = 0.0;
    for (const auto& r : path.records) mean_error += r.p_realized - r.p_expected;
    mean_error /= static_cast<double>(path.records.size());
    const double distance = std::max(std::abs(coef[0] - fixed[0]), std::abs(coef[1] - fixed[1]));
    a.statistics = {{"theta0", coef[0]}, {"theta1", coef[1]}, {"distance_to_fixed_point", distance},
                    {"mean_forecast_error", mean_error}};
    a.write_json("summary.json", {{"belief", belief->snapshot().model_kind},
                                  {"snapshot", belief->snapshot()},
                                  {"fixed_point", {fixed[0], fixed[1]}},
                                  {"u0", path.u0},
                                  {"statistics", a.statistics}});
}

void run_aiyagari(Artifacts& a) {
    const auto params = economy_params(a.cfg.config["economy"]);
    const auto& s = a.cfg.config["steady_state"];
    economy::SteadyStateOptions options;
    options.bellman.tolerance = s["bellman_tolerance"];
    options.distribution_tolerance = s["distribution_tolerance"];
    options.root_tolerance = s["root_tolerance"];
    const auto ss = economy::aiyagari_steady_state(params, options);
    const auto flat = economy::without_aggregate_risk(params);
    a.write_csv("distribution.csv", [&](std::ostream& out) { ss.distribution.write_csv(out, flat); });
    a.write_csv("values.csv", [&](std::ostream& out) { ss.values.write_csv(out, flat); });
    a.statistics = {{"r", ss.r},
                    {"w", ss.w},
                    {"k_supply", ss.k_supply},
                    {"k_demand", ss.k_demand},
                    {"market_residual", ss.k_supply - ss.k_demand},
                    {"distribution_residual", ss.distribution_residual}};
    json body = a.statistics;
    body["z"] = ss.z;
    body["labor"] = ss.labor;
    body["root_iterations"] = ss.bisection_steps;
    body["bellman_iterations"] = ss.values.iterations;
    body["param_hash"] = hex64(flat.hash());
    a.write_json("steady_state.json", body);
}

simulate::FixedPointOptions fixed_point_options(const json& f) {
    simulate::FixedPointOptions o;
    o.kind = simulate::plm_kind_from_string(f["plm"]);
    o.tolerance = f["tolerance"];
    o.max_iterations = f["max_iterations"];
    o.horizon = f["horizon"];
    o.burn_in = f["burn_in"];
    o.damping = f["damping"];
    o.grid_nodes = f["grid_nodes"];
    o.grid_half_width = f["grid_half_width"];
    o.validation_horizon = f["validation_horizon"];
    return o;
}

void run_ks(Artifacts& a) {
    const auto params = economy_params(a.cfg.config["economy"]);
    const auto options = fixed_point_options(a.cfg.config["fixed_point"]);
    RngStream rng(a.cfg.seed, 2);
    simulate::FixedPointReport report;
    try {
        report = simulate::ks_fixed_point(params, options, rng);
    } catch (const simulate::FixedPointError& e) {
        a.write_json("fixed_point.json", e.report.to_json());
        throw;
    }
    a.statistics = {{"iterations", report.iterations},
                    {"terminal_change", report.changes.back()},
                    {"validation_residual", report.validation_residual()},
                    {"coefficients", report.coefficients}};
    a.write_json("fixed_point.json", report.to_json());
}

void run_temporary(Artifacts& a) {
    const auto params = economy_params(a.cfg.config["economy"]);
    const auto& l = a.cfg.config["learning"];
    simulate::FixedPointOptions fp;
    fp.kind = simulate::plm_kind_from_string(l["plm"]);
    fp.grid_nodes = l["grid_nodes"];
    fp.grid_half_width = l["grid_half_width"];
    const auto setup = simulate::fixed_point_setup(params, fp);

    const auto mode = l["mode"] == "rls" ? simulate::PlmMode::rls : simulate::PlmMode::fixed;
    auto start = simulate::LogLinearPlm::stationary(fp.kind, params, setup.grid);
    std::vector<double> coefficients = start.coefficients();
    if (l["initial"] == "fixed_point") {
        RngStream fp_rng(a.cfg.seed, 2);
        coefficients = simulate::ks_fixed_point(params, fp, fp_rng).coefficients;
    }
    simulate::LogLinearPlm belief(fp.kind, start.centers(), coefficients, mode, l["prior_weight"], l["prior_spread"]);

    simulate::TemporaryEquilibriumOptions options;
    options.relearn_threshold = l["relearn_threshold"];
    options.clamp_ceiling = l["clamp_ceiling"];
    if (!l["regime"].is_null()) {
        auto after = params;
        after.delta = l["regime"]["delta"];
        after.assets.max = economy::make_asset_grid(params).back();
        options.regime = simulate::RegimeChange{l["regime"]["period"], after};
    }
    RngStream rng(a.cfg.seed, 3);
    const std::size_t horizon = l["horizon"];
    const auto run = simulate::run_temporary_equilibrium(params, belief, setup.grid, setup.g0, horizon, rng, options);
    a.write_csv("records.csv", [&](std::ostream& out) { simulate::write_records_csv(out, run.records); });

    json diagnostics = {{"terminal_coefficients", run.terminal_coefficients},
                        {"centers", belief.centers()},
                        {"resolves", run.resolves},
                        {"clamped_periods", run.clamped_periods},
                        {"max_walras_residual", run.max_walras_residual},
                        {"snapshot", belief.snapshot()}};
    a.statistics = {{"terminal_coefficients", run.terminal_coefficients}, {"clamped_periods", run.clamped_periods}};
    const std::size_t window = std::min(l["window"].get<std::size_t>(), run.records.size());
    if (window >= 100) {
        std::optional<std::vector<double>> scale;
        if (l["scale"] == "belief" && fp.kind == simulate::PlmKind::price) scale = belief.residual_scale();
        json distances;
        for (auto norm : {simulate::DistanceNorm::mean_error, simulate::DistanceNorm::rmse, simulate::DistanceNorm::ks}) {
            const auto d = simulate::criterion3a_distance(run.records, window, norm, scale);
            distances[simulate::to_string(norm)] = {{"log_w", d.log_w}, {"r", d.r}};
            a.statistics[simulate::to_string(norm) + "_log_w"] = d.log_w;
        }
        const auto errors = simulate::forecast_errors(run.records, window);
        diagnostics["criterion3a"] = distances;
        diagnostics["mean_error_log_w_batch_se"] = simulate::batch_means_standard_error(errors.log_w);
        const auto sce = simulate::sce_diagnostic(run.records,
                                                  {simulate::Regressor::constant, simulate::Regressor::statistic}, window);
        diagnostics["sce"] = {{"regressors", {"constant", "statistic"}}, {"log_w", sce.log_w}, {"r", sce.r}};
        diagnostics["window"] = window;
    }
    a.write_json("diagnostics.json", diagnostics);
}

void run_rl(Artifacts& a) {
    const auto& c = a.cfg.config["rl"];
    RngStream env_rng(a.cfg.seed, 10);
    RngStream rng(a.cfg.seed, 11);
    const double beta = c["beta"];
    const auto schedule = schedule_from(c["schedule"]);
    if (c["task"] == "td") {
        if (!(beta > 0.0)) throw ConfigError({"'rl.beta' must be > 0 for the td task"});
        const auto mrp = rl::random_mrp(c["states"], beta, env_rng);
        rl::TdOptions options;
        options.steps = c["steps"];
        options.schedule = schedule;
        const auto v = rl::td0_predict(mrp, options, rng);
        const auto exact = rl::solve_mrp_exact(mrp);
        a.write_csv("values.csv", [&](std::ostream& out) { rl::write_values_csv(out, v); });
        a.statistics = {{"max_abs_error", (v - exact).cwiseAbs().maxCoeff()}};
        a.write_json("summary.json", {{"estimate", std::vector<double>(v.data(), v.data() + v.size())},
                                      {"exact", std::vector<double>(exact.data(), exact.data() + exact.size())},
                                      {"statistics", a.statistics}});
        return;
    }
    // Redraw until the optimal policy is identifiable to the requested margin.
    rl::FiniteMdp mdp;
    Eigen::MatrixXd exact;
    int draws = 0;
    do {
        mdp = rl::random_mdp(c["states"], c["actions"], beta, env_rng);
        exact = rl::solve_mdp_exact(mdp);
        if (++draws > 1000) throw ConvergenceError("rl-mdp: no MDP met min_action_gap after 1000 draws");
    } while (mdp.actions() > 1 && rl::min_action_gap(exact) < c["min_action_gap"].get<double>());
    rl::QOptions options;
    options.epsilon = c["epsilon"];
    options.steps = c["steps"];
    options.schedule = schedule;
    options.sarsa = c["sarsa"];
    const auto table = rl::q_learn(mdp, options, rng);
    a.write_csv("qtable.csv", [&](std::ostream& out) { table.write_csv(out); });
    std::vector<std::size_t> exact_policy(mdp.states());
    for (Eigen::Index x = 0; x < exact.rows(); ++x) {
        Eigen::Index best = 0;
        exact.row(x).maxCoeff(&best);
        exact_policy[static_cast<std::size_t>(x)] = static_cast<std::size_t>(best);
    }
    const auto learned = table.greedy_policy();
    a.statistics = {{"policy_matches", learned == exact_policy},
                    {"max_abs_q_error", (table.q - exact).cwiseAbs().maxCoeff()},
                    {"min_action_gap", rl::min_action_gap(exact)}};
    a.write_json("summary.json", {{"greedy_policy", learned},
                                  {"exact_policy", exact_policy},
                                  {"environment_draws", draws},
                                  {"statistics", a.statistics}});
}

void run_bistable(Artifacts& a) {
    const auto& c = a.cfg.config["bistable"];
    bistable::DoubleWellSpec spec;
    spec.quartic = c["quartic"];
    spec.quadratic = c["quadratic"];
    spec.sigma = c["sigma"];
    spec.dt = c["dt"];
    spec.kind = c["kind"] == "discrete_map" ? bistable::SpecKind::discrete_map : bistable::SpecKind::continuous;
    const double threshold = c["threshold"];
    if (!(threshold < spec.well())) throw ConfigError({"'bistable.threshold' must lie below the well position"});
    RngStream rng(a.cfg.seed, 20);
    const auto path = bistable::simulate_em(spec, c["x0"], c["steps"], rng);
    const std::size_t stride = c["path_stride"];
    a.write_csv("path.csv", [&](std::ostream& out) {
        out << "step,x\n";
        char buf[64];
        for (std::size_t n = 0; n < path.size(); n += stride) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g\n", n, path[n]);
            out << buf;
        }
    });
    const auto stats = bistable::hopping_stats(path, threshold);
    json hopping = {{"hops", stats.hops},
                    {"up_crossings", stats.up_crossings},
                    {"down_crossings", stats.down_crossings},
                    {"mean_residence_low", stats.mean_residence_low},
                    {"mean_residence_high", stats.mean_residence_high},
                    {"occupancy_low", stats.occupancy_low},
                    {"occupancy_high", stats.occupancy_high}};
    a.statistics = {{"hops", stats.hops}, {"occupancy_low", stats.occupancy_low}, {"occupancy_high", stats.occupancy_high}};
    if (spec.sigma > 0.0) {
        const double lo = c["lo"], hi = c["hi"];
        if (!(hi > lo)) throw ConfigError({"'bistable.hi' must exceed 'bistable.lo'"});
        const auto grid = bistable::linspace(lo, hi, c["points"]);
        const auto density = bistable::stationary_density(spec, grid);
        a.write_csv("density.csv", [&](std::ostream& out) {
            out << "x,density\n";
            char buf[64];
            for (std::size_t i = 0; i < grid.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", grid[i], density[i]);
                out << buf;
            }
        });
        const std::size_t bins = c["bins"];
        const auto analytic = bistable::binned_stationary_mass(spec, lo, hi, bins);
        const auto empirical = bistable::empirical_mass(path, lo, hi, bins);
        double l1 = 0.0;
        for (std::size_t b = 0; b < bins; ++b) l1 += std::abs(analytic[b] - empirical[b]);
        a.write_csv("histogram.csv", [&](std::ostream& out) {
            out << "bin_lo,bin_hi,empirical,analytic\n";
            char buf[128];
            const double width = (hi - lo) / static_cast<double>(bins);
            for (std::size_t b = 0; b < bins; ++b) {
                std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", lo + width * static_cast<double>(b),
                              lo + width * static_cast<double>(b + 1), empirical[b], analytic[b]);
                out << buf;
            }
        });
        const auto lin = bistable::linearized_comparison(spec, true);
        hopping["l1_density_distance"] = l1;
        hopping["linearized"] = {{"well", lin.well},
                                 {"ou_sd", lin.ou_sd},
                                 {"ou_far_mass", lin.ou_far_mass},
                                 {"true_far_mass", lin.true_far_mass},
                                 {"ratio", lin.ratio}};
        a.statistics["l1_density_distance"] = l1;
        a.statistics["linearized_ratio"] = lin.ratio;
    }
    a.write_json("hopping.json", hopping);
}

json versions() {
    return {{"hetexp", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"cli11", CLI11_VERSION}};
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& config) {
    const auto started = std::chrono::steady_clock::now();
    Artifacts a{config, fs::path(config.output_directory), {}, json::object()};
    fs::create_directories(a.dir);

    if (config.kind == "muth") run_muth(a);
    else if (config.kind == "aiyagari") run_aiyagari(a);
    else if (config.kind == "ks") run_ks(a);
    else if (config.kind == "temporary-eq") run_temporary(a);
    else if (config.kind == "rl-mdp") run_rl(a);
    else if (config.kind == "bistable") run_bistable(a);
    else throw ConfigError({"unknown scenario kind '" + config.kind + "'"});

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json manifest = {{"schema_version", kSchemaVersion},
                     {"scenario", config.kind},
                     {"config_hash", config.hash()},
                     {"seed", config.seed},
                     {"versions", versions()},
                     {"wall_time_seconds", wall},
                     {"outputs", a.files},
                     {"statistics", a.statistics},
                     {"config", config.config}};
    std::ofstream out(a.dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed to write manifest.json");
    return {a.dir.string(), manifest};
}

RunResult run_scenario(const std::string& config_path, const RunOverrides& overrides) {
    return run_scenario(load_config(config_path, overrides));
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

namespace {

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix + "/" + it.key(), out);
    } else if (j.is_array() && !j.empty() && j.front().is_number()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "/" + std::to_string(i), out);
    } else {
        out[prefix.empty() ? "/" : prefix] = j;
    }
}

json diff(const json& a, const json& b, bool numeric_delta) {
    std::map<std::string, json> fa, fb;
    flatten(a, "", fa);
    flatten(b, "", fb);
    std::set<std::string> keys;
    for (const auto& [k, v] : fa) keys.insert(k);
    for (const auto& [k, v] : fb) keys.insert(k);
    json out = json::array();
    for (const auto& k : keys) {
        const json va = fa.count(k) ? fa[k] : json(nullptr);
        const json vb = fb.count(k) ? fb[k] : json(nullptr);
        if (va == vb) continue;
        json entry = {{"key", k}, {"a", va}, {"b", vb}};
        if (numeric_delta && va.is_number() && vb.is_number()) entry["difference"] = vb.get<double>() - va.get<double>();
        out.push_back(entry);
    }
    return out;
}

}  // namespace

json compare_runs(const json& a, const json& b) {
    if (!a.contains("schema_version") || !b.contains("schema_version"))
        throw InvalidInput("compare: manifest lacks schema_version");
    if (a["schema_version"] != b["schema_version"])
        throw InvalidInput("compare: schema version mismatch (" + a["schema_version"].dump() + " vs " +
                           b["schema_version"].dump() + ")");
    if (a["scenario"] != b["scenario"])
        throw InvalidInput("compare: incomparable scenario kinds (" + a["scenario"].dump() + " vs " +
                           b["scenario"].dump() + ")");
    json cfg_a = a["config"], cfg_b = b["config"];
    cfg_a.erase("output");
    cfg_b.erase("output");
    return {{"scenario", a["scenario"]},
            {"config", diff(cfg_a, cfg_b, false)},
            {"statistics", diff(a["statistics"], b["statistics"], true)}};
}

json compare_manifest_files(const std::string& path_a, const std::string& path_b) {
    auto read = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw InvalidInput("compare: cannot read manifest '" + path + "'");
        try {
            return json::parse(in);
        } catch (const json::exception& e) {
            throw InvalidInput("compare: '" + path + "' is not valid JSON: " + e.what());
        }
    };
    return compare_runs(read(path_a), read(path_b));
}

json error_report(const std::exception& error) {
    json report = {{"message", error.what()}};
    if (const auto* c = dynamic_cast<const ConfigError*>(&error)) {
        report["type"] = "config";
        report["problems"] = c->problems();
    } else if (const auto* fp = dynamic_cast<const simulate::FixedPointError*>(&error)) {
        report["type"] = "convergence";
        report["report"] = fp->report.to_json();
    } else if (const auto* b = dynamic_cast<const economy::BellmanError*>(&error)) {
        report["type"] = "convergence";
        report["gap_history_tail"] = std::vector<double>(
            b->gap_history.end() - static_cast<std::ptrdiff_t>(std::min<std::size_t>(b->gap_history.size(), 20)),
            b->gap_history.end());
    } else if (dynamic_cast<const ConvergenceError*>(&error)) {
        report["type"] = "convergence";
    } else if (dynamic_cast<const InvalidInput*>(&error)) {
        report["type"] = "input";
    } else {
        report["type"] = "runtime";
    }
    return {{"error", report}};
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous-agent economies under learned price expectations"};
    app.require_subcommand(1);

    std::vector<std::string> configs;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    unsigned jobs = 1;
    auto* run = app.add_subcommand("run", "Run one or more scenario configs");
    run->add_option("configs", configs, "YAML scenario files")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Override the config seed");
    run->add_option("--out", out_dir, "Output directory (one subdirectory per config when several are given)");
    run->add_option("--jobs", jobs, "Configs to run in parallel")->check(CLI::PositiveNumber);

    std::string manifest_a, manifest_b;
    auto* compare = app.add_subcommand("compare", "Diff two run manifests");
    compare->add_option("manifest_a", manifest_a)->required();
    compare->add_option("manifest_b", manifest_b)->required();

    CLI11_PARSE(app, argc, argv);

    if (compare->parsed()) {
        try {
            std::cout << compare_manifest_files(manifest_a, manifest_b).dump(2) << '\n';
            return 0;
        } catch (const std::exception& e) {
            std::cerr << error_report(e).dump(2) << '\n';
            return 2;
        }
    }

    std::vector<ScenarioConfig> parsed(configs.size());
    std::vector<json> failures;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        RunOverrides overrides;
        overrides.seed = seed;
        if (!out_dir.empty())
            overrides.output_directory =
                configs.size() == 1 ? out_dir : (fs::path(out_dir) / fs::path(configs[i]).stem()).string();
        try {
            parsed[i] = load_config(configs[i], overrides);
        } catch (const std::exception& e) {
            auto report = error_report(e);
            report["config"] = configs[i];
            failures.push_back(report);
        }
    }
    if (failures.empty()) {
        std::set<std::string> dirs;
        for (const auto& p : parsed)
            if (!dirs.insert(fs::weakly_canonical(p.output_directory).string()).second)
                failures.push_back(error_report(ConfigError({"output directory '" + p.output_directory +
                                                             "' is shared by several configs"})));
    }
    if (!failures.empty()) {
        for (const auto& f : failures) std::cerr << f.dump(2) << '\n';
        return 2;
    }

    std::atomic<std::size_t> next{0};
    std::mutex io;
    int status = 0;
    auto worker = [&] {
        for (std::size_t i = next++; i < parsed.size(); i = next++) {
            try {
                const auto result = run_scenario(parsed[i]);
                std::lock_guard lock(io);
                std::cout << json{{"config", configs[i]},
                                  {"output_directory", result.output_directory},
                                  {"config_hash", result.manifest["config_hash"]}}
                                 .dump()
                          << '\n';
            } catch (const std::exception& e) {
                auto report = error_report(e);
                report["config"] = configs[i];
                std::lock_guard lock(io);
                std::cerr << report.dump(2) << '\n';
                status = dynamic_cast<const ConfigError*>(&e) ? 2 : 1;
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned threads = std::min<unsigned>(jobs, static_cast<unsigned>(parsed.size()));
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return status;
}

}  // namespace hetexp::cli
