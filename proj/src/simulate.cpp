#include "hetexp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "hetexp/csv.hpp"
#include "hetexp/hash.hpp"

namespace hetexp::simulate {

using economy::ValueTable;

std::string to_string(PlmKind kind) { return kind == PlmKind::moment ? "moment" : "price"; }

PlmKind plm_kind_from_string(const std::string& text) {
    if (text == "moment") return PlmKind::moment;
    if (text == "price") return PlmKind::price;
    throw InvalidInput("unknown PLM kind '" + text + "' (expected moment or price)");
}

economy::Statistic statistic_of(PlmKind kind) {
    return kind == PlmKind::moment ? economy::Statistic::log_capital : economy::Statistic::log_wage;
}

std::string coefficient_hash(std::span<const double> coefficients) {
    std::string text;
    char buf[32];
    for (double c : coefficients) {
        std::snprintf(buf, sizeof buf, "%.17g;", c);
        text += buf;
    }
    return hex64(fnv1a64(text));
}

// ---------------------------------------------------------------------------
// LogLinearPlm
// ---------------------------------------------------------------------------

LogLinearPlm::LogLinearPlm(PlmKind kind, std::vector<double> centers, std::vector<double> coefficients, PlmMode mode,
                           double prior_weight, double prior_spread)
    : kind_(kind), centers_(std::move(centers)), mode_(mode), prior_weight_(prior_weight), prior_spread_(prior_spread) {
    if (centers_.empty()) throw InvalidInput("LogLinearPlm: need at least one z state");
    if (!(prior_weight_ > 0.0) || !(prior_spread_ > 0.0))
        throw InvalidInput("LogLinearPlm: prior weight and spread must be positive");
    squared_error_sum_.assign(targets(), 0.0);
    set_coefficients(std::move(coefficients));
}

LogLinearPlm LogLinearPlm::stationary(PlmKind kind, const EconomyParams& params, const ForecastGrid& grid,
                                      PlmMode mode) {
    if (grid.statistic != statistic_of(kind)) throw InvalidInput("LogLinearPlm: grid statistic does not match PLM kind");
    const std::size_t nz = grid.z_count();
    const std::size_t mid = grid.size() / 2;
    std::vector<double> centers(nz);
    for (std::size_t m = 0; m < nz; ++m) centers[m] = grid.value(m, mid);
    const std::size_t targets = kind == PlmKind::moment ? 1 : 2;
    std::vector<double> theta(nz * nz * targets * 2, 0.0);
    const double k_center = std::exp(grid.log_capital[mid]);
    for (std::size_t m = 0; m < nz; ++m)
        for (std::size_t mn = 0; mn < nz; ++mn) {
            const std::size_t base = ((m * nz + mn) * targets) * 2;
            theta[base] = centers[mn];
            if (targets == 2) theta[base + 2] = economy::firm_prices(params, k_center, grid.labor, grid.z_levels[mn]).r;
        }
    return LogLinearPlm(kind, std::move(centers), std::move(theta), mode);
}

std::string LogLinearPlm::kind() const {
    return std::string(kind_ == PlmKind::moment ? "moment_plm" : "price_plm") + (mode_ == PlmMode::rls ? "_rls" : "_fixed");
}

void LogLinearPlm::set_coefficients(std::vector<double> coefficients) {
    if (coefficients.size() != z_count() * z_count() * targets() * 2)
        throw InvalidInput("LogLinearPlm: coefficient vector has the wrong length");
    for (double c : coefficients)
        if (!std::isfinite(c)) throw InvalidInput("LogLinearPlm: coefficients must be finite");
    theta_ = std::move(coefficients);
    reset_rls();
}

void LogLinearPlm::reset_rls() {
    rls_.clear();
    if (mode_ != PlmMode::rls) return;
    Eigen::MatrixXd r = Eigen::MatrixXd::Identity(2, 2);
    r(1, 1) = prior_spread_ * prior_spread_;
    for (std::size_t slot = 0; slot < theta_.size(); slot += 2) {
        Eigen::Vector2d theta(theta_[slot], theta_[slot + 1]);
        rls_.push_back(RlsState::with_prior(theta, r, prior_weight_));
    }
}

std::vector<double> LogLinearPlm::forecast(std::span<const double> obs) const {
    if (obs.size() != 3) throw InvalidInput("LogLinearPlm: observables are {z, z', s}");
    const auto m = static_cast<std::size_t>(obs[0]);
    const auto mn = static_cast<std::size_t>(obs[1]);
    if (m >= z_count() || mn >= z_count()) throw InvalidInput("LogLinearPlm: z index out of range");
    const double x = obs[2] - centers_[m];
    std::vector<double> out(targets());
    for (std::size_t k = 0; k < targets(); ++k) {
        const std::size_t o = offset(m, mn, k);
        out[k] = theta_[o] + theta_[o + 1] * x;
    }
    return out;
}

void LogLinearPlm::update(std::span<const double> realized, std::span<const double> obs) {
    if (realized.size() != targets()) throw InvalidInput("LogLinearPlm: realized vector has the wrong length");
    const auto predicted = forecast(obs);
    const auto m = static_cast<std::size_t>(obs[0]);
    const auto mn = static_cast<std::size_t>(obs[1]);
    Eigen::Vector2d x(1.0, obs[2] - centers_[m]);
    for (std::size_t k = 0; k < targets(); ++k) {
        const double e = realized[k] - predicted[k];
        squared_error_sum_[k] += e * e;
        if (mode_ == PlmMode::rls) {
            const std::size_t o = offset(m, mn, k);
            auto& state = rls_[o / 2];
            rls_update_inplace(state, x, realized[k]);
            theta_[o] = state.theta[0];
            theta_[o + 1] = state.theta[1];
        }
    }
    ++t_;
}

std::optional<std::vector<double>> LogLinearPlm::residual_scale() const {
    if (t_ == 0) return std::nullopt;
    std::vector<double> out(targets());
    for (std::size_t k = 0; k < targets(); ++k) out[k] = std::sqrt(squared_error_sum_[k] / static_cast<double>(t_));
    return out;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

void write_records_csv(std::ostream& out, const std::vector<SimRecord>& records) {
    CsvWriter csv(out, {"t", "z_index", "z", "k", "labor", "w", "r", "statistic", "forecast_log_w", "forecast_r",
                        "realized_log_w", "realized_r", "coefficient_hash", "clamped", "walras_residual"});
    for (const auto& rec : records)
        csv << rec.t << rec.z_index << rec.z << rec.k << rec.labor << rec.w << rec.r << rec.statistic
            << rec.forecast_log_w << rec.forecast_r << rec.realized_log_w << rec.realized_r << rec.coefficient_hash
            << (rec.clamped ? 1 : 0) << rec.walras_residual;
}

// ---------------------------------------------------------------------------
// Temporary equilibrium
// ---------------------------------------------------------------------------

namespace {

std::vector<double> realized_targets(PlmKind kind, double k, const economy::Prices& prices) {
    if (kind == PlmKind::moment) return {std::log(k)};
    return {std::log(prices.w), prices.r};
}

double statistic_value(PlmKind kind, double k, const economy::Prices& prices) {
    return kind == PlmKind::moment ? std::log(k) : std::log(prices.w);
}

}  // namespace

TemporaryEquilibriumRun run_temporary_equilibrium(const EconomyParams& params, LogLinearPlm& belief,
                                                  const ForecastGrid& grid, const Histogram& g0, std::size_t horizon,
                                                  RngStream& rng, const TemporaryEquilibriumOptions& options) {
    if (horizon == 0) throw InvalidInput("run_temporary_equilibrium: horizon must be >= 1");
    const Eigen::VectorXd pi = stationary_distribution(params.aggregate);
    const std::size_t start = rng.categorical(std::span<const double>(pi.data(), static_cast<std::size_t>(pi.size())));
    const auto path = simulate_chain(params.aggregate, horizon + 1, rng, start);
    return run_temporary_equilibrium(params, belief, grid, g0, path, options);
}

TemporaryEquilibriumRun run_temporary_equilibrium(const EconomyParams& params, LogLinearPlm& belief,
                                                  const ForecastGrid& grid, const Histogram& g0,
                                                  const std::vector<std::size_t>& z_path,
                                                  const TemporaryEquilibriumOptions& options) {
    params.validate();
    if (z_path.size() < 2) throw InvalidInput("run_temporary_equilibrium: z path must cover at least two periods");
    const std::size_t horizon = z_path.size() - 1;
    const auto asset_grid = economy::make_asset_grid(params);
    if (grid.z_count() != params.aggregate.size() || belief.z_count() != params.aggregate.size())
        throw InvalidInput("run_temporary_equilibrium: belief/grid do not match the z chain");
    if (grid.statistic != statistic_of(belief.plm_kind()))
        throw InvalidInput("run_temporary_equilibrium: grid statistic does not match the belief");
    if (g0.na != asset_grid.size() || g0.ny != params.income.size())
        throw InvalidInput("run_temporary_equilibrium: initial histogram does not match the grids");
    g0.validate(1e-10);
    for (auto m : z_path)
        if (m >= params.aggregate.size()) throw InvalidInput("run_temporary_equilibrium: z path index out of range");

    const PlmKind kind = belief.plm_kind();
    EconomyParams current = params;
    TemporaryEquilibriumRun run;
    run.values = options.values ? *options.values : economy::solve_bellman(current, belief, grid, options.bellman);
    std::vector<double> solved_at = belief.coefficients();
    Histogram g = g0;
    run.records.reserve(horizon);

    std::vector<double> policy;
    double prev_s = 0.0;
    std::size_t prev_m = 0;
    for (std::size_t t = 0; t <= horizon; ++t) {
        bool switched = false;
        if (options.regime && options.regime->period == t && t > 0) {
            current = options.regime->params;
            current.validate();
            if (economy::make_asset_grid(current) != asset_grid || current.income.size() != params.income.size() ||
                current.aggregate.size() != params.aggregate.size())
                throw InvalidInput("run_temporary_equilibrium: regime change must keep the grids and chains' sizes");
            switched = true;
        }
        const std::size_t m = z_path[t];
        const double z = current.aggregate.state(m);
        const auto agg = economy::aggregate(g, asset_grid, current.income);
        const auto prices = economy::firm_prices(current, agg.k, agg.labor, z);
        const double s = statistic_value(kind, agg.k, prices);

        if (t > 0) {
            auto& last = run.records.back();
            last.realized_log_w = std::log(prices.w);
            last.realized_r = prices.r;
            const auto realized = realized_targets(kind, agg.k, prices);
            const double obs[3] = {static_cast<double>(prev_m), static_cast<double>(m), prev_s};
            belief.update(realized, obs);
        }
        if (t == horizon) break;

        const auto coefficients = belief.coefficients();
        if (switched || (options.relearn_threshold > 0.0 &&
                         coefficient_distance(coefficients, solved_at) > options.relearn_threshold)) {
            run.values = economy::solve_bellman(current, belief, grid, options.bellman, &run.values);
            solved_at = coefficients;
            ++run.resolves;
        }

        SimRecord rec;
        rec.t = t;
        rec.z_index = m;
        rec.z = z;
        rec.k = agg.k;
        rec.labor = agg.labor;
        rec.w = prices.w;
        rec.r = prices.r;
        rec.statistic = s;
        rec.coefficient_hash = coefficient_hash(coefficients);

        policy = economy::policy_slice(run.values, grid, m, s, &rec.clamped);
        if (rec.clamped) ++run.clamped_periods;

        // Goods market: c + k' - (1 - delta) k - z F(k, l), from the budget constraints.
        double consumption = 0.0, k_next = 0.0;
        for (std::size_t j = 0; j < g.ny; ++j)
            for (std::size_t i = 0; i < g.na; ++i) {
                const double mass = g.g[static_cast<Eigen::Index>(i + g.na * j)];
                const double a_next = policy[i + g.na * j];
                consumption += mass * (prices.w * current.income.state(j) + (1.0 + prices.r) * asset_grid[i] - a_next);
                k_next += mass * a_next;
            }
        rec.walras_residual =
            consumption + k_next - (1.0 - current.delta) * agg.k - economy::output(current, agg.k, agg.labor, z);
        run.max_walras_residual = std::max(run.max_walras_residual, std::abs(rec.walras_residual));

        const auto op = economy::apply_lottery(policy, asset_grid, current.income);
        g = economy::step_distribution(g, op);

        const std::size_t mn = z_path[t + 1];
        const double obs[3] = {static_cast<double>(m), static_cast<double>(mn), s};
        const auto f = belief.forecast(obs);
        if (kind == PlmKind::moment) {
            const auto pf = economy::firm_prices(current, std::exp(f[0]), agg.labor, current.aggregate.state(mn));
            rec.forecast_log_w = std::log(pf.w);
            rec.forecast_r = pf.r;
        } else {
            rec.forecast_log_w = f[0];
            rec.forecast_r = f[1];
        }
        run.records.push_back(std::move(rec));
        prev_s = s;
        prev_m = m;
    }
    run.final_distribution = g;
    run.terminal_coefficients = belief.coefficients();
    if (static_cast<double>(run.clamped_periods) > options.clamp_ceiling * static_cast<double>(horizon)) {
        std::ostringstream msg;
        msg << "run_temporary_equilibrium: realized statistic left the forecast grid in " << run.clamped_periods
            << " of " << horizon << " periods (ceiling " << options.clamp_ceiling << "); widen the forecast grid";
        throw ConvergenceError(msg.str());
    }
    return run;
}

// ---------------------------------------------------------------------------
// Fixed point
// ---------------------------------------------------------------------------

double FixedPointReport::validation_residual() const {
    double out = 0.0;
    for (double v : validation_orthogonality) out = std::max(out, std::abs(v));
    return out;
}

nlohmann::json FixedPointReport::to_json() const {
    nlohmann::json j;
    j["plm_kind"] = to_string(kind);
    j["iterations"] = iterations;
    j["converged"] = converged;
    j["coefficients"] = coefficients;
    j["centers"] = centers;
    j["coefficient_path"] = coefficient_path;
    j["changes"] = changes;
    j["r_squared"] = r_squared;
    j["orthogonality"] = orthogonality;
    j["validation_orthogonality"] = validation_orthogonality;
    j["validation_residual"] = validation_residual();
    j["dropped_slopes"] = dropped_slopes;
    j["steady_state_capital"] = steady_state_capital;
    return j;
}

FixedPointSetup fixed_point_setup(const EconomyParams& params, const FixedPointOptions& options) {
    const auto ss = economy::aiyagari_steady_state(params);
    FixedPointSetup setup{economy::ForecastGrid::around(params, statistic_of(options.kind), ss.k_demand,
                                                        options.grid_nodes, options.grid_half_width),
                          ss.distribution, ss.k_demand};
    return setup;
}

namespace {

struct Sample {
    std::vector<double> x;
    std::vector<std::vector<double>> y;  // per target
};

std::vector<Sample> collect(const LogLinearPlm& plm, const std::vector<SimRecord>& records, std::size_t burn_in) {
    const std::size_t nz = plm.z_count();
    std::vector<Sample> samples(nz * nz);
    for (auto& s : samples) s.y.resize(plm.targets());
    for (std::size_t t = burn_in; t + 1 < records.size(); ++t) {
        const auto& now = records[t];
        const auto& next = records[t + 1];
        auto& s = samples[now.z_index * nz + next.z_index];
        s.x.push_back(now.statistic - plm.centers()[now.z_index]);
        if (plm.plm_kind() == PlmKind::moment) {
            s.y[0].push_back(std::log(next.k));
        } else {
            s.y[0].push_back(std::log(next.w));
            s.y[1].push_back(next.r);
        }
    }
    return samples;
}

}  // namespace

// Regressor variance below which a branch's slope is treated as unidentified.
constexpr double kMinRegressorVariance = 1e-12;

std::vector<double> estimate_plm(const LogLinearPlm& plm, const std::vector<SimRecord>& records, std::size_t burn_in,
                                 const std::vector<double>& fallback, FixedPointReport* report) {
    const auto samples = collect(plm, records, burn_in);
    const std::size_t targets = plm.targets();
    std::vector<double> theta = fallback;
    if (report) {
        report->r_squared.assign(fallback.size(), 0.0);
        report->orthogonality.assign(fallback.size(), 0.0);
        report->dropped_slopes.clear();
    }
    for (std::size_t branch = 0; branch < samples.size(); ++branch) {
        const auto& s = samples[branch];
        const std::size_t n = s.x.size();
        if (n == 0) continue;
        const double nd = static_cast<double>(n);
        const double x_mean = std::accumulate(s.x.begin(), s.x.end(), 0.0) / nd;
        double sxx = 0.0;
        for (double x : s.x) sxx += (x - x_mean) * (x - x_mean);
        const bool drop = !(sxx / nd > kMinRegressorVariance);
        if (drop && report) report->dropped_slopes.push_back(branch);
        for (std::size_t k = 0; k < targets; ++k) {
            const auto& y = s.y[k];
            const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / nd;
            double sxy = 0.0, syy = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                sxy += (s.x[i] - x_mean) * (y[i] - y_mean);
                syy += (y[i] - y_mean) * (y[i] - y_mean);
            }
            const double slope = drop ? 0.0 : sxy / sxx;
            const double intercept = drop ? y_mean : y_mean - slope * x_mean;
            const std::size_t o = branch * targets * 2 + k * 2;
            theta[o] = intercept;
            theta[o + 1] = slope;
            if (report) {
                double ssr = 0.0, e_mean = 0.0, ex_mean = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double e = y[i] - intercept - slope * s.x[i];
                    ssr += e * e;
                    e_mean += e;
                    ex_mean += e * s.x[i];
                }
                const double r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
                report->r_squared[o] = r2;
                report->r_squared[o + 1] = r2;
                report->orthogonality[o] = e_mean / nd;
                report->orthogonality[o + 1] = ex_mean / nd;
            }
        }
    }
    return theta;
}

std::vector<double> orthogonality_residuals(const LogLinearPlm& plm, const std::vector<SimRecord>& records,
                                            std::size_t burn_in, const std::vector<double>& theta) {
    const auto samples = collect(plm, records, burn_in);
    const std::size_t targets = plm.targets();
    std::vector<double> out(theta.size(), 0.0);
    for (std::size_t branch = 0; branch < samples.size(); ++branch) {
        const auto& s = samples[branch];
        const std::size_t n = s.x.size();
        if (n == 0) continue;
        for (std::size_t k = 0; k < targets; ++k) {
            const std::size_t o = branch * targets * 2 + k * 2;
            double e_mean = 0.0, ex_mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = s.y[k][i] - theta[o] - theta[o + 1] * s.x[i];
                e_mean += e;
                ex_mean += e * s.x[i];
            }
            out[o] = e_mean / static_cast<double>(n);
            out[o + 1] = ex_mean / static_cast<double>(n);
        }
    }
    return out;
}

FixedPointReport ks_fixed_point(const EconomyParams& params, const FixedPointOptions& options, RngStream& rng) {
    params.validate();
    if (!(options.damping > 0.0 && options.damping <= 1.0)) throw InvalidInput("ks_fixed_point: damping must lie in (0, 1]");
    if (!(options.tolerance > 0.0)) throw InvalidInput("ks_fixed_point: tolerance must be > 0");
    if (options.max_iterations < 1) throw InvalidInput("ks_fixed_point: need at least one iteration");
    if (options.horizon <= options.burn_in + 2) throw InvalidInput("ks_fixed_point: horizon must exceed burn-in");

    const auto setup = fixed_point_setup(params, options);
    auto plm = LogLinearPlm::stationary(options.kind, params, setup.grid, PlmMode::fixed);
    if (!options.initial.empty()) plm.set_coefficients(options.initial);

    RngStream path_rng = rng.split(0);
    const Eigen::VectorXd pi = stationary_distribution(params.aggregate);
    const std::span<const double> pi_span(pi.data(), static_cast<std::size_t>(pi.size()));
    const auto z_path = simulate_chain(params.aggregate, options.horizon + 1, path_rng, path_rng.categorical(pi_span));

    FixedPointReport report;
    report.kind = options.kind;
    report.centers = plm.centers();
    report.steady_state_capital = setup.steady_state_capital;
    std::vector<double> theta = plm.coefficients();
    report.coefficient_path.push_back(theta);

    TemporaryEquilibriumOptions te;
    te.relearn_threshold = 0.0;
    te.clamp_ceiling = 1.0;
    te.bellman = options.bellman;
    ValueTable values;
    bool have_values = false;

    for (int it = 1; it <= options.max_iterations; ++it) {
        values = economy::solve_bellman(params, plm, setup.grid, options.bellman, have_values ? &values : nullptr);
        have_values = true;
        te.values = &values;
        const auto run = run_temporary_equilibrium(params, plm, setup.grid, setup.g0, z_path, te);
        const auto estimate = estimate_plm(plm, run.records, options.burn_in, theta, &report);
        std::vector<double> next(theta.size());
        double change = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            next[i] = options.damping * estimate[i] + (1.0 - options.damping) * theta[i];
            change = std::max(change, std::abs(next[i] - theta[i]));
        }
        theta = next;
        plm.set_coefficients(theta);
        report.coefficient_path.push_back(theta);
        report.changes.push_back(change);
        report.iterations = it;
        report.coefficients = theta;
        if (change < options.tolerance) {
            report.converged = true;
            break;
        }
        const std::size_t n = report.changes.size();
        if (n > 10) {
            const double reference = report.changes[n - 11];
            const double recent = *std::min_element(report.changes.end() - 10, report.changes.end());
            if (recent >= reference) {
                std::ostringstream msg;
                msg << "ks_fixed_point: coefficient change stopped decreasing (" << recent << " over the last 10 iterations vs "
                    << reference << " before); oscillation";
                throw FixedPointError(msg.str(), report);
            }
        }
    }
    if (!report.converged) {
        std::ostringstream msg;
        msg << "ks_fixed_point: no convergence after " << options.max_iterations << " iterations (last change "
            << report.changes.back() << ")";
        throw FixedPointError(msg.str(), report);
    }

    if (options.validation_horizon > options.burn_in + 2) {
        RngStream validation_rng = rng.split(1);
        values = economy::solve_bellman(params, plm, setup.grid, options.bellman, &values);
        te.values = &values;
        const auto run = run_temporary_equilibrium(params, plm, setup.grid, setup.g0, options.validation_horizon,
                                                   validation_rng, te);
        report.validation_orthogonality = orthogonality_residuals(plm, run.records, options.burn_in, theta);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

std::string to_string(DistanceNorm norm) {
    switch (norm) {
        case DistanceNorm::mean_error: return "mean_error";
        case DistanceNorm::rmse: return "rmse";
        case DistanceNorm::ks: return "ks";
    }
    return "unknown";
}

DistanceNorm distance_norm_from_string(const std::string& text) {
    if (text == "mean_error") return DistanceNorm::mean_error;
    if (text == "rmse") return DistanceNorm::rmse;
    if (text == "ks") return DistanceNorm::ks;
    throw InvalidInput("unknown distance norm '" + text + "' (expected mean_error, rmse or ks)");
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double distance(std::vector<double> errors, DistanceNorm norm, std::optional<double> scale) {
    const double n = static_cast<double>(errors.size());
    const double mean = std::accumulate(errors.begin(), errors.end(), 0.0) / n;
    if (norm == DistanceNorm::mean_error) return mean;
    double ss = 0.0;
    for (double e : errors) ss += e * e;
    if (norm == DistanceNorm::rmse) return std::sqrt(ss / n);

    double sd = 0.0;
    if (scale) {
        sd = *scale;
    } else {
        for (double e : errors) sd += (e - mean) * (e - mean);
        sd = std::sqrt(sd / (n - 1.0));
    }
    if (!(sd > 0.0)) return ss == 0.0 ? 0.0 : 1.0;
    for (auto& e : errors) e /= sd;
    std::sort(errors.begin(), errors.end());
    double stat = 0.0;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        const double f = normal_cdf(errors[i]);
        stat = std::max({stat, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return stat;
}

}  // namespace

PriceDistance criterion3a_distance(const std::vector<SimRecord>& records, std::size_t window, DistanceNorm norm,
                                   std::optional<std::vector<double>> scale) {
    if (window < 30) throw InvalidInput("criterion3a_distance: window must be at least 30 periods");
    if (window > records.size()) throw InvalidInput("criterion3a_distance: window longer than the series");
    if (scale && scale->size() != 2) throw InvalidInput("criterion3a_distance: scale needs one entry per price");
    std::vector<double> ew, er;
    ew.reserve(window);
    er.reserve(window);
    for (std::size_t t = records.size() - window; t < records.size(); ++t) {
        ew.push_back(records[t].realized_log_w - records[t].forecast_log_w);
        er.push_back(records[t].realized_r - records[t].forecast_r);
    }
    return {distance(std::move(ew), norm, scale ? std::optional<double>((*scale)[0]) : std::nullopt),
            distance(std::move(er), norm, scale ? std::optional<double>((*scale)[1]) : std::nullopt)};
}

ForecastErrors forecast_errors(const std::vector<SimRecord>& records, std::size_t window) {
    if (window > records.size()) throw InvalidInput("forecast_errors: window longer than the series");
    ForecastErrors out;
    for (std::size_t t = records.size() - window; t < records.size(); ++t) {
        out.log_w.push_back(records[t].realized_log_w - records[t].forecast_log_w);
        out.r.push_back(records[t].realized_r - records[t].forecast_r);
    }
    return out;
}

double batch_means_standard_error(std::span<const double> series, std::size_t batches) {
    if (batches < 2 || series.size() < 2 * batches)
        throw InvalidInput("batch_means_standard_error: need at least two observations per batch and two batches");
    const std::size_t size = series.size() / batches;
    std::vector<double> means(batches);
    for (std::size_t b = 0; b < batches; ++b)
        means[b] = std::accumulate(series.begin() + static_cast<std::ptrdiff_t>(b * size),
                                   series.begin() + static_cast<std::ptrdiff_t>((b + 1) * size), 0.0) /
                   static_cast<double>(size);
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(batches);
    double ss = 0.0;
    for (double m : means) ss += (m - grand) * (m - grand);
    return std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
}

SceResidual sce_diagnostic(const std::vector<SimRecord>& records, const std::vector<Regressor>& regressors,
                           std::size_t window) {
    const std::size_t n = window == 0 ? records.size() : window;
    if (n > records.size()) throw InvalidInput("sce_diagnostic: window longer than the series");
    if (n < 100) throw InvalidInput("sce_diagnostic: need at least 100 periods");
    SceResidual out;
    out.log_w.assign(regressors.size(), 0.0);
    out.r.assign(regressors.size(), 0.0);
    out.periods = n;
    for (std::size_t t = records.size() - n; t < records.size(); ++t) {
        const auto& rec = records[t];
        const double ew = rec.realized_log_w - rec.forecast_log_w;
        const double er = rec.realized_r - rec.forecast_r;
        for (std::size_t k = 0; k < regressors.size(); ++k) {
            double x = 1.0;
            switch (regressors[k]) {
                case Regressor::constant: x = 1.0; break;
                case Regressor::log_w: x = std::log(rec.w); break;
                case Regressor::r: x = rec.r; break;
                case Regressor::statistic: x = rec.statistic; break;
                case Regressor::log_k: x = std::log(rec.k); break;
            }
            out.log_w[k] += ew * x;
            out.r[k] += er * x;
        }
    }
    for (auto& v : out.log_w) v /= static_cast<double>(n);
    for (auto& v : out.r) v /= static_cast<double>(n);
    return out;
}

}  // namespace hetexp::simulate
