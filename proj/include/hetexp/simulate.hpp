#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetexp/economy.hpp"
#include "hetexp/expectations.hpp"
#include "hetexp/stochcore.hpp"

namespace hetexp::simulate {

using economy::EconomyParams;
using economy::ForecastGrid;
using economy::Histogram;

// ---------------------------------------------------------------------------
// Perceived laws of motion
// ---------------------------------------------------------------------------

enum class PlmKind {
    /// log k' on (1, log k): the statistic is log capital.
    moment,
    /// log w' and r' on (1, log w): the statistic is the log wage.
    price,
};

std::string to_string(PlmKind kind);
PlmKind plm_kind_from_string(const std::string& text);
economy::Statistic statistic_of(PlmKind kind);

enum class PlmMode {
    /// Coefficients stay put; update() only tracks residuals.
    fixed,
    /// Recursive least squares per branch and target.
    rls,
};

/// Log-linear forecasting rule with separate coefficients for every
/// (z, z') branch. The regressor is x = (1, s - center[z]).
///
/// Observables: {z index, next z index, s}. Realized: the targets at t+1
/// ({log k'} for the moment PLM, {log w', r'} for the price PLM).
/// forecast()[0] is always the forecast of s'.
/// coefficients() layout: ((m * nz + m') * targets + target) * 2 + {0: intercept, 1: slope}.
class LogLinearPlm final : public BeliefModel {
public:
    LogLinearPlm(PlmKind kind, std::vector<double> centers, std::vector<double> coefficients,
                 PlmMode mode = PlmMode::fixed, double prior_weight = 100.0, double prior_spread = 0.005);

    /// Constant forecasts at each z' branch: s' = centers[m'], r' = r at the grid center.
    static LogLinearPlm stationary(PlmKind kind, const EconomyParams& params, const ForecastGrid& grid,
                                   PlmMode mode = PlmMode::fixed);

    std::string kind() const override;
    std::vector<double> forecast(std::span<const double> observables) const override;
    void update(std::span<const double> realized, std::span<const double> observables) override;
    std::vector<double> coefficients() const override { return theta_; }
    std::uint64_t observations() const override { return t_; }
    std::optional<std::vector<double>> residual_scale() const override;

    PlmKind plm_kind() const { return kind_; }
    PlmMode mode() const { return mode_; }
    std::size_t targets() const { return kind_ == PlmKind::moment ? 1 : 2; }
    std::size_t z_count() const { return centers_.size(); }
    const std::vector<double>& centers() const { return centers_; }
    /// Replaces the coefficients (and restarts RLS from them).
    void set_coefficients(std::vector<double> coefficients);

    std::size_t offset(std::size_t m, std::size_t m_next, std::size_t target) const {
        return ((m * z_count() + m_next) * targets() + target) * 2;
    }

private:
    void reset_rls();

    PlmKind kind_;
    std::vector<double> centers_;
    std::vector<double> theta_;
    PlmMode mode_;
    double prior_weight_;
    double prior_spread_;
    std::vector<RlsState> rls_;  // one per (branch, target)
    std::vector<double> squared_error_sum_;
    std::uint64_t t_ = 0;
};

/// Hex digest of a coefficient vector.
std::string coefficient_hash(std::span<const double> coefficients);

// ---------------------------------------------------------------------------
// Temporary equilibrium
// ---------------------------------------------------------------------------

/// One period. The forecast columns hold the belief's forecast, made at t,
/// of next period's prices on the z branch that was realized at t+1; the
/// realized columns hold those prices.
struct SimRecord {
    std::size_t t = 0;
    std::size_t z_index = 0;
    double z = 0.0;
    double k = 0.0;
    double labor = 0.0;
    double w = 0.0;
    double r = 0.0;
    double statistic = 0.0;
    double forecast_log_w = 0.0;
    double forecast_r = 0.0;
    double realized_log_w = 0.0;
    double realized_r = 0.0;
    std::string coefficient_hash;
    bool clamped = false;
    double walras_residual = 0.0;
};

void write_records_csv(std::ostream& out, const std::vector<SimRecord>& records);

struct RegimeChange {
    std::size_t period;
    EconomyParams params;
};

struct TemporaryEquilibriumOptions {
    /// Re-solve the household problem once the coefficient sup-norm change since
    /// the last solve exceeds this; <= 0 disables re-solving.
    double relearn_threshold = 1e-3;
    /// Maximum share of periods whose realized statistic falls outside the forecast grid.
    double clamp_ceiling = 0.05;
    economy::BellmanOptions bellman;
    /// Optional parameter change at a given period (the asset grid must be unchanged).
    std::optional<RegimeChange> regime;
    /// Household solution to start from; solved from scratch when absent.
    const economy::ValueTable* values = nullptr;
};

struct TemporaryEquilibriumRun {
    std::vector<SimRecord> records;
    Histogram final_distribution;
    economy::ValueTable values;
    std::size_t resolves = 0;
    std::size_t clamped_periods = 0;
    double max_walras_residual = 0.0;
    std::vector<double> terminal_coefficients;
};

/// Simulates `horizon` periods, drawing the z path from `rng` (z_0 from the
/// stationary distribution). The belief is updated each period with the
/// realized targets and the household problem is re-solved per the cadence.
TemporaryEquilibriumRun run_temporary_equilibrium(const EconomyParams& params, LogLinearPlm& belief,
                                                  const ForecastGrid& grid, const Histogram& g0, std::size_t horizon,
                                                  RngStream& rng, const TemporaryEquilibriumOptions& options = {});

/// Same with an explicit z index path of length horizon + 1.
TemporaryEquilibriumRun run_temporary_equilibrium(const EconomyParams& params, LogLinearPlm& belief,
                                                  const ForecastGrid& grid, const Histogram& g0,
                                                  const std::vector<std::size_t>& z_path,
                                                  const TemporaryEquilibriumOptions& options = {});

// ---------------------------------------------------------------------------
// Fixed point
// ---------------------------------------------------------------------------

struct FixedPointOptions {
    PlmKind kind = PlmKind::price;
    double tolerance = 1e-4;
    int max_iterations = 100;
    std::size_t horizon = 11000;
    std::size_t burn_in = 1000;
    double damping = 0.5;
    std::size_t grid_nodes = 9;
    double grid_half_width = 0.15;
    economy::BellmanOptions bellman;
    /// Length of the fresh path used for the orthogonality check (0 skips it).
    std::size_t validation_horizon = 11000;
    /// Starting coefficients; the stationary belief when empty.
    std::vector<double> initial;
};

struct FixedPointReport {
    PlmKind kind = PlmKind::price;
    int iterations = 0;
    bool converged = false;
    std::vector<std::vector<double>> coefficient_path;  // entry 0 is the starting point
    std::vector<double> changes;
    std::vector<double> coefficients;
    std::vector<double> centers;
    /// Per coefficient slot: R^2 of the regression for that (branch, target).
    std::vector<double> r_squared;
    /// E[(y - x'theta) x] per coefficient slot on the last estimation path.
    std::vector<double> orthogonality;
    /// Same on a fresh validation path under the final coefficients.
    std::vector<double> validation_orthogonality;
    /// Branches whose slope was dropped because the regressor did not move.
    std::vector<std::size_t> dropped_slopes;
    double steady_state_capital = 0.0;

    double validation_residual() const;
    nlohmann::json to_json() const;
};

class FixedPointError : public ConvergenceError {
public:
    FixedPointError(const std::string& what, FixedPointReport report)
        : ConvergenceError(what), report(std::move(report)) {}
    FixedPointReport report;
};

/// Everything the fixed-point driver builds before iterating.
struct FixedPointSetup {
    ForecastGrid grid;
    Histogram g0;
    double steady_state_capital;
};

FixedPointSetup fixed_point_setup(const EconomyParams& params, const FixedPointOptions& options);

/// Least-squares estimate of the PLM on simulated records. Slopes are dropped
/// for branches whose regressor is (numerically) constant. Fills r_squared, orthogonality
/// and dropped_slopes of `report` when given.
std::vector<double> estimate_plm(const LogLinearPlm& plm, const std::vector<SimRecord>& records, std::size_t burn_in,
                                 const std::vector<double>& fallback, FixedPointReport* report = nullptr);

/// E[(y - x'theta) x] per coefficient slot on `records` for coefficients `theta`.
std::vector<double> orthogonality_residuals(const LogLinearPlm& plm, const std::vector<SimRecord>& records,
                                            std::size_t burn_in, const std::vector<double>& theta);

/// Batch learning: simulate under fixed coefficients, re-estimate by least
/// squares per branch, damp, repeat. All iterations share one z path.
FixedPointReport ks_fixed_point(const EconomyParams& params, const FixedPointOptions& options, RngStream& rng);

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

enum class DistanceNorm { mean_error, rmse, ks };

std::string to_string(DistanceNorm norm);
DistanceNorm distance_norm_from_string(const std::string& text);

struct PriceDistance {
    double log_w;
    double r;
};

/// Distance between forecasts and realizations over the last `window` records.
/// Errors are realized minus forecast. The KS variant standardizes errors by
/// `scale` when given (per price: log w, r), else by the sample sd.
PriceDistance criterion3a_distance(const std::vector<SimRecord>& records, std::size_t window, DistanceNorm norm,
                                   std::optional<std::vector<double>> scale = std::nullopt);

struct ForecastErrors {
    std::vector<double> log_w;
    std::vector<double> r;
};

/// Realized minus forecast prices over the last `window` records.
ForecastErrors forecast_errors(const std::vector<SimRecord>& records, std::size_t window);

/// Standard error of the mean of a serially correlated series from
/// `batches` non-overlapping batch means.
double batch_means_standard_error(std::span<const double> series, std::size_t batches = 50);

enum class Regressor { constant, log_w, r, statistic, log_k };

struct SceResidual {
    /// Per regressor, E[(realized log w - forecast) x].
    std::vector<double> log_w;
    /// Per regressor, E[(realized r - forecast) x].
    std::vector<double> r;
    std::size_t periods = 0;
};

/// Orthogonality of forecast errors to the chosen regressors over the last
/// `window` records (0 = all). Needs at least 100 periods.
SceResidual sce_diagnostic(const std::vector<SimRecord>& records, const std::vector<Regressor>& regressors,
                           std::size_t window = 0);

}  // namespace hetexp::simulate
