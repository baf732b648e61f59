#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "hetexp/expectations.hpp"
#include "hetexp/stochcore.hpp"

// Heterogeneous-household production economy with idiosyncratic income risk,
// aggregate productivity z, Cobb-Douglas technology and inelastic labor.
//
// Households do not carry the cross-sectional distribution as a state. The
// exact recursive formulation would make the whole distribution an argument
// of the value function (a Master equation); it is deliberately not solved
// here. Instead the household's aggregate state is (z, s), where s is a
// scalar statistic (log capital or log wage) about which the household holds
// a subjective forecasting rule supplied by a BeliefModel.
namespace hetexp::economy {

struct AssetGridSpec {
    double min = 0.0;
    /// Upper end; <= 0 means 4x the representative-agent steady-state capital.
    double max = 0.0;
    std::size_t count = 100;
    /// Exponential spacing; larger values cluster nodes near `min`.
    double curvature = 3.0;
};

struct EconomyParams {
    double beta = 0.99;
    double sigma_c = 2.0;
    double alpha_k = 0.36;
    double delta = 0.025;
    AssetGridSpec assets;
    MarkovChain income = MarkovChain::degenerate(1.0);
    MarkovChain aggregate = MarkovChain::degenerate(1.0);

    void validate() const;
    /// Default calibration: 2-state income, 2-state z in {0.99, 1.01} with persistence 0.875.
    static EconomyParams benchmark();
    /// Stable textual digest of every parameter, used for dump headers.
    std::uint64_t hash() const;
};

struct Prices {
    double w;
    double r;
};

/// Firm first-order conditions: r = z alpha k^(alpha-1) l^(1-alpha) - delta,
/// w = z (1-alpha) k^alpha l^(-alpha).
Prices firm_prices(const EconomyParams& params, double k, double labor, double z);
/// Capital demand at interest rate r (inverse of the r condition).
double capital_demand(const EconomyParams& params, double r, double labor, double z);
double output(const EconomyParams& params, double k, double labor, double z);

/// Mean of the income states under the stationary income distribution.
double effective_labor(const EconomyParams& params);
/// Representative-agent steady-state capital with z at its stationary mean.
double representative_capital(const EconomyParams& params);
double mean_productivity(const EconomyParams& params);

std::vector<double> make_asset_grid(const EconomyParams& params);

double utility(double c, double sigma_c);

// ---------------------------------------------------------------------------
// Forecast state grid
// ---------------------------------------------------------------------------

enum class Statistic { log_capital, log_wage };

/// The scalar aggregate statistic households condition on. Nodes are stored
/// as log capital levels shared by every z; node q at productivity z_m has
/// statistic value `value(m, q)`.
struct ForecastGrid {
    Statistic statistic = Statistic::log_capital;
    std::vector<double> log_capital;  // increasing
    std::vector<double> z_levels;
    double labor = 1.0;
    double alpha_k = 0.36;

    static ForecastGrid around(const EconomyParams& params, Statistic statistic, double center_capital,
                               std::size_t nodes, double half_width);

    std::size_t size() const { return log_capital.size(); }
    std::size_t z_count() const { return z_levels.size(); }
    double value(std::size_t m, std::size_t q) const;
    /// Statistic value for aggregate capital k at productivity index m.
    double statistic_of(std::size_t m, double k) const;
    /// Aggregate capital implied by statistic s at productivity index m.
    double capital_of(std::size_t m, double s) const;

    struct Bracket {
        std::size_t lo;
        double weight_hi;  // weight on lo + 1
        bool clamped;
    };
    /// Linear-interpolation bracket of s among the nodes for productivity m.
    Bracket locate(std::size_t m, double s) const;
};

/// Prices at each (z, q) node and the belief-implied continuation bracket for
/// each (z, q, z').
struct PriceNodes {
    std::size_t z_count = 0;
    std::size_t node_count = 0;
    std::vector<Prices> prices;                  // [m + z_count * q]
    std::vector<ForecastGrid::Bracket> next;     // [(m + z_count * q) * z_count + m']
    std::size_t forecast_clamps = 0;

    const Prices& at(std::size_t m, std::size_t q) const { return prices[m + z_count * q]; }
    const ForecastGrid::Bracket& next_of(std::size_t m, std::size_t q, std::size_t m_next) const {
        return next[(m + z_count * q) * z_count + m_next];
    }
};

/// Observables handed to economy belief models: {z index, next z index, s}.
/// forecast()[0] must be the forecast of next period's statistic s'.
PriceNodes build_price_nodes(const EconomyParams& params, const ForecastGrid& grid, const BeliefModel& belief);

// ---------------------------------------------------------------------------
// Household problem
// ---------------------------------------------------------------------------

/// Value and savings policy on (asset i, income j, z m, forecast node q).
struct ValueTable {
    std::size_t na = 0, ny = 0, nz = 0, ns = 0;
    std::vector<double> value;
    std::vector<double> policy;
    std::vector<double> gap_history;
    int iterations = 0;
    std::size_t forecast_clamps = 0;

    std::size_t index(std::size_t i, std::size_t j, std::size_t m, std::size_t q) const {
        return i + na * (j + ny * (m + nz * q));
    }
    double v(std::size_t i, std::size_t j, std::size_t m, std::size_t q) const { return value[index(i, j, m, q)]; }
    double a_next(std::size_t i, std::size_t j, std::size_t m, std::size_t q) const {
        return policy[index(i, j, m, q)];
    }
    std::size_t size() const { return value.size(); }

    void write_csv(std::ostream& out, const EconomyParams& params) const;
    /// Reads a dump written by write_csv; throws InvalidInput when the parameter hash differs.
    static ValueTable read_csv(std::istream& in, const EconomyParams& params);
};

class BellmanError : public ConvergenceError {
public:
    BellmanError(const std::string& what, std::vector<double> gaps)
        : ConvergenceError(what), gap_history(std::move(gaps)) {}
    std::vector<double> gap_history;
};

struct BellmanOptions {
    double tolerance = 1e-7;
    int max_iterations = 5000;
    /// Policy-evaluation sweeps after each maximization (0 = plain value iteration).
    int howard_steps = 30;
};

ValueTable solve_household(const EconomyParams& params, const std::vector<double>& asset_grid,
                           const PriceNodes& nodes, const BellmanOptions& options = {},
                           const ValueTable* warm_start = nullptr);

/// Solves the household problem under `belief` on the forecast grid.
ValueTable solve_bellman(const EconomyParams& params, const BeliefModel& belief, const ForecastGrid& grid,
                         const BellmanOptions& options = {}, const ValueTable* warm_start = nullptr);

/// Consumption implied by the policy at a node.
double consumption(const EconomyParams& params, const std::vector<double>& asset_grid, const PriceNodes& nodes,
                   const ValueTable& table, std::size_t i, std::size_t j, std::size_t m, std::size_t q);

// ---------------------------------------------------------------------------
// Distribution
// ---------------------------------------------------------------------------

/// Density over (asset i, income j) nodes, index i + na * j.
struct Histogram {
    std::size_t na = 0, ny = 0;
    Eigen::VectorXd g;

    double mass() const { return g.sum(); }
    void validate(double tolerance = 1e-12) const;

    void write_csv(std::ostream& out, const EconomyParams& params) const;
    static Histogram read_csv(std::istream& in, const EconomyParams& params);
};

/// Row-stochastic operator over (asset x income) nodes; row = origin.
struct TransitionOperator {
    Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
    std::size_t clamps = 0;
};

struct LotterySplit {
    std::size_t lo;
    double weight_lo;  // mass sent to lo; the rest goes to lo + 1
};

/// Splits a' between its neighboring grid nodes so that the expected node equals a'.
/// Values outside the grid clamp to the end nodes.
LotterySplit lottery_split(const std::vector<double>& asset_grid, double a_next, bool* clamped = nullptr);

/// Builds the operator from savings choices at every (i, j) and the income chain.
TransitionOperator apply_lottery(const std::vector<double>& policy, const std::vector<double>& asset_grid,
                                 const MarkovChain& income);

/// g' = A' g.
Histogram step_distribution(const Histogram& g, const TransitionOperator& a);

struct Aggregates {
    double k;
    double labor;
};

Aggregates aggregate(const Histogram& g, const std::vector<double>& asset_grid, const MarkovChain& income);

/// All mass at a_min, income at its stationary distribution.
Histogram initial_histogram(const EconomyParams& params, std::size_t na);

/// Savings policy at every (i, j) for realized (m, s), interpolating linearly
/// between forecast nodes. Sets `clamped` when s lies outside the grid.
std::vector<double> policy_slice(const ValueTable& table, const ForecastGrid& grid, std::size_t m, double s,
                                 bool* clamped = nullptr);

// ---------------------------------------------------------------------------
// Stationary equilibrium without aggregate risk
// ---------------------------------------------------------------------------

struct SteadyState {
    double r;
    double w;
    double k_supply;
    double k_demand;
    double labor;
    double z;
    Histogram distribution;
    ValueTable values;
    double distribution_residual;  // || A' g - g ||_1
    int bisection_steps;
};

struct SteadyStateOptions {
    BellmanOptions bellman{1e-10, 20000, 30};
    double distribution_tolerance = 1e-13;
    int distribution_max_iterations = 500000;
    double root_tolerance = 1e-12;
};

/// Single-node forecast grid at capital k for a degenerate z chain.
ForecastGrid steady_state_grid(const EconomyParams& params, double capital);

/// Iterates g <- A' g to its fixed point.
Histogram stationary_histogram(const TransitionOperator& a, Histogram start, double tolerance, int max_iterations);

/// Aiyagari equilibrium with z fixed at its stationary mean and beliefs that
/// prices stay constant.
SteadyState aiyagari_steady_state(const EconomyParams& params, const SteadyStateOptions& options = {});

/// Same economy with the aggregate chain collapsed to its mean.
EconomyParams without_aggregate_risk(const EconomyParams& params);

}  // namespace hetexp::economy
