#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hetexp/stochcore.hpp"

namespace hetexp {

// ---------------------------------------------------------------------------
// Step sizes
// ---------------------------------------------------------------------------

enum class StepKind { harmonic, constant, power };

/// Step-size schedule alpha_t for t = 1, 2, ...
/// harmonic: 1/t; constant: alpha; power: min(1, c / t^a).
struct StepSizeSchedule {
    StepKind kind = StepKind::harmonic;
    double value = 1.0;     // alpha (constant) or c (power)
    double exponent = 1.0;  // a (power)

    static StepSizeSchedule harmonic() { return {}; }
    static StepSizeSchedule constant(double alpha);
    static StepSizeSchedule power(double c, double a);

    /// Step for the t-th observation (t >= 1). Always in (0, 1].
    double at(std::uint64_t t) const;
};

struct RobbinsMonro {
    bool divergent_sum;    // sum alpha_t = infinity
    bool square_summable;  // sum alpha_t^2 < infinity
};

/// Analytic classification of a schedule against the two stochastic-approximation step conditions.
RobbinsMonro check_robbins_monro(const StepSizeSchedule& schedule);

// ---------------------------------------------------------------------------
// Update rules
// ---------------------------------------------------------------------------

/// old + alpha (target - old), elementwise.
Eigen::VectorXd sa_update(const Eigen::VectorXd& old, const Eigen::VectorXd& target, double alpha);
double sa_update(double old, double target, double alpha);

/// Recursive sample mean: estimate + (price - estimate) / t.
double sample_average_update(double estimate, double price, std::uint64_t t);

/// Adaptive expectations: estimate + alpha (price - estimate), alpha in (0, 1].
double adaptive_update(double estimate, double price, double alpha);

/// Exponentially weighted closed form of `n` adaptive updates from `initial`
/// over prices[0..n) (prices.back() is the most recent).
double adaptive_closed_form(double initial, std::span<const double> prices, double alpha);

/// Recursive least-squares state.
///
/// `second_moment` is the running mean (1/t) sum x x'. While that matrix is
/// rank deficient the estimate is the ridge solution with prior delta I and
/// zero prior mean. Once full rank, the estimate equals the batch least-squares
/// solution and is propagated by the recursion
///   R_t = R_{t-1} + g_t (x x' - R_{t-1}),
///   theta_t = theta_{t-1} + g_t R_t^{-1} x (p - x' theta_{t-1}),  g_t = 1/t.
struct RlsState {
    Eigen::VectorXd theta;
    Eigen::MatrixXd second_moment;
    Eigen::VectorXd cross_moment;  // (1/t) sum x p; used only before full rank
    double t = 0.0;
    bool full_rank = false;

    static constexpr double kPriorPrecision = 1e-4;

    /// Empty state: theta = 0, no observations.
    static RlsState empty(std::size_t dim);
    /// Start from given beliefs with `weight` pseudo-observations behind them.
    static RlsState with_prior(Eigen::VectorXd theta, Eigen::MatrixXd second_moment, double weight);

    std::size_t dim() const { return static_cast<std::size_t>(theta.size()); }
};

RlsState rls_update(const RlsState& state, const Eigen::VectorXd& x, double p);
/// In-place form of rls_update for hot loops.
void rls_update_inplace(RlsState& state, const Eigen::VectorXd& x, double p);

/// Batch least squares [sum x x']^{-1} [sum x p]; rows of `x` are regressors.
Eigen::VectorXd batch_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& p);

// ---------------------------------------------------------------------------
// Belief models
// ---------------------------------------------------------------------------

/// Serializable snapshot of a belief model's internals.
struct BeliefSnapshot {
    std::string model_kind;
    std::vector<double> coefficients;
    std::uint64_t t = 0;
};

void to_json(nlohmann::json& j, const BeliefSnapshot& s);
void from_json(const nlohmann::json& j, BeliefSnapshot& s);

/// Subjective forecasting rule for next-period prices.
///
/// `forecast` is a pure function of internal state and the observables;
/// `update` is the only mutator. The meaning of the observable and realized
/// vectors is fixed by each concrete model.
class BeliefModel {
public:
    virtual ~BeliefModel() = default;

    virtual std::string kind() const = 0;
    virtual std::vector<double> forecast(std::span<const double> observables) const = 0;
    virtual void update(std::span<const double> realized, std::span<const double> observables) = 0;
    virtual std::vector<double> coefficients() const = 0;
    virtual std::uint64_t observations() const = 0;
    /// Residual standard deviation per forecast target, when the model tracks one.
    virtual std::optional<std::vector<double>> residual_scale() const { return std::nullopt; }

    BeliefSnapshot snapshot() const { return {kind(), coefficients(), observations()}; }
};

/// Sup-norm distance between two coefficient vectors of equal length.
double coefficient_distance(std::span<const double> a, std::span<const double> b);

}  // namespace hetexp
