#pragma once

#include <array>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "hetexp/expectations.hpp"
#include "hetexp/stochcore.hpp"

// Muth's cobweb market: demand D = -b_d p, supply S = gamma p^e + u, D = S,
// with supply shock u' = rho u + eps. Producers commit to output one period
// ahead, so p^e_t is formed with information dated t-1.
namespace hetexp::muth {

struct CobwebParams {
    double demand_slope = 1.0;  // b_d
    double supply_slope = 1.0;  // gamma
    double rho = 0.0;
    double sigma_eps = 0.1;

    void validate() const;
};

struct CobwebRecord {
    std::size_t t;
    double u;
    double p_expected;
    double p_realized;
    double theta0;
    double theta1;
};

struct CobwebPath {
    CobwebParams params;
    std::uint64_t seed = 0;
    double u0 = 0.0;
    std::vector<CobwebRecord> records;

    void write_csv(std::ostream& out) const;
};

/// E_{t-1}[p_t] = -rho u_{t-1} / (b_d + gamma).
double rational_forecast(const CobwebParams& params, double u_prev);

/// Market-clearing price given the expected price: -(gamma/b_d) p^e - u / b_d.
double realize_price(const CobwebParams& params, double p_expected, double u);

/// Perceived-to-actual law of motion map for p_t = theta0 + theta1 u_{t-1}.
std::array<double, 2> t_map(const CobwebParams& params, std::array<double, 2> theta);

/// The unique fixed point of t_map, (0, -rho / (b_d + gamma)).
std::array<double, 2> t_map_fixed_point(const CobwebParams& params);

/// Observable: {u_{t-1}}. Realized: {p_t}. Forecast: {p^e_t}.
/// coefficients() is always (theta0, theta1) of the implied linear rule.
class RationalBelief final : public BeliefModel {
public:
    explicit RationalBelief(CobwebParams params) : params_(params) {}
    std::string kind() const override { return "muth_rational"; }
    std::vector<double> forecast(std::span<const double> observables) const override;
    void update(std::span<const double>, std::span<const double>) override { ++t_; }
    std::vector<double> coefficients() const override;
    std::uint64_t observations() const override { return t_; }

private:
    CobwebParams params_;
    std::uint64_t t_ = 0;
};

/// Least-squares learning of p_t = theta0 + theta1 u_{t-1}.
class RlsBelief final : public BeliefModel {
public:
    RlsBelief() : state_(RlsState::empty(2)) {}
    explicit RlsBelief(RlsState initial) : state_(std::move(initial)) {}
    std::string kind() const override { return "muth_rls"; }
    std::vector<double> forecast(std::span<const double> observables) const override;
    void update(std::span<const double> realized, std::span<const double> observables) override;
    std::vector<double> coefficients() const override { return {state_.theta[0], state_.theta[1]}; }
    std::uint64_t observations() const override { return static_cast<std::uint64_t>(state_.t); }
    const RlsState& state() const { return state_; }

private:
    RlsState state_;
};

/// Recursive sample mean of past prices; ignores u.
class SampleAverageBelief final : public BeliefModel {
public:
    std::string kind() const override { return "muth_sample_average"; }
    std::vector<double> forecast(std::span<const double>) const override { return {estimate_}; }
    void update(std::span<const double> realized, std::span<const double>) override;
    std::vector<double> coefficients() const override { return {estimate_, 0.0}; }
    std::uint64_t observations() const override { return t_; }

private:
    double estimate_ = 0.0;
    std::uint64_t t_ = 0;
};

/// Constant-gain (adaptive expectations) price forecast.
class AdaptiveBelief final : public BeliefModel {
public:
    AdaptiveBelief(double alpha, double initial = 0.0);
    std::string kind() const override { return "muth_adaptive"; }
    std::vector<double> forecast(std::span<const double>) const override { return {estimate_}; }
    void update(std::span<const double> realized, std::span<const double>) override;
    std::vector<double> coefficients() const override { return {estimate_, 0.0}; }
    std::uint64_t observations() const override { return t_; }

private:
    double alpha_;
    double estimate_;
    std::uint64_t t_ = 0;
};

/// Fixed linear rule p^e = theta0 + theta1 u_{t-1}; never updates.
class FixedLinearBelief final : public BeliefModel {
public:
    FixedLinearBelief(double theta0, double theta1) : theta_{theta0, theta1} {}
    std::string kind() const override { return "muth_fixed"; }
    std::vector<double> forecast(std::span<const double> observables) const override;
    void update(std::span<const double>, std::span<const double>) override { ++t_; }
    std::vector<double> coefficients() const override { return {theta_[0], theta_[1]}; }
    std::uint64_t observations() const override { return t_; }

private:
    std::array<double, 2> theta_;
    std::uint64_t t_ = 0;
};

/// Simulates `horizon` periods. Per period: draw eps, move u, take the belief's
/// forecast from u_{t-1}, clear the market, then update the belief.
/// `u0` defaults to a draw from the stationary distribution of u.
CobwebPath run_cobweb(const CobwebParams& params, BeliefModel& belief, std::size_t horizon, RngStream& rng,
                      std::optional<double> u0 = std::nullopt);

}  // namespace hetexp::muth
