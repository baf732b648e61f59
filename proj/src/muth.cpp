#include "hetexp/muth.hpp"

#include <cmath>

#include "hetexp/csv.hpp"

namespace hetexp::muth {

void CobwebParams::validate() const {
    if (!(demand_slope > 0.0)) throw InvalidInput("cobweb: demand_slope must be > 0");
    if (!(supply_slope > 0.0)) throw InvalidInput("cobweb: supply_slope must be > 0");
    if (!(std::abs(rho) < 1.0)) throw InvalidInput("cobweb: |rho| must be < 1");
    if (!(sigma_eps >= 0.0)) throw InvalidInput("cobweb: sigma_eps must be >= 0");
}

double rational_forecast(const CobwebParams& params, double u_prev) {
    return -params.rho * u_prev / (params.demand_slope + params.supply_slope);
}

double realize_price(const CobwebParams& params, double p_expected, double u) {
    return -(params.supply_slope / params.demand_slope) * p_expected - u / params.demand_slope;
}

std::array<double, 2> t_map(const CobwebParams& params, std::array<double, 2> theta) {
    // p_t = -(g/b)(theta0 + theta1 u_{t-1}) - (rho u_{t-1} + eps_t)/b
    const double ratio = params.supply_slope / params.demand_slope;
    return {-ratio * theta[0], -ratio * theta[1] - params.rho / params.demand_slope};
}

std::array<double, 2> t_map_fixed_point(const CobwebParams& params) {
    return {0.0, -params.rho / (params.demand_slope + params.supply_slope)};
}

std::vector<double> RationalBelief::forecast(std::span<const double> observables) const {
    return {rational_forecast(params_, observables[0])};
}

std::vector<double> RationalBelief::coefficients() const {
    const auto fp = t_map_fixed_point(params_);
    return {fp[0], fp[1]};
}

std::vector<double> RlsBelief::forecast(std::span<const double> observables) const {
    return {state_.theta[0] + state_.theta[1] * observables[0]};
}

void RlsBelief::update(std::span<const double> realized, std::span<const double> observables) {
    Eigen::Vector2d x(1.0, observables[0]);
    rls_update_inplace(state_, x, realized[0]);
}

void SampleAverageBelief::update(std::span<const double> realized, std::span<const double>) {
    estimate_ = sample_average_update(estimate_, realized[0], ++t_);
}

AdaptiveBelief::AdaptiveBelief(double alpha, double initial) : alpha_(alpha), estimate_(initial) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInput("AdaptiveBelief: alpha must lie in (0, 1]");
}

void AdaptiveBelief::update(std::span<const double> realized, std::span<const double>) {
    estimate_ = adaptive_update(estimate_, realized[0], alpha_);
    ++t_;
}

std::vector<double> FixedLinearBelief::forecast(std::span<const double> observables) const {
    return {theta_[0] + theta_[1] * observables[0]};
}

CobwebPath run_cobweb(const CobwebParams& params, BeliefModel& belief, std::size_t horizon, RngStream& rng,
                      std::optional<double> u0) {
    params.validate();
    if (horizon < 1) throw InvalidInput("run_cobweb: horizon must be >= 1");

    CobwebPath path;
    path.params = params;
    path.seed = rng.seed();
    const double stationary_sd = params.sigma_eps / std::sqrt(1.0 - params.rho * params.rho);
    path.u0 = u0 ? *u0 : stationary_sd * rng.normal();
    path.records.reserve(horizon);

    double u_prev = path.u0;
    for (std::size_t t = 1; t <= horizon; ++t) {
        const double eps = params.sigma_eps > 0.0 ? params.sigma_eps * rng.normal() : 0.0;
        const double u = params.rho * u_prev + eps;
        const double obs[1] = {u_prev};
        const double p_expected = belief.forecast(obs)[0];
        const double p = realize_price(params, p_expected, u);
        const double realized[1] = {p};
        belief.update(realized, obs);
        const auto coef = belief.coefficients();
        path.records.push_back({t, u, p_expected, p, coef.size() > 0 ? coef[0] : 0.0, coef.size() > 1 ? coef[1] : 0.0});
        u_prev = u;
    }
    return path;
}

void CobwebPath::write_csv(std::ostream& out) const {
    CsvWriter csv(out, {"t", "u", "p_expected", "p_realized", "theta0", "theta1"});
    for (const auto& r : records) csv << r.t << r.u << r.p_expected << r.p_realized << r.theta0 << r.theta1;
}

}  // namespace hetexp::muth
