#include "hetexp/expectations.hpp"

#include <algorithm>
#include <cmath>

namespace hetexp {

StepSizeSchedule StepSizeSchedule::constant(double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInput("constant step size must lie in (0, 1]");
    return {StepKind::constant, alpha, 0.0};
}

StepSizeSchedule StepSizeSchedule::power(double c, double a) {
    if (!(c > 0.0) || !(a > 0.0)) throw InvalidInput("power step size needs c > 0 and a > 0");
    return {StepKind::power, c, a};
}

double StepSizeSchedule::at(std::uint64_t t) const {
    if (t == 0) throw InvalidInput("step sizes are indexed from t = 1");
    switch (kind) {
        case StepKind::harmonic:
            return 1.0 / static_cast<double>(t);
        case StepKind::constant:
            return value;
        case StepKind::power:
            return std::min(1.0, value / std::pow(static_cast<double>(t), exponent));
    }
    return 1.0;
}

RobbinsMonro check_robbins_monro(const StepSizeSchedule& schedule) {
    switch (schedule.kind) {
        case StepKind::harmonic:
            return {true, true};
        case StepKind::constant:
            return {true, false};
        case StepKind::power:
            return {schedule.exponent <= 1.0, schedule.exponent > 0.5};
    }
    return {false, false};
}

Eigen::VectorXd sa_update(const Eigen::VectorXd& old, const Eigen::VectorXd& target, double alpha) {
    if (old.size() != target.size()) throw InvalidInput("sa_update: dimension mismatch");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInput("sa_update: step size must lie in (0, 1]");
    return old + alpha * (target - old);
}

double sa_update(double old, double target, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInput("sa_update: step size must lie in (0, 1]");
    return old + alpha * (target - old);
}

double sample_average_update(double estimate, double price, std::uint64_t t) {
    if (t == 0) throw InvalidInput("sample_average_update: t must be >= 1");
    return estimate + (price - estimate) / static_cast<double>(t);
}

double adaptive_update(double estimate, double price, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInput("adaptive_update: alpha must lie in (0, 1]");
    return estimate + alpha * (price - estimate);
}

double adaptive_closed_form(double initial, std::span<const double> prices, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInput("adaptive_closed_form: alpha must lie in (0, 1]");
    const std::size_t n = prices.size();
    double weighted = 0.0;
    double weight = 1.0;  // (1 - alpha)^j
    for (std::size_t j = 0; j < n; ++j) {
        weighted += weight * prices[n - 1 - j];
        weight *= 1.0 - alpha;
    }
    return weight * initial + alpha * weighted;
}

RlsState RlsState::empty(std::size_t dim) {
    if (dim == 0) throw InvalidInput("RlsState: dimension must be positive");
    const auto d = static_cast<Eigen::Index>(dim);
    return {Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d), 0.0, false};
}

RlsState RlsState::with_prior(Eigen::VectorXd theta, Eigen::MatrixXd second_moment, double weight) {
    if (theta.size() == 0 || second_moment.rows() != theta.size() || second_moment.cols() != theta.size())
        throw InvalidInput("RlsState::with_prior: dimension mismatch");
    if (!(weight > 0.0)) throw InvalidInput("RlsState::with_prior: weight must be positive");
    Eigen::LLT<Eigen::MatrixXd> llt(second_moment);
    if (llt.info() != Eigen::Success) throw InvalidInput("RlsState::with_prior: second moment not positive definite");
    Eigen::VectorXd cross = second_moment * theta;
    return {std::move(theta), std::move(second_moment), std::move(cross), weight, true};
}

namespace {

bool well_conditioned(const Eigen::MatrixXd& r) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    const double top = ev.maxCoeff();
    return top > 0.0 && ev.minCoeff() > 1e-12 * top;
}

}  // namespace

void rls_update_inplace(RlsState& state, const Eigen::VectorXd& x, double p) {
    if (x.size() != state.theta.size()) throw InvalidInput("rls_update: regressor dimension mismatch");
    state.t += 1.0;
    const double gain = 1.0 / state.t;
    state.second_moment.noalias() += gain * (x * x.transpose() - state.second_moment);

    if (state.full_rank) {
        const double error = p - x.dot(state.theta);
        state.theta.noalias() += gain * state.second_moment.ldlt().solve(x) * error;
        return;
    }

    state.cross_moment.noalias() += gain * (x * p - state.cross_moment);
    if (well_conditioned(state.second_moment)) {
        state.theta = state.second_moment.ldlt().solve(state.cross_moment);
        state.full_rank = true;
        return;
    }
    const auto d = state.theta.size();
    const Eigen::MatrixXd regularized =
        state.t * state.second_moment + RlsState::kPriorPrecision * Eigen::MatrixXd::Identity(d, d);
    state.theta = regularized.ldlt().solve(state.t * state.cross_moment);
}

RlsState rls_update(const RlsState& state, const Eigen::VectorXd& x, double p) {
    RlsState next = state;
    rls_update_inplace(next, x, p);
    return next;
}

Eigen::VectorXd batch_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& p) {
    if (x.rows() != p.size()) throw InvalidInput("batch_least_squares: row count mismatch");
    const Eigen::MatrixXd xtx = x.transpose() * x;
    const Eigen::VectorXd xtp = x.transpose() * p;
    return xtx.ldlt().solve(xtp);
}

void to_json(nlohmann::json& j, const BeliefSnapshot& s) {
    j = nlohmann::json{{"model_kind", s.model_kind}, {"coefficients", s.coefficients}, {"t", s.t}};
}

void from_json(const nlohmann::json& j, BeliefSnapshot& s) {
    j.at("model_kind").get_to(s.model_kind);
    j.at("coefficients").get_to(s.coefficients);
    j.at("t").get_to(s.t);
}

double coefficient_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidInput("coefficient_distance: length mismatch");
    double gap = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
    return gap;
}

}  // namespace hetexp
