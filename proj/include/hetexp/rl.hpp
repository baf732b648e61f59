#pragma once

#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hetexp/expectations.hpp"
#include "hetexp/stochcore.hpp"

namespace hetexp::rl {

/// Markov reward process: a fixed policy has already been folded into P and R.
struct FiniteMrp {
    Eigen::MatrixXd transition;
    Eigen::VectorXd reward;
    double beta = 0.9;

    std::size_t size() const { return static_cast<std::size_t>(reward.size()); }
    void validate() const;
};

/// transitions[c](x, x') = P(x' | x, c); reward(x, c).
struct FiniteMdp {
    std::vector<Eigen::MatrixXd> transitions;
    Eigen::MatrixXd reward;
    double beta = 0.9;

    std::size_t states() const { return static_cast<std::size_t>(reward.rows()); }
    std::size_t actions() const { return static_cast<std::size_t>(reward.cols()); }
    void validate() const;
};

struct QTable {
    Eigen::MatrixXd q;
    Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic> visits;

    /// argmax_c Q(x, c); ties go to the lowest action index.
    std::size_t greedy_action(std::size_t x) const;
    std::vector<std::size_t> greedy_policy() const;

    /// Columns: state, action, value, visits.
    void write_csv(std::ostream& out) const;
};

/// v = (I - beta P)^{-1} R.
Eigen::VectorXd solve_mrp_exact(const FiniteMrp& mrp);

struct TdOptions {
    std::size_t steps = 1000;
    StepSizeSchedule schedule = StepSizeSchedule::harmonic();
    /// Initial value guess; zeros when empty.
    Eigen::VectorXd initial;
};

/// TD(0) prediction along one simulated trajectory. The step for state x is
/// schedule.at(N(x)) where N(x) counts visits to x, starting from a uniformly
/// drawn state.
Eigen::VectorXd td0_predict(const FiniteMrp& mrp, const TdOptions& options, RngStream& rng);

struct QOptions {
    double epsilon = 0.1;
    std::size_t steps = 1000;
    StepSizeSchedule schedule = StepSizeSchedule::harmonic();
    /// On-policy target Q(x', c') instead of max_c' Q(x', c').
    bool sarsa = false;
};

/// Tabular Q-learning (or Sarsa) with epsilon-greedy exploration. Q starts at
/// zero; steps are keyed to per-(x, c) visit counts.
QTable q_learn(const FiniteMdp& mdp, const QOptions& options, RngStream& rng);

/// Per-dimension bin edges. A value v falls in bin i when edges[i-1] <= v < edges[i];
/// values below the first edge land in bin 0 and at or above the last in bin edges.size().
class PriceBinner {
public:
    explicit PriceBinner(std::vector<std::vector<double>> edges);

    std::size_t dimensions() const { return edges_.size(); }
    std::size_t bins(std::size_t dim) const { return edges_[dim].size() + 1; }
    std::size_t total_bins() const;

    /// Row-major composite bin index.
    std::size_t bin(std::span<const double> prices) const;

private:
    std::vector<std::vector<double>> edges_;
};

/// Exact optimal action values by policy iteration.
Eigen::MatrixXd solve_mdp_exact(const FiniteMdp& mdp);

/// Smallest gap between the best and second-best action value over all states.
double min_action_gap(const Eigen::MatrixXd& q);

/// Random environments: transition rows are normalized uniform draws, rewards U(0, 1).
FiniteMrp random_mrp(std::size_t states, double beta, RngStream& rng);
FiniteMdp random_mdp(std::size_t states, std::size_t actions, double beta, RngStream& rng);

/// Value vector dump: state, action (always 0), value, visits (always 0).
void write_values_csv(std::ostream& out, const Eigen::VectorXd& values);

}  // namespace hetexp::rl
