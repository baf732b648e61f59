#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hetexp {

/// Raised for malformed parameters or inputs that violate an operation's precondition.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative procedure fails to reach its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Seeded xoshiro256** stream. A (seed, stream id) pair fully determines the
/// draw sequence; uniform and normal draws are computed in-house so results do
/// not depend on the standard library's distribution implementations.
class RngStream {
public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Independent child stream; same (seed, stream, child) always yields the same child.
    RngStream split(std::uint64_t child_id) const;

    std::uint64_t next_u64();
    result_type operator()() { return next_u64(); }
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();
    /// Standard normal via the Marsaglia polar method.
    double normal();
    /// Index drawn from a discrete distribution given by `probs` (need not be normalized exactly).
    std::size_t categorical(std::span<const double> probs);

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Finite-state Markov chain with strictly increasing state values and a
/// row-stochastic transition matrix.
class MarkovChain {
public:
    MarkovChain(std::vector<double> states, Eigen::MatrixXd transition);

    std::size_t size() const { return states_.size(); }
    const std::vector<double>& states() const { return states_; }
    const Eigen::MatrixXd& transition() const { return transition_; }
    double state(std::size_t i) const { return states_[i]; }
    double prob(std::size_t from, std::size_t to) const { return transition_(from, to); }

    /// Single-state chain sitting at `value`.
    static MarkovChain degenerate(double value);

private:
    std::vector<double> states_;
    Eigen::MatrixXd transition_;
};

inline constexpr double kRowSumTolerance = 1e-12;

/// Checks nonnegativity and unit row sums of a square matrix. Throws InvalidInput.
void validate_row_stochastic(const Eigen::MatrixXd& p, const std::string& what);

/// Unique stationary distribution. Throws ConvergenceError if the chain has no
/// unique stationary distribution or the iteration cap is hit.
Eigen::VectorXd stationary_distribution(const MarkovChain& chain, int max_iterations = 100000,
                                        double tolerance = 1e-14);

/// Rouwenhorst discretization of x' = rho x + sigma e.
MarkovChain discretize_ar1(double rho, double sigma, int n);

/// Path of state indices of length `horizon` starting at `start` (included as element 0).
std::vector<std::size_t> simulate_chain(const MarkovChain& chain, std::size_t horizon, RngStream& rng,
                                        std::size_t start = 0);

struct RootResult {
    double x;
    double fx;
    int iterations;
};

/// Brent's method on a sign-changing bracket. Stops when |f(x)| <= tol or the
/// bracket is narrower than tol.
RootResult find_root(const std::function<double(double)>& f, double lo, double hi, double tol,
                     int max_iterations = 200);

}  // namespace hetexp
