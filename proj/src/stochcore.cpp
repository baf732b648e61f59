#include "hetexp/stochcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hetexp {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {
    std::uint64_t mix = seed;
    std::uint64_t salt = stream_id * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL;
    mix ^= splitmix64(salt);
    for (auto& word : s_) word = splitmix64(mix);
}

RngStream RngStream::split(std::uint64_t child_id) const {
    std::uint64_t x = stream_id_;
    std::uint64_t derived = splitmix64(x) ^ (child_id + 0x632BE59BD9B4E019ULL);
    return RngStream(seed_, splitmix64(derived));
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
}

std::size_t RngStream::categorical(std::span<const double> probs) {
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    const double target = uniform() * total;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cumulative += probs[i];
        if (target < cumulative) return i;
    }
    // Rounding can leave target == total; return the last state with positive mass.
    for (std::size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0.0) return i;
    return probs.size() - 1;
}

void validate_row_stochastic(const Eigen::MatrixXd& p, const std::string& what) {
    if (p.rows() == 0 || p.rows() != p.cols())
        throw InvalidInput(what + ": transition matrix must be square and nonempty");
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            if (!(p(i, j) >= 0.0) || !std::isfinite(p(i, j))) {
                std::ostringstream msg;
                msg << what << ": negative or non-finite entry at (" << i << ", " << j << ")";
                throw InvalidInput(msg.str());
            }
        }
        const double sum = p.row(i).sum();
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            std::ostringstream msg;
            msg << what << ": row " << i << " sums to " << sum;
            throw InvalidInput(msg.str());
        }
    }
}

MarkovChain::MarkovChain(std::vector<double> states, Eigen::MatrixXd transition)
    : states_(std::move(states)), transition_(std::move(transition)) {
    if (states_.empty()) throw InvalidInput("MarkovChain: no states");
    if (static_cast<Eigen::Index>(states_.size()) != transition_.rows())
        throw InvalidInput("MarkovChain: state count does not match transition matrix");
    for (std::size_t i = 1; i < states_.size(); ++i)
        if (!(states_[i] > states_[i - 1])) throw InvalidInput("MarkovChain: states must be strictly increasing");
    validate_row_stochastic(transition_, "MarkovChain");
}

MarkovChain MarkovChain::degenerate(double value) { return MarkovChain({value}, Eigen::MatrixXd::Ones(1, 1)); }

Eigen::VectorXd stationary_distribution(const MarkovChain& chain, int max_iterations, double tolerance) {
    const auto n = static_cast<Eigen::Index>(chain.size());
    const Eigen::MatrixXd& p = chain.transition();
    if (n == 1) return Eigen::VectorXd::Ones(1);

    // A unique stationary distribution exists iff I - P has rank n - 1.
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(n, n) - p);
    lu.setThreshold(1e-12);
    if (lu.rank() != n - 1)
        throw ConvergenceError("stationary_distribution: chain is reducible (no unique stationary distribution)");

    // Power iteration on the lazy chain (I + P) / 2, which removes periodicity.
    const Eigen::MatrixXd lazy_t = 0.5 * (Eigen::MatrixXd::Identity(n, n) + p).transpose();
    Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    for (int it = 0; it < max_iterations; ++it) {
        Eigen::VectorXd next = lazy_t * pi;
        next /= next.sum();
        const double gap = (next - pi).cwiseAbs().maxCoeff();
        pi = std::move(next);
        if (gap < tolerance) return pi.cwiseMax(0.0) / pi.cwiseMax(0.0).sum();
    }
    throw ConvergenceError("stationary_distribution: power iteration did not converge");
}

MarkovChain discretize_ar1(double rho, double sigma, int n) {
    if (!(std::abs(rho) < 1.0)) throw InvalidInput("discretize_ar1: |rho| must be < 1");
    if (!(sigma > 0.0)) throw InvalidInput("discretize_ar1: sigma must be > 0");
    if (n < 2) throw InvalidInput("discretize_ar1: need at least 2 states");

    const double p = 0.5 * (1.0 + rho);
    const double q = p;
    Eigen::MatrixXd theta(2, 2);
    theta << p, 1.0 - p, 1.0 - q, q;
    for (int m = 3; m <= n; ++m) {
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(m, m);
        next.topLeftCorner(m - 1, m - 1) += p * theta;
        next.topRightCorner(m - 1, m - 1) += (1.0 - p) * theta;
        next.bottomLeftCorner(m - 1, m - 1) += (1.0 - q) * theta;
        next.bottomRightCorner(m - 1, m - 1) += q * theta;
        next.middleRows(1, m - 2) *= 0.5;
        theta = std::move(next);
    }
    // Interior rows get exactly 1 after halving; renormalize only rounding.
    for (Eigen::Index i = 0; i < theta.rows(); ++i) theta.row(i) /= theta.row(i).sum();

    const double sd = sigma / std::sqrt(1.0 - rho * rho);
    const double psi = std::sqrt(static_cast<double>(n - 1)) * sd;
    std::vector<double> states(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) states[static_cast<std::size_t>(i)] = -psi + 2.0 * psi * i / (n - 1);
    return MarkovChain(std::move(states), std::move(theta));
}

std::vector<std::size_t> simulate_chain(const MarkovChain& chain, std::size_t horizon, RngStream& rng,
                                        std::size_t start) {
    if (horizon < 1) throw InvalidInput("simulate_chain: horizon must be >= 1");
    if (start >= chain.size()) throw InvalidInput("simulate_chain: start index out of range");
    std::vector<std::size_t> path(horizon);
    path[0] = start;
    const Eigen::MatrixXd& p = chain.transition();
    std::vector<double> row(chain.size());
    for (std::size_t t = 1; t < horizon; ++t) {
        const auto from = static_cast<Eigen::Index>(path[t - 1]);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = p(from, static_cast<Eigen::Index>(j));
        path[t] = rng.categorical(row);
    }
    return path;
}

RootResult find_root(const std::function<double(double)>& f, double lo, double hi, double tol, int max_iterations) {
    if (!(lo < hi)) throw InvalidInput("find_root: need lo < hi");
    if (!(tol > 0.0)) throw InvalidInput("find_root: need tol > 0");
    double a = lo, b = hi;
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return {a, fa, 0};
    if (fb == 0.0) return {b, fb, 0};
    if (fa * fb > 0.0) {
        std::ostringstream msg;
        msg << "find_root: no sign change on [" << lo << ", " << hi << "] (f(lo)=" << fa << ", f(hi)=" << fb << ")";
        throw InvalidInput(msg.str());
    }
    double c = a, fc = fa;
    double d = b - a, e = d;
    for (int it = 1; it <= max_iterations; ++it) {
        if (fb * fc > 0.0) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        const double half_width = 0.5 * (c - b);
        if (std::abs(fb) <= tol || std::abs(c - b) <= tol) return {b, fb, it};

        const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.25 * tol;
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double p, q;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * half_width * s;
                q = 1.0 - s;
            } else {
                const double qa = fa / fc;
                const double r = fb / fc;
                p = s * (2.0 * half_width * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * half_width * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = half_width;
                e = d;
            }
        } else {
            d = half_width;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::abs(d) > tol1) ? d : (half_width > 0 ? tol1 : -tol1);
        fb = f(b);
    }
    throw ConvergenceError("find_root: iteration cap reached");
}

}  // namespace hetexp
