#pragma once

#include <vector>

#include "hetexp/stochcore.hpp"

// Double-well diffusion dX = -V'(X) dt + sigma dW with
// V(x) = (quartic/4) x^4 - (quadratic/2) x^2.
namespace hetexp::bistable {

enum class SpecKind {
    /// Euler-Maruyama discretization of the diffusion.
    continuous,
    /// X_{t+1} = S(X_t) + sigma eps_t with S(x) = x + dt * drift(x); noise is not scaled by sqrt(dt).
    discrete_map,
};

struct DoubleWellSpec {
    double quartic = 1.0;    // c4
    double quadratic = 1.0;  // c2
    double sigma = 0.7;
    double dt = 0.01;
    SpecKind kind = SpecKind::continuous;

    static constexpr double kMaxDt = 0.05;

    void validate() const;
    /// Positive well location sqrt(c2 / c4); the wells sit at +/- this value.
    double well() const;
};

double potential(const DoubleWellSpec& spec, double x);
/// -V'(x) = -c4 x^3 + c2 x.
double drift(const DoubleWellSpec& spec, double x);
/// V''(x) = 3 c4 x^2 - c2.
double curvature(const DoubleWellSpec& spec, double x);

/// Path of length steps + 1 starting at x0. Throws ConvergenceError when |x| exceeds 1e3.
std::vector<double> simulate_em(const DoubleWellSpec& spec, double x0, std::size_t steps, RngStream& rng);

/// exp(-2 V / sigma^2) on `grid`, normalized by the trapezoid rule.
std::vector<double> stationary_density(const DoubleWellSpec& spec, const std::vector<double>& grid);

/// Uniform grid helper: n points on [lo, hi].
std::vector<double> linspace(double lo, double hi, std::size_t n);

struct HoppingStats {
    std::size_t hops = 0;
    std::size_t up_crossings = 0;    // low well -> high well
    std::size_t down_crossings = 0;  // high well -> low well
    double mean_residence_low = 0.0;
    double mean_residence_high = 0.0;
    /// Fraction of path points currently attributed to each well (low, high).
    double occupancy_low = 0.0;
    double occupancy_high = 0.0;
};

/// Hysteresis classification: the path is assigned to the low well after
/// dropping below -threshold and to the high well after rising above +threshold;
/// a hop is a switch between the two. Points before the first assignment are
/// not counted toward occupancy. Residence times are in steps and cover
/// completed and final spells.
HoppingStats hopping_stats(const std::vector<double>& path, double threshold);

struct LinearizedComparison {
    double well;               // the minimum linearized around
    double ou_sd;              // sigma / sqrt(2 V''(well))
    double ou_far_mass;        // OU probability beyond the barrier (x = 0 side opposite the well)
    double true_far_mass;      // exact stationary probability beyond the barrier
    double ratio;              // true_far_mass / ou_far_mass
};

/// Compares the Ornstein-Uhlenbeck approximation at one well with the true
/// stationary density. `low_well` picks the negative minimum.
LinearizedComparison linearized_comparison(const DoubleWellSpec& spec, bool low_well = true);

/// Probability mass of the stationary density on each of `bins` equal-width
/// bins over [lo, hi], conditional on [lo, hi].
std::vector<double> binned_stationary_mass(const DoubleWellSpec& spec, double lo, double hi, std::size_t bins);

/// Empirical histogram mass on the same bins (points outside are dropped).
std::vector<double> empirical_mass(const std::vector<double>& path, double lo, double hi, std::size_t bins);

/// Local maxima count of a sampled function (strict on both sides, plateaus ignored).
std::size_t count_modes(const std::vector<double>& values);

}  // namespace hetexp::bistable
