#include "hetexp/bistable.hpp"

#include <cmath>
#include <sstream>

namespace hetexp::bistable {

void DoubleWellSpec::validate() const {
    if (!(quartic > 0.0) || !(quadratic > 0.0))
        throw InvalidInput("DoubleWellSpec: quartic and quadratic coefficients must be > 0");
    if (!(sigma >= 0.0)) throw InvalidInput("DoubleWellSpec: sigma must be >= 0");
    if (!(dt > 0.0) || dt > kMaxDt) throw InvalidInput("DoubleWellSpec: dt must lie in (0, 0.05]");
}

double DoubleWellSpec::well() const { return std::sqrt(quadratic / quartic); }

double potential(const DoubleWellSpec& spec, double x) {
    const double x2 = x * x;
    return 0.25 * spec.quartic * x2 * x2 - 0.5 * spec.quadratic * x2;
}

double drift(const DoubleWellSpec& spec, double x) { return -spec.quartic * x * x * x + spec.quadratic * x; }

double curvature(const DoubleWellSpec& spec, double x) { return 3.0 * spec.quartic * x * x - spec.quadratic; }

std::vector<double> simulate_em(const DoubleWellSpec& spec, double x0, std::size_t steps, RngStream& rng) {
    spec.validate();
    const double noise =
        spec.kind == SpecKind::continuous ? spec.sigma * std::sqrt(spec.dt) : spec.sigma;
    std::vector<double> path(steps + 1);
    path[0] = x0;
    double x = x0;
    for (std::size_t n = 0; n < steps; ++n) {
        x += drift(spec, x) * spec.dt;
        if (noise > 0.0) x += noise * rng.normal();
        if (!(std::abs(x) <= 1e3)) {
            std::ostringstream msg;
            msg << "simulate_em: path diverged at step " << n + 1 << " (|x| > 1e3); reduce dt below the stability guard "
                << DoubleWellSpec::kMaxDt;
            throw ConvergenceError(msg.str());
        }
        path[n + 1] = x;
    }
    return path;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> grid(n);
    if (n == 1) {
        grid[0] = lo;
        return grid;
    }
    for (std::size_t i = 0; i < n; ++i) grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return grid;
}

namespace {

// Unnormalized density shifted so the minimum of V maps to exp(0).
double kernel(const DoubleWellSpec& spec, double x) {
    const double v_min = -spec.quadratic * spec.quadratic / (4.0 * spec.quartic);
    return std::exp(-2.0 * (potential(spec, x) - v_min) / (spec.sigma * spec.sigma));
}

double simpson(const DoubleWellSpec& spec, double lo, double hi, std::size_t intervals) {
    if (intervals % 2) ++intervals;
    const double h = (hi - lo) / static_cast<double>(intervals);
    double sum = kernel(spec, lo) + kernel(spec, hi);
    for (std::size_t i = 1; i < intervals; ++i) sum += (i % 2 ? 4.0 : 2.0) * kernel(spec, lo + h * static_cast<double>(i));
    return sum * h / 3.0;
}

// Half-width beyond which the density is below exp(-80) of its peak.
double support_bound(const DoubleWellSpec& spec) {
    double x = 2.0 * spec.well() + 1.0;
    const double v_min = -spec.quadratic * spec.quadratic / (4.0 * spec.quartic);
    while (2.0 * (potential(spec, x) - v_min) / (spec.sigma * spec.sigma) < 80.0) x *= 1.5;
    return x;
}

void require_noise(const DoubleWellSpec& spec, const char* who) {
    spec.validate();
    if (!(spec.sigma > 0.0)) throw InvalidInput(std::string(who) + ": sigma must be > 0 (no stationary density)");
}

}  // namespace

std::vector<double> stationary_density(const DoubleWellSpec& spec, const std::vector<double>& grid) {
    require_noise(spec, "stationary_density");
    if (grid.size() < 2) throw InvalidInput("stationary_density: grid needs at least 2 points");
    std::vector<double> f(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) f[i] = kernel(spec, grid[i]);
    double area = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) area += 0.5 * (f[i] + f[i - 1]) * (grid[i] - grid[i - 1]);
    for (auto& v : f) v /= area;
    return f;
}

HoppingStats hopping_stats(const std::vector<double>& path, double threshold) {
    if (!(threshold > 0.0)) throw InvalidInput("hopping_stats: threshold must be > 0");
    HoppingStats stats;
    int well = 0;  // -1 low, +1 high, 0 unassigned
    std::size_t spell_start = 0;
    std::size_t low_points = 0, high_points = 0;
    double low_total = 0.0, high_total = 0.0;
    std::size_t low_spells = 0, high_spells = 0;

    auto close_spell = [&](std::size_t end) {
        const double length = static_cast<double>(end - spell_start);
        if (well < 0) {
            low_total += length;
            ++low_spells;
        } else if (well > 0) {
            high_total += length;
            ++high_spells;
        }
    };

    for (std::size_t i = 0; i < path.size(); ++i) {
        const double x = path[i];
        int next = well;
        if (x < -threshold) next = -1;
        else if (x > threshold) next = 1;
        if (next != well) {
            if (well != 0) {
                ++stats.hops;
                if (next > 0) ++stats.up_crossings;
                else ++stats.down_crossings;
            }
            close_spell(i);
            well = next;
            spell_start = i;
        }
        if (well < 0) ++low_points;
        else if (well > 0) ++high_points;
    }
    close_spell(path.size());

    const double assigned = static_cast<double>(low_points + high_points);
    if (assigned > 0.0) {
        stats.occupancy_low = static_cast<double>(low_points) / assigned;
        stats.occupancy_high = static_cast<double>(high_points) / assigned;
    }
    stats.mean_residence_low = low_spells ? low_total / static_cast<double>(low_spells) : 0.0;
    stats.mean_residence_high = high_spells ? high_total / static_cast<double>(high_spells) : 0.0;
    return stats;
}

LinearizedComparison linearized_comparison(const DoubleWellSpec& spec, bool low_well) {
    require_noise(spec, "linearized_comparison");
    LinearizedComparison out{};
    out.well = low_well ? -spec.well() : spec.well();
    out.ou_sd = spec.sigma / std::sqrt(2.0 * curvature(spec, out.well));
    // Distance from the well to the barrier at 0, in OU standard deviations.
    out.ou_far_mass = 0.5 * std::erfc(spec.well() / (out.ou_sd * std::sqrt(2.0)));

    const double bound = support_bound(spec);
    const std::size_t intervals = 200000;
    const double total = simpson(spec, -bound, bound, intervals);
    const double far = low_well ? simpson(spec, 0.0, bound, intervals / 2) : simpson(spec, -bound, 0.0, intervals / 2);
    out.true_far_mass = far / total;
    out.ratio = out.true_far_mass / out.ou_far_mass;
    return out;
}

std::vector<double> binned_stationary_mass(const DoubleWellSpec& spec, double lo, double hi, std::size_t bins) {
    require_noise(spec, "binned_stationary_mass");
    if (!(hi > lo) || bins == 0) throw InvalidInput("binned_stationary_mass: bad bin layout");
    std::vector<double> mass(bins);
    const double width = (hi - lo) / static_cast<double>(bins);
    double total = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        mass[b] = simpson(spec, lo + width * static_cast<double>(b), lo + width * static_cast<double>(b + 1), 2000);
        total += mass[b];
    }
    for (auto& m : mass) m /= total;
    return mass;
}

std::vector<double> empirical_mass(const std::vector<double>& path, double lo, double hi, std::size_t bins) {
    if (!(hi > lo) || bins == 0) throw InvalidInput("empirical_mass: bad bin layout");
    std::vector<double> mass(bins, 0.0);
    const double width = (hi - lo) / static_cast<double>(bins);
    std::size_t inside = 0;
    for (double x : path) {
        if (x < lo || x >= hi) continue;
        const auto b = std::min(bins - 1, static_cast<std::size_t>((x - lo) / width));
        mass[b] += 1.0;
        ++inside;
    }
    if (inside > 0)
        for (auto& m : mass) m /= static_cast<double>(inside);
    return mass;
}

std::size_t count_modes(const std::vector<double>& values) {
    std::size_t modes = 0;
    for (std::size_t i = 1; i + 1 < values.size(); ++i)
        if (values[i] > values[i - 1] && values[i] > values[i + 1]) ++modes;
    return modes;
}

}  // namespace hetexp::bistable
