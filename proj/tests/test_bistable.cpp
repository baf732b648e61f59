#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hetexp/bistable.hpp"
#include "oracles.hpp"

using namespace hetexp;
using namespace hetexp::bistable;

namespace {

DoubleWellSpec unit(double sigma) {
    DoubleWellSpec s;
    s.sigma = sigma;
    return s;
}

double l1(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d;
}

}  // namespace

TEST_CASE("drift") {
    const auto s = unit(0.7);
    CHECK(drift(s, 0.0) == 0.0);
    CHECK(drift(s, 1.0) == 0.0);
    CHECK(drift(s, -1.0) == 0.0);
    CHECK(drift(s, 0.5) == 0.375);
    CHECK(s.well() == 1.0);
    CHECK(curvature(s, -1.0) == 2.0);
}

TEST_CASE("deterministic paths") {
    auto s = unit(0.0);
    RngStream rng(1);
    for (double x : simulate_em(s, 1.0, 1000, rng)) CHECK(x == 1.0);
    for (double x : simulate_em(s, 0.0, 1000, rng)) CHECK(x == 0.0);

    const auto path = simulate_em(s, 0.5, 10000, rng);
    for (std::size_t n = 1; n < path.size(); ++n) CHECK(path[n] >= path[n - 1]);
    CHECK(std::abs(path.back() - 1.0) < 1e-6);
    // ODE x' = x - x^3 over the same horizon at a tiny step
    const double ref = oracle::rk4([](double x) { return x - x * x * x; }, 0.5, 100.0, 1e-4);
    CHECK(std::abs(path.back() - ref) < 1e-6);
}

TEST_CASE("divergence names the step guard") {
    DoubleWellSpec s = unit(0.0);
    s.dt = 0.05;
    RngStream rng(1);
    try {
        simulate_em(s, 20.0, 100, rng);
        FAIL("expected divergence");
    } catch (const ConvergenceError& e) {
        CHECK(std::string(e.what()).find("dt") != std::string::npos);
    }
    s.dt = 0.06;
    CHECK_THROWS_AS(simulate_em(s, 0.0, 10, rng), InvalidInput);
}

TEST_CASE("stationary density") {
    const auto s = unit(1.0);
    const auto grid = linspace(-3.0, 3.0, 1201);
    const auto f = stationary_density(s, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) CHECK(std::abs(f[i] - f[grid.size() - 1 - i]) < 1e-12);
    CHECK(std::abs(f[800] / f[600] - std::exp(0.5)) < 1e-12);  // x = 1 and x = 0
    double integral = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) integral += 0.5 * (f[i] + f[i - 1]) * (grid[i] - grid[i - 1]);
    CHECK(std::abs(integral - 1.0) < 1e-8);
    CHECK_THROWS_AS(stationary_density(unit(0.0), grid), InvalidInput);
}

TEST_CASE("density ratio matches the closed form for several noise levels") {
    for (double sigma : {0.3, 0.7, 1.0, 2.0}) {
        const auto f = stationary_density(unit(sigma), linspace(-2.0, 2.0, 401));
        CHECK(std::abs(f[300] / f[200] - std::exp(0.5 / (sigma * sigma))) < 1e-12 * std::exp(0.5 / (sigma * sigma)));
    }
}

TEST_CASE("hopping stats") {
    std::vector<double> flat(100, 1.0);
    auto h = hopping_stats(flat, 0.5);
    CHECK(h.hops == 0);
    CHECK(h.occupancy_low == 0.0);
    CHECK(h.occupancy_high == 1.0);

    std::vector<double> wave;
    const int transitions = 7;
    for (int block = 0; block <= transitions; ++block)
        for (int i = 0; i < 10; ++i) wave.push_back(block % 2 ? 1.0 : -1.0);
    h = hopping_stats(wave, 0.5);
    CHECK(h.hops == transitions);
    CHECK(h.up_crossings == 4);
    CHECK(h.down_crossings == 3);
    CHECK(h.occupancy_low == 0.5);

    // chatter inside the band does not count
    h = hopping_stats({-1.0, 0.4, -0.4, 0.4, -1.0}, 0.5);
    CHECK(h.hops == 0);
}

TEST_CASE("noisy path visits both wells with balanced crossings") {
    const auto s = unit(0.7);
    RngStream rng(2);
    const auto path = simulate_em(s, -1.0, 2000000, rng);
    const auto h = hopping_stats(path, 0.5);
    CHECK(h.hops > 10);
    CHECK(h.occupancy_low >= 0.10);
    CHECK(h.occupancy_high >= 0.10);
    const auto up = static_cast<long>(h.up_crossings), down = static_cast<long>(h.down_crossings);
    CHECK(std::abs(up - down) <= 1);
}

TEST_CASE("linearized comparison") {
    const auto s = unit(0.7);
    const auto lin = linearized_comparison(s, true);
    CHECK(lin.well == -1.0);
    CHECK(std::abs(lin.ou_sd - 0.35) < 1e-15);
    CHECK(std::abs(lin.ou_far_mass - oracle::normal_cdf(-1.0 / 0.35)) < 1e-15);
    CHECK(std::abs(lin.ou_far_mass - 2.1e-3) < 1e-4);
    CHECK(std::abs(lin.true_far_mass - 0.5) < 1e-10);
    CHECK(lin.ratio > 100.0);

    // independent quadrature of the true density beyond the barrier
    auto kernel = [&](double x) { return std::exp(-2.0 * potential(s, x) / (s.sigma * s.sigma)); };
    const double total = oracle::simpson(kernel, -6.0, 6.0, 20000);
    const double far = oracle::simpson(kernel, 0.0, 6.0, 10000);
    CHECK(std::abs(far / total - lin.true_far_mass) < 1e-10);
}

TEST_CASE("ou density is unimodal and the true density bimodal") {
    const auto grid = linspace(-3.0, 3.0, 601);
    for (double sigma : {0.3, 0.5, 0.7, 1.0}) {
        const auto s = unit(sigma);
        CHECK(count_modes(stationary_density(s, grid)) == 2);
        const auto lin = linearized_comparison(s, true);
        std::vector<double> ou;
        for (double x : grid) ou.push_back(std::exp(-0.5 * std::pow((x - lin.well) / lin.ou_sd, 2)));
        CHECK(count_modes(ou) == 1);
    }
}

TEST_CASE("binned masses") {
    const auto s = unit(0.7);
    const auto mass = binned_stationary_mass(s, -3.0, 3.0, 20);
    double total = 0.0;
    for (double m : mass) total += m;
    CHECK(std::abs(total - 1.0) < 1e-12);
    for (std::size_t b = 0; b < 10; ++b) CHECK(std::abs(mass[b] - mass[19 - b]) < 1e-12);

    const auto e = empirical_mass({-2.9, -2.9, 0.1, 5.0}, -3.0, 3.0, 2);
    CHECK(std::abs(e[0] - 2.0 / 3.0) < 1e-15);
    CHECK(std::abs(e[1] - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("halving the step barely moves the histogram distance") {
    auto s = unit(0.7);
    RngStream a(40), b(41);
    const auto coarse = simulate_em(s, -1.0, 10000000, a);
    const double d1 = l1(empirical_mass(coarse, -3.0, 3.0, 20), binned_stationary_mass(s, -3.0, 3.0, 20));
    s.dt = 0.005;
    const auto fine = simulate_em(s, -1.0, 20000000, b);
    const double d2 = l1(empirical_mass(fine, -3.0, 3.0, 20), binned_stationary_mass(s, -3.0, 3.0, 20));
    MESSAGE("L1 at dt=0.01: " << d1 << ", at dt=0.005: " << d2);
    CHECK(std::abs(d1 - d2) < 0.01);
}

TEST_CASE("discrete map variant shares the drift") {
    DoubleWellSpec s = unit(0.0);
    s.kind = SpecKind::discrete_map;
    RngStream rng(3);
    const auto path = simulate_em(s, 0.5, 3, rng);
    CHECK(std::abs(path[1] - (0.5 + s.dt * drift(s, 0.5))) < 1e-15);
}
