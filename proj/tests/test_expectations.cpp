#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hetexp/expectations.hpp"
#include "oracles.hpp"

using namespace hetexp;

TEST_CASE("sa update") {
    CHECK(sa_update(0.0, 1.0, 0.5) == 0.5);
    CHECK(sa_update(3.7, 3.7, 0.3) == 3.7);
    CHECK(sa_update(2.0, 0.0, 1.0) == 0.0);
    Eigen::VectorXd old(2), target(2);
    old << 0, 2;
    target << 1, 0;
    const auto next = sa_update(old, target, 0.5);
    CHECK(next[0] == 0.5);
    CHECK(next[1] == 1.0);
    CHECK_THROWS_AS(sa_update(old, Eigen::VectorXd::Zero(3), 0.5), InvalidInput);
    CHECK_THROWS_AS(sa_update(0.0, 1.0, 0.0), InvalidInput);
    CHECK_THROWS_AS(sa_update(0.0, 1.0, 1.5), InvalidInput);
}

TEST_CASE("sample average update") {
    CHECK(sample_average_update(0.0, 2.0, 1) == 2.0);
    CHECK(sample_average_update(2.0, 0.0, 2) == 1.0);
    double e = 0.0;
    std::uint64_t t = 0;
    for (double p : {1.0, 2.0, 3.0, 4.0}) e = sample_average_update(e, p, ++t);
    CHECK(e == 2.5);
    CHECK_THROWS_AS(sample_average_update(0.0, 1.0, 0), InvalidInput);
}

TEST_CASE("adaptive update") {
    CHECK(adaptive_update(0.0, 1.0, 0.5) == 0.5);
    CHECK(adaptive_update(-3.0, 7.25, 1.0) == 7.25);
    double e = 0.0;
    for (int i = 0; i < 3; ++i) e = adaptive_update(e, 1.0, 0.5);
    CHECK(e == 0.875);
    CHECK_THROWS_AS(adaptive_update(0.0, 1.0, 0.0), InvalidInput);
    CHECK_THROWS_AS(adaptive_update(0.0, 1.0, 1.01), InvalidInput);
}

TEST_CASE("adaptive recursion matches exponential weights") {
    RngStream rng(3);
    double worst = 0.0;
    for (int stream = 0; stream < 1000; ++stream) {
        const double alpha = 0.05 + 0.9 * rng.uniform();
        const double initial = rng.normal();
        std::vector<double> prices(1 + stream % 40);
        for (auto& p : prices) p = rng.normal();
        double e = initial;
        for (double p : prices) e = adaptive_update(e, p, alpha);
        // (1-a)^{n} e0 + a sum_j (1-a)^j p_{n-1-j}
        const auto n = prices.size();
        double ref = std::pow(1 - alpha, static_cast<double>(n)) * initial;
        for (std::size_t j = 0; j < n; ++j) ref += alpha * std::pow(1 - alpha, static_cast<double>(j)) * prices[n - 1 - j];
        worst = std::max({worst, std::abs(e - ref), std::abs(adaptive_closed_form(initial, prices, alpha) - e)});
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("rls examples") {
    auto s = RlsState::empty(1);
    Eigen::VectorXd one(1);
    one << 1.0;
    s = rls_update(s, one, 2.0);
    s = rls_update(s, one, 0.0);
    CHECK(std::abs(s.theta[0] - 1.0) < 1e-12);

    s = RlsState::empty(2);
    for (double u : {-1.0, 0.5, 2.0}) {
        Eigen::VectorXd x(2);
        x << 1.0, u;
        s = rls_update(s, x, 0.1 + 0.9 * u);
    }
    CHECK(std::abs(s.theta[0] - 0.1) < 1e-10);
    CHECK(std::abs(s.theta[1] - 0.9) < 1e-10);

    RngStream rng(11);
    s = RlsState::empty(2);
    oracle::Matrix xs;
    std::vector<double> ys;
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.normal();
        const double p = 1.0 + 2.0 * u + 0.01 * rng.normal();
        Eigen::VectorXd x(2);
        x << 1.0, u;
        rls_update_inplace(s, x, p);
        xs.push_back({1.0, u});
        ys.push_back(p);
    }
    const auto ref = oracle::ols(xs, ys);
    CHECK(std::abs(ref[0] - 1.0) < 0.02);
    CHECK(std::abs(ref[1] - 2.0) < 0.02);
    CHECK(std::abs(s.theta[0] - ref[0]) < 1e-10);
    CHECK(std::abs(s.theta[1] - ref[1]) < 1e-10);
}

TEST_CASE("rls matches batch normal equations") {
    RngStream rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t dim = 1 + static_cast<std::size_t>(trial % 4);
        const std::size_t length = 50 + static_cast<std::size_t>(rng.uniform() * 9950);
        auto s = RlsState::empty(dim);
        oracle::Matrix xs;
        std::vector<double> ys;
        for (std::size_t t = 0; t < length; ++t) {
            Eigen::VectorXd x(static_cast<Eigen::Index>(dim));
            std::vector<double> row(dim);
            x[0] = row[0] = 1.0;
            for (std::size_t k = 1; k < dim; ++k) x[static_cast<Eigen::Index>(k)] = row[k] = rng.normal() * (1.0 + static_cast<double>(k));
            double y = rng.normal();
            for (std::size_t k = 0; k < dim; ++k) y += (0.5 - static_cast<double>(k)) * row[k];
            rls_update_inplace(s, x, y);
            xs.push_back(row);
            ys.push_back(y);
            if (t + 1 == 5 * dim || t + 1 == length) {
                const auto ref = oracle::ols(xs, ys);
                for (std::size_t k = 0; k < dim; ++k)
                    CHECK(std::abs(s.theta[static_cast<Eigen::Index>(k)] - ref[k]) <= 1e-8 * std::max(1.0, std::abs(ref[k])));
            }
        }
        Eigen::MatrixXd xm(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(dim));
        for (std::size_t t = 0; t < xs.size(); ++t)
            for (std::size_t k = 0; k < dim; ++k) xm(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = xs[t][k];
        const auto batch = batch_least_squares(xm, Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size())));
        CHECK((batch - s.theta).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, batch.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("rls second moment stays symmetric") {
    RngStream rng(5);
    auto s = RlsState::empty(3);
    for (int t = 0; t < 500; ++t) {
        Eigen::VectorXd x(3);
        x << 1.0, rng.normal(), rng.normal();
        rls_update_inplace(s, x, rng.normal());
    }
    CHECK((s.second_moment - s.second_moment.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(s.full_rank);
    Eigen::LLT<Eigen::MatrixXd> llt(s.second_moment);
    CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("sample average is intercept-only rls") {
    RngStream rng(8);
    auto s = RlsState::empty(1);
    Eigen::VectorXd one(1);
    one << 1.0;
    double e = 0.0;
    double worst = 0.0;
    for (std::uint64_t t = 1; t <= 5000; ++t) {
        const double p = 3.0 + rng.normal();
        e = sample_average_update(e, p, t);
        rls_update_inplace(s, one, p);
        worst = std::max(worst, std::abs(e - s.theta[0]));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("rls with prior starts from the given beliefs") {
    Eigen::VectorXd theta(2);
    theta << 0.3, -0.2;
    auto s = RlsState::with_prior(theta, Eigen::MatrixXd::Identity(2, 2), 10.0);
    CHECK(s.theta == theta);
    Eigen::VectorXd x(2);
    x << 1.0, 0.0;
    s = rls_update(s, x, 0.3 + 1.1);
    // ten pseudo-observations plus one real one: intercept moves by 1.1 / 11
    CHECK(std::abs(s.theta[0] - (0.3 + 0.1)) < 1e-12);
    CHECK_THROWS_AS(RlsState::with_prior(theta, Eigen::MatrixXd::Identity(3, 3), 1.0), InvalidInput);
    CHECK_THROWS_AS(RlsState::with_prior(theta, Eigen::MatrixXd::Identity(2, 2), 0.0), InvalidInput);
}

TEST_CASE("robbins monro classifier") {
    auto rm = check_robbins_monro(StepSizeSchedule::harmonic());
    CHECK(rm.divergent_sum);
    CHECK(rm.square_summable);
    rm = check_robbins_monro(StepSizeSchedule::constant(0.1));
    CHECK(rm.divergent_sum);
    CHECK(!rm.square_summable);
    rm = check_robbins_monro(StepSizeSchedule::power(1.0, 2.0));
    CHECK(!rm.divergent_sum);
    CHECK(rm.square_summable);
    rm = check_robbins_monro(StepSizeSchedule::power(1.0, 0.7));
    CHECK(rm.divergent_sum);
    CHECK(rm.square_summable);
    rm = check_robbins_monro(StepSizeSchedule::power(1.0, 0.5));
    CHECK(rm.divergent_sum);
    CHECK(!rm.square_summable);
}

TEST_CASE("step sizes stay in (0, 1]") {
    for (const auto& s : {StepSizeSchedule::harmonic(), StepSizeSchedule::constant(0.3), StepSizeSchedule::power(5.0, 0.6),
                          StepSizeSchedule::power(0.5, 2.0)})
        for (std::uint64_t t : {1ULL, 2ULL, 10ULL, 1000ULL, 1000000ULL}) {
            CHECK(s.at(t) > 0.0);
            CHECK(s.at(t) <= 1.0);
        }
    CHECK(StepSizeSchedule::harmonic().at(4) == 0.25);
    CHECK_THROWS_AS(StepSizeSchedule::constant(0.0), InvalidInput);
    CHECK_THROWS_AS(StepSizeSchedule::power(1.0, 0.0), InvalidInput);
}

TEST_CASE("harmonic stochastic approximation reaches a fixed target") {
    for (double start : {-10.0, -3.0, 0.0, 4.5, 10.0}) {
        const double target = 1.25;
        double e = start;
        const auto s = StepSizeSchedule::harmonic();
        for (std::uint64_t t = 1; t <= 1000000; ++t) e = sa_update(e, target, s.at(t));
        CHECK(std::abs(e - target) < 1e-6);
    }
}

TEST_CASE("belief snapshot json round trip") {
    BeliefSnapshot s{"demo", {0.5, -0.25}, 12};
    nlohmann::json j = s;
    CHECK(j["model_kind"] == "demo");
    const auto back = j.get<BeliefSnapshot>();
    CHECK(back.coefficients == s.coefficients);
    CHECK(back.t == 12);
    const std::vector<double> a{0, 1, 2}, b{0, 1.5, 1.75};
    CHECK(coefficient_distance(a, b) == 0.5);
}
