#include "hetexp/economy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hetexp/csv.hpp"
#include "hetexp/hash.hpp"

namespace hetexp::economy {

// ---------------------------------------------------------------------------
// Parameters and technology
// ---------------------------------------------------------------------------

void EconomyParams::validate() const {
    if (!(beta >= 0.0 && beta < 1.0)) throw InvalidInput("economy: beta must lie in [0, 1)");
    if (!(sigma_c > 0.0)) throw InvalidInput("economy: sigma_c must be > 0");
    if (!(alpha_k > 0.0 && alpha_k < 1.0)) throw InvalidInput("economy: alpha_k must lie in (0, 1)");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("economy: delta must lie in (0, 1)");
    if (assets.count < 2) throw InvalidInput("economy: asset grid needs at least 2 nodes");
    if (assets.max > 0.0 && !(assets.max > assets.min)) throw InvalidInput("economy: asset grid max must exceed min");
    if (!(assets.curvature >= 0.0)) throw InvalidInput("economy: asset grid curvature must be >= 0");
    for (double y : income.states())
        if (!(y > 0.0)) throw InvalidInput("economy: income levels must be positive");
    for (double z : aggregate.states())
        if (!(z > 0.0)) throw InvalidInput("economy: productivity levels must be positive");
}

EconomyParams EconomyParams::benchmark() {
    EconomyParams p;
    // Log income AR(1) with persistence 0.9 and unconditional sd 0.2, two states, mean-one levels.
    const auto log_income = discretize_ar1(0.9, 0.2 * std::sqrt(1.0 - 0.81), 2);
    const Eigen::VectorXd pi = stationary_distribution(log_income);
    std::vector<double> levels;
    double mean = 0.0;
    for (std::size_t j = 0; j < log_income.size(); ++j) {
        levels.push_back(std::exp(log_income.state(j)));
        mean += pi[static_cast<Eigen::Index>(j)] * levels.back();
    }
    for (auto& y : levels) y /= mean;
    p.income = MarkovChain(levels, log_income.transition());

    Eigen::MatrixXd pz(2, 2);
    pz << 0.875, 0.125, 0.125, 0.875;
    p.aggregate = MarkovChain({0.99, 1.01}, pz);
    return p;
}

namespace {

void digest_chain(std::ostringstream& out, const char* name, const MarkovChain& chain) {
    char buf[40];
    out << name << ':';
    for (double s : chain.states()) {
        std::snprintf(buf, sizeof buf, "%.17g,", s);
        out << buf;
    }
    for (Eigen::Index i = 0; i < chain.transition().rows(); ++i)
        for (Eigen::Index j = 0; j < chain.transition().cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,", chain.transition()(i, j));
            out << buf;
        }
    out << ';';
}

}  // namespace

std::uint64_t EconomyParams::hash() const {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "beta=%.17g;sigma=%.17g;alpha=%.17g;delta=%.17g;amin=%.17g;amax=%.17g;n=%zu;curv=%.17g;",
                  beta, sigma_c, alpha_k, delta, assets.min, assets.max, assets.count, assets.curvature);
    out << buf;
    digest_chain(out, "income", income);
    digest_chain(out, "z", aggregate);
    return fnv1a64(out.str());
}

Prices firm_prices(const EconomyParams& params, double k, double labor, double z) {
    if (!(k > 0.0) || !(labor > 0.0) || !(z > 0.0))
        throw InvalidInput("firm_prices: capital, labor and productivity must be positive");
    const double a = params.alpha_k;
    const double ratio = k / labor;
    return {z * (1.0 - a) * std::pow(ratio, a), z * a * std::pow(ratio, a - 1.0) - params.delta};
}

double capital_demand(const EconomyParams& params, double r, double labor, double z) {
    if (!(r > -params.delta)) throw InvalidInput("capital_demand: need r > -delta");
    return labor * std::pow(z * params.alpha_k / (r + params.delta), 1.0 / (1.0 - params.alpha_k));
}

double output(const EconomyParams& params, double k, double labor, double z) {
    return z * std::pow(k, params.alpha_k) * std::pow(labor, 1.0 - params.alpha_k);
}

double effective_labor(const EconomyParams& params) {
    const Eigen::VectorXd pi = stationary_distribution(params.income);
    double labor = 0.0;
    for (std::size_t j = 0; j < params.income.size(); ++j) labor += pi[static_cast<Eigen::Index>(j)] * params.income.state(j);
    return labor;
}

double mean_productivity(const EconomyParams& params) {
    const Eigen::VectorXd pi = stationary_distribution(params.aggregate);
    double z = 0.0;
    for (std::size_t m = 0; m < params.aggregate.size(); ++m) z += pi[static_cast<Eigen::Index>(m)] * params.aggregate.state(m);
    return z;
}

double representative_capital(const EconomyParams& params) {
    return capital_demand(params, 1.0 / params.beta - 1.0, effective_labor(params), mean_productivity(params));
}

std::vector<double> make_asset_grid(const EconomyParams& params) {
    const auto& spec = params.assets;
    const double hi = spec.max > 0.0 ? spec.max : spec.min + 4.0 * representative_capital(params);
    std::vector<double> grid(spec.count);
    const double kappa = spec.curvature;
    for (std::size_t i = 0; i < spec.count; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(spec.count - 1);
        const double share = kappa > 0.0 ? std::expm1(kappa * x) / std::expm1(kappa) : x;
        grid[i] = spec.min + (hi - spec.min) * share;
    }
    grid.front() = spec.min;
    grid.back() = hi;
    return grid;
}

double utility(double c, double sigma_c) {
    if (sigma_c == 1.0) return std::log(c);
    if (sigma_c == 2.0) return -1.0 / c;
    return std::pow(c, 1.0 - sigma_c) / (1.0 - sigma_c);
}

// ---------------------------------------------------------------------------
// Forecast grid
// ---------------------------------------------------------------------------

ForecastGrid ForecastGrid::around(const EconomyParams& params, Statistic statistic, double center_capital,
                                  std::size_t nodes, double half_width) {
    if (nodes == 0) throw InvalidInput("ForecastGrid: need at least one node");
    if (!(center_capital > 0.0)) throw InvalidInput("ForecastGrid: center capital must be positive");
    if (nodes > 1 && !(half_width > 0.0)) throw InvalidInput("ForecastGrid: half width must be positive");
    ForecastGrid grid;
    grid.statistic = statistic;
    grid.z_levels = params.aggregate.states();
    grid.labor = effective_labor(params);
    grid.alpha_k = params.alpha_k;
    const double center = std::log(center_capital);
    for (std::size_t q = 0; q < nodes; ++q) {
        const double offset = nodes == 1 ? 0.0 : -half_width + 2.0 * half_width * static_cast<double>(q) / static_cast<double>(nodes - 1);
        grid.log_capital.push_back(center + offset);
    }
    return grid;
}

double ForecastGrid::statistic_of(std::size_t m, double k) const {
    if (statistic == Statistic::log_capital) return std::log(k);
    return std::log(z_levels[m] * (1.0 - alpha_k)) + alpha_k * (std::log(k) - std::log(labor));
}

double ForecastGrid::capital_of(std::size_t m, double s) const {
    if (statistic == Statistic::log_capital) return std::exp(s);
    return labor * std::exp((s - std::log(z_levels[m] * (1.0 - alpha_k))) / alpha_k);
}

double ForecastGrid::value(std::size_t m, std::size_t q) const {
    if (statistic == Statistic::log_capital) return log_capital[q];
    return std::log(z_levels[m] * (1.0 - alpha_k)) + alpha_k * (log_capital[q] - std::log(labor));
}

ForecastGrid::Bracket ForecastGrid::locate(std::size_t m, double s) const {
    const std::size_t n = size();
    if (n == 1) return {0, 0.0, false};
    const double lo = value(m, 0);
    const double hi = value(m, n - 1);
    constexpr double slack = 1e-10;
    if (s <= lo) return {0, 0.0, s < lo - slack};
    if (s >= hi) return {n - 2, 1.0, s > hi + slack};
    // Nodes are equally spaced in s for both statistics.
    const double step = (hi - lo) / static_cast<double>(n - 1);
    auto q = std::min(n - 2, static_cast<std::size_t>((s - lo) / step));
    while (q + 1 < n - 1 && value(m, q + 1) <= s) ++q;
    while (q > 0 && value(m, q) > s) --q;
    const double v0 = value(m, q), v1 = value(m, q + 1);
    return {q, (s - v0) / (v1 - v0), false};
}

PriceNodes build_price_nodes(const EconomyParams& params, const ForecastGrid& grid, const BeliefModel& belief) {
    if (grid.z_count() != params.aggregate.size()) throw InvalidInput("build_price_nodes: grid/z chain mismatch");
    PriceNodes nodes;
    nodes.z_count = grid.z_count();
    nodes.node_count = grid.size();
    nodes.prices.resize(nodes.z_count * nodes.node_count);
    nodes.next.resize(nodes.prices.size() * nodes.z_count);
    for (std::size_t q = 0; q < nodes.node_count; ++q) {
        for (std::size_t m = 0; m < nodes.z_count; ++m) {
            const double k = std::exp(grid.log_capital[q]);
            nodes.prices[m + nodes.z_count * q] = firm_prices(params, k, grid.labor, grid.z_levels[m]);
            for (std::size_t mn = 0; mn < nodes.z_count; ++mn) {
                const double obs[3] = {static_cast<double>(m), static_cast<double>(mn), grid.value(m, q)};
                const double s_next = belief.forecast(obs)[0];
                const auto bracket = grid.locate(mn, s_next);
                if (bracket.clamped) ++nodes.forecast_clamps;
                nodes.next[(m + nodes.z_count * q) * nodes.z_count + mn] = bracket;
            }
        }
    }
    return nodes;
}

// ---------------------------------------------------------------------------
// Household problem
// ---------------------------------------------------------------------------

namespace {

struct Segment {
    std::size_t lo;
    double weight_hi;
};

Segment segment_of(const std::vector<double>& grid, double a) {
    const std::size_t n = grid.size();
    if (a <= grid.front()) return {0, 0.0};
    if (a >= grid.back()) return {n - 2, 1.0};
    const auto lo = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), a) - grid.begin()) - 1;
    return {lo, (a - grid[lo]) / (grid[lo + 1] - grid[lo])};
}

double interp(const double* slice, const Segment& s) {
    return (1.0 - s.weight_hi) * slice[s.lo] + s.weight_hi * slice[s.lo + 1];
}

// Expected continuation E[V(a', y', z', s')] on asset nodes for every (j, m, q).
void expected_values(const EconomyParams& params, const PriceNodes& nodes, const ValueTable& t,
                     std::vector<double>& ev) {
    const auto& py = params.income.transition();
    const auto& pz = params.aggregate.transition();
    ev.assign(t.size(), 0.0);
    for (std::size_t q = 0; q < t.ns; ++q)
        for (std::size_t m = 0; m < t.nz; ++m)
            for (std::size_t j = 0; j < t.ny; ++j) {
                double* out = ev.data() + t.index(0, j, m, q);
                for (std::size_t mn = 0; mn < t.nz; ++mn) {
                    const double pzm = pz(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(mn));
                    if (pzm == 0.0) continue;
                    const auto& br = nodes.next_of(m, q, mn);
                    const std::size_t q_hi = t.ns > 1 ? br.lo + 1 : br.lo;
                    for (std::size_t jn = 0; jn < t.ny; ++jn) {
                        const double w = pzm * py(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(jn));
                        if (w == 0.0) continue;
                        const double w_lo = w * (1.0 - br.weight_hi);
                        const double w_hi = w * br.weight_hi;
                        const double* v_lo = t.value.data() + t.index(0, jn, mn, br.lo);
                        const double* v_hi = t.value.data() + t.index(0, jn, mn, q_hi);
                        for (std::size_t i = 0; i < t.na; ++i) out[i] += w_lo * v_lo[i] + w_hi * v_hi[i];
                    }
                }
            }
}

constexpr double kConsumptionFloor = 1e-10;

}  // namespace

ValueTable solve_household(const EconomyParams& params, const std::vector<double>& grid, const PriceNodes& nodes,
                           const BellmanOptions& options, const ValueTable* warm_start) {
    params.validate();
    ValueTable t;
    t.na = grid.size();
    t.ny = params.income.size();
    t.nz = nodes.z_count;
    t.ns = nodes.node_count;
    t.forecast_clamps = nodes.forecast_clamps;
    const std::size_t total = t.na * t.ny * t.nz * t.ns;
    if (t.nz != params.aggregate.size()) throw InvalidInput("solve_household: price nodes do not match z chain");

    const double beta = params.beta;
    const double sigma = params.sigma_c;

    // Cash on hand and feasibility.
    std::vector<double> cash(total);
    for (std::size_t q = 0; q < t.ns; ++q)
        for (std::size_t m = 0; m < t.nz; ++m) {
            const auto& pr = nodes.at(m, q);
            for (std::size_t j = 0; j < t.ny; ++j)
                for (std::size_t i = 0; i < t.na; ++i) {
                    const double c = pr.w * params.income.state(j) + (1.0 + pr.r) * grid[i];
                    if (!(c - grid.front() > kConsumptionFloor)) {
                        std::ostringstream msg;
                        msg << "solve_household: infeasible budget at node (a=" << grid[i] << ", y=" << params.income.state(j)
                            << ", z index " << m << ", forecast node " << q << "): cash " << c;
                        throw InvalidInput(msg.str());
                    }
                    cash[t.index(i, j, m, q)] = c;
                }
        }

    if (warm_start && warm_start->size() == total && warm_start->na == t.na && warm_start->ny == t.ny &&
        warm_start->nz == t.nz && warm_start->ns == t.ns) {
        t.value = warm_start->value;
    } else {
        t.value.resize(total);
        for (std::size_t n = 0; n < total; ++n) {
            const std::size_t i = n % t.na;
            const double c = std::max(cash[n] - grid[i], kConsumptionFloor);
            t.value[n] = utility(c, sigma) / (1.0 - beta);
        }
    }
    t.policy.assign(total, grid.front());

    std::vector<double> ev, next_value(total), flow(total);
    std::vector<Segment> seg(total);

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        expected_values(params, nodes, t, ev);
        double gap = 0.0;
        for (std::size_t q = 0; q < t.ns; ++q)
            for (std::size_t m = 0; m < t.nz; ++m)
                for (std::size_t j = 0; j < t.ny; ++j) {
                    const std::size_t base = t.index(0, j, m, q);
                    const double* slice = ev.data() + base;
                    for (std::size_t i = 0; i < t.na; ++i) {
                        const std::size_t n = base + i;
                        const double x = cash[n];
                        const double upper = std::min(grid.back(), x - kConsumptionFloor);
                        auto objective = [&](double a_next) {
                            return utility(x - a_next, sigma) + beta * interp(slice, segment_of(grid, a_next));
                        };

                        std::size_t best = 0;
                        double best_value = utility(x - grid[0], sigma) + beta * slice[0];
                        for (std::size_t k = 1; k < t.na && grid[k] <= upper; ++k) {
                            const double v = utility(x - grid[k], sigma) + beta * slice[k];
                            if (v > best_value) {
                                best_value = v;
                                best = k;
                            }
                        }
                        double best_a = grid[best];

                        // EV is linear on each segment, so the first-order condition
                        // u'(x - a') = beta * slope has a closed-form root per segment.
                        for (std::size_t k = best > 0 ? best - 1 : 0; k <= best && k + 1 < t.na; ++k) {
                            const double slope = (slice[k + 1] - slice[k]) / (grid[k + 1] - grid[k]);
                            if (!(slope > 0.0)) continue;
                            const double candidate = x - std::pow(beta * slope, -1.0 / sigma);
                            if (!(candidate > grid[k] && candidate < grid[k + 1] && candidate <= upper)) continue;
                            const double fc = objective(candidate);
                            if (fc > best_value) {
                                best_value = fc;
                                best_a = candidate;
                            }
                        }
                        t.policy[n] = best_a;
                        seg[n] = segment_of(grid, best_a);
                        flow[n] = utility(x - best_a, sigma);
                        next_value[n] = best_value;
                        gap = std::max(gap, std::abs(best_value - t.value[n]));
                    }
                }
        t.value.swap(next_value);
        t.gap_history.push_back(gap);
        t.iterations = iter;
        if (!std::isfinite(gap)) throw BellmanError("solve_household: value function diverged", t.gap_history);
        if (gap < options.tolerance) return t;

        for (int h = 0; h < options.howard_steps; ++h) {
            expected_values(params, nodes, t, ev);
            for (std::size_t n = 0; n < total; ++n) {
                const std::size_t base = n - n % t.na;
                next_value[n] = flow[n] + beta * interp(ev.data() + base, seg[n]);
            }
            t.value.swap(next_value);
        }
    }
    std::ostringstream msg;
    msg << "solve_household: no convergence after " << options.max_iterations << " iterations (last gap "
        << t.gap_history.back() << ")";
    throw BellmanError(msg.str(), t.gap_history);
}

ValueTable solve_bellman(const EconomyParams& params, const BeliefModel& belief, const ForecastGrid& grid,
                         const BellmanOptions& options, const ValueTable* warm_start) {
    const auto nodes = build_price_nodes(params, grid, belief);
    return solve_household(params, make_asset_grid(params), nodes, options, warm_start);
}

double consumption(const EconomyParams& params, const std::vector<double>& grid, const PriceNodes& nodes,
                   const ValueTable& table, std::size_t i, std::size_t j, std::size_t m, std::size_t q) {
    const auto& pr = nodes.at(m, q);
    return pr.w * params.income.state(j) + (1.0 + pr.r) * grid[i] - table.a_next(i, j, m, q);
}

// ---------------------------------------------------------------------------
// Distribution
// ---------------------------------------------------------------------------

void Histogram::validate(double tolerance) const {
    if (static_cast<std::size_t>(g.size()) != na * ny) throw InvalidInput("Histogram: size mismatch");
    if ((g.array() < 0.0).any()) throw InvalidInput("Histogram: negative mass");
    if (std::abs(g.sum() - 1.0) > tolerance) throw InvalidInput("Histogram: mass does not sum to one");
}

LotterySplit lottery_split(const std::vector<double>& grid, double a_next, bool* clamped) {
    const std::size_t n = grid.size();
    const bool outside = a_next < grid.front() || a_next > grid.back();
    if (clamped) *clamped = outside;
    if (n == 1 || a_next <= grid.front()) return {0, 1.0};
    if (a_next >= grid.back()) return {n - 2, 0.0};
    const auto lo = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), a_next) - grid.begin()) - 1;
    return {lo, (grid[lo + 1] - a_next) / (grid[lo + 1] - grid[lo])};
}

TransitionOperator apply_lottery(const std::vector<double>& policy, const std::vector<double>& grid,
                                 const MarkovChain& income) {
    const std::size_t na = grid.size();
    const std::size_t ny = income.size();
    if (policy.size() != na * ny) throw InvalidInput("apply_lottery: policy size mismatch");
    TransitionOperator op;
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(na * ny * ny * 2);
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < na; ++i) {
            bool clamped = false;
            const auto split = lottery_split(grid, policy[i + na * j], &clamped);
            if (clamped) ++op.clamps;
            const auto row = static_cast<int>(i + na * j);
            for (std::size_t jn = 0; jn < ny; ++jn) {
                const double p = income.prob(j, jn);
                if (p == 0.0) continue;
                if (split.weight_lo > 0.0)
                    entries.emplace_back(row, static_cast<int>(split.lo + na * jn), split.weight_lo * p);
                if (split.weight_lo < 1.0)
                    entries.emplace_back(row, static_cast<int>(split.lo + 1 + na * jn), (1.0 - split.weight_lo) * p);
            }
        }
    op.matrix.resize(static_cast<Eigen::Index>(na * ny), static_cast<Eigen::Index>(na * ny));
    op.matrix.setFromTriplets(entries.begin(), entries.end());
    op.matrix.makeCompressed();
    return op;
}

Histogram step_distribution(const Histogram& g, const TransitionOperator& a) {
    if (a.matrix.rows() != g.g.size()) throw InvalidInput("step_distribution: dimension mismatch");
    Histogram out{g.na, g.ny, Eigen::VectorXd(a.matrix.transpose() * g.g)};
    return out;
}

Aggregates aggregate(const Histogram& g, const std::vector<double>& grid, const MarkovChain& income) {
    if (g.na != grid.size() || g.ny != income.size()) throw InvalidInput("aggregate: grid mismatch");
    double k = 0.0, labor = 0.0;
    for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t i = 0; i < g.na; ++i) {
            const double mass = g.g[static_cast<Eigen::Index>(i + g.na * j)];
            k += mass * grid[i];
            labor += mass * income.state(j);
        }
    return {k, labor};
}

Histogram initial_histogram(const EconomyParams& params, std::size_t na) {
    const Eigen::VectorXd pi = stationary_distribution(params.income);
    Histogram h{na, params.income.size(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(na * params.income.size()))};
    for (std::size_t j = 0; j < h.ny; ++j) h.g[static_cast<Eigen::Index>(na * j)] = pi[static_cast<Eigen::Index>(j)];
    return h;
}

std::vector<double> policy_slice(const ValueTable& table, const ForecastGrid& grid, std::size_t m, double s,
                                 bool* clamped) {
    const auto br = grid.locate(m, s);
    if (clamped) *clamped = br.clamped;
    std::vector<double> out(table.na * table.ny);
    const std::size_t q_hi = table.ns > 1 ? br.lo + 1 : br.lo;
    for (std::size_t j = 0; j < table.ny; ++j)
        for (std::size_t i = 0; i < table.na; ++i)
            out[i + table.na * j] =
                (1.0 - br.weight_hi) * table.a_next(i, j, m, br.lo) + br.weight_hi * table.a_next(i, j, m, q_hi);
    return out;
}

Histogram stationary_histogram(const TransitionOperator& a, Histogram start, double tolerance, int max_iterations) {
    const Eigen::SparseMatrix<double> at = a.matrix.transpose();
    Eigen::VectorXd next(start.g.size());
    for (int it = 0; it < max_iterations; ++it) {
        next.noalias() = at * start.g;
        const double change = (next - start.g).lpNorm<1>();
        start.g.swap(next);
        if (change < tolerance) return start;
    }
    throw ConvergenceError("stationary_histogram: distribution did not converge");
}

// ---------------------------------------------------------------------------
// Steady state
// ---------------------------------------------------------------------------

EconomyParams without_aggregate_risk(const EconomyParams& params) {
    EconomyParams out = params;
    out.aggregate = MarkovChain::degenerate(mean_productivity(params));
    if (out.assets.max <= 0.0) out.assets.max = out.assets.min + 4.0 * representative_capital(params);
    return out;
}

ForecastGrid steady_state_grid(const EconomyParams& params, double capital) {
    return ForecastGrid::around(params, Statistic::log_capital, capital, 1, 0.0);
}

namespace {

class ConstantStatistic final : public BeliefModel {
public:
    explicit ConstantStatistic(double s) : s_(s) {}
    std::string kind() const override { return "constant"; }
    std::vector<double> forecast(std::span<const double>) const override { return {s_}; }
    void update(std::span<const double>, std::span<const double>) override {}
    std::vector<double> coefficients() const override { return {s_}; }
    std::uint64_t observations() const override { return 0; }

private:
    double s_;
};

}  // namespace

SteadyState aiyagari_steady_state(const EconomyParams& input, const SteadyStateOptions& options) {
    input.validate();
    const EconomyParams params = without_aggregate_risk(input);
    const auto grid = make_asset_grid(params);
    const double labor = effective_labor(params);
    const double z = params.aggregate.state(0);

    ValueTable values;
    bool have_values = false;
    Histogram dist = initial_histogram(params, grid.size());
    TransitionOperator op;
    double last_supply = 0.0;

    auto evaluate = [&](double r) {
        const double kd = capital_demand(params, r, labor, z);
        const auto fgrid = steady_state_grid(params, kd);
        const ConstantStatistic belief(fgrid.value(0, 0));
        const auto nodes = build_price_nodes(params, fgrid, belief);
        values = solve_household(params, grid, nodes, options.bellman, have_values ? &values : nullptr);
        have_values = true;
        op = apply_lottery(policy_slice(values, fgrid, 0, fgrid.value(0, 0)), grid, params.income);
        dist = stationary_histogram(op, dist, options.distribution_tolerance, options.distribution_max_iterations);
        last_supply = aggregate(dist, grid, params.income).k;
        return last_supply - kd;
    };

    const double r_top = 1.0 / params.beta - 1.0;
    double r_hi = r_top - 1e-4 * (r_top + params.delta);
    double r_lo = -params.delta + 0.25 * (r_top + params.delta);
    double f_hi = evaluate(r_hi);
    double f_lo = evaluate(r_lo);
    for (int tries = 0; tries < 8 && f_lo > 0.0; ++tries) {
        r_lo = -params.delta + 0.5 * (r_lo + params.delta);
        f_lo = evaluate(r_lo);
    }
    if (f_lo * f_hi > 0.0) {
        std::ostringstream msg;
        msg << "aiyagari_steady_state: supply never crosses demand; residual " << f_lo << " at r=" << r_lo << ", "
            << f_hi << " at r=" << r_hi;
        throw ConvergenceError(msg.str());
    }
    const auto root = find_root(evaluate, r_lo, r_hi, options.root_tolerance);
    // Leave the cached solution at the root itself.
    const double residual = evaluate(root.x);
    (void)residual;

    SteadyState ss{};
    ss.r = root.x;
    ss.z = z;
    ss.labor = labor;
    ss.k_demand = capital_demand(params, root.x, labor, z);
    ss.k_supply = last_supply;
    ss.w = firm_prices(params, ss.k_demand, labor, z).w;
    ss.values = values;
    ss.distribution = dist;
    ss.distribution_residual = (step_distribution(dist, op).g - dist.g).lpNorm<1>();
    ss.bisection_steps = root.iterations;
    return ss;
}

// ---------------------------------------------------------------------------
// Dumps
// ---------------------------------------------------------------------------

namespace {

std::string grid_header(const EconomyParams& params, std::size_t na, std::size_t ny, std::size_t nz, std::size_t ns) {
    std::ostringstream out;
    out << "# param_hash=" << hex64(params.hash()) << "\n# dims=" << na << ',' << ny << ',' << nz << ',' << ns << '\n';
    return out.str();
}

struct DumpHeader {
    std::string hash;
    std::size_t dims[4] = {0, 0, 0, 0};
};

DumpHeader read_header(std::istream& in) {
    DumpHeader h;
    std::string line;
    for (int k = 0; k < 2 && std::getline(in, line); ++k) {
        if (line.rfind("# param_hash=", 0) == 0) h.hash = line.substr(13);
        else if (line.rfind("# dims=", 0) == 0)
            std::sscanf(line.c_str() + 7, "%zu,%zu,%zu,%zu", &h.dims[0], &h.dims[1], &h.dims[2], &h.dims[3]);
    }
    std::getline(in, line);  // column names
    return h;
}

void check_hash(const DumpHeader& h, const EconomyParams& params) {
    if (h.hash != hex64(params.hash())) throw InvalidInput("dump was written for different economy parameters");
}

}  // namespace

void ValueTable::write_csv(std::ostream& out, const EconomyParams& params) const {
    out << grid_header(params, na, ny, nz, ns);
    const auto grid = make_asset_grid(params);
    CsvWriter csv(out, {"i", "j", "m", "q", "a", "value", "policy"});
    for (std::size_t q = 0; q < ns; ++q)
        for (std::size_t m = 0; m < nz; ++m)
            for (std::size_t j = 0; j < ny; ++j)
                for (std::size_t i = 0; i < na; ++i)
                    csv << i << j << m << q << grid[i] << v(i, j, m, q) << a_next(i, j, m, q);
}

ValueTable ValueTable::read_csv(std::istream& in, const EconomyParams& params) {
    const auto h = read_header(in);
    check_hash(h, params);
    ValueTable t;
    t.na = h.dims[0];
    t.ny = h.dims[1];
    t.nz = h.dims[2];
    t.ns = h.dims[3];
    t.value.resize(t.na * t.ny * t.nz * t.ns);
    t.policy.resize(t.value.size());
    std::string line;
    while (std::getline(in, line)) {
        std::size_t i, j, m, q;
        double a, v, p;
        if (std::sscanf(line.c_str(), "%zu,%zu,%zu,%zu,%lf,%lf,%lf", &i, &j, &m, &q, &a, &v, &p) != 7)
            throw InvalidInput("ValueTable::read_csv: malformed row");
        t.value[t.index(i, j, m, q)] = v;
        t.policy[t.index(i, j, m, q)] = p;
    }
    return t;
}

void Histogram::write_csv(std::ostream& out, const EconomyParams& params) const {
    out << grid_header(params, na, ny, 1, 1);
    const auto grid = make_asset_grid(params);
    CsvWriter csv(out, {"i", "j", "a", "y", "mass"});
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < na; ++i)
            csv << i << j << grid[i] << params.income.state(j) << g[static_cast<Eigen::Index>(i + na * j)];
}

Histogram Histogram::read_csv(std::istream& in, const EconomyParams& params) {
    const auto h = read_header(in);
    check_hash(h, params);
    Histogram out{h.dims[0], h.dims[1], Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h.dims[0] * h.dims[1]))};
    std::string line;
    while (std::getline(in, line)) {
        std::size_t i, j;
        double a, y, mass;
        if (std::sscanf(line.c_str(), "%zu,%zu,%lf,%lf,%lf", &i, &j, &a, &y, &mass) != 5)
            throw InvalidInput("Histogram::read_csv: malformed row");
        out.g[static_cast<Eigen::Index>(i + out.na * j)] = mass;
    }
    return out;
}

}  // namespace hetexp::economy
