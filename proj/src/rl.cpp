#include "hetexp/rl.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "hetexp/csv.hpp"

namespace hetexp::rl {

void FiniteMrp::validate() const {
    if (reward.size() == 0 || transition.rows() != reward.size())
        throw InvalidInput("FiniteMrp: transition and reward sizes differ");
    validate_row_stochastic(transition, "FiniteMrp");
    if (!(beta > 0.0 && beta < 1.0)) throw InvalidInput("FiniteMrp: beta must lie strictly inside (0, 1)");
}

void FiniteMdp::validate() const {
    if (reward.rows() == 0 || reward.cols() == 0) throw InvalidInput("FiniteMdp: empty reward table");
    if (transitions.size() != actions()) throw InvalidInput("FiniteMdp: need one transition matrix per action");
    for (const auto& p : transitions) {
        if (p.rows() != reward.rows()) throw InvalidInput("FiniteMdp: transition matrix size mismatch");
        validate_row_stochastic(p, "FiniteMdp");
    }
    if (!(beta >= 0.0 && beta < 1.0)) throw InvalidInput("FiniteMdp: beta must lie in [0, 1)");
}

std::size_t QTable::greedy_action(std::size_t x) const {
    const auto row = static_cast<Eigen::Index>(x);
    std::size_t best = 0;
    for (Eigen::Index c = 1; c < q.cols(); ++c)
        if (q(row, c) > q(row, static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(c);
    return best;
}

std::vector<std::size_t> QTable::greedy_policy() const {
    std::vector<std::size_t> policy(static_cast<std::size_t>(q.rows()));
    for (std::size_t x = 0; x < policy.size(); ++x) policy[x] = greedy_action(x);
    return policy;
}

void QTable::write_csv(std::ostream& out) const {
    CsvWriter csv(out, {"state", "action", "value", "visits"});
    for (Eigen::Index x = 0; x < q.rows(); ++x)
        for (Eigen::Index c = 0; c < q.cols(); ++c)
            csv << static_cast<std::size_t>(x) << static_cast<std::size_t>(c) << q(x, c)
                << static_cast<unsigned long long>(visits(x, c));
}

void write_values_csv(std::ostream& out, const Eigen::VectorXd& values) {
    CsvWriter csv(out, {"state", "action", "value", "visits"});
    for (Eigen::Index x = 0; x < values.size(); ++x) csv << static_cast<std::size_t>(x) << 0 << values[x] << 0;
}

Eigen::VectorXd solve_mrp_exact(const FiniteMrp& mrp) {
    mrp.validate();
    const auto n = mrp.transition.rows();
    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - mrp.beta * mrp.transition;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
    // beta < 1 makes I - beta P strictly diagonally dominant.
    if (!lu.isInvertible()) throw ConvergenceError("solve_mrp_exact: singular system");
    return lu.solve(mrp.reward);
}

namespace {

std::size_t draw_next(const Eigen::MatrixXd& p, std::size_t from, RngStream& rng, std::vector<double>& scratch) {
    const auto r = static_cast<Eigen::Index>(from);
    scratch.resize(static_cast<std::size_t>(p.cols()));
    for (Eigen::Index j = 0; j < p.cols(); ++j) scratch[static_cast<std::size_t>(j)] = p(r, j);
    return rng.categorical(scratch);
}

std::size_t uniform_index(std::size_t n, RngStream& rng) {
    return std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
}

}  // namespace

Eigen::VectorXd td0_predict(const FiniteMrp& mrp, const TdOptions& options, RngStream& rng) {
    mrp.validate();
    if (options.steps < 1) throw InvalidInput("td0_predict: steps must be >= 1");
    const std::size_t n = mrp.size();
    Eigen::VectorXd v = options.initial.size() == 0 ? Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))
                                                    : options.initial;
    if (static_cast<std::size_t>(v.size()) != n) throw InvalidInput("td0_predict: initial guess size mismatch");

    std::vector<std::uint64_t> visits(n, 0);
    std::vector<double> scratch;
    std::size_t x = uniform_index(n, rng);
    for (std::size_t t = 0; t < options.steps; ++t) {
        const std::size_t next = draw_next(mrp.transition, x, rng, scratch);
        const auto xi = static_cast<Eigen::Index>(x);
        const double target = mrp.reward[xi] + mrp.beta * v[static_cast<Eigen::Index>(next)];
        v[xi] = sa_update(v[xi], target, options.schedule.at(++visits[x]));
        x = next;
    }
    return v;
}

QTable q_learn(const FiniteMdp& mdp, const QOptions& options, RngStream& rng) {
    mdp.validate();
    if (!(options.epsilon > 0.0 && options.epsilon <= 1.0)) throw InvalidInput("q_learn: epsilon must lie in (0, 1]");
    if (options.steps < 1) throw InvalidInput("q_learn: steps must be >= 1");

    const std::size_t n = mdp.states();
    const std::size_t m = mdp.actions();
    QTable table{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)),
                 Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(static_cast<Eigen::Index>(n),
                                                                                    static_cast<Eigen::Index>(m))};

    auto choose = [&](std::size_t state) {
        if (rng.uniform() < options.epsilon) return uniform_index(m, rng);
        return table.greedy_action(state);
    };

    std::vector<double> scratch;
    std::size_t x = uniform_index(n, rng);
    std::size_t c = choose(x);
    for (std::size_t t = 0; t < options.steps; ++t) {
        const std::size_t next = draw_next(mdp.transitions[c], x, rng, scratch);
        const auto xi = static_cast<Eigen::Index>(x);
        const auto ci = static_cast<Eigen::Index>(c);
        const auto ni = static_cast<Eigen::Index>(next);

        std::size_t next_action;
        double continuation;
        if (options.sarsa) {
            next_action = choose(next);
            continuation = table.q(ni, static_cast<Eigen::Index>(next_action));
        } else {
            continuation = table.q.row(ni).maxCoeff();
            next_action = choose(next);
        }
        const double target = mdp.reward(xi, ci) + mdp.beta * continuation;
        const auto count = ++table.visits(xi, ci);
        table.q(xi, ci) = sa_update(table.q(xi, ci), target, options.schedule.at(count));
        x = next;
        c = next_action;
    }
    return table;
}

Eigen::MatrixXd solve_mdp_exact(const FiniteMdp& mdp) {
    mdp.validate();
    const auto n = static_cast<Eigen::Index>(mdp.states());
    const auto m = static_cast<Eigen::Index>(mdp.actions());
    std::vector<Eigen::Index> policy(static_cast<std::size_t>(n), 0);
    Eigen::MatrixXd q(n, m);
    for (int round = 0; round < 1000; ++round) {
        Eigen::MatrixXd p(n, n);
        Eigen::VectorXd r(n);
        for (Eigen::Index x = 0; x < n; ++x) {
            const auto c = policy[static_cast<std::size_t>(x)];
            p.row(x) = mdp.transitions[static_cast<std::size_t>(c)].row(x);
            r[x] = mdp.reward(x, c);
        }
        const Eigen::VectorXd v = (Eigen::MatrixXd::Identity(n, n) - mdp.beta * p).fullPivLu().solve(r);
        for (Eigen::Index c = 0; c < m; ++c)
            q.col(c) = mdp.reward.col(c) + mdp.beta * mdp.transitions[static_cast<std::size_t>(c)] * v;
        bool stable = true;
        for (Eigen::Index x = 0; x < n; ++x) {
            Eigen::Index best = policy[static_cast<std::size_t>(x)];
            for (Eigen::Index c = 0; c < m; ++c)
                if (q(x, c) > q(x, best) + 1e-14 * (1.0 + std::abs(q(x, best)))) best = c;
            if (best != policy[static_cast<std::size_t>(x)]) {
                policy[static_cast<std::size_t>(x)] = best;
                stable = false;
            }
        }
        if (stable) return q;
    }
    throw ConvergenceError("solve_mdp_exact: policy iteration did not settle");
}

double min_action_gap(const Eigen::MatrixXd& q) {
    double gap = std::numeric_limits<double>::infinity();
    for (Eigen::Index x = 0; x < q.rows(); ++x) {
        std::vector<double> row(static_cast<std::size_t>(q.cols()));
        for (Eigen::Index c = 0; c < q.cols(); ++c) row[static_cast<std::size_t>(c)] = q(x, c);
        std::sort(row.begin(), row.end(), std::greater<>());
        if (row.size() > 1) gap = std::min(gap, row[0] - row[1]);
    }
    return gap;
}

namespace {

Eigen::MatrixXd random_stochastic(std::size_t n, RngStream& rng) {
    const auto size = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd p(size, size);
    for (Eigen::Index i = 0; i < size; ++i) {
        for (Eigen::Index j = 0; j < size; ++j) p(i, j) = rng.uniform();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

}  // namespace

FiniteMrp random_mrp(std::size_t states, double beta, RngStream& rng) {
    if (states == 0) throw InvalidInput("random_mrp: need at least one state");
    FiniteMrp mrp;
    mrp.beta = beta;
    mrp.transition = random_stochastic(states, rng);
    mrp.reward.resize(static_cast<Eigen::Index>(states));
    for (auto& r : mrp.reward) r = rng.uniform();
    mrp.validate();
    return mrp;
}

FiniteMdp random_mdp(std::size_t states, std::size_t actions, double beta, RngStream& rng) {
    if (states == 0 || actions == 0) throw InvalidInput("random_mdp: need at least one state and action");
    FiniteMdp mdp;
    mdp.beta = beta;
    for (std::size_t c = 0; c < actions; ++c) mdp.transitions.push_back(random_stochastic(states, rng));
    mdp.reward.resize(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(actions));
    for (Eigen::Index x = 0; x < mdp.reward.rows(); ++x)
        for (Eigen::Index c = 0; c < mdp.reward.cols(); ++c) mdp.reward(x, c) = rng.uniform();
    mdp.validate();
    return mdp;
}

PriceBinner::PriceBinner(std::vector<std::vector<double>> edges) : edges_(std::move(edges)) {
    if (edges_.empty()) throw InvalidInput("PriceBinner: need at least one dimension");
    for (const auto& e : edges_) {
        if (e.empty()) throw InvalidInput("PriceBinner: each dimension needs at least one edge");
        for (std::size_t i = 1; i < e.size(); ++i)
            if (!(e[i] > e[i - 1])) throw InvalidInput("PriceBinner: edges must be strictly increasing");
    }
}

std::size_t PriceBinner::total_bins() const {
    std::size_t total = 1;
    for (std::size_t d = 0; d < edges_.size(); ++d) total *= bins(d);
    return total;
}

std::size_t PriceBinner::bin(std::span<const double> prices) const {
    if (prices.size() != edges_.size()) throw InvalidInput("PriceBinner: dimension mismatch");
    std::size_t index = 0;
    for (std::size_t d = 0; d < edges_.size(); ++d) {
        const auto& e = edges_[d];
        const auto b = static_cast<std::size_t>(std::upper_bound(e.begin(), e.end(), prices[d]) - e.begin());
        index = index * bins(d) + b;
    }
    return index;
}

}  // namespace hetexp::rl
