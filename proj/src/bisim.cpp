#include "cbm/bisim.hpp"

#include "cbm/transport.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cbm {

Eigen::MatrixXd bisim_operator(const FiniteMdp& mdp, double c, const Eigen::MatrixXd& dist) {
    const std::size_t n = mdp.n_states();
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t t = s + 1; t < n; ++t) {
            double best = 0.0;
            for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
                double value = (1.0 - c) * std::abs(mdp.reward(s, a) - mdp.reward(t, a));
                if (c > 0.0) {
                    auto p = mdp.transition(s, a);
                    auto q = mdp.transition(t, a);
                    if (!std::equal(p.begin(), p.end(), q.begin())) value += c * wasserstein1(p, q, dist).cost;
                }
                best = std::max(best, value);
            }
            next(s, t) = best;
            next(t, s) = best;
        }
    }
    return next;
}

BisimMetric bisim_fixed_point(const FiniteMdp& mdp, double c, const BisimOptions& options) {
    mdp.validate();
    if (!(c >= 0.0 && c < 1.0)) throw std::invalid_argument("c must lie in [0,1)");
    if (!(options.tol > 0.0)) throw std::invalid_argument("tol must be positive");

    const std::size_t n = mdp.n_states();
    BisimMetric metric;
    metric.c = c;
    metric.dist = Eigen::MatrixXd::Zero(n, n);
    const double stop = c > 0.0 ? options.tol * (1.0 - c) / c : std::numeric_limits<double>::infinity();

    while (metric.iterations < options.max_iterations) {
        Eigen::MatrixXd next = bisim_operator(mdp, c, metric.dist);
        double delta = (next - metric.dist).cwiseAbs().maxCoeff();
        metric.dist = std::move(next);
        metric.deltas.push_back(delta);
        ++metric.iterations;
        if (delta <= stop) return metric;
    }
    throw std::runtime_error("bisimulation iteration did not converge within " +
                             std::to_string(options.max_iterations) + " iterations");
}

ValueBoundReport verify_value_bounds(const FiniteMdp& mdp, const BisimMetric& metric, double epsilon, double tol,
                                     double value_tol) {
    if (mdp.discount() > metric.c)
        throw std::invalid_argument("value bounds require discount <= c (discount " + std::to_string(mdp.discount()) +
                                    ", c " + std::to_string(metric.c) + ")");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    const std::size_t n = mdp.n_states();
    if (static_cast<std::size_t>(metric.dist.rows()) != n || static_cast<std::size_t>(metric.dist.cols()) != n)
        throw std::invalid_argument("metric size does not match the MDP");

    ValueBoundReport report;
    report.c = metric.c;
    report.discount = mdp.discount();
    report.epsilon = epsilon;
    report.values = value_iteration(mdp, value_tol).values;
    const auto& v = report.values;
    const auto& d = metric.dist;
    const double c = metric.c;

    report.min_pair_slack = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t t = s + 1; t < n; ++t) {
            ++report.pair_checks;
            double lhs = (1.0 - c) * std::abs(v[s] - v[t]);
            double rhs = d(s, t);
            report.min_pair_slack = std::min(report.min_pair_slack, rhs - lhs);
            if (lhs > rhs + tol) report.violations.push_back({BoundViolation::Kind::pair, s, t, 0, lhs, rhs});
        }
    }

    const double bound = 2.0 * epsilon / (1.0 - c);
    for (std::size_t sc = 0; sc < n; ++sc) {
        for (std::size_t s1 = 0; s1 < n; ++s1) {
            if (!(d(s1, sc) < epsilon)) continue;
            for (std::size_t s2 = s1 + 1; s2 < n; ++s2) {
                if (!(d(s2, sc) < epsilon)) continue;
                ++report.triple_checks;
                double lhs = std::abs(v[s1] - v[s2]);
                if (!(lhs < bound + tol))
                    report.violations.push_back({BoundViolation::Kind::triple, s1, s2, sc, lhs, bound});
            }
        }
    }
    return report;
}

double median_pairwise_distance(const Eigen::MatrixXd& dist) {
    std::vector<double> values;
    for (Eigen::Index i = 0; i < dist.rows(); ++i)
        for (Eigen::Index j = i + 1; j < dist.cols(); ++j) values.push_back(dist(i, j));
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace cbm
