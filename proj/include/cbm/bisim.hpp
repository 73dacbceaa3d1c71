#pragma once

#include "cbm/mdp.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace cbm {

/// Pairwise state distances d(s,s') together with the reward/transport mixing
/// weight c used to produce them.
struct BisimMetric {
    Eigen::MatrixXd dist;
    double c = 0.0;
    std::size_t iterations = 0;
    /// Sup-norm change between successive iterates.
    std::vector<double> deltas;
};

struct BisimOptions {
    double tol = 1e-9;
    std::size_t max_iterations = 100'000;
};

/// Fixed point of
///   d(s,s') = max_a (1-c)|r(s,a) - r(s',a)| + c W1(P(.|s,a), P(.|s',a); d)
/// iterated from d_0 = 0 until the sup-norm change is at most tol (1-c)/c,
/// which bounds the fixed-point residual by tol. c = 0 skips transport.
BisimMetric bisim_fixed_point(const FiniteMdp& mdp, double c, const BisimOptions& options = {});

/// One application of the bisimulation operator to `dist`.
Eigen::MatrixXd bisim_operator(const FiniteMdp& mdp, double c, const Eigen::MatrixXd& dist);

struct BoundViolation {
    enum class Kind { pair, triple };
    Kind kind;
    std::size_t s1, s2, center;  // center unused for pair checks
    double lhs, rhs;
};

struct ValueBoundReport {
    double c = 0.0;
    double discount = 0.0;
    double epsilon = 0.0;
    std::size_t pair_checks = 0;
    std::size_t triple_checks = 0;
    /// Smallest rhs - lhs over all pair checks; >= -tol when no violation.
    double min_pair_slack = 0.0;
    std::vector<BoundViolation> violations;
    std::vector<double> values;  // V* used for the checks

    bool ok() const { return violations.empty(); }
};

/// Checks, for the MDP's optimal value function V*:
///   (1-c)|V*(s) - V*(s')| <= d(s,s') + tol                      for all pairs
///   |V*(s1) - V*(s2)| < 2 eps / (1-c) + tol  whenever d(s1,sc) < eps and d(s2,sc) < eps
/// Requires mdp.discount() <= metric.c; throws std::invalid_argument otherwise.
ValueBoundReport verify_value_bounds(const FiniteMdp& mdp, const BisimMetric& metric, double epsilon,
                                     double tol = 1e-8, double value_tol = 1e-11);

/// Median of the strictly upper-triangular entries.
double median_pairwise_distance(const Eigen::MatrixXd& dist);

}  // namespace cbm
