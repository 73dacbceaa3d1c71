#pragma once

#include <Eigen/Dense>

#include <span>

namespace cbm {

struct TransportPlan {
    Eigen::MatrixXd plan;  // source x target
    double cost = 0.0;
};

/// Exact discrete optimal transport between `source` and `target` under an
/// arbitrary nonnegative cost matrix, solved as a min-cost flow with
/// successive shortest paths (Dijkstra on reduced costs).
///
/// Marginals must be nonnegative with equal mass (|sum p - sum q| <= 1e-8);
/// otherwise std::invalid_argument.
TransportPlan optimal_transport(std::span<const double> source, std::span<const double> target,
                                const Eigen::MatrixXd& cost);

/// Wasserstein-1 distance between two distributions on the same finite space
/// under `ground`, a nonnegative square matrix with zero diagonal.
TransportPlan wasserstein1(std::span<const double> p, std::span<const double> q, const Eigen::MatrixXd& ground);

}  // namespace cbm
