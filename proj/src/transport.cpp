#include "cbm/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_marginal(std::span<const double> v, const char* name) {
    for (double x : v)
        if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument(std::string(name) + " has a negative or non-finite entry");
}

}  // namespace

TransportPlan optimal_transport(std::span<const double> source, std::span<const double> target,
                                const Eigen::MatrixXd& cost) {
    const std::size_t m = source.size();
    const std::size_t n = target.size();
    if (m == 0 || n == 0) throw std::invalid_argument("empty marginal");
    if (static_cast<std::size_t>(cost.rows()) != m || static_cast<std::size_t>(cost.cols()) != n)
        throw std::invalid_argument("cost matrix shape does not match marginals");
    check_marginal(source, "source");
    check_marginal(target, "target");
    if (!cost.allFinite() || (cost.array() < 0.0).any())
        throw std::invalid_argument("cost matrix must be finite and nonnegative");

    const double mass_p = std::accumulate(source.begin(), source.end(), 0.0);
    const double mass_q = std::accumulate(target.begin(), target.end(), 0.0);
    if (std::abs(mass_p - mass_q) > 1e-8)
        throw std::invalid_argument("infeasible marginals: masses differ by " + std::to_string(mass_p - mass_q));

    std::vector<double> supply(source.begin(), source.end());
    std::vector<double> demand(target.begin(), target.end());
    // spread the (<= 1e-8) mass mismatch onto the target so the problem is balanced
    if (mass_q > 0.0)
        for (auto& d : demand) d *= mass_p / mass_q;

    const double thr = 1e-15 * std::max(1.0, mass_p);
    Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(m, n);

    // Node layout: 0 = super source, [1, m] sources, [m+1, m+n] targets, m+n+1 = sink.
    const std::size_t n_nodes = m + n + 2;
    const std::size_t sink = m + n + 1;
    std::vector<double> pot(n_nodes, 0.0), dist(n_nodes);
    std::vector<std::size_t> prev(n_nodes);
    std::vector<bool> done(n_nodes);

    auto relax = [&](std::size_t u, std::size_t v, double c) {
        double reduced = std::max(0.0, c + pot[u] - pot[v]);
        if (dist[u] + reduced < dist[v]) {
            dist[v] = dist[u] + reduced;
            prev[v] = u;
        }
    };

    const std::size_t max_augmentations = 8 * (m + n) * (m + n) + 64;
    std::size_t augmentations = 0;
    while (true) {
        bool remaining = false;
        for (double s : supply) remaining |= s > thr;
        if (!remaining) break;
        if (++augmentations > max_augmentations)
            throw std::runtime_error("optimal_transport: augmentation limit exceeded");

        std::fill(dist.begin(), dist.end(), kInf);
        std::fill(done.begin(), done.end(), false);
        dist[0] = 0.0;
        for (std::size_t iter = 0; iter < n_nodes; ++iter) {
            std::size_t u = n_nodes;
            double best = kInf;
            for (std::size_t v = 0; v < n_nodes; ++v)
                if (!done[v] && dist[v] < best) {
                    best = dist[v];
                    u = v;
                }
            if (u == n_nodes) break;
            done[u] = true;
            if (u == sink) break;
            if (u == 0) {
                for (std::size_t i = 0; i < m; ++i)
                    if (supply[i] > thr) relax(0, 1 + i, 0.0);
            } else if (u <= m) {
                const std::size_t i = u - 1;
                for (std::size_t j = 0; j < n; ++j) relax(u, 1 + m + j, cost(i, j));
            } else {
                const std::size_t j = u - 1 - m;
                for (std::size_t i = 0; i < m; ++i)
                    if (flow(i, j) > thr) relax(u, 1 + i, -cost(i, j));
                if (demand[j] > thr) relax(u, sink, 0.0);
            }
        }
        if (dist[sink] == kInf) throw std::runtime_error("optimal_transport: no augmenting path");

        // bottleneck along the path
        double amount = kInf;
        for (std::size_t v = sink; v != 0; v = prev[v]) {
            std::size_t u = prev[v];
            if (u == 0)
                amount = std::min(amount, supply[v - 1]);
            else if (v == sink)
                amount = std::min(amount, demand[u - 1 - m]);
            else if (u > m)  // backward edge target -> source
                amount = std::min(amount, flow(v - 1, u - 1 - m));
        }
        for (std::size_t v = sink; v != 0; v = prev[v]) {
            std::size_t u = prev[v];
            if (u == 0)
                supply[v - 1] -= amount;
            else if (v == sink)
                demand[u - 1 - m] -= amount;
            else if (u <= m)
                flow(u - 1, v - 1 - m) += amount;
            else
                flow(v - 1, u - 1 - m) -= amount;
        }
        for (std::size_t v = 0; v < n_nodes; ++v) pot[v] += std::min(dist[v], dist[sink]);
    }

    flow = flow.cwiseMax(0.0);
    TransportPlan out;
    out.cost = (flow.array() * cost.array()).sum();
    out.plan = std::move(flow);
    return out;
}

TransportPlan wasserstein1(std::span<const double> p, std::span<const double> q, const Eigen::MatrixXd& ground) {
    if (ground.rows() != ground.cols()) throw std::invalid_argument("ground metric must be square");
    for (Eigen::Index i = 0; i < ground.rows(); ++i)
        if (ground(i, i) != 0.0) throw std::invalid_argument("ground metric must have a zero diagonal");
    return optimal_transport(p, q, ground);
}

}  // namespace cbm
