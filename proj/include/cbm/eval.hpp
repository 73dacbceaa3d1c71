#pragma once

#include "cbm/env.hpp"
#include "cbm/trainer.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbm {

/// Index of the nearest prototype (Euclidean) for every latent column; ties go
/// to the lowest index. latents: d x N, prototypes: K x d.
std::vector<std::size_t> nearest_prototype_assign(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& prototypes);

struct ChReport {
    double ch = 0.0;
    double between = 0.0;  // sum_k n_k |C_k - C|^2
    double within = 0.0;   // sum_k sum_{i in k} |x_i - C_k|^2
    std::size_t n_points = 0;
    std::size_t n_clusters = 0;          // nonempty clusters only
    std::vector<std::size_t> sizes;      // indexed by cluster id, empty ones included
};

/// Thrown for inputs where the ratio is undefined.
struct DegenerateClustering : std::domain_error {
    using std::domain_error::domain_error;
};

/// Calinski-Harabasz index of `points` (dim x N) grouped by `assignment`.
/// Empty clusters do not count towards K. `cluster_count` is the size of the
/// label space (0 = max label + 1).
ChReport ch_index(const Eigen::MatrixXd& points, const std::vector<std::size_t>& assignment,
                  std::size_t cluster_count = 0);

struct ClusterCoherence {
    std::size_t cluster = 0;
    std::size_t size = 0;
    bool empty = true;
    double mean_return = 0.0;
    double max_spread = 0.0;  // max pairwise |G_i - G_j| within the cluster
};

/// Per-cluster Monte-Carlo return summary. Entries with a NaN return (episode
/// never closed) are ignored.
std::vector<ClusterCoherence> cluster_reward_coherence(const std::vector<double>& returns,
                                                       const std::vector<std::size_t>& assignment,
                                                       std::size_t cluster_count);

/// Median of max_spread over nonempty clusters with at least two members.
double median_within_spread(const std::vector<ClusterCoherence>& coherence);

/// CSV with header z0..z{d-1},task_label,distractor_label,cluster; one row per column.
void export_embeddings(std::ostream& out, const Eigen::MatrixXd& latents, const std::vector<std::int64_t>& task_labels,
                       const std::vector<std::int64_t>& distractor_labels, const std::vector<std::size_t>& clusters);
void export_embeddings(const std::string& path, const Eigen::MatrixXd& latents,
                       const std::vector<std::int64_t>& task_labels,
                       const std::vector<std::int64_t>& distractor_labels, const std::vector<std::size_t>& clusters);

/// Evaluation sample drawn from a replay buffer.
struct EvalSample {
    std::vector<std::size_t> slots;
    Eigen::MatrixXd observations;  // obs_dim x N
    Eigen::MatrixXd physical;      // physical_dim x N
    std::vector<std::int64_t> task_labels, distractor_labels;
    std::vector<double> returns;
};

/// min(n, size) distinct entries chosen by `seed`.
EvalSample draw_eval_sample(const ReplayBuffer& buffer, std::size_t n, std::uint64_t seed);

struct EvalResult {
    ChReport ch;
    std::vector<std::size_t> assignment;
    Eigen::MatrixXd latents;
    std::vector<ClusterCoherence> coherence;
};

/// Encode, assign to nearest prototypes, score against physical states. A
/// degenerate clustering yields ch = NaN instead of an exception.
EvalResult evaluate_clustering(const CbmState& state, const EvalSample& sample);

void write_ch_report(std::ostream& out, const ChReport& report);
void write_coherence(std::ostream& out, const std::vector<ClusterCoherence>& coherence);

}  // namespace cbm
