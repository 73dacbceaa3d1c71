#include "cbm/eval.hpp"

#include "cbm/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace cbm {

std::vector<std::size_t> nearest_prototype_assign(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& prototypes) {
    if (prototypes.rows() == 0) throw std::invalid_argument("nearest_prototype_assign: no prototypes");
    if (latents.rows() != prototypes.cols()) throw std::invalid_argument("nearest_prototype_assign: dimension mismatch");
    std::vector<std::size_t> out(static_cast<std::size_t>(latents.cols()));
    for (Eigen::Index i = 0; i < latents.cols(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index arg = 0;
        for (Eigen::Index k = 0; k < prototypes.rows(); ++k) {
            double d = (prototypes.row(k).transpose() - latents.col(i)).squaredNorm();
            if (d < best) {
                best = d;
                arg = k;
            }
        }
        out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arg);
    }
    return out;
}

ChReport ch_index(const Eigen::MatrixXd& points, const std::vector<std::size_t>& assignment, std::size_t cluster_count) {
    const auto n = static_cast<std::size_t>(points.cols());
    if (assignment.size() != n) throw std::invalid_argument("ch_index: one label per point required");
    if (!points.allFinite()) throw std::invalid_argument("ch_index: non-finite coordinates");
    if (cluster_count == 0 && n > 0) cluster_count = *std::max_element(assignment.begin(), assignment.end()) + 1;

    ChReport r;
    r.n_points = n;
    r.sizes.assign(cluster_count, 0);
    Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(points.rows(), static_cast<Eigen::Index>(cluster_count));
    for (std::size_t i = 0; i < n; ++i) {
        if (assignment[i] >= cluster_count) throw std::invalid_argument("ch_index: label out of range");
        ++r.sizes[assignment[i]];
        centroids.col(static_cast<Eigen::Index>(assignment[i])) += points.col(static_cast<Eigen::Index>(i));
    }
    r.n_clusters = static_cast<std::size_t>(std::count_if(r.sizes.begin(), r.sizes.end(), [](auto s) { return s > 0; }));
    if (r.n_clusters < 2) throw DegenerateClustering("ch_index: fewer than two nonempty clusters");
    if (n <= r.n_clusters) throw DegenerateClustering("ch_index: need more points than clusters");

    Eigen::VectorXd center = points.rowwise().mean();
    for (std::size_t k = 0; k < cluster_count; ++k) {
        if (r.sizes[k] == 0) continue;
        auto col = centroids.col(static_cast<Eigen::Index>(k));
        col /= static_cast<double>(r.sizes[k]);
        r.between += static_cast<double>(r.sizes[k]) * (col - center).squaredNorm();
    }
    for (std::size_t i = 0; i < n; ++i)
        r.within += (points.col(static_cast<Eigen::Index>(i)) - centroids.col(static_cast<Eigen::Index>(assignment[i])))
                        .squaredNorm();
    if (r.within == 0.0) {
        if (r.between == 0.0) throw DegenerateClustering("ch_index: all points identical");
        r.ch = std::numeric_limits<double>::infinity();
        return r;
    }
    r.ch = (r.between / r.within) * static_cast<double>(n - r.n_clusters) / static_cast<double>(r.n_clusters - 1);
    return r;
}

std::vector<ClusterCoherence> cluster_reward_coherence(const std::vector<double>& returns,
                                                       const std::vector<std::size_t>& assignment,
                                                       std::size_t cluster_count) {
    if (returns.size() != assignment.size()) throw std::invalid_argument("cluster_reward_coherence: size mismatch");
    std::vector<ClusterCoherence> out(cluster_count);
    std::vector<double> lo(cluster_count, std::numeric_limits<double>::infinity());
    std::vector<double> hi(cluster_count, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < cluster_count; ++k) out[k].cluster = k;
    for (std::size_t i = 0; i < returns.size(); ++i) {
        const std::size_t k = assignment[i];
        if (k >= cluster_count) throw std::invalid_argument("cluster_reward_coherence: label out of range");
        if (std::isnan(returns[i])) continue;
        auto& c = out[k];
        ++c.size;
        c.empty = false;
        c.mean_return += returns[i];
        lo[k] = std::min(lo[k], returns[i]);
        hi[k] = std::max(hi[k], returns[i]);
    }
    for (std::size_t k = 0; k < cluster_count; ++k) {
        if (out[k].empty) continue;
        out[k].mean_return /= static_cast<double>(out[k].size);
        // on a line the widest pair is the range
        out[k].max_spread = hi[k] - lo[k];
    }
    return out;
}

double median_within_spread(const std::vector<ClusterCoherence>& coherence) {
    std::vector<double> v;
    for (const auto& c : coherence)
        if (c.size >= 2) v.push_back(c.max_spread);
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void export_embeddings(std::ostream& out, const Eigen::MatrixXd& latents, const std::vector<std::int64_t>& task_labels,
                       const std::vector<std::int64_t>& distractor_labels, const std::vector<std::size_t>& clusters) {
    const auto n = static_cast<std::size_t>(latents.cols());
    if (task_labels.size() != n || distractor_labels.size() != n || clusters.size() != n)
        throw std::invalid_argument("export_embeddings: label count does not match latent count");
    for (Eigen::Index j = 0; j < latents.rows(); ++j) out << 'z' << j << ',';
    out << "task_label,distractor_label,cluster\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < latents.rows(); ++j)
            out << format_double(latents(j, static_cast<Eigen::Index>(i))) << ',';
        out << task_labels[i] << ',' << distractor_labels[i] << ',' << clusters[i] << '\n';
    }
    if (!out) throw std::runtime_error("export_embeddings: write failed");
}

void export_embeddings(const std::string& path, const Eigen::MatrixXd& latents,
                       const std::vector<std::int64_t>& task_labels,
                       const std::vector<std::int64_t>& distractor_labels, const std::vector<std::size_t>& clusters) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    export_embeddings(f, latents, task_labels, distractor_labels, clusters);
}

EvalSample draw_eval_sample(const ReplayBuffer& buffer, std::size_t n, std::uint64_t seed) {
    n = std::min(n, buffer.size());
    if (n == 0) throw std::invalid_argument("draw_eval_sample: empty buffer");
    std::mt19937_64 rng(seed);
    EvalSample s;
    s.slots = buffer.sample_slots(n, rng);
    std::sort(s.slots.begin(), s.slots.end());
    const auto cols = static_cast<Eigen::Index>(n);
    s.observations.resize(static_cast<Eigen::Index>(buffer.obs_dim()), cols);
    s.physical.resize(static_cast<Eigen::Index>(buffer.physical_dim()), cols);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t slot = s.slots[i];
        s.observations.col(static_cast<Eigen::Index>(i)) = buffer.observation(slot);
        s.physical.col(static_cast<Eigen::Index>(i)) = buffer.physical_state(slot);
        s.task_labels.push_back(buffer.task_label(slot));
        s.distractor_labels.push_back(buffer.distractor_label(slot));
        s.returns.push_back(buffer.mc_return(slot));
    }
    return s;
}

EvalResult evaluate_clustering(const CbmState& state, const EvalSample& sample) {
    EvalResult r;
    r.latents = encode_batch(state.encoder, sample.observations);
    r.assignment = nearest_prototype_assign(r.latents, state.prototypes);
    try {
        r.ch = ch_index(sample.physical, r.assignment, state.prototype_count());
    } catch (const DegenerateClustering&) {
        // collapsed encoder: report the cluster sizes with an undefined score
        r.ch = ChReport{};
        r.ch.ch = std::numeric_limits<double>::quiet_NaN();
        r.ch.n_points = r.assignment.size();
        r.ch.sizes.assign(state.prototype_count(), 0);
        for (auto k : r.assignment) ++r.ch.sizes[k];
        r.ch.n_clusters = static_cast<std::size_t>(
            std::count_if(r.ch.sizes.begin(), r.ch.sizes.end(), [](auto n) { return n > 0; }));
    }
    r.coherence = cluster_reward_coherence(sample.returns, r.assignment, state.prototype_count());
    return r;
}

void write_ch_report(std::ostream& out, const ChReport& report) {
    out << "ch,between,within,n_points,n_clusters\n"
        << format_double(report.ch) << ',' << format_double(report.between) << ',' << format_double(report.within)
        << ',' << report.n_points << ',' << report.n_clusters << '\n';
}

void write_coherence(std::ostream& out, const std::vector<ClusterCoherence>& coherence) {
    out << "cluster,size,empty,mean_return,max_spread\n";
    for (const auto& c : coherence)
        out << c.cluster << ',' << c.size << ',' << (c.empty ? 1 : 0) << ',' << format_double(c.mean_return) << ','
            << format_double(c.max_spread) << '\n';
}

}  // namespace cbm
