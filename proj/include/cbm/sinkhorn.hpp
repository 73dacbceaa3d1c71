#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>

namespace cbm {

/// K x B soft assignment of B observations to K prototypes. Columns sum to 1,
/// rows sum to B/K (equipartition).
struct CodeMatrix {
    Eigen::MatrixXd q;
    std::size_t iterations = 0;
    /// Max |row sum - B/K| after the final column normalization.
    double row_residual = 0.0;

    Eigen::Index prototypes() const { return q.rows(); }
    Eigen::Index batch() const { return q.cols(); }
};

struct SinkhornOptions {
    double epsilon = 0.05;
    /// Fixed number of (row, column) normalization sweeps. When empty the
    /// iteration runs until the row residual drops to `tolerance`.
    std::optional<std::size_t> iterations = 3;
    double tolerance = 1e-10;
    std::size_t max_iterations = 10'000'000;

    static SinkhornOptions converged(double epsilon, double tolerance = 1e-10) {
        SinkhornOptions o;
        o.epsilon = epsilon;
        o.iterations.reset();
        o.tolerance = tolerance;
        return o;
    }
};

/// Q = Diag(u) exp(logits / eps) Diag(v) with u, v chosen by Sinkhorn-Knopp so
/// that columns sum to 1 and rows to B/K. Scalings are kept as log-potentials
/// and every exponent is max-shifted, so exp(logits/eps) is never formed
/// directly. Always ends on a column normalization.
CodeMatrix codes_from_logits(const Eigen::MatrixXd& logits, const SinkhornOptions& options = {});

/// codes_from_logits(-distances); distances must be finite and nonnegative.
CodeMatrix codes_from_distances(const Eigen::MatrixXd& distances, const SinkhornOptions& options = {});

/// Mean over columns of the Shannon entropy of each column of Q.
double code_entropy(const CodeMatrix& codes);

}  // namespace cbm
