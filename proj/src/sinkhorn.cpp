#include "cbm/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cbm {

namespace {

double row_residual(const Eigen::MatrixXd& q, double target) {
    return (q.rowwise().sum().array() - target).abs().maxCoeff();
}

}  // namespace

CodeMatrix codes_from_logits(const Eigen::MatrixXd& logits, const SinkhornOptions& options) {
    const Eigen::Index K = logits.rows();
    const Eigen::Index B = logits.cols();
    if (K == 0 || B == 0) throw std::invalid_argument("codes_from_logits: empty input");
    if (!logits.allFinite()) throw std::invalid_argument("codes_from_logits: non-finite logits");
    if (!(options.epsilon > 0.0)) throw std::invalid_argument("codes_from_logits: epsilon must be positive");
    if (options.iterations && *options.iterations == 0)
        throw std::invalid_argument("codes_from_logits: iteration count must be positive");

    const Eigen::MatrixXd scaled = logits / options.epsilon;
    const double log_row_target = std::log(static_cast<double>(B) / static_cast<double>(K));
    Eigen::VectorXd f = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(B);
    Eigen::MatrixXd work(K, B);

    // f_k = log(B/K) - logsumexp_j(S_kj + g_j)
    auto row_step = [&] {
        work = scaled.rowwise() + g.transpose();
        for (Eigen::Index k = 0; k < K; ++k) {
            double m = work.row(k).maxCoeff();
            f(k) = log_row_target - (m + std::log((work.row(k).array() - m).exp().sum()));
        }
    };
    // g_j = -logsumexp_k(S_kj + f_k)
    auto column_step = [&] {
        work = scaled.colwise() + f;
        for (Eigen::Index j = 0; j < B; ++j) {
            double m = work.col(j).maxCoeff();
            g(j) = -(m + std::log((work.col(j).array() - m).exp().sum()));
        }
    };
    auto assemble = [&] {
        Eigen::MatrixXd q = scaled;
        q.colwise() += f;
        q.rowwise() += g.transpose();
        return Eigen::MatrixXd(q.array().exp());
    };

    CodeMatrix out;
    const double target = static_cast<double>(B) / static_cast<double>(K);
    if (options.iterations) {
        for (std::size_t it = 0; it < *options.iterations; ++it) {
            row_step();
            column_step();
        }
        out.iterations = *options.iterations;
        out.q = assemble();
        out.row_residual = row_residual(out.q, target);
        return out;
    }

    // Converged mode: multiplicative sweeps on the kernel exp(S + f + g), with
    // the scalings folded back into the log-potentials whenever they leave
    // [e^-kAbsorb, e^kAbsorb] or the kernel underflows.
    constexpr double kAbsorb = 30.0;
    constexpr std::size_t kCheckEvery = 8;
    const Eigen::VectorXd row_mass = Eigen::VectorXd::Constant(K, target);
    while (out.iterations < options.max_iterations) {
        row_step();
        column_step();
        ++out.iterations;
        out.q = assemble();
        out.row_residual = row_residual(out.q, target);
        if (out.row_residual <= options.tolerance) return out;

        const Eigen::MatrixXd& kernel = out.q;
        Eigen::VectorXd u = Eigen::VectorXd::Ones(K), v = Eigen::VectorXd::Ones(B);
        bool absorb = false;
        while (!absorb && out.iterations < options.max_iterations) {
            Eigen::VectorXd kv = kernel * v;
            if (!(kv.array() > 0.0).all()) break;
            u = row_mass.cwiseQuotient(kv);
            Eigen::VectorXd ku = kernel.transpose() * u;
            if (!(ku.array() > 0.0).all()) break;
            v = ku.cwiseInverse();
            ++out.iterations;
            const double spread = std::max(u.array().log().abs().maxCoeff(), v.array().log().abs().maxCoeff());
            absorb = !std::isfinite(spread) || spread > kAbsorb;
            if (absorb || out.iterations % kCheckEvery == 0) {
                const double residual = (u.cwiseProduct(kernel * v) - row_mass).cwiseAbs().maxCoeff();
                if (residual <= options.tolerance) absorb = true;
            }
        }
        if (u.allFinite() && v.allFinite() && (u.array() > 0.0).all() && (v.array() > 0.0).all()) {
            f += u.array().log().matrix();
            g += v.array().log().matrix();
        }
        if (out.iterations >= options.max_iterations) break;
        // the next log-domain sweep re-anchors the potentials and tests convergence
    }
    throw std::runtime_error("codes_from_logits: marginals did not converge");
}

CodeMatrix codes_from_distances(const Eigen::MatrixXd& distances, const SinkhornOptions& options) {
    if (!distances.allFinite() || (distances.array() < 0.0).any())
        throw std::invalid_argument("codes_from_distances: distances must be finite and nonnegative");
    return codes_from_logits(-distances, options);
}

double code_entropy(const CodeMatrix& codes) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < codes.q.cols(); ++j)
        for (Eigen::Index k = 0; k < codes.q.rows(); ++k) {
            double p = codes.q(k, j);
            if (p > 0.0) total -= p * std::log(p);
        }
    return total / static_cast<double>(codes.q.cols());
}

}  // namespace cbm
