#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cbm {

/// Layer sizes from input to output. Hidden layers use a rectifier, the output
/// layer a hyperbolic tangent. With `normalize_output` the output
/// pre-activation is standardized per sample (zero mean, unit variance, no
/// learned gain) before the tanh.
struct MlpSpec {
    std::vector<std::size_t> sizes;
    bool normalize_output = false;

    std::size_t input_dim() const { return sizes.front(); }
    std::size_t output_dim() const { return sizes.back(); }
    bool operator==(const MlpSpec&) const = default;
};

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
};

/// Parameters of an MLP. Every mutable access bumps `generation()`, which
/// forward caches record so that backprop can reject stale caches.
class MlpParams {
public:
    MlpParams() = default;
    explicit MlpParams(MlpSpec spec);  // all-zero parameters

    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
    static MlpParams initialize(MlpSpec spec, std::uint64_t seed);

    const MlpSpec& spec() const { return spec_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& mutable_layers() {
        ++generation_;
        return layers_;
    }
    std::uint64_t generation() const { return generation_; }
    std::size_t parameter_count() const;
    bool all_finite() const;

    /// Weight then bias of each layer, in layer order.
    std::vector<std::span<double>> views();
    std::vector<std::span<const double>> views() const;

private:
    MlpSpec spec_;
    std::vector<DenseLayer> layers_;
    std::uint64_t generation_ = 0;
};

/// Same shapes as the MlpParams it belongs to.
struct GradientSet {
    std::vector<DenseLayer> layers;

    static GradientSet zeros_like(const MlpParams& params);
    GradientSet& operator+=(const GradientSet& other);
    double max_abs() const;
    std::vector<std::span<double>> views();
    std::vector<std::span<const double>> views() const;
};

/// Activations recorded by a forward pass over a batch (one sample per column).
struct MlpCache {
    const MlpParams* params = nullptr;
    std::uint64_t generation = 0;
    std::vector<Eigen::MatrixXd> layer_inputs;  // input to each layer
    Eigen::MatrixXd normalized;                 // standardized output pre-activation (if enabled)
    Eigen::RowVectorXd inv_std;
    Eigen::MatrixXd output;

    /// Hash of the rectifier on/off pattern; equal signatures mean the network
    /// is in the same linear region for this batch.
    std::uint64_t activation_signature() const;
};

struct Backprop {
    GradientSet grads;
    Eigen::MatrixXd input_grad;
};

constexpr double kLayerNormEps = 1e-5;

/// Batch forward; `inputs` is input_dim x batch.
MlpCache mlp_forward(const MlpParams& params, const Eigen::MatrixXd& inputs);

/// Reverse-mode pass for d(loss)/d(output) = output_grad. Throws
/// std::logic_error if the cache is stale or belongs to other parameters.
Backprop mlp_backprop(const MlpParams& params, const MlpCache& cache, const Eigen::MatrixXd& output_grad);

/// Encoder map for a single observation.
Eigen::VectorXd encode(const MlpParams& encoder, const Eigen::VectorXd& obs);
/// Latent dynamics prediction for a single (z, a) pair.
Eigen::VectorXd dynamics_forward(const MlpParams& model, const Eigen::VectorXd& z, const Eigen::VectorXd& action);
/// Column-wise concatenation of latents and actions for the dynamics input.
Eigen::MatrixXd dynamics_input(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& actions);

enum class OptimizerKind { adam, sgd };

/// Adam (or plain gradient descent) over an arbitrary list of parameter
/// arrays. Moment buffers are allocated on the first step and must keep the
/// same shapes afterwards.
class Optimizer {
public:
    Optimizer() = default;
    Optimizer(OptimizerKind kind, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : kind_(kind), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads);
    std::size_t steps() const { return t_; }
    double learning_rate() const { return lr_; }

private:
    OptimizerKind kind_ = OptimizerKind::adam;
    double lr_ = 5e-4;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace cbm
