#include "cbm/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace cbm {

namespace {

void check_spec(const MlpSpec& spec) {
    if (spec.sizes.size() < 2) throw std::invalid_argument("MlpSpec needs at least an input and an output size");
    for (auto s : spec.sizes)
        if (s == 0) throw std::invalid_argument("MlpSpec sizes must be positive");
}

template <class Layers, class Span>
std::vector<Span> layer_views(Layers& layers) {
    std::vector<Span> out;
    out.reserve(layers.size() * 2);
    for (auto& layer : layers) {
        out.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
        out.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    }
    return out;
}

}  // namespace

MlpParams::MlpParams(MlpSpec spec) : spec_(std::move(spec)) {
    check_spec(spec_);
    for (std::size_t l = 0; l + 1 < spec_.sizes.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(spec_.sizes[l]);
        const auto out = static_cast<Eigen::Index>(spec_.sizes[l + 1]);
        layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    }
}

MlpParams MlpParams::initialize(MlpSpec spec, std::uint64_t seed) {
    MlpParams params(std::move(spec));
    std::mt19937_64 rng(seed);
    for (auto& layer : params.layers_) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        // column-major fill order is part of the seeded contract
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = dist(rng);
    }
    return params;
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

bool MlpParams::all_finite() const {
    for (const auto& l : layers_)
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
}

std::vector<std::span<double>> MlpParams::views() {
    ++generation_;
    return layer_views<std::vector<DenseLayer>, std::span<double>>(layers_);
}

std::vector<std::span<const double>> MlpParams::views() const {
    return layer_views<const std::vector<DenseLayer>, std::span<const double>>(layers_);
}

GradientSet GradientSet::zeros_like(const MlpParams& params) {
    GradientSet g;
    for (const auto& l : params.layers())
        g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    return g;
}

GradientSet& GradientSet::operator+=(const GradientSet& other) {
    if (other.layers.size() != layers.size()) throw std::invalid_argument("GradientSet shape mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weight += other.layers[l].weight;
        layers[l].bias += other.layers[l].bias;
    }
    return *this;
}

double GradientSet::max_abs() const {
    double m = 0.0;
    for (const auto& l : layers) {
        if (l.weight.size()) m = std::max(m, l.weight.cwiseAbs().maxCoeff());
        if (l.bias.size()) m = std::max(m, l.bias.cwiseAbs().maxCoeff());
    }
    return m;
}

std::vector<std::span<double>> GradientSet::views() {
    return layer_views<std::vector<DenseLayer>, std::span<double>>(layers);
}

std::vector<std::span<const double>> GradientSet::views() const {
    return layer_views<const std::vector<DenseLayer>, std::span<const double>>(layers);
}

std::uint64_t MlpCache::activation_signature() const {
    std::uint64_t h = 1469598103934665603ull;
    // inputs of layers 1.. are rectified hidden activations
    for (std::size_t l = 1; l < layer_inputs.size(); ++l) {
        const auto& a = layer_inputs[l];
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            h ^= a.data()[i] > 0.0 ? 1u : 0u;
            h *= 1099511628211ull;
        }
    }
    return h;
}

MlpCache mlp_forward(const MlpParams& params, const Eigen::MatrixXd& inputs) {
    const auto& layers = params.layers();
    if (static_cast<std::size_t>(inputs.rows()) != params.spec().input_dim())
        throw std::invalid_argument("mlp_forward: input dimension " + std::to_string(inputs.rows()) + " != " +
                                    std::to_string(params.spec().input_dim()));
    MlpCache cache;
    cache.params = &params;
    cache.generation = params.generation();
    cache.layer_inputs.reserve(layers.size());

    Eigen::MatrixXd act = inputs;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Eigen::MatrixXd pre = layers[l].weight * act;
        pre.colwise() += layers[l].bias;
        cache.layer_inputs.push_back(std::move(act));
        if (l + 1 < layers.size()) {
            act = pre.cwiseMax(0.0);
        } else {
            if (params.spec().normalize_output) {
                const double d = static_cast<double>(pre.rows());
                Eigen::RowVectorXd mean = pre.colwise().sum() / d;
                pre.rowwise() -= mean;
                Eigen::RowVectorXd var = pre.array().square().colwise().sum() / d;
                cache.inv_std = (var.array() + kLayerNormEps).rsqrt();
                pre = pre.array().rowwise() * cache.inv_std.array();
                cache.normalized = pre;
            }
            cache.output = pre.array().tanh();
        }
    }
    return cache;
}

Backprop mlp_backprop(const MlpParams& params, const MlpCache& cache, const Eigen::MatrixXd& output_grad) {
    if (cache.params != &params || cache.generation != params.generation())
        throw std::logic_error("mlp_backprop: stale or mismatched forward cache");
    if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols())
        throw std::invalid_argument("mlp_backprop: output gradient shape mismatch");

    const auto& layers = params.layers();
    Backprop out;
    out.grads.layers.resize(layers.size());

    Eigen::MatrixXd delta = output_grad.array() * (1.0 - cache.output.array().square());
    if (params.spec().normalize_output) {
        const double d = static_cast<double>(delta.rows());
        const auto& xhat = cache.normalized;
        Eigen::RowVectorXd mean_g = delta.colwise().sum() / d;
        Eigen::RowVectorXd mean_gx = (delta.array() * xhat.array()).colwise().sum() / d;
        Eigen::MatrixXd centered = delta;
        centered.rowwise() -= mean_g;
        centered -= (xhat.array().rowwise() * mean_gx.array()).matrix();
        delta = centered.array().rowwise() * cache.inv_std.array();
    }

    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& input = cache.layer_inputs[l];
        out.grads.layers[l].weight = delta * input.transpose();
        out.grads.layers[l].bias = delta.rowwise().sum();
        Eigen::MatrixXd back = layers[l].weight.transpose() * delta;
        if (l > 0)
            delta = (input.array() > 0.0).select(back, 0.0);
        else
            out.input_grad = std::move(back);
    }
    return out;
}

Eigen::VectorXd encode(const MlpParams& encoder, const Eigen::VectorXd& obs) {
    return mlp_forward(encoder, obs).output.col(0);
}

Eigen::VectorXd dynamics_forward(const MlpParams& model, const Eigen::VectorXd& z, const Eigen::VectorXd& action) {
    Eigen::VectorXd input(z.size() + action.size());
    input << z, action;
    return mlp_forward(model, input).output.col(0);
}

Eigen::MatrixXd dynamics_input(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& actions) {
    if (latents.cols() != actions.cols()) throw std::invalid_argument("dynamics_input: batch size mismatch");
    Eigen::MatrixXd input(latents.rows() + actions.rows(), latents.cols());
    input << latents, actions;
    return input;
}

void Optimizer::step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("Optimizer: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].size() != grads[i].size()) throw std::invalid_argument("Optimizer: shape mismatch");
    ++t_;
    if (kind_ == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t j = 0; j < params[i].size(); ++j) params[i][j] -= lr_ * grads[i][j];
        return;
    }
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("Optimizer: parameter list changed");
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (m_[i].size() != params[i].size()) throw std::invalid_argument("Optimizer: shape changed");
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            const double g = grads[i][j];
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
            params[i][j] -= lr_ * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
        }
    }
}

}  // namespace cbm
