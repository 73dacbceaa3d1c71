#include "cbm/trainer.hpp"

#include "cbm/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cbm {

void CbmConfig::validate() const {
    auto require = [](bool ok, const char* field, const char* what) {
        if (!ok) throw std::invalid_argument(std::string(field) + " " + what);
    };
    require(tau > 0.0 && std::isfinite(tau), "tau", "must be positive");
    require(beta >= 0.0 && beta <= 1.0, "beta", "must lie in [0,1]");
    require(epsilon > 0.0 && std::isfinite(epsilon), "epsilon", "must be positive");
    require(prototypes >= 1, "prototypes", "must be positive");
    require(batch >= 1, "batch", "must be positive");
    require(latent_dim >= 1, "latent_dim", "must be positive");
    require(hidden_dim >= 1, "hidden_dim", "must be positive");
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate", "must be nonnegative");
    require(sinkhorn_iterations >= 1, "sinkhorn_iterations", "must be positive");
    require(reward_weight >= 0.0, "reward_weight", "must be nonnegative");
    require(transition_weight >= 0.0, "transition_weight", "must be nonnegative");
}

namespace {

std::vector<std::size_t> layer_sizes(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out) {
    std::vector<std::size_t> sizes{in};
    for (std::size_t i = 0; i < layers; ++i) sizes.push_back(hidden);
    sizes.push_back(out);
    return sizes;
}

/// Gradient through x -> x / |x| applied column-wise.
Eigen::MatrixXd normalize_columns_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xhat,
                                           const Eigen::MatrixXd& grad) {
    Eigen::RowVectorXd norms = x.colwise().norm();
    Eigen::RowVectorXd dots = (xhat.array() * grad.array()).colwise().sum();
    Eigen::MatrixXd out = grad - (xhat.array().rowwise() * dots.array()).matrix();
    return out.array().rowwise() / norms.array();
}

/// Column-wise log-softmax.
Eigen::MatrixXd log_softmax_columns(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out = logits;
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        double m = out.col(j).maxCoeff();
        double lse = m + std::log((out.col(j).array() - m).exp().sum());
        out.col(j).array() -= lse;
    }
    return out;
}

std::uint64_t combine(std::uint64_t a, std::uint64_t b) { return mix_seed(a ^ (b + 0x9e3779b97f4a7c15ull)); }

void append_views(std::vector<std::span<double>>& out, std::vector<std::span<double>> more) {
    out.insert(out.end(), more.begin(), more.end());
}

void append_views(std::vector<std::span<const double>>& out, std::vector<std::span<const double>> more) {
    out.insert(out.end(), more.begin(), more.end());
}

}  // namespace

CbmState initialize_state(const CbmConfig& config, std::size_t obs_dim, std::size_t n_actions,
                          const ReplayBuffer& buffer) {
    config.validate();
    if (buffer.size() == 0) throw std::invalid_argument("initialize_state: empty replay buffer");
    CbmState state;
    state.n_actions = n_actions;
    state.encoder = MlpParams::initialize(
        {layer_sizes(obs_dim, config.hidden_dim, config.encoder_hidden_layers, config.latent_dim), config.layer_norm},
        derive_seed(config.seed, 11));
    state.dynamics = MlpParams::initialize(
        {layer_sizes(config.latent_dim + n_actions, config.hidden_dim, config.dynamics_hidden_layers, config.latent_dim),
         false},
        derive_seed(config.seed, 12));

    std::mt19937_64 rng(derive_seed(config.seed, 13));
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto K = static_cast<Eigen::Index>(config.prototypes);
    const auto d = static_cast<Eigen::Index>(config.latent_dim);
    state.prototypes.resize(K, d);
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index j = 0; j < d; ++j) state.prototypes(k, j) = normal(rng);
        state.prototypes.row(k).normalize();
    }
    std::uniform_int_distribution<std::size_t> slot(0, buffer.size() - 1);
    state.prototype_rewards.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) state.prototype_rewards(k) = buffer.reward(slot(rng));

    state.optimizer = Optimizer(config.optimizer, config.learning_rate);
    state.action_rng.seed(derive_seed(config.seed, 14));
    return state;
}

Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& m) {
    Eigen::RowVectorXd norms = m.colwise().norm();
    if ((norms.array() <= 0.0).any() || !norms.allFinite())
        throw std::domain_error("normalize_columns: zero-norm or non-finite vector");
    return m.array().rowwise() / norms.array();
}

Eigen::MatrixXd predict_assignments(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& prototypes, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("predict_assignments: tau must be positive");
    if (latents.rows() != prototypes.cols()) throw std::invalid_argument("predict_assignments: dimension mismatch");
    Eigen::MatrixXd zhat = normalize_columns(latents);
    Eigen::MatrixXd chat = normalize_columns(prototypes.transpose());
    return log_softmax_columns(chat.transpose() * zhat / tau).array().exp();
}

Eigen::VectorXd prototype_reward_estimate(const CodeMatrix& codes, const Eigen::VectorXd& rewards,
                                          bool require_equipartition) {
    const auto& q = codes.q;
    if (q.cols() != rewards.size()) throw std::invalid_argument("prototype_reward_estimate: batch size mismatch");
    if ((q.array() < 0.0).any() || !q.allFinite())
        throw std::invalid_argument("prototype_reward_estimate: codes must be finite and nonnegative");
    if (((q.colwise().sum().array() - 1.0).abs() > 1e-6).any())
        throw std::invalid_argument("prototype_reward_estimate: code columns must sum to 1");
    const double row_target = static_cast<double>(q.cols()) / static_cast<double>(q.rows());
    Eigen::VectorXd mass = q.rowwise().sum();
    if (require_equipartition && ((mass.array() - row_target).abs() > 1e-6).any())
        throw std::invalid_argument("prototype_reward_estimate: code rows violate equipartition");
    if ((mass.array() <= 0.0).any()) throw std::invalid_argument("prototype_reward_estimate: empty code row");
    return (q * rewards).array() / mass.array();
}

Eigen::VectorXd prototype_reward_update(const Eigen::VectorXd& rewards, const Eigen::VectorXd& estimates, double beta) {
    if (rewards.size() != estimates.size()) throw std::invalid_argument("prototype_reward_update: size mismatch");
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("prototype_reward_update: beta must lie in [0,1]");
    return beta * estimates + (1.0 - beta) * rewards;
}

Eigen::MatrixXd prototype_transitions(const Eigen::MatrixXd& prototypes, const MlpParams& dynamics,
                                      const Eigen::MatrixXd& actions) {
    if (actions.cols() != prototypes.rows()) throw std::invalid_argument("prototype_transitions: one action per prototype");
    return mlp_forward(dynamics, dynamics_input(prototypes.transpose(), actions)).output;
}

Eigen::MatrixXd uniform_prototype_actions(std::size_t n_actions, std::size_t prototypes, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, n_actions - 1);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_actions), static_cast<Eigen::Index>(prototypes));
    for (Eigen::Index k = 0; k < a.cols(); ++k) a(static_cast<Eigen::Index>(pick(rng)), k) = 1.0;
    return a;
}

Eigen::MatrixXd bisim_distance_matrix(const Eigen::MatrixXd& next_latents, const Eigen::VectorXd& rewards,
                                      const Eigen::VectorXd& prototype_rewards, const Eigen::MatrixXd& prototype_next,
                                      double reward_weight, double transition_weight) {
    if (next_latents.cols() != rewards.size() || prototype_next.cols() != prototype_rewards.size() ||
        next_latents.rows() != prototype_next.rows())
        throw std::invalid_argument("bisim_distance_matrix: shape mismatch");
    if (!next_latents.allFinite() || !prototype_next.allFinite())
        throw std::invalid_argument("bisim_distance_matrix: non-finite latents");
    const Eigen::Index K = prototype_next.cols();
    const Eigen::Index B = next_latents.cols();
    // |z - c|^2 = |z|^2 + |c|^2 - 2 c.z, clamped against cancellation
    Eigen::MatrixXd sq = -2.0 * prototype_next.transpose() * next_latents;
    sq.colwise() += prototype_next.colwise().squaredNorm().transpose();
    sq.rowwise() += next_latents.colwise().squaredNorm();
    Eigen::MatrixXd d(K, B);
    for (Eigen::Index i = 0; i < B; ++i)
        for (Eigen::Index k = 0; k < K; ++k)
            d(k, i) = reward_weight * std::abs(rewards(i) - prototype_rewards(k)) +
                      transition_weight * std::sqrt(std::max(0.0, sq(k, i)));
    return d;
}

double cbm_loss(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& target) {
    if (predicted.rows() != target.rows() || predicted.cols() != target.cols())
        throw std::invalid_argument("cbm_loss: shape mismatch");
    if ((predicted.array() <= 0.0).any()) throw std::invalid_argument("cbm_loss: predictions must be positive");
    return -(target.array() * predicted.array().log()).sum() / static_cast<double>(predicted.cols());
}

double cpc_dynamics_loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets, double tau) {
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols() || predictions.cols() == 0)
        throw std::invalid_argument("cpc_dynamics_loss: shape mismatch");
    Eigen::MatrixXd n = normalize_columns(predictions);
    Eigen::MatrixXd m = normalize_columns(targets);
    // column i of the logits holds the scores of prediction i against every target
    Eigen::MatrixXd logp = log_softmax_columns(m.transpose() * n / tau);
    return -logp.diagonal().sum() / static_cast<double>(predictions.cols());
}

Eigen::MatrixXd encode_batch(const MlpParams& encoder, const Eigen::MatrixXd& observations) {
    return mlp_forward(encoder, observations).output;
}

LossEvaluation evaluate_losses(const CbmState& state, const TransitionBatch& batch, const Eigen::MatrixXd& codes,
                               double tau, const LossWeights& weights, bool with_gradients) {
    const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index d = static_cast<Eigen::Index>(state.latent_dim());
    if (codes.rows() != state.prototypes.rows() || codes.cols() != B)
        throw std::invalid_argument("evaluate_losses: codes shape mismatch");

    Eigen::MatrixXd both(batch.observations.rows(), 2 * B);
    both << batch.observations, batch.next_observations;
    MlpCache enc = mlp_forward(state.encoder, both);
    const Eigen::MatrixXd z = enc.output.leftCols(B);
    const Eigen::MatrixXd z_next = enc.output.rightCols(B);

    // predicted assignments
    const Eigen::MatrixXd zhat = normalize_columns(z);
    const Eigen::MatrixXd c_t = state.prototypes.transpose();  // d x K
    const Eigen::MatrixXd chat = normalize_columns(c_t);
    const Eigen::MatrixXd logp = log_softmax_columns(chat.transpose() * zhat / tau);

    LossEvaluation out;
    out.assignments = logp.array().exp();
    out.cbm_loss = -(codes.array() * logp.array()).sum() / static_cast<double>(B);

    // latent dynamics, contrastive against in-batch next latents
    MlpCache dyn = mlp_forward(state.dynamics, dynamics_input(z, batch.action_one_hot));
    const Eigen::MatrixXd& pred = dyn.output;
    const Eigen::MatrixXd nhat = normalize_columns(pred);
    const Eigen::MatrixXd mhat = normalize_columns(z_next);
    const Eigen::MatrixXd scores = mhat.transpose() * nhat / tau;  // [k][i]
    const Eigen::MatrixXd logq = log_softmax_columns(scores);
    out.dynamics_loss = -logq.diagonal().sum() / static_cast<double>(B);

    out.region = combine(enc.activation_signature(), dyn.activation_signature());
    if (!with_gradients) return out;

    // dL_CBM / dlogits
    Eigen::MatrixXd g_logits =
        (out.assignments.array().rowwise() * codes.colwise().sum().array() - codes.array()).matrix() *
        (weights.cbm / static_cast<double>(B));
    Eigen::MatrixXd d_zhat = chat * g_logits / tau;                  // d x B
    Eigen::MatrixXd d_chat = zhat * g_logits.transpose() / tau;      // d x K
    out.grads.prototypes = normalize_columns_backward(c_t, chat, d_chat).transpose();

    // dL_P / dscores, scores[k][i] = <m_k, n_i> / tau
    Eigen::MatrixXd g_scores = logq.array().exp();
    g_scores.diagonal().array() -= 1.0;
    g_scores *= weights.dynamics / static_cast<double>(B);
    Eigen::MatrixXd d_nhat = mhat * g_scores / tau;             // d x B
    Eigen::MatrixXd d_mhat = nhat * g_scores.transpose() / tau;  // d x B
    Eigen::MatrixXd d_pred = normalize_columns_backward(pred, nhat, d_nhat);
    Backprop dyn_back = mlp_backprop(state.dynamics, dyn, d_pred);
    out.grads.dynamics = std::move(dyn_back.grads);

    Eigen::MatrixXd d_enc(d, 2 * B);
    d_enc.leftCols(B) = dyn_back.input_grad.topRows(d);
    if (weights.cbm_to_encoder) d_enc.leftCols(B) += normalize_columns_backward(z, zhat, d_zhat);
    d_enc.rightCols(B) = normalize_columns_backward(z_next, mhat, d_mhat);
    out.grads.encoder = mlp_backprop(state.encoder, enc, d_enc).grads;
    return out;
}

CodeMatrix target_codes(const CbmState& state, const TransitionBatch& batch, const Eigen::MatrixXd& prototype_actions,
                        const CbmConfig& config, Eigen::MatrixXd* distances) {
    Eigen::MatrixXd z_next = encode_batch(state.encoder, batch.next_observations);
    Eigen::MatrixXd c_next = prototype_transitions(state.prototypes, state.dynamics, prototype_actions);
    Eigen::MatrixXd dist = bisim_distance_matrix(z_next, batch.rewards, state.prototype_rewards, c_next,
                                                 config.reward_weight, config.transition_weight);
    SinkhornOptions opts;
    opts.epsilon = config.epsilon;
    opts.iterations = config.sinkhorn_iterations;
    CodeMatrix codes = codes_from_distances(dist, opts);
    if (distances) *distances = std::move(dist);
    return codes;
}

StepMetrics train_step(CbmState& state, const TransitionBatch& batch, const CbmConfig& config) {
    if (batch.size() == 0) throw std::invalid_argument("train_step: empty batch");
    const Eigen::MatrixXd actions = uniform_prototype_actions(state.n_actions, state.prototype_count(), state.action_rng);
    CodeMatrix codes = target_codes(state, batch, actions, config);

    Eigen::VectorXd estimates = prototype_reward_estimate(codes, batch.rewards);
    state.prototype_rewards = prototype_reward_update(state.prototype_rewards, estimates, config.beta);

    LossWeights weights;
    weights.cbm_to_encoder = config.objective == Objective::cbm;
    LossEvaluation eval = evaluate_losses(state, batch, codes.q, config.tau, weights, true);

    std::vector<std::span<double>> params;
    std::vector<std::span<const double>> grads;
    append_views(params, state.encoder.views());
    append_views(params, state.dynamics.views());
    params.emplace_back(state.prototypes.data(), static_cast<std::size_t>(state.prototypes.size()));
    const auto& g = eval.grads;
    append_views(grads, g.encoder.views());
    append_views(grads, g.dynamics.views());
    grads.emplace_back(g.prototypes.data(), static_cast<std::size_t>(g.prototypes.size()));
    state.optimizer.step(params, grads);
    if (config.normalize_prototypes) state.prototypes.rowwise().normalize();
    ++state.step;

    StepMetrics m;
    m.step = state.step;
    m.cbm_loss = eval.cbm_loss;
    m.dynamics_loss = eval.dynamics_loss;
    m.code_entropy = code_entropy(codes);
    m.usage.assign(state.prototype_count(), 0);
    for (Eigen::Index i = 0; i < eval.assignments.cols(); ++i) {
        Eigen::Index k = 0;
        eval.assignments.col(i).maxCoeff(&k);
        ++m.usage[static_cast<std::size_t>(k)];
    }
    auto [lo, hi] = std::minmax_element(m.usage.begin(), m.usage.end());
    m.min_usage = *lo;
    m.max_usage = *hi;
    return m;
}

LossGradientCheck check_loss_gradients(CbmState& state, const TransitionBatch& batch, const Eigen::MatrixXd& codes,
                                       double tau, const GradientCheckOptions& options) {
    auto run = [&](double wc, double wd) {
        LossWeights weights{wc, wd, true};
        const LossEvaluation eval = evaluate_losses(state, batch, codes, tau, weights, true);
        std::vector<std::span<double>> params;
        std::vector<std::span<const double>> grads;
        append_views(params, state.encoder.views());
        append_views(params, state.dynamics.views());
        params.emplace_back(state.prototypes.data(), static_cast<std::size_t>(state.prototypes.size()));
        append_views(grads, eval.grads.encoder.views());
        append_views(grads, eval.grads.dynamics.views());
        grads.emplace_back(eval.grads.prototypes.data(), static_cast<std::size_t>(eval.grads.prototypes.size()));
        auto probe = [&] {
            LossEvaluation e = evaluate_losses(state, batch, codes, tau, weights, false);
            return LossProbe{wc * e.cbm_loss + wd * e.dynamics_loss, e.region};
        };
        return gradient_check(params, grads, probe, options);
    };
    LossGradientCheck out;
    out.cbm = run(1.0, 0.0);
    out.dynamics = run(0.0, 1.0);
    out.total = run(1.0, 1.0);
    return out;
}

void put_mlp(Container& c, const std::string& prefix, const MlpParams& params) {
    const auto& spec = params.spec();
    Eigen::VectorXd sizes(static_cast<Eigen::Index>(spec.sizes.size()));
    for (std::size_t i = 0; i < spec.sizes.size(); ++i) sizes(static_cast<Eigen::Index>(i)) = static_cast<double>(spec.sizes[i]);
    c.put_vector(prefix + "sizes", sizes);
    c.put_vector(prefix + "normalize_output", Eigen::VectorXd::Constant(1, spec.normalize_output ? 1.0 : 0.0));
    for (std::size_t l = 0; l < params.layers().size(); ++l) {
        c.put_matrix(prefix + std::to_string(l) + "/weight", params.layers()[l].weight);
        c.put_vector(prefix + std::to_string(l) + "/bias", params.layers()[l].bias);
    }
}

MlpParams get_mlp(const Container& c, const std::string& prefix) {
    Eigen::VectorXd sizes = c.vector(prefix + "sizes");
    MlpSpec spec;
    for (Eigen::Index i = 0; i < sizes.size(); ++i) spec.sizes.push_back(static_cast<std::size_t>(sizes(i)));
    spec.normalize_output = c.vector(prefix + "normalize_output")(0) != 0.0;
    MlpParams params(spec);
    auto& layers = params.mutable_layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Eigen::MatrixXd w = c.matrix(prefix + std::to_string(l) + "/weight");
        Eigen::VectorXd b = c.vector(prefix + std::to_string(l) + "/bias");
        if (w.rows() != layers[l].weight.rows() || w.cols() != layers[l].weight.cols() || b.size() != layers[l].bias.size())
            throw std::runtime_error("checkpoint: layer shape does not match manifest for " + prefix);
        layers[l].weight = std::move(w);
        layers[l].bias = std::move(b);
    }
    return params;
}

void save_state(Container& c, const CbmState& state, const std::string& prefix) {
    put_mlp(c, prefix + "encoder/", state.encoder);
    put_mlp(c, prefix + "dynamics/", state.dynamics);
    c.put_matrix(prefix + "prototypes", state.prototypes);
    c.put_vector(prefix + "prototype_rewards", state.prototype_rewards);
    Eigen::VectorXd meta(2);
    meta << static_cast<double>(state.n_actions), static_cast<double>(state.step);
    c.put_vector(prefix + "meta", meta);
}

CbmState load_state(const Container& c, const CbmConfig& config, const std::string& prefix) {
    CbmState state;
    state.encoder = get_mlp(c, prefix + "encoder/");
    state.dynamics = get_mlp(c, prefix + "dynamics/");
    state.prototypes = c.matrix(prefix + "prototypes");
    state.prototype_rewards = c.vector(prefix + "prototype_rewards");
    Eigen::VectorXd meta = c.vector(prefix + "meta");
    state.n_actions = static_cast<std::size_t>(meta(0));
    state.step = static_cast<std::size_t>(meta(1));
    if (state.prototype_rewards.size() != state.prototypes.rows() ||
        static_cast<std::size_t>(state.prototypes.cols()) != state.encoder.spec().output_dim())
        throw std::runtime_error("checkpoint: prototype shapes disagree with the encoder");
    state.optimizer = Optimizer(config.optimizer, config.learning_rate);
    state.action_rng.seed(derive_seed(config.seed, 14 + state.step));
    return state;
}

}  // namespace cbm
