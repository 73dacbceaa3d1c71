#pragma once

#include "cbm/container.hpp"
#include "cbm/env.hpp"
#include "cbm/gradcheck.hpp"
#include "cbm/mlp.hpp"
#include "cbm/sinkhorn.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace cbm {

enum class Objective {
    cbm,            // L_CBM + L_P, both reaching the encoder
    dynamics_only,  // encoder and dynamics see L_P only; prototypes still fit L_CBM
};

struct CbmConfig {
    double tau = 0.1;
    double beta = 0.01;
    double epsilon = 0.05;
    std::size_t prototypes = 128;
    std::size_t batch = 128;
    std::size_t latent_dim = 50;
    std::size_t hidden_dim = 256;
    std::size_t encoder_hidden_layers = 1;
    std::size_t dynamics_hidden_layers = 2;
    bool layer_norm = true;
    double learning_rate = 5e-4;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 0;
    std::size_t sinkhorn_iterations = 3;
    double reward_weight = 1.0;
    double transition_weight = 1.0;
    bool normalize_prototypes = false;
    Objective objective = Objective::cbm;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    bool operator==(const CbmConfig&) const = default;
};

/// All learnables of one CBM run.
struct CbmState {
    MlpParams encoder;
    MlpParams dynamics;
    Eigen::MatrixXd prototypes;        // K x d, one prototype per row
    Eigen::VectorXd prototype_rewards;  // K
    Optimizer optimizer;
    std::mt19937_64 action_rng;         // prototype-transition actions
    std::size_t n_actions = 0;
    std::size_t step = 0;

    std::size_t latent_dim() const { return static_cast<std::size_t>(prototypes.cols()); }
    std::size_t prototype_count() const { return static_cast<std::size_t>(prototypes.rows()); }
};

/// Fresh state: seeded network initialization, prototypes uniform on the unit
/// sphere, prototype rewards copied from uniformly drawn replay transitions.
CbmState initialize_state(const CbmConfig& config, std::size_t obs_dim, std::size_t n_actions,
                          const ReplayBuffer& buffer);

// ---- building blocks --------------------------------------------------------

/// Columns of `m` scaled to unit L2 norm; throws std::domain_error on a zero column.
Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& m);

/// p_i = softmax_k(<z_i/|z_i|, c_k/|c_k|> / tau). latents: d x B, prototypes: K x d.
Eigen::MatrixXd predict_assignments(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& prototypes, double tau);

/// Weighted average of batch rewards per prototype with weights from the code
/// rows. Under exact equipartition this is (K/B) q_k . r; the weights are
/// divided by the actual row mass so the estimate is always a convex
/// combination. Rejects codes whose columns are not distributions
/// (tolerance 1e-6), and with `require_equipartition` also rows off B/K.
Eigen::VectorXd prototype_reward_estimate(const CodeMatrix& codes, const Eigen::VectorXd& rewards,
                                          bool require_equipartition = false);

/// r <- beta r_hat + (1 - beta) r
Eigen::VectorXd prototype_reward_update(const Eigen::VectorXd& rewards, const Eigen::VectorXd& estimates, double beta);

/// c'_k = P(c_k, a_k); actions is n_actions x K one-hot (or any action encoding).
/// Returns d x K.
Eigen::MatrixXd prototype_transitions(const Eigen::MatrixXd& prototypes, const MlpParams& dynamics,
                                      const Eigen::MatrixXd& actions);

/// One-hot actions drawn uniformly, one per prototype.
Eigen::MatrixXd uniform_prototype_actions(std::size_t n_actions, std::size_t prototypes, std::mt19937_64& rng);

/// D[k][i] = w_r |r_i - r^c_k| + w_t |z'_i - c'_k|_2. next_latents: d x B,
/// prototype_next: d x K. Returns K x B.
Eigen::MatrixXd bisim_distance_matrix(const Eigen::MatrixXd& next_latents, const Eigen::VectorXd& rewards,
                                      const Eigen::VectorXd& prototype_rewards, const Eigen::MatrixXd& prototype_next,
                                      double reward_weight = 1.0, double transition_weight = 1.0);

/// mean_i -sum_k q_ki log p_ki
double cbm_loss(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& target);

/// mean_i -log softmax_k(cos(zhat_i, z'_k) / tau)[i]. Both d x B.
double cpc_dynamics_loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets, double tau);

// ---- losses with gradients ----------------------------------------------------

struct CbmGradients {
    GradientSet encoder;
    GradientSet dynamics;
    Eigen::MatrixXd prototypes;  // K x d
};

struct LossEvaluation {
    double cbm_loss = 0.0;
    double dynamics_loss = 0.0;
    Eigen::MatrixXd assignments;  // P, K x B
    CbmGradients grads;
    /// Rectifier pattern of every network pass; identifies the smooth region.
    std::uint64_t region = 0;
};

/// Which loss terms contribute gradients.
struct LossWeights {
    double cbm = 1.0;
    double dynamics = 1.0;
    bool cbm_to_encoder = true;
};

/// L_CBM (against fixed target codes) and L_P on one batch, with exact
/// gradients for encoder, dynamics and prototypes. Codes are constants.
LossEvaluation evaluate_losses(const CbmState& state, const TransitionBatch& batch, const Eigen::MatrixXd& codes,
                               double tau, const LossWeights& weights = {}, bool with_gradients = true);

/// Target codes for a batch from the current state (no parameter change).
/// Uses `prototype_actions` for the prototype transitions.
CodeMatrix target_codes(const CbmState& state, const TransitionBatch& batch, const Eigen::MatrixXd& prototype_actions,
                        const CbmConfig& config, Eigen::MatrixXd* distances = nullptr);

struct LossGradientCheck {
    GradientCheckReport cbm;       // L_CBM alone
    GradientCheckReport dynamics;  // L_P alone
    GradientCheckReport total;     // L_CBM + L_P
    bool passed() const { return cbm.passed && dynamics.passed && total.passed; }
};

/// Finite-difference check of evaluate_losses over encoder, dynamics and
/// prototype parameters. Parameters are perturbed in place and restored.
LossGradientCheck check_loss_gradients(CbmState& state, const TransitionBatch& batch, const Eigen::MatrixXd& codes,
                                       double tau, const GradientCheckOptions& options = {});

// ---- training --------------------------------------------------------------------

struct StepMetrics {
    std::size_t step = 0;
    double cbm_loss = 0.0;
    double dynamics_loss = 0.0;
    double code_entropy = 0.0;
    std::size_t min_usage = 0;
    std::size_t max_usage = 0;
    std::vector<std::size_t> usage;  // argmax-of-P histogram over prototypes
};

/// encode -> predicted assignments -> prototype transitions -> distance matrix
/// -> Sinkhorn codes -> prototype reward EMA -> L_CBM + L_P -> one optimizer step.
StepMetrics train_step(CbmState& state, const TransitionBatch& batch, const CbmConfig& config);

/// Encoder output for each column of `observations`.
Eigen::MatrixXd encode_batch(const MlpParams& encoder, const Eigen::MatrixXd& observations);

// ---- checkpoints -------------------------------------------------------------------

void save_state(Container& c, const CbmState& state, const std::string& prefix = "model/");
/// Restores parameters, prototypes and rewards (optimizer moments are not stored).
CbmState load_state(const Container& c, const CbmConfig& config, const std::string& prefix = "model/");
void put_mlp(Container& c, const std::string& prefix, const MlpParams& params);
MlpParams get_mlp(const Container& c, const std::string& prefix);

}  // namespace cbm
