#pragma once

#include "cbm/container.hpp"
#include "cbm/mdp.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <vector>

namespace cbm {

enum class TaskKind { pendulum, track, finite_mdp };

/// Task dynamics plus an independent distractor process, observed through a
/// fixed random linear mixing with isotropic noise.
struct DistractedEnvConfig {
    TaskKind task = TaskKind::track;

    // Continuous tasks are labeled on a position_bins x velocity_bins grid.
    std::size_t position_bins = 4;
    std::size_t velocity_bins = 4;
    double dt = 0.1;

    // Pendulum: angle 0 is upright, reward (1 + cos angle) / 2.
    double gravity = 3.0;
    double torque = 2.0;
    double damping = 0.1;
    double max_speed = 4.0;

    // Track: point mass on [-1, 1] with inelastic walls, reward (1 + x) / 2.
    double track_force = 1.0;
    double track_friction = 0.1;
    double track_max_speed = 1.0;

    // Finite-MDP task: random_mdp(mdp_seed, mdp_states, mdp_actions).
    std::size_t mdp_states = 6;
    std::size_t mdp_actions = 2;
    std::uint64_t mdp_seed = 1;

    std::size_t distractor_dim = 8;
    /// Multiplier on the distractor features before mixing.
    double distractor_scale = 1.0;
    /// Per-step std of the bounded random walk on [-1, 1].
    double distractor_step = 0.3;
    /// Redraw the distractor at every reset; otherwise it persists across episodes.
    bool resample_on_reset = true;

    std::size_t obs_dim = 24;
    std::uint64_t mixing_seed = 1;
    double obs_noise = 0.01;
    std::size_t episode_length = 50;
    std::size_t frame_stack = 1;
    /// Discount for the Monte-Carlo returns attached to buffer entries.
    double return_discount = 0.9;

    bool operator==(const DistractedEnvConfig&) const = default;
};

/// Task features plus distractor dimensions fed to the mixing matrix.
std::size_t mixed_feature_count(const DistractedEnvConfig& config);

struct StepResult {
    Eigen::VectorXd observation;
    double reward = 0.0;
    bool done = false;
};

class DistractedEnv {
public:
    explicit DistractedEnv(DistractedEnvConfig config);

    const DistractedEnvConfig& config() const { return config_; }
    std::size_t n_actions() const;
    std::size_t observation_dim() const { return config_.obs_dim * config_.frame_stack; }
    std::size_t task_feature_dim() const;
    std::size_t physical_dim() const;
    std::size_t task_state_count() const;
    const Eigen::MatrixXd& mixing() const { return mixing_; }

    /// Reseeds every random stream from `seed` and starts an episode.
    Eigen::VectorXd reset(std::uint64_t seed);
    /// Reseeds the task and distractor streams independently.
    Eigen::VectorXd reset(std::uint64_t task_seed, std::uint64_t distractor_seed);
    /// Starts a new episode continuing the current random streams.
    Eigen::VectorXd reset();

    StepResult step(std::size_t action);

    bool needs_reset() const { return !started_ || steps_ >= config_.episode_length; }
    const Eigen::VectorXd& observation() const { return stacked_; }
    Eigen::VectorXd physical_state() const;
    Eigen::VectorXd task_features() const;
    const Eigen::VectorXd& distractor() const { return distractor_; }
    std::int64_t task_label() const;
    std::int64_t distractor_label() const;

private:
    void draw_distractor();
    Eigen::VectorXd render();
    double task_reward(std::size_t action) const;

    DistractedEnvConfig config_;
    FiniteMdp mdp_;
    Eigen::MatrixXd mixing_;
    std::mt19937_64 task_rng_, distractor_rng_, noise_rng_;
    double position_ = 0.0, velocity_ = 0.0;  // angle for the pendulum
    std::size_t mdp_state_ = 0;
    Eigen::VectorXd distractor_;
    bool distractor_drawn_ = false;
    std::deque<Eigen::VectorXd> frames_;
    Eigen::VectorXd stacked_;
    std::size_t steps_ = 0;
    bool started_ = false;
};

/// Minibatch handed to the trainer; carries no ground-truth labels.
struct TransitionBatch {
    Eigen::MatrixXd observations;       // obs_dim x B
    std::vector<std::size_t> actions;
    Eigen::MatrixXd action_one_hot;     // n_actions x B
    Eigen::VectorXd rewards;
    Eigen::MatrixXd next_observations;  // obs_dim x B

    std::size_t size() const { return actions.size(); }
};

/// Ring buffer of transitions with evaluation-only labels.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t n_actions, std::size_t physical_dim);

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return size_; }
    std::size_t obs_dim() const { return static_cast<std::size_t>(obs_.rows()); }
    std::size_t n_actions() const { return n_actions_; }
    std::size_t physical_dim() const { return static_cast<std::size_t>(physical_.rows()); }

    struct Entry {
        Eigen::VectorXd observation;
        std::size_t action = 0;
        double reward = 0.0;
        Eigen::VectorXd next_observation;
        std::int64_t task_label = 0;
        std::int64_t distractor_label = 0;
        Eigen::VectorXd physical_state;
    };

    /// Appends, overwriting the oldest entry when full. Returns the slot.
    std::size_t add(const Entry& entry);

    /// Computes discounted returns for the transitions added since the last
    /// episode boundary. `episode_over` closes the episode; otherwise the
    /// returns are truncated sums that later calls overwrite.
    void settle_returns(double discount, bool episode_over);

    /// Entries in insertion order (oldest first) for evaluation.
    std::vector<std::size_t> chronological_slots() const;

    // Slot accessors (slot < size()).
    Eigen::VectorXd observation(std::size_t slot) const { return obs_.col(static_cast<Eigen::Index>(slot)); }
    Eigen::VectorXd next_observation(std::size_t slot) const { return next_obs_.col(static_cast<Eigen::Index>(slot)); }
    std::size_t action(std::size_t slot) const { return actions_[slot]; }
    double reward(std::size_t slot) const { return rewards_[slot]; }
    std::int64_t task_label(std::size_t slot) const { return task_labels_[slot]; }
    std::int64_t distractor_label(std::size_t slot) const { return distractor_labels_[slot]; }
    Eigen::VectorXd physical_state(std::size_t slot) const { return physical_.col(static_cast<Eigen::Index>(slot)); }
    double mc_return(std::size_t slot) const { return returns_[slot]; }

    /// Uniform sample of `batch` distinct entries; labels are not included.
    TransitionBatch sample(std::size_t batch, std::mt19937_64& rng) const;
    TransitionBatch sample(std::size_t batch, std::uint64_t seed) const;
    /// Slot indices a sample() call with the same generator state would use.
    std::vector<std::size_t> sample_slots(std::size_t batch, std::mt19937_64& rng) const;
    TransitionBatch gather(const std::vector<std::size_t>& slots) const;

    void save_to(Container& c, const std::string& prefix = "buffer/") const;
    static ReplayBuffer load_from(const Container& c, const std::string& prefix = "buffer/");

private:
    std::size_t capacity_;
    std::size_t n_actions_;
    std::size_t size_ = 0;
    std::size_t next_ = 0;
    std::uint64_t serial_ = 0;
    Eigen::MatrixXd obs_, next_obs_, physical_;
    std::vector<std::size_t> actions_;
    std::vector<double> rewards_, returns_;
    std::vector<std::int64_t> task_labels_, distractor_labels_;
    std::vector<std::uint64_t> serials_;
    std::vector<std::uint64_t> pending_;  // serials of the open episode
};

/// Runs a uniform-random policy for `n_steps`, resetting the environment at
/// episode boundaries (continuing its random streams).
void collect(DistractedEnv& env, ReplayBuffer& buffer, std::size_t n_steps, std::mt19937_64& policy_rng);
void collect(DistractedEnv& env, ReplayBuffer& buffer, std::size_t n_steps, std::uint64_t seed);

}  // namespace cbm
