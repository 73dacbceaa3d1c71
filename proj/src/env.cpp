#include "cbm/env.hpp"

#include "cbm/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cbm {

namespace {

double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a + std::numbers::pi, two_pi);
    if (a < 0.0) a += two_pi;
    return a - std::numbers::pi;
}

std::size_t bin_of(double x, double lo, double hi, std::size_t bins) {
    double t = (x - lo) / (hi - lo);
    auto b = static_cast<long long>(std::floor(t * static_cast<double>(bins)));
    return static_cast<std::size_t>(std::clamp<long long>(b, 0, static_cast<long long>(bins) - 1));
}

}  // namespace

std::size_t mixed_feature_count(const DistractedEnvConfig& config) {
    std::size_t task = 0;
    switch (config.task) {
        case TaskKind::pendulum: task = 3; break;
        case TaskKind::track: task = 2; break;
        case TaskKind::finite_mdp: task = config.mdp_states; break;
    }
    return task + config.distractor_dim;
}

DistractedEnv::DistractedEnv(DistractedEnvConfig config) : config_(std::move(config)) {
    if (config_.episode_length == 0) throw std::invalid_argument("episode_length must be positive");
    if (config_.frame_stack == 0) throw std::invalid_argument("frame_stack must be positive");
    if (config_.obs_noise < 0.0 || config_.distractor_step < 0.0)
        throw std::invalid_argument("noise scales must be nonnegative");
    if (config_.task != TaskKind::finite_mdp) {
        if (config_.position_bins == 0 || config_.velocity_bins == 0) throw std::invalid_argument("bins must be positive");
        if (!(config_.dt > 0.0)) throw std::invalid_argument("dt must be positive");
        if (config_.task == TaskKind::pendulum && !(config_.max_speed > 0.0))
            throw std::invalid_argument("max_speed must be positive");
        if (config_.task == TaskKind::track && !(config_.track_max_speed > 0.0))
            throw std::invalid_argument("track_max_speed must be positive");
    } else {
        mdp_ = random_mdp(config_.mdp_seed, config_.mdp_states, config_.mdp_actions);
    }

    const std::size_t cols = mixed_feature_count(config_);
    if (config_.obs_dim < cols)
        throw std::invalid_argument("obs_dim " + std::to_string(config_.obs_dim) + " is smaller than the " +
                                    std::to_string(cols) + " mixed features; mixing would lose information");
    std::mt19937_64 rng(derive_seed(config_.mixing_seed, 0x6d6978));
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto rows = static_cast<Eigen::Index>(config_.obs_dim);
    for (int attempt = 0;; ++attempt) {
        mixing_.resize(rows, static_cast<Eigen::Index>(cols));
        for (Eigen::Index j = 0; j < mixing_.cols(); ++j)
            for (Eigen::Index i = 0; i < rows; ++i) mixing_(i, j) = normal(rng);
        mixing_ /= std::sqrt(static_cast<double>(cols));
        Eigen::FullPivLU<Eigen::MatrixXd> lu(mixing_);
        if (lu.rank() == static_cast<Eigen::Index>(cols)) break;
        if (attempt > 16) throw std::runtime_error("could not draw a full-rank mixing matrix");
    }
    distractor_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config_.distractor_dim));
    task_rng_.seed(derive_seed(0, 1));
    distractor_rng_.seed(derive_seed(0, 2));
    noise_rng_.seed(derive_seed(0, 3));
}

std::size_t DistractedEnv::n_actions() const {
    return config_.task == TaskKind::finite_mdp ? mdp_.n_actions() : 3;
}

std::size_t DistractedEnv::task_feature_dim() const {
    return mixed_feature_count(config_) - config_.distractor_dim;
}

std::size_t DistractedEnv::physical_dim() const {
    return config_.task == TaskKind::finite_mdp ? mdp_.n_states() : 2;
}

std::size_t DistractedEnv::task_state_count() const {
    return config_.task == TaskKind::finite_mdp ? mdp_.n_states() : config_.position_bins * config_.velocity_bins;
}

Eigen::VectorXd DistractedEnv::task_features() const {
    if (config_.task == TaskKind::pendulum) {
        Eigen::VectorXd f(3);
        f << std::cos(position_), std::sin(position_), velocity_ / config_.max_speed;
        return f;
    }
    if (config_.task == TaskKind::track) {
        Eigen::VectorXd f(2);
        f << position_, velocity_ / config_.track_max_speed;
        return f;
    }
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mdp_.n_states()));
    f(static_cast<Eigen::Index>(mdp_state_)) = 1.0;
    return f;
}

Eigen::VectorXd DistractedEnv::physical_state() const {
    if (config_.task != TaskKind::finite_mdp) {
        Eigen::VectorXd x(2);
        x << position_, velocity_;
        return x;
    }
    return task_features();
}

std::int64_t DistractedEnv::task_label() const {
    if (config_.task == TaskKind::pendulum) {
        auto a = bin_of(position_, -std::numbers::pi, std::numbers::pi, config_.position_bins);
        auto v = bin_of(velocity_, -config_.max_speed, config_.max_speed, config_.velocity_bins);
        return static_cast<std::int64_t>(a * config_.velocity_bins + v);
    }
    if (config_.task == TaskKind::track) {
        auto a = bin_of(position_, -1.0, 1.0, config_.position_bins);
        auto v = bin_of(velocity_, -config_.track_max_speed, config_.track_max_speed, config_.velocity_bins);
        return static_cast<std::int64_t>(a * config_.velocity_bins + v);
    }
    return static_cast<std::int64_t>(mdp_state_);
}

std::int64_t DistractedEnv::distractor_label() const {
    // sign pattern of the leading (up to 8) distractor coordinates
    std::int64_t label = 0;
    const auto n = std::min<Eigen::Index>(distractor_.size(), 8);
    for (Eigen::Index i = 0; i < n; ++i)
        if (distractor_(i) > 0.0) label |= std::int64_t{1} << i;
    return label;
}

void DistractedEnv::draw_distractor() {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (Eigen::Index i = 0; i < distractor_.size(); ++i) distractor_(i) = unit(distractor_rng_);
    distractor_drawn_ = true;
}

Eigen::VectorXd DistractedEnv::render() {
    Eigen::VectorXd features(mixing_.cols());
    features << task_features(), config_.distractor_scale * distractor_;
    Eigen::VectorXd frame = mixing_ * features;
    if (config_.obs_noise > 0.0) {
        std::normal_distribution<double> normal(0.0, config_.obs_noise);
        for (Eigen::Index i = 0; i < frame.size(); ++i) frame(i) += normal(noise_rng_);
    }
    return frame;
}

Eigen::VectorXd DistractedEnv::reset(std::uint64_t seed) {
    return reset(derive_seed(seed, 1), derive_seed(seed, 2));
}

Eigen::VectorXd DistractedEnv::reset(std::uint64_t task_seed, std::uint64_t distractor_seed) {
    task_rng_.seed(task_seed);
    distractor_rng_.seed(distractor_seed);
    noise_rng_.seed(derive_seed(task_seed ^ distractor_seed, 3));
    distractor_drawn_ = false;
    return reset();
}

Eigen::VectorXd DistractedEnv::reset() {
    if (config_.task == TaskKind::pendulum) {
        std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
        std::uniform_real_distribution<double> speed(-1.0, 1.0);
        position_ = angle(task_rng_);
        velocity_ = speed(task_rng_);
    } else if (config_.task == TaskKind::track) {
        std::uniform_real_distribution<double> pos(-1.0, 1.0);
        std::uniform_real_distribution<double> speed(-config_.track_max_speed, config_.track_max_speed);
        position_ = pos(task_rng_);
        velocity_ = speed(task_rng_);
    } else {
        std::uniform_int_distribution<std::size_t> state(0, mdp_.n_states() - 1);
        mdp_state_ = state(task_rng_);
    }
    if (config_.resample_on_reset || !distractor_drawn_) draw_distractor();
    steps_ = 0;
    started_ = true;

    Eigen::VectorXd frame = render();
    frames_.assign(config_.frame_stack, frame);
    stacked_.resize(static_cast<Eigen::Index>(observation_dim()));
    for (std::size_t k = 0; k < config_.frame_stack; ++k)
        stacked_.segment(static_cast<Eigen::Index>(k * config_.obs_dim), static_cast<Eigen::Index>(config_.obs_dim)) =
            frame;
    return stacked_;
}

double DistractedEnv::task_reward(std::size_t action) const {
    double r = 0.0;
    switch (config_.task) {
        case TaskKind::pendulum: r = 0.5 * (1.0 + std::cos(position_)); break;
        case TaskKind::track: r = 0.5 * (1.0 + position_); break;
        case TaskKind::finite_mdp: r = mdp_.reward(mdp_state_, action); break;
    }
    return std::clamp(r, 0.0, 1.0);
}

StepResult DistractedEnv::step(std::size_t action) {
    if (action >= n_actions()) throw std::invalid_argument("invalid action " + std::to_string(action));
    if (!started_) throw std::logic_error("step() before reset()");

    StepResult res;
    if (config_.task == TaskKind::pendulum) {
        const double u = static_cast<double>(action) - 1.0;  // {-1, 0, +1}
        double accel = config_.gravity * std::sin(position_) + config_.torque * u - config_.damping * velocity_;
        velocity_ = std::clamp(velocity_ + config_.dt * accel, -config_.max_speed, config_.max_speed);
        position_ = wrap_angle(position_ + config_.dt * velocity_);
        // closeness to upright after the transition
        res.reward = task_reward(action);
    } else if (config_.task == TaskKind::track) {
        const double u = static_cast<double>(action) - 1.0;
        const double vmax = config_.track_max_speed;
        velocity_ = std::clamp(velocity_ + config_.dt * (config_.track_force * u - config_.track_friction * velocity_),
                               -vmax, vmax);
        position_ += config_.dt * velocity_;
        if (std::abs(position_) > 1.0) {
            position_ = std::clamp(position_, -1.0, 1.0);
            velocity_ = 0.0;
        }
        res.reward = task_reward(action);
    } else {
        // r(s, a) of the state the action was taken in
        res.reward = task_reward(action);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double x = unit(task_rng_);
        auto row = mdp_.transition(mdp_state_, action);
        std::size_t next = row.size() - 1;
        double acc = 0.0;
        for (std::size_t u = 0; u < row.size(); ++u) {
            acc += row[u];
            if (x < acc) {
                next = u;
                break;
            }
        }
        mdp_state_ = next;
    }

    if (config_.distractor_step > 0.0) {
        std::normal_distribution<double> normal(0.0, config_.distractor_step);
        for (Eigen::Index i = 0; i < distractor_.size(); ++i)
            distractor_(i) = std::clamp(distractor_(i) + normal(distractor_rng_), -1.0, 1.0);
    }
    ++steps_;
    frames_.pop_front();
    frames_.push_back(render());
    for (std::size_t k = 0; k < config_.frame_stack; ++k)
        stacked_.segment(static_cast<Eigen::Index>(k * config_.obs_dim), static_cast<Eigen::Index>(config_.obs_dim)) =
            frames_[k];
    res.observation = stacked_;
    res.done = steps_ >= config_.episode_length;
    return res;
}

}  // namespace cbm
