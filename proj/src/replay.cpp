#include "cbm/env.hpp"

#include "cbm/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cbm {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t n_actions, std::size_t physical_dim)
    : capacity_(capacity), n_actions_(n_actions) {
    if (capacity == 0 || obs_dim == 0 || n_actions == 0) throw std::invalid_argument("ReplayBuffer: zero dimension");
    const auto cap = static_cast<Eigen::Index>(capacity);
    obs_.setZero(static_cast<Eigen::Index>(obs_dim), cap);
    next_obs_.setZero(static_cast<Eigen::Index>(obs_dim), cap);
    physical_.setZero(static_cast<Eigen::Index>(physical_dim), cap);
    actions_.assign(capacity, 0);
    rewards_.assign(capacity, 0.0);
    returns_.assign(capacity, std::numeric_limits<double>::quiet_NaN());
    task_labels_.assign(capacity, 0);
    distractor_labels_.assign(capacity, 0);
    serials_.assign(capacity, 0);
}

std::size_t ReplayBuffer::add(const Entry& e) {
    if (static_cast<std::size_t>(e.observation.size()) != obs_dim() ||
        static_cast<std::size_t>(e.next_observation.size()) != obs_dim())
        throw std::invalid_argument("ReplayBuffer::add: observation dimension mismatch");
    if (static_cast<std::size_t>(e.physical_state.size()) != physical_dim())
        throw std::invalid_argument("ReplayBuffer::add: physical state dimension mismatch");
    if (e.action >= n_actions_) throw std::invalid_argument("ReplayBuffer::add: invalid action");

    const std::size_t slot = next_;
    const auto col = static_cast<Eigen::Index>(slot);
    obs_.col(col) = e.observation;
    next_obs_.col(col) = e.next_observation;
    physical_.col(col) = e.physical_state;
    actions_[slot] = e.action;
    rewards_[slot] = e.reward;
    returns_[slot] = std::numeric_limits<double>::quiet_NaN();
    task_labels_[slot] = e.task_label;
    distractor_labels_[slot] = e.distractor_label;
    serials_[slot] = ++serial_;
    pending_.push_back(serial_);

    next_ = (next_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
    return slot;
}

void ReplayBuffer::settle_returns(double discount, bool episode_over) {
    double g = 0.0;
    for (auto it = pending_.rbegin(); it != pending_.rend(); ++it) {
        // serial s was written to slot (s - 1) % capacity
        const std::size_t slot = static_cast<std::size_t>((*it - 1) % capacity_);
        if (serials_[slot] != *it) break;  // overwritten by a later transition
        g = rewards_[slot] + discount * g;
        returns_[slot] = g;
    }
    if (episode_over) pending_.clear();
}

std::vector<std::size_t> ReplayBuffer::chronological_slots() const {
    std::vector<std::size_t> out;
    out.reserve(size_);
    const std::size_t start = size_ < capacity_ ? 0 : next_;
    for (std::size_t i = 0; i < size_; ++i) out.push_back((start + i) % capacity_);
    return out;
}

std::vector<std::size_t> ReplayBuffer::sample_slots(std::size_t batch, std::mt19937_64& rng) const {
    if (batch == 0) throw std::invalid_argument("ReplayBuffer::sample: batch must be positive");
    if (batch > size_)
        throw std::invalid_argument("ReplayBuffer::sample: buffer holds " + std::to_string(size_) +
                                    " transitions, fewer than the batch size " + std::to_string(batch));
    // Floyd's algorithm: uniform subset without replacement
    std::vector<std::size_t> chosen;
    chosen.reserve(batch);
    for (std::size_t j = size_ - batch; j < size_; ++j) {
        std::uniform_int_distribution<std::size_t> pick(0, j);
        std::size_t t = pick(rng);
        if (std::find(chosen.begin(), chosen.end(), t) != chosen.end())
            chosen.push_back(j);
        else
            chosen.push_back(t);
    }
    std::shuffle(chosen.begin(), chosen.end(), rng);
    return chosen;
}

TransitionBatch ReplayBuffer::gather(const std::vector<std::size_t>& slots) const {
    TransitionBatch b;
    const auto n = static_cast<Eigen::Index>(slots.size());
    b.observations.resize(obs_.rows(), n);
    b.next_observations.resize(obs_.rows(), n);
    b.action_one_hot.setZero(static_cast<Eigen::Index>(n_actions_), n);
    b.rewards.resize(n);
    b.actions.resize(slots.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t s = slots[static_cast<std::size_t>(i)];
        if (s >= size_) throw std::out_of_range("ReplayBuffer::gather: slot out of range");
        b.observations.col(i) = obs_.col(static_cast<Eigen::Index>(s));
        b.next_observations.col(i) = next_obs_.col(static_cast<Eigen::Index>(s));
        b.actions[static_cast<std::size_t>(i)] = actions_[s];
        b.action_one_hot(static_cast<Eigen::Index>(actions_[s]), i) = 1.0;
        b.rewards(i) = rewards_[s];
    }
    return b;
}

TransitionBatch ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng) const {
    return gather(sample_slots(batch, rng));
}

TransitionBatch ReplayBuffer::sample(std::size_t batch, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    return sample(batch, rng);
}

void ReplayBuffer::save_to(Container& c, const std::string& prefix) const {
    // stored oldest-first so a restored buffer continues the ring correctly
    const auto slots = chronological_slots();
    const auto n = static_cast<Eigen::Index>(slots.size());
    Eigen::MatrixXd obs(n, obs_.rows()), next(n, obs_.rows()), phys(n, physical_.rows());
    Eigen::VectorXd actions(n), rewards(n), returns(n), task(n), distractor(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t s = slots[static_cast<std::size_t>(i)];
        obs.row(i) = obs_.col(static_cast<Eigen::Index>(s)).transpose();
        next.row(i) = next_obs_.col(static_cast<Eigen::Index>(s)).transpose();
        phys.row(i) = physical_.col(static_cast<Eigen::Index>(s)).transpose();
        actions(i) = static_cast<double>(actions_[s]);
        rewards(i) = rewards_[s];
        returns(i) = returns_[s];
        task(i) = static_cast<double>(task_labels_[s]);
        distractor(i) = static_cast<double>(distractor_labels_[s]);
    }
    Eigen::VectorXd meta(4);
    meta << static_cast<double>(capacity_), static_cast<double>(obs_.rows()), static_cast<double>(n_actions_),
        static_cast<double>(physical_.rows());
    c.put_vector(prefix + "meta", meta);
    c.put_matrix(prefix + "observations", obs);
    c.put_matrix(prefix + "next_observations", next);
    c.put_matrix(prefix + "physical_states", phys);
    c.put_vector(prefix + "actions", actions);
    c.put_vector(prefix + "rewards", rewards);
    c.put_vector(prefix + "returns", returns);
    c.put_vector(prefix + "task_labels", task);
    c.put_vector(prefix + "distractor_labels", distractor);
}

ReplayBuffer ReplayBuffer::load_from(const Container& c, const std::string& prefix) {
    Eigen::VectorXd meta = c.vector(prefix + "meta");
    if (meta.size() != 4) throw std::runtime_error("buffer dump: bad meta entry");
    ReplayBuffer buf(static_cast<std::size_t>(meta(0)), static_cast<std::size_t>(meta(1)),
                     static_cast<std::size_t>(meta(2)), static_cast<std::size_t>(meta(3)));
    Eigen::MatrixXd obs = c.matrix(prefix + "observations");
    Eigen::MatrixXd next = c.matrix(prefix + "next_observations");
    Eigen::MatrixXd phys = c.matrix(prefix + "physical_states");
    Eigen::VectorXd actions = c.vector(prefix + "actions");
    Eigen::VectorXd rewards = c.vector(prefix + "rewards");
    Eigen::VectorXd returns = c.vector(prefix + "returns");
    Eigen::VectorXd task = c.vector(prefix + "task_labels");
    Eigen::VectorXd distractor = c.vector(prefix + "distractor_labels");
    const Eigen::Index n = obs.rows();
    if (next.rows() != n || phys.rows() != n || actions.size() != n || rewards.size() != n || returns.size() != n ||
        task.size() != n || distractor.size() != n || static_cast<std::size_t>(n) > buf.capacity_)
        throw std::runtime_error("buffer dump: inconsistent array lengths");
    for (Eigen::Index i = 0; i < n; ++i) {
        Entry e;
        e.observation = obs.row(i).transpose();
        e.next_observation = next.row(i).transpose();
        e.physical_state = phys.row(i).transpose();
        e.action = static_cast<std::size_t>(actions(i));
        e.reward = rewards(i);
        e.task_label = static_cast<std::int64_t>(task(i));
        e.distractor_label = static_cast<std::int64_t>(distractor(i));
        auto slot = buf.add(e);
        buf.returns_[slot] = returns(i);
    }
    buf.pending_.clear();
    return buf;
}

void collect(DistractedEnv& env, ReplayBuffer& buffer, std::size_t n_steps, std::mt19937_64& policy_rng) {
    std::uniform_int_distribution<std::size_t> uniform(0, env.n_actions() - 1);
    const double discount = env.config().return_discount;
    for (std::size_t i = 0; i < n_steps; ++i) {
        if (env.needs_reset()) env.reset();
        ReplayBuffer::Entry e;
        e.observation = env.observation();
        e.physical_state = env.physical_state();
        e.task_label = env.task_label();
        e.distractor_label = env.distractor_label();
        e.action = uniform(policy_rng);
        StepResult r = env.step(e.action);
        e.reward = r.reward;
        e.next_observation = std::move(r.observation);
        buffer.add(e);
        if (r.done) buffer.settle_returns(discount, true);
    }
    buffer.settle_returns(discount, false);
}

void collect(DistractedEnv& env, ReplayBuffer& buffer, std::size_t n_steps, std::uint64_t seed) {
    env.reset(seed);
    std::mt19937_64 rng(derive_seed(seed, 0x706f6c));
    collect(env, buffer, n_steps, rng);
}

}  // namespace cbm
