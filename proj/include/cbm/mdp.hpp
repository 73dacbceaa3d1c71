#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cbm {

/// Tabular MDP with deterministic action-dependent rewards r(s,a) in [0,1].
///
/// Transition rows are stored flat: row (s,a) is a probability vector over
/// next states of length n_states.
class FiniteMdp {
public:
    FiniteMdp() = default;
    FiniteMdp(std::size_t n_states, std::size_t n_actions, double discount);

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    double discount() const { return discount_; }
    void set_discount(double discount) { discount_ = discount; }

    std::span<double> transition(std::size_t s, std::size_t a);
    std::span<const double> transition(std::size_t s, std::size_t a) const;

    double& reward(std::size_t s, std::size_t a) { return rewards_[s * n_actions_ + a]; }
    double reward(std::size_t s, std::size_t a) const { return rewards_[s * n_actions_ + a]; }

    /// Throws std::invalid_argument naming the first violated invariant.
    void validate() const;

    bool operator==(const FiniteMdp&) const = default;

private:
    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    double discount_ = 0.0;
    std::vector<double> transitions_;
    std::vector<double> rewards_;
};

struct ValueFunction {
    std::vector<double> values;
    std::size_t iterations = 0;
    /// Sup-norm change between successive iterates, one entry per iteration.
    std::vector<double> deltas;
};

/// Bellman optimality operator applied once.
std::vector<double> bellman_backup(const FiniteMdp& mdp, std::span<const double> values);

/// Value iteration from V_0 = 0. The returned values satisfy
/// ||V - T V||_inf <= tol.
ValueFunction value_iteration(const FiniteMdp& mdp, double tol, std::size_t max_iterations = 1'000'000);

/// Random dense MDP: transition rows are normalized uniform draws, rewards are
/// uniform on [0,1]. Deterministic in `seed`.
FiniteMdp random_mdp(std::uint64_t seed, std::size_t n_states, std::size_t n_actions, double discount = 0.9);

// Plain-text format:
//
//   cbm_mdp 1
//   n_states <n>
//   n_actions <m>
//   discount <gamma>
//   reward <s> : r(s,0) ... r(s,m-1)
//   transition <s> <a> : p(0|s,a) ... p(n-1|s,a)
//
// Lines starting with '#' are comments. Every reward and transition row must
// appear exactly once.
void write_mdp(std::ostream& out, const FiniteMdp& mdp);
FiniteMdp read_mdp(std::istream& in);
FiniteMdp load_mdp(const std::string& path);
void save_mdp(const std::string& path, const FiniteMdp& mdp);

}  // namespace cbm
