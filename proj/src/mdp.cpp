#include "cbm/mdp.hpp"

#include "cbm/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace cbm {

FiniteMdp::FiniteMdp(std::size_t n_states, std::size_t n_actions, double discount)
    : n_states_(n_states), n_actions_(n_actions), discount_(discount),
      transitions_(n_states * n_actions * n_states, 0.0), rewards_(n_states * n_actions, 0.0) {
    if (n_states == 0 || n_actions == 0)
        throw std::invalid_argument("FiniteMdp needs at least one state and one action");
}

std::span<double> FiniteMdp::transition(std::size_t s, std::size_t a) {
    return {transitions_.data() + (s * n_actions_ + a) * n_states_, n_states_};
}

std::span<const double> FiniteMdp::transition(std::size_t s, std::size_t a) const {
    return {transitions_.data() + (s * n_actions_ + a) * n_states_, n_states_};
}

void FiniteMdp::validate() const {
    if (n_states_ == 0 || n_actions_ == 0) throw std::invalid_argument("empty MDP");
    if (!(discount_ >= 0.0 && discount_ < 1.0))
        throw std::invalid_argument("discount must lie in [0,1), got " + format_double(discount_));
    for (std::size_t s = 0; s < n_states_; ++s) {
        for (std::size_t a = 0; a < n_actions_; ++a) {
            double r = reward(s, a);
            if (!(r >= 0.0 && r <= 1.0))
                throw std::invalid_argument("reward(" + std::to_string(s) + "," + std::to_string(a) +
                                            ") outside [0,1]");
            double sum = 0.0;
            for (double p : transition(s, a)) {
                if (!(p >= 0.0)) throw std::invalid_argument("negative or NaN transition probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw std::invalid_argument("transition row (" + std::to_string(s) + "," + std::to_string(a) +
                                            ") sums to " + format_double(sum));
        }
    }
}

std::vector<double> bellman_backup(const FiniteMdp& mdp, std::span<const double> values) {
    const std::size_t n = mdp.n_states();
    std::vector<double> out(n);
    for (std::size_t s = 0; s < n; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            auto row = mdp.transition(s, a);
            double expected = 0.0;
            for (std::size_t u = 0; u < n; ++u) expected += row[u] * values[u];
            best = std::max(best, mdp.reward(s, a) + mdp.discount() * expected);
        }
        out[s] = best;
    }
    return out;
}

ValueFunction value_iteration(const FiniteMdp& mdp, double tol, std::size_t max_iterations) {
    mdp.validate();
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
    const double gamma = mdp.discount();
    // ||V_{i+1} - T V_{i+1}|| <= gamma ||V_{i+1} - V_i||
    const double stop = gamma > 0.0 ? tol * (1.0 - gamma) / gamma : std::numeric_limits<double>::infinity();

    ValueFunction vf;
    vf.values.assign(mdp.n_states(), 0.0);
    while (vf.iterations < max_iterations) {
        auto next = bellman_backup(mdp, vf.values);
        double delta = 0.0;
        for (std::size_t s = 0; s < next.size(); ++s) {
            if (!std::isfinite(next[s])) throw std::runtime_error("value iteration produced a non-finite value");
            delta = std::max(delta, std::abs(next[s] - vf.values[s]));
        }
        vf.values = std::move(next);
        vf.deltas.push_back(delta);
        ++vf.iterations;
        if (delta <= stop) return vf;
    }
    throw std::runtime_error("value iteration did not converge within " + std::to_string(max_iterations) +
                             " iterations");
}

FiniteMdp random_mdp(std::uint64_t seed, std::size_t n_states, std::size_t n_actions, double discount) {
    FiniteMdp mdp(n_states, n_actions, discount);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = 0; s < n_states; ++s) {
        for (std::size_t a = 0; a < n_actions; ++a) {
            mdp.reward(s, a) = unit(rng);
            auto row = mdp.transition(s, a);
            double sum = 0.0;
            for (auto& p : row) {
                // strictly positive draws keep every row dense
                p = unit(rng) + 1e-3;
                sum += p;
            }
            for (auto& p : row) p /= sum;
            // absorb the rounding residue so the row sums to 1 to the last bit we can get
            double check = 0.0;
            for (std::size_t u = 0; u + 1 < n_states; ++u) check += row[u];
            row[n_states - 1] = std::max(0.0, 1.0 - check);
        }
    }
    return mdp;
}

void write_mdp(std::ostream& out, const FiniteMdp& mdp) {
    out << "cbm_mdp 1\n";
    out << "n_states " << mdp.n_states() << "\n";
    out << "n_actions " << mdp.n_actions() << "\n";
    out << "discount " << format_double(mdp.discount()) << "\n";
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        out << "reward " << s << " :";
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) out << ' ' << format_double(mdp.reward(s, a));
        out << "\n";
    }
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            out << "transition " << s << ' ' << a << " :";
            for (double p : mdp.transition(s, a)) out << ' ' << format_double(p);
            out << "\n";
        }
    }
}

namespace {

std::vector<double> parse_values(std::istringstream& ls, std::size_t expected, std::size_t line_no) {
    std::vector<double> values;
    std::string tok;
    while (ls >> tok) values.push_back(parse_double(tok));
    if (values.size() != expected)
        throw std::invalid_argument("line " + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                                    " values, got " + std::to_string(values.size()));
    return values;
}

std::size_t parse_index(std::istringstream& ls, std::size_t bound, std::size_t line_no) {
    long long idx = -1;
    if (!(ls >> idx) || idx < 0 || static_cast<std::size_t>(idx) >= bound)
        throw std::invalid_argument("line " + std::to_string(line_no) + ": bad index");
    return static_cast<std::size_t>(idx);
}

void expect_colon(std::istringstream& ls, std::size_t line_no) {
    std::string colon;
    if (!(ls >> colon) || colon != ":") throw std::invalid_argument("line " + std::to_string(line_no) + ": expected ':'");
}

}  // namespace

FiniteMdp read_mdp(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::size_t n = 0, m = 0;
    double gamma = -1.0;
    bool have_header = false;
    FiniteMdp mdp;
    bool allocated = false;
    std::vector<bool> seen_reward, seen_transition;

    auto ensure_allocated = [&] {
        if (allocated) return;
        if (n == 0 || m == 0 || gamma < 0.0)
            throw std::invalid_argument("line " + std::to_string(line_no) +
                                        ": n_states, n_actions and discount must precede data rows");
        mdp = FiniteMdp(n, m, gamma);
        seen_reward.assign(n, false);
        seen_transition.assign(n * m, false);
        allocated = true;
    };

    while (std::getline(in, line)) {
        ++line_no;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        std::istringstream ls{std::string(t)};
        std::string key;
        ls >> key;
        if (!have_header) {
            int version = 0;
            if (key != "cbm_mdp" || !(ls >> version) || version != 1)
                throw std::invalid_argument("missing 'cbm_mdp 1' header");
            have_header = true;
        } else if (key == "n_states" || key == "n_actions") {
            if (allocated) throw std::invalid_argument("line " + std::to_string(line_no) + ": header after data");
            long long v = 0;
            if (!(ls >> v) || v <= 0) throw std::invalid_argument("line " + std::to_string(line_no) + ": bad " + key);
            (key == "n_states" ? n : m) = static_cast<std::size_t>(v);
        } else if (key == "discount") {
            if (allocated) throw std::invalid_argument("line " + std::to_string(line_no) + ": header after data");
            std::string tok;
            ls >> tok;
            gamma = parse_double(tok);
        } else if (key == "reward") {
            ensure_allocated();
            auto s = parse_index(ls, n, line_no);
            expect_colon(ls, line_no);
            auto values = parse_values(ls, m, line_no);
            if (seen_reward[s]) throw std::invalid_argument("line " + std::to_string(line_no) + ": duplicate reward row");
            seen_reward[s] = true;
            for (std::size_t a = 0; a < m; ++a) mdp.reward(s, a) = values[a];
        } else if (key == "transition") {
            ensure_allocated();
            auto s = parse_index(ls, n, line_no);
            auto a = parse_index(ls, m, line_no);
            expect_colon(ls, line_no);
            auto values = parse_values(ls, n, line_no);
            if (seen_transition[s * m + a])
                throw std::invalid_argument("line " + std::to_string(line_no) + ": duplicate transition row");
            seen_transition[s * m + a] = true;
            std::copy(values.begin(), values.end(), mdp.transition(s, a).begin());
        } else {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    if (!have_header) throw std::invalid_argument("missing 'cbm_mdp 1' header");
    ensure_allocated();
    if (std::find(seen_reward.begin(), seen_reward.end(), false) != seen_reward.end())
        throw std::invalid_argument("missing reward row");
    if (std::find(seen_transition.begin(), seen_transition.end(), false) != seen_transition.end())
        throw std::invalid_argument("missing transition row");
    mdp.validate();
    return mdp;
}

FiniteMdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_mdp(in);
}

void save_mdp(const std::string& path, const FiniteMdp& mdp) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_mdp(out, mdp);
}

}  // namespace cbm
