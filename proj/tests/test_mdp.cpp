#include "cbm/mdp.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace cbm;

namespace {

// Optimal values by exhaustive search over deterministic stationary policies,
// each evaluated by a direct linear solve.
std::vector<double> brute_force_values(const FiniteMdp& mdp) {
    const std::size_t n = mdp.n_states(), m = mdp.n_actions();
    std::vector<double> best(n, -1.0);
    std::vector<std::size_t> policy(n, 0);
    for (;;) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd r(n);
        for (std::size_t s = 0; s < n; ++s) {
            auto row = mdp.transition(s, policy[s]);
            for (std::size_t t = 0; t < n; ++t) a(s, t) -= mdp.discount() * row[t];
            r(s) = mdp.reward(s, policy[s]);
        }
        Eigen::VectorXd v = a.fullPivLu().solve(r);
        for (std::size_t s = 0; s < n; ++s) best[s] = std::max(best[s], v(s));
        std::size_t i = 0;
        while (i < n && ++policy[i] == m) policy[i++] = 0;
        if (i == n) break;
    }
    return best;
}

FiniteMdp self_loops(std::vector<double> rewards, double discount) {
    FiniteMdp mdp(rewards.size(), 1, discount);
    for (std::size_t s = 0; s < rewards.size(); ++s) {
        mdp.transition(s, 0)[s] = 1.0;
        mdp.reward(s, 0) = rewards[s];
    }
    return mdp;
}

double residual(const FiniteMdp& mdp, const std::vector<double>& v) {
    auto tv = bellman_backup(mdp, v);
    double r = 0.0;
    for (std::size_t s = 0; s < v.size(); ++s) r = std::max(r, std::abs(tv[s] - v[s]));
    return r;
}

}  // namespace

TEST_SUITE("mdp") {

TEST_CASE("single state geometric series") {
    auto v = value_iteration(self_loops({1.0}, 0.5), 1e-12);
    CHECK(v.values[0] == doctest::Approx(2.0).epsilon(1e-11));
}

TEST_CASE("zero rewards give zero values") {
    auto mdp = random_mdp(3, 5, 2, 0.9);
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t a = 0; a < 2; ++a) mdp.reward(s, a) = 0.0;
    auto v = value_iteration(mdp, 1e-10);
    for (double x : v.values) CHECK(x == 0.0);
}

TEST_CASE("two self-loop states match closed form and policy enumeration") {
    auto mdp = self_loops({1.0, 0.0}, 0.5);
    auto v = value_iteration(mdp, 1e-12);
    auto oracle = brute_force_values(mdp);
    CHECK(v.values[0] == doctest::Approx(2.0).epsilon(1e-11));
    CHECK(std::abs(v.values[1]) < 1e-12);
    CHECK(oracle[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(std::abs(oracle[1]) < 1e-14);
}

TEST_CASE("value iteration agrees with policy enumeration on random instances") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const std::size_t n = 2 + seed % 5, m = 1 + seed % 3;
        auto mdp = random_mdp(seed, n, m, 0.3 + 0.02 * static_cast<double>(seed));
        const double tol = 1e-10;
        auto v = value_iteration(mdp, tol);
        auto oracle = brute_force_values(mdp);
        CHECK(residual(mdp, v.values) <= tol);
        // ||V - V*|| <= residual / (1 - gamma)
        for (std::size_t s = 0; s < n; ++s)
            CHECK(std::abs(v.values[s] - oracle[s]) <= tol / (1.0 - mdp.discount()) + 1e-12);
        for (double x : v.values) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0 / (1.0 - mdp.discount()) + 1e-12);
        }
    }
}

TEST_CASE("successive changes contract by the discount") {
    auto mdp = random_mdp(11, 6, 3, 0.8);
    auto v = value_iteration(mdp, 1e-12);
    REQUIRE(v.deltas.size() > 2);
    // slack of a few ulps of |V| <= 5
    for (std::size_t i = 1; i < v.deltas.size(); ++i) CHECK(v.deltas[i] <= 0.8 * v.deltas[i - 1] + 1e-14);
}

TEST_CASE("values are equivariant under state relabeling") {
    auto mdp = random_mdp(5, 5, 2, 0.9);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};  // new index of old state
    FiniteMdp relabeled(5, 2, 0.9);
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
            relabeled.reward(perm[s], a) = mdp.reward(s, a);
            for (std::size_t t = 0; t < 5; ++t) relabeled.transition(perm[s], a)[perm[t]] = mdp.transition(s, a)[t];
        }
    auto v = value_iteration(mdp, 1e-12);
    auto w = value_iteration(relabeled, 1e-12);
    for (std::size_t s = 0; s < 5; ++s) CHECK(w.values[perm[s]] == doctest::Approx(v.values[s]).epsilon(1e-10));
}

TEST_CASE("random_mdp is seeded and valid") {
    CHECK(random_mdp(7, 4, 2) == random_mdp(7, 4, 2));
    CHECK_FALSE(random_mdp(7, 4, 2) == random_mdp(8, 4, 2));
    auto mdp = random_mdp(7, 4, 2);
    CHECK_NOTHROW(mdp.validate());
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
            auto row = mdp.transition(s, a);
            CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) <= 1e-12);
        }
}

TEST_CASE("validation rejects malformed models") {
    auto mdp = random_mdp(1, 3, 2);
    auto bad = mdp;
    bad.reward(0, 0) = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = mdp;
    bad.transition(1, 1)[0] += 1e-6;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = mdp;
    bad.set_discount(1.0);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("non-finite input is reported") {
    auto mdp = self_loops({1.0}, 0.5);
    mdp.reward(0, 0) = std::nan("");
    CHECK_THROWS(value_iteration(mdp, 1e-9));
}

TEST_CASE("text format round-trips exactly") {
    auto mdp = random_mdp(21, 5, 3, 0.95);
    std::stringstream ss;
    write_mdp(ss, mdp);
    CHECK(read_mdp(ss) == mdp);
}

TEST_CASE("text reader is strict") {
    const std::string good =
        "cbm_mdp 1\nn_states 2\nn_actions 1\ndiscount 0.5\n# comment\n"
        "reward 0 : 1\nreward 1 : 0\ntransition 0 0 : 1 0\ntransition 1 0 : 0 1\n";
    std::istringstream in(good);
    auto mdp = read_mdp(in);
    CHECK(mdp.reward(0, 0) == 1.0);
    CHECK(mdp.transition(1, 0)[1] == 1.0);

    std::istringstream missing("cbm_mdp 1\nn_states 2\nn_actions 1\ndiscount 0.5\nreward 0 : 1\n"
                               "transition 0 0 : 1 0\ntransition 1 0 : 0 1\n");
    CHECK_THROWS(read_mdp(missing));
    std::istringstream dup(good + "reward 1 : 0\n");
    CHECK_THROWS(read_mdp(dup));
    std::istringstream unknown(good + "bogus 1\n");
    CHECK_THROWS(read_mdp(unknown));
}

}  // TEST_SUITE
