#include "cbm/bisim.hpp"

#include <doctest.h>

#include <cmath>

using namespace cbm;

namespace {

FiniteMdp two_state_self_loops(double discount) {
    FiniteMdp mdp(2, 1, discount);
    mdp.transition(0, 0)[0] = 1.0;
    mdp.transition(1, 0)[1] = 1.0;
    mdp.reward(0, 0) = 1.0;
    mdp.reward(1, 0) = 0.0;
    return mdp;
}

// Two states: W1 between (p, 1-p) and (q, 1-q) under ground d is |p - q| d.
double two_state_oracle(const FiniteMdp& mdp, double c) {
    double d = 0.0;
    for (int it = 0; it < 100000; ++it) {
        double next = 0.0;
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            double w = std::abs(mdp.transition(0, a)[0] - mdp.transition(1, a)[0]) * d;
            next = std::max(next, (1.0 - c) * std::abs(mdp.reward(0, a) - mdp.reward(1, a)) + c * w);
        }
        if (std::abs(next - d) < 1e-15) return next;
        d = next;
    }
    return d;
}

void check_axioms(const Eigen::MatrixXd& d) {
    const auto n = d.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        CHECK(d(i, i) == 0.0);
        for (Eigen::Index j = 0; j < n; ++j) {
            CHECK(d(i, j) == d(j, i));
            CHECK(d(i, j) >= 0.0);
            CHECK(d(i, j) <= 1.0 + 1e-12);
            for (Eigen::Index k = 0; k < n; ++k) CHECK(d(i, k) <= d(i, j) + d(j, k) + 1e-8);
        }
    }
}

}  // namespace

TEST_SUITE("bisim") {

TEST_CASE("worked two-state fixed point") {
    auto mdp = two_state_self_loops(0.5);
    auto m = bisim_fixed_point(mdp, 0.5);
    CHECK(std::abs(m.dist(0, 1) - 1.0) <= 1e-9);
    auto report = verify_value_bounds(mdp, m, 0.5);
    CHECK(report.ok());
    CHECK(report.values[0] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK((1.0 - 0.5) * std::abs(report.values[0] - report.values[1]) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("c = 0 reduces to the reward gap") {
    auto mdp = random_mdp(5, 6, 3, 0.0);
    auto m = bisim_fixed_point(mdp, 0.0);
    for (std::size_t s = 0; s < 6; ++s)
        for (std::size_t t = 0; t < 6; ++t) {
            double gap = 0.0;
            for (std::size_t a = 0; a < 3; ++a) gap = std::max(gap, std::abs(mdp.reward(s, a) - mdp.reward(t, a)));
            CHECK(m.dist(Eigen::Index(s), Eigen::Index(t)) == doctest::Approx(gap).epsilon(1e-15));
        }
}

TEST_CASE("duplicated states are at distance zero") {
    auto base = random_mdp(8, 3, 2, 0.9);
    // state 3 copies state 0; mass sent to state 0 is split between 0 and 3
    FiniteMdp mdp(4, 2, 0.9);
    for (std::size_t s = 0; s < 4; ++s) {
        const std::size_t src = s == 3 ? 0 : s;
        for (std::size_t a = 0; a < 2; ++a) {
            mdp.reward(s, a) = base.reward(src, a);
            auto row = base.transition(src, a);
            auto out = mdp.transition(s, a);
            out[0] = 0.5 * row[0];
            out[3] = 0.5 * row[0];
            out[1] = row[1];
            out[2] = row[2];
        }
    }
    auto m = bisim_fixed_point(mdp, 0.9);
    CHECK(m.dist(0, 3) <= 1e-9);
}

TEST_CASE("two-state metrics match a scalar fixed-point oracle") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const double c = seed % 2 ? 0.9 : 0.5;
        auto mdp = random_mdp(seed, 2, 1 + seed % 3, c);
        auto m = bisim_fixed_point(mdp, c, {1e-12, 100000});
        CHECK(m.dist(0, 1) == doctest::Approx(two_state_oracle(mdp, c)).epsilon(1e-9));
    }
}

TEST_CASE("fixed point residual is within tolerance") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto mdp = random_mdp(seed, 6, 2, 0.9);
        auto m = bisim_fixed_point(mdp, 0.9);
        Eigen::MatrixXd next = bisim_operator(mdp, 0.9, m.dist);
        CHECK((next - m.dist).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("metric axioms on random instances") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto mdp = random_mdp(100 + seed, 2 + seed % 7, 1 + seed % 3, 0.9);
        check_axioms(bisim_fixed_point(mdp, seed % 2 ? 0.9 : 0.5).dist);
    }
}

TEST_CASE("iterates contract by c") {
    auto mdp = random_mdp(3, 7, 3, 0.9);
    auto m = bisim_fixed_point(mdp, 0.9, {1e-13, 100000});
    for (std::size_t i = 1; i < m.deltas.size(); ++i) CHECK(m.deltas[i] <= 0.9 * m.deltas[i - 1] + 1e-15);
}

TEST_CASE("scaling rewards scales the metric") {
    auto mdp = random_mdp(12, 5, 2, 0.5);
    auto scaled = mdp;
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t a = 0; a < 2; ++a) scaled.reward(s, a) *= 0.3;
    auto d = bisim_fixed_point(mdp, 0.5, {1e-13, 100000}).dist;
    auto e = bisim_fixed_point(scaled, 0.5, {1e-13, 100000}).dist;
    CHECK((e - 0.3 * d).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("constant rewards give the zero metric") {
    auto mdp = random_mdp(4, 5, 2, 0.9);
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t a = 0; a < 2; ++a) mdp.reward(s, a) = 0.4;
    auto m = bisim_fixed_point(mdp, 0.9);
    CHECK(m.dist.cwiseAbs().maxCoeff() == 0.0);
    auto r = verify_value_bounds(mdp, m, 0.1);
    CHECK(r.ok());
}

TEST_CASE("value bounds hold on random instances") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const double c = seed % 2 ? 0.9 : 0.5;
        auto mdp = random_mdp(seed, 2 + seed % 7, 1 + seed % 3, c);
        auto m = bisim_fixed_point(mdp, c);
        auto r = verify_value_bounds(mdp, m, median_pairwise_distance(m.dist));
        CHECK(r.ok());
        CHECK(r.min_pair_slack >= -1e-8);
    }
}

TEST_CASE("hypotheses are enforced") {
    auto mdp = random_mdp(1, 3, 2, 0.9);
    auto m = bisim_fixed_point(mdp, 0.5);
    CHECK_THROWS_AS(verify_value_bounds(mdp, m, 0.1), std::invalid_argument);
    auto ok = bisim_fixed_point(mdp, 0.9);
    CHECK_THROWS_AS(verify_value_bounds(mdp, ok, 0.0), std::invalid_argument);
    CHECK_THROWS(bisim_fixed_point(mdp, 1.0));
}

}  // TEST_SUITE
