#include "cbm/env.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

using namespace cbm;

namespace {

DistractedEnvConfig config_for(TaskKind task) {
    DistractedEnvConfig c;
    c.task = task;
    c.episode_length = 25;
    return c;
}

std::vector<Eigen::VectorXd> rollout(DistractedEnv& env, std::uint64_t seed, std::size_t n) {
    std::vector<Eigen::VectorXd> obs{env.reset(seed)};
    for (std::size_t i = 0; i < n; ++i) obs.push_back(env.step(i % env.n_actions()).observation);
    return obs;
}

}  // namespace

TEST_SUITE("env") {

TEST_CASE("episodes are deterministic in the seed") {
    for (TaskKind task : {TaskKind::pendulum, TaskKind::track, TaskKind::finite_mdp}) {
        DistractedEnv a(config_for(task)), b(config_for(task));
        auto ra = rollout(a, 7, 20), rb = rollout(b, 7, 20);
        for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i] == rb[i]);
        auto rc = rollout(a, 8, 20);
        CHECK_FALSE(ra[0] == rc[0]);
    }
}

TEST_CASE("rewards lie in the unit interval") {
    for (TaskKind task : {TaskKind::pendulum, TaskKind::track, TaskKind::finite_mdp}) {
        DistractedEnv env(config_for(task));
        env.reset(3);
        std::mt19937_64 rng(4);
        for (int i = 0; i < 2000; ++i) {
            if (env.needs_reset()) env.reset();
            auto r = env.step(rng() % env.n_actions());
            CHECK(r.reward >= 0.0);
            CHECK(r.reward <= 1.0);
        }
    }
}

TEST_CASE("distractor does not affect the task") {
    for (TaskKind task : {TaskKind::pendulum, TaskKind::track, TaskKind::finite_mdp}) {
        auto cfg = config_for(task);
        cfg.distractor_step = 0.2;
        DistractedEnv a(cfg), b(cfg);
        a.reset(11, 100);
        b.reset(11, 200);
        CHECK_FALSE(a.distractor() == b.distractor());
        for (int i = 0; i < 20; ++i) {
            auto ra = a.step(static_cast<std::size_t>(i) % a.n_actions());
            auto rb = b.step(static_cast<std::size_t>(i) % b.n_actions());
            CHECK(ra.reward == rb.reward);
            CHECK(a.physical_state() == b.physical_state());
            CHECK(a.task_label() == b.task_label());
        }
    }
}

TEST_CASE("distractor persistence") {
    auto cfg = config_for(TaskKind::track);
    cfg.distractor_step = 0.0;
    DistractedEnv env(cfg);
    env.reset(5);
    Eigen::VectorXd d0 = env.distractor();
    for (int i = 0; i < 10; ++i) env.step(1);
    CHECK(env.distractor() == d0);
    CHECK((d0.array().abs() <= 1.0).all());

    cfg.distractor_step = 0.3;
    DistractedEnv drift(cfg);
    drift.reset(5);
    d0 = drift.distractor();
    drift.step(0);
    CHECK_FALSE(drift.distractor() == d0);
    for (int i = 0; i < 20; ++i) drift.step(0);
    CHECK((drift.distractor().array().abs() <= 1.0).all());
}

TEST_CASE("observations are a full-rank mixing of features") {
    auto cfg = config_for(TaskKind::pendulum);
    cfg.obs_noise = 0.0;
    DistractedEnv env(cfg);
    Eigen::VectorXd obs = env.reset(2);
    Eigen::VectorXd features(env.mixing().cols());
    features << env.task_features(), env.distractor();
    CHECK((env.mixing() * features - obs).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(env.mixing().rows() == 24);
    CHECK(env.mixing().cols() == 11);
    Eigen::VectorXd recovered = env.mixing().colPivHouseholderQr().solve(obs);
    CHECK((recovered - features).cwiseAbs().maxCoeff() <= 1e-9);

    cfg.obs_dim = 5;
    CHECK_THROWS_AS(DistractedEnv{cfg}, std::invalid_argument);
}

TEST_CASE("frame stacking") {
    auto cfg = config_for(TaskKind::track);
    cfg.frame_stack = 3;
    DistractedEnv env(cfg);
    Eigen::VectorXd o0 = env.reset(1);
    CHECK(o0.size() == 72);
    CHECK(o0.segment(0, 24) == o0.segment(48, 24));
    Eigen::VectorXd o1 = env.step(2).observation;
    CHECK(o1.segment(24, 24) == o0.segment(48, 24));
}

TEST_CASE("track dynamics") {
    auto cfg = config_for(TaskKind::track);
    DistractedEnv env(cfg);
    env.reset(9);
    double x = env.physical_state()(0), v = env.physical_state()(1);
    auto r = env.step(2);
    double v1 = std::clamp(v + cfg.dt * (cfg.track_force - cfg.track_friction * v), -1.0, 1.0);
    double x1 = x + cfg.dt * v1;
    if (std::abs(x1) <= 1.0) {
        CHECK(env.physical_state()(0) == doctest::Approx(x1));
        CHECK(env.physical_state()(1) == doctest::Approx(v1));
        CHECK(r.reward == doctest::Approx(0.5 * (1.0 + x1)));
    }
    for (int i = 0; i < 24; ++i) env.step(2);
    CHECK(env.physical_state()(0) <= 1.0);
    CHECK(env.needs_reset());
}

TEST_CASE("pendulum reward peaks upright") {
    DistractedEnv env(config_for(TaskKind::pendulum));
    env.reset(1);
    for (int i = 0; i < 24; ++i) {
        auto r = env.step(1);
        CHECK(r.reward == doctest::Approx(0.5 * (1.0 + std::cos(env.physical_state()(0)))));
        CHECK(std::abs(env.physical_state()(0)) <= std::numbers::pi);
    }
}

TEST_CASE("finite MDP task follows its transition table") {
    auto cfg = config_for(TaskKind::finite_mdp);
    DistractedEnv env(cfg);
    FiniteMdp mdp = random_mdp(cfg.mdp_seed, cfg.mdp_states, cfg.mdp_actions);
    env.reset(4);
    std::vector<double> counts(cfg.mdp_states, 0.0);
    std::size_t visits = 0;
    for (int i = 0; i < 20000; ++i) {
        if (env.needs_reset()) env.reset();
        const auto s = static_cast<std::size_t>(env.task_label());
        auto r = env.step(0);
        CHECK(r.reward == mdp.reward(s, 0));
        if (s == 0) {
            ++visits;
            counts[static_cast<std::size_t>(env.task_label())] += 1.0;
        }
    }
    REQUIRE(visits > 500);
    auto row = mdp.transition(0, 0);
    const double n = static_cast<double>(visits);
    for (std::size_t u = 0; u < cfg.mdp_states; ++u) {
        const double sd = std::sqrt(row[u] * (1.0 - row[u]) / n);
        CHECK(std::abs(counts[u] / n - row[u]) <= 5.0 * sd + 1e-3);
    }
}

TEST_CASE("invalid use") {
    DistractedEnv env(config_for(TaskKind::track));
    CHECK_THROWS_AS(env.step(0), std::logic_error);
    env.reset(1);
    CHECK_THROWS_AS(env.step(3), std::invalid_argument);
    auto cfg = config_for(TaskKind::track);
    cfg.episode_length = 0;
    CHECK_THROWS_AS(DistractedEnv{cfg}, std::invalid_argument);
}

TEST_CASE("replay buffer ring") {
    ReplayBuffer buf(4, 2, 3, 1);
    for (int i = 0; i < 6; ++i) {
        ReplayBuffer::Entry e;
        e.observation = Eigen::VectorXd::Constant(2, i);
        e.next_observation = Eigen::VectorXd::Constant(2, i + 1);
        e.physical_state = Eigen::VectorXd::Constant(1, i);
        e.action = static_cast<std::size_t>(i % 3);
        e.reward = 0.1 * i;
        buf.add(e);
    }
    CHECK(buf.size() == 4);
    auto slots = buf.chronological_slots();
    REQUIRE(slots.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) CHECK(buf.observation(slots[k])(0) == static_cast<double>(k + 2));

    std::mt19937_64 rng(1);
    auto s = buf.sample_slots(4, rng);
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 4);
    CHECK_THROWS_AS(buf.sample(5, std::uint64_t{1}), std::invalid_argument);
    TransitionBatch b = buf.sample(3, std::uint64_t{2});
    for (std::size_t i = 0; i < 3; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        CHECK(b.next_observations(0, col) == b.observations(0, col) + 1.0);
        CHECK(b.action_one_hot.col(col).sum() == 1.0);
        CHECK(b.action_one_hot(static_cast<Eigen::Index>(b.actions[i]), col) == 1.0);
    }
}

TEST_CASE("discounted returns") {
    ReplayBuffer buf(10, 1, 1, 1);
    const double rewards[] = {1.0, 0.0, 0.5};
    for (double r : rewards) {
        ReplayBuffer::Entry e;
        e.observation = e.next_observation = e.physical_state = Eigen::VectorXd::Zero(1);
        e.reward = r;
        buf.add(e);
    }
    buf.settle_returns(0.5, false);
    CHECK(buf.mc_return(0) == doctest::Approx(1.0 + 0.5 * 0.0 + 0.25 * 0.5));
    CHECK(buf.mc_return(2) == doctest::Approx(0.5));
    buf.settle_returns(0.5, true);
    ReplayBuffer::Entry e;
    e.observation = e.next_observation = e.physical_state = Eigen::VectorXd::Zero(1);
    e.reward = 1.0;
    buf.add(e);
    CHECK(std::isnan(buf.mc_return(3)));
    buf.settle_returns(0.5, true);
    CHECK(buf.mc_return(3) == 1.0);
    CHECK(buf.mc_return(0) == doctest::Approx(1.125));
}

TEST_CASE("buffer save and load") {
    DistractedEnv env(config_for(TaskKind::track));
    ReplayBuffer buf(64, env.observation_dim(), env.n_actions(), env.physical_dim());
    collect(env, buf, 100, 3);
    Container c;
    buf.save_to(c);
    std::stringstream ss;
    c.write(ss);
    ReplayBuffer back = ReplayBuffer::load_from(Container::read(ss));
    REQUIRE(back.size() == buf.size());
    auto a = buf.chronological_slots(), b = back.chronological_slots();
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(back.observation(b[i]) == buf.observation(a[i]));
        CHECK(back.reward(b[i]) == buf.reward(a[i]));
        CHECK(back.task_label(b[i]) == buf.task_label(a[i]));
        CHECK(back.physical_state(b[i]) == buf.physical_state(a[i]));
        const double ra = buf.mc_return(a[i]), rb = back.mc_return(b[i]);
        CHECK((ra == rb || (std::isnan(ra) && std::isnan(rb))));
    }
}

TEST_CASE("collection is deterministic") {
    DistractedEnv e1(config_for(TaskKind::pendulum)), e2(config_for(TaskKind::pendulum));
    ReplayBuffer b1(200, 24, 3, 2), b2(200, 24, 3, 2);
    collect(e1, b1, 150, 42);
    collect(e2, b2, 150, 42);
    for (std::size_t s = 0; s < 150; ++s) {
        CHECK(b1.observation(s) == b2.observation(s));
        CHECK(b1.action(s) == b2.action(s));
    }
}

}  // TEST_SUITE
