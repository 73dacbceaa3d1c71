#include "cbm/config.hpp"
#include "cbm/container.hpp"
#include "cbm/csv.hpp"
#include "cbm/mdp.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

using namespace cbm;

namespace {

std::string error_key(const std::string& text) {
    try {
        parse_run_config_text(text);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<no error>";
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("container round trip") {
    Container c;
    Eigen::MatrixXd m(2, 3);
    m << 1.0, -2.5, 1e-300, std::numeric_limits<double>::infinity(), 0.1, -0.0;
    c.put_matrix("a/m", m);
    c.put_vector("v", Eigen::VectorXd::LinSpaced(5, 0.0, 1.0));
    c.put_text("t", "hello\nworld\0x");
    c.put_array("empty", {{0}, {}});
    std::stringstream ss;
    c.write(ss);
    Container back = Container::read(ss);
    CHECK(back == c);
    CHECK(back.matrix("a/m") == m);
    CHECK(back.text("t") == "hello\nworld");
    CHECK(back.names() == std::vector<std::string>{"a/m", "v", "t", "empty"});
    CHECK(back.has("v"));
    CHECK_FALSE(back.has("w"));
    CHECK_THROWS(back.matrix("missing"));
    CHECK_THROWS(back.text("v"));
    back.put_text("v", "replaced");
    CHECK(back.text("v") == "replaced");
    CHECK(back.names().size() == 4);
}

TEST_CASE("container layout is little-endian and versioned") {
    Container c;
    c.put_vector("x", Eigen::VectorXd::Constant(1, 1.0));
    std::stringstream ss;
    c.write(ss);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 8) == std::string("CBMCKPT\0", 8));
    CHECK(static_cast<unsigned char>(bytes[8]) == 1);
    CHECK(bytes[9] == 0);
    // magic 8 + version 4 + count 4 + kind 1 + name 4+1 + ndim 4 + dim 8 + data 8
    CHECK(bytes.size() == 42);

    std::string corrupt = bytes;
    corrupt[0] = 'X';
    std::istringstream bad(corrupt);
    CHECK_THROWS(Container::read(bad));
    std::istringstream truncated(bytes.substr(0, 30));
    CHECK_THROWS(Container::read(truncated));
}

TEST_CASE("double formatting round-trips") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::uint64_t> bits;
    for (int i = 0; i < 10000; ++i) {
        std::uint64_t b = bits(rng);
        double x;
        std::memcpy(&x, &b, sizeof x);
        if (!std::isfinite(x)) continue;
        CHECK(parse_double(format_double(x)) == x);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK(std::isnan(parse_double("nan")));
    CHECK_THROWS(parse_double("1.0x"));
    CHECK_THROWS(parse_double(""));
}

TEST_CASE("matrix csv") {
    Eigen::MatrixXd m(2, 3);
    m << 1.0, 1.0 / 3.0, -4e-7, 5.0, 6.25, 1e10;
    std::stringstream ss;
    write_matrix_csv(ss, m);
    CHECK(read_matrix_csv(ss) == m);
    std::istringstream ragged("1,2\n3\n");
    CHECK_THROWS(read_matrix_csv(ragged));
    std::istringstream junk("1,a\n");
    CHECK_THROWS(read_matrix_csv(junk));
}

TEST_CASE("config defaults") {
    RunConfig c = parse_run_config_text("");
    CHECK(c == RunConfig{});
    CHECK(c.cbm.tau == 0.1);
    CHECK(c.cbm.beta == 0.01);
    CHECK(c.cbm.epsilon == 0.05);
    CHECK(c.cbm.prototypes == 128);
    CHECK(c.cbm.batch == 128);
    CHECK(c.cbm.latent_dim == 50);
    CHECK(c.cbm.hidden_dim == 256);
    CHECK(c.cbm.sinkhorn_iterations == 3);
    CHECK(c.cbm.learning_rate == 5e-4);
    CHECK(c.env.distractor_dim == 8);
    CHECK(c.env.distractor_scale == 1.0);
    CHECK(c.env.obs_dim == 24);
    CHECK(c.run.eval_samples == 2048);
}

TEST_CASE("config round trip") {
    RunConfig c;
    c.cbm.tau = 0.25;
    c.cbm.optimizer = OptimizerKind::sgd;
    c.cbm.objective = Objective::dynamics_only;
    c.env.task = TaskKind::finite_mdp;
    c.env.obs_noise = 1.0 / 3.0;
    c.run.seeds = {3, 1, 4};
    c.run.output = "some dir/out";
    c.verify.c_values = {0.25, 0.75, 0.1};
    const std::string text = run_config_text(c);
    CHECK(parse_run_config_text(text) == c);
    CHECK(run_config_text(parse_run_config_text(text)) == text);
}

TEST_CASE("config parsing") {
    RunConfig c = parse_run_config_text("# comment\n[cbm]\n  tau = 0.2  \nbatch=64\n\n[env]\ntask = track\n");
    CHECK(c.cbm.tau == 0.2);
    CHECK(c.cbm.batch == 64);
    CHECK(c.env.task == TaskKind::track);

    CHECK(error_key("[cbm]\ntemperature = 1\n") == "cbm.temperature");
    CHECK(error_key("[cbm]\ntau = abc\n") == "cbm.tau");
    CHECK(error_key("[cbm]\ntau = 0.1\ntau = 0.2\n") == "cbm.tau");
    CHECK(error_key("[cbm]\nbatch = -3\n") == "cbm.batch");
    CHECK(error_key("[cbm]\nbeta = 2\n") == "cbm.beta");
    CHECK(error_key("[nope]\n") == "nope");
    CHECK(error_key("tau = 1\n") == "tau");
    CHECK(error_key("[env]\ntask = cartpole\n") == "env.task");
    CHECK(error_key("[env]\nobs_dim = 4\n") == "env.obs_dim");
    CHECK(error_key("[cbm]\nlayer_norm = maybe\n") == "cbm.layer_norm");
    CHECK(error_key("[verify]\nc_values = 0.5, 1.5\n") == "verify.c_values");
    CHECK_THROWS_AS(load_run_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("mdp text format") {
    FiniteMdp m = random_mdp(5, 4, 3, 0.7);
    std::stringstream ss;
    write_mdp(ss, m);
    FiniteMdp back = read_mdp(ss);
    CHECK(back == m);

    const std::string good =
        "cbm_mdp 1\nn_states 2\nn_actions 1\ndiscount 0.5\n# comment\nreward 0 : 1\nreward 1 : 0\n"
        "transition 0 0 : 0 1\ntransition 1 0 : 1 0\n";
    std::istringstream in(good);
    FiniteMdp g = read_mdp(in);
    CHECK(g.reward(0, 0) == 1.0);
    CHECK(g.transition(1, 0)[0] == 1.0);

    auto fails = [](const std::string& text) {
        std::istringstream s(text);
        CHECK_THROWS(read_mdp(s));
    };
    fails("cbm_mdp 2\n");
    fails(good.substr(0, good.find("transition 1")));  // missing row
    fails(good + "reward 0 : 1\n");                    // duplicate row
    std::string bad_prob = good;
    bad_prob.replace(bad_prob.find(": 0 1"), 5, ": 0.5 0.6");
    fails(bad_prob);
    std::string bad_reward = good;
    bad_reward.replace(bad_reward.find("reward 0 : 1"), 12, "reward 0 : 2");
    fails(bad_reward);
}

}  // TEST_SUITE
