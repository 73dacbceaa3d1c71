// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// nonzero when any criterion fails. Arguments select a subset, e.g. `1 3 7`.

#include "cbm/bisim.hpp"
#include "cbm/config.hpp"
#include "cbm/run.hpp"
#include "cbm/seeding.hpp"
#include "cbm/sinkhorn.hpp"
#include "cbm/trainer.hpp"
#include "cbm/transport.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace cbm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- 1: exact metric on random MDPs ------------------------------------------------

Outcome exact_metric_suite() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(derive_seed(2024, 1));
    std::uniform_int_distribution<std::size_t> states(2, 8), actions(1, 3);
    std::size_t instances = 0, axiom_failures = 0, bound_failures = 0, pairs = 0, triples = 0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = states(rng), m = actions(rng);
        const std::uint64_t seed = rng();
        for (double c : {0.5, 0.9}) {
            FiniteMdp mdp = random_mdp(seed, n, m, c);
            BisimMetric metric = bisim_fixed_point(mdp, c);
            const Eigen::MatrixXd& d = metric.dist;
            for (std::size_t a = 0; a < n; ++a) {
                if (std::abs(d(a, a)) > 1e-8) ++axiom_failures;
                for (std::size_t b = 0; b < n; ++b) {
                    if (std::abs(d(a, b) - d(b, a)) > 1e-8) ++axiom_failures;
                    for (std::size_t k = 0; k < n; ++k)
                        if (d(a, b) > d(a, k) + d(k, b) + 1e-8) ++axiom_failures;
                }
            }
            double eps = median_pairwise_distance(d);
            if (!(eps > 0.0)) eps = 1e-12;
            ValueBoundReport r = verify_value_bounds(mdp, metric, eps, 1e-8);
            bound_failures += r.violations.size();
            pairs += r.pair_checks;
            triples += r.triple_checks;
            ++instances;
        }
    }
    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = axiom_failures == 0 && bound_failures == 0 && elapsed < 120.0;
    o.detail = fmt("%zu metrics, %zu pair and %zu triple checks, %zu axiom and %zu bound violations, %.1fs",
                   instances, pairs, triples, axiom_failures, bound_failures, elapsed);
    return o;
}

// ---- 2: two-state worked example -----------------------------------------------------

Outcome worked_example() {
    FiniteMdp mdp(2, 1, 0.5);
    mdp.transition(0, 0)[0] = 1.0;
    mdp.transition(1, 0)[1] = 1.0;
    mdp.reward(0, 0) = 1.0;
    mdp.reward(1, 0) = 0.0;
    BisimMetric metric = bisim_fixed_point(mdp, 0.5);
    // single action: V* = (I - gamma P)^-1 r
    Eigen::Matrix2d system = Eigen::Matrix2d::Identity() - 0.5 * Eigen::Matrix2d::Identity();
    Eigen::Vector2d v = system.partialPivLu().solve(Eigen::Vector2d(1.0, 0.0));
    ValueFunction iterated = value_iteration(mdp, 1e-13);
    const double d = metric.dist(0, 1);
    const double lhs = 0.5 * std::abs(v(0) - v(1));
    const double agreement = std::max(std::abs(iterated.values[0] - v(0)), std::abs(iterated.values[1] - v(1)));
    Outcome o;
    o.pass = std::abs(d - 1.0) <= 1e-9 && lhs == 1.0 && agreement <= 1e-12;
    o.detail = fmt("d(A,B) = %.12f, (1-c)|dV| = %.17g, value iteration within %.1e", d, lhs, agreement);
    return o;
}

// ---- 3: Sinkhorn -------------------------------------------------------------------------

Outcome sinkhorn_suite() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(derive_seed(2024, 3));
    std::uniform_int_distribution<int> kdist(2, 16), bdist(4, 64);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst_col = 0.0, worst_row = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const int K = kdist(rng), B = bdist(rng);
        Eigen::MatrixXd d(K, B);
        for (Eigen::Index j = 0; j < d.size(); ++j) d.data()[j] = 2.0 * unit(rng);
        CodeMatrix c = codes_from_distances(d, SinkhornOptions::converged(0.05));
        worst_col = std::max(worst_col, (c.q.colwise().sum().array() - 1.0).abs().maxCoeff());
        worst_row = std::max(worst_row, (c.q.rowwise().sum().array() - double(B) / K).abs().maxCoeff());
    }
    const bool marginals = worst_col <= 1e-6 && worst_row <= 1e-6;

    // small epsilon against the exact transport cost; marginal target as above
    SinkhornOptions sharp = SinkhornOptions::converged(1e-3, 1e-6);
    sharp.max_iterations = 50'000'000;
    const std::vector<double> ones(8, 1.0);
    double worst_gap = 0.0;
    for (int i = 0; i < 20; ++i) {
        Eigen::MatrixXd cost(8, 8);
        for (Eigen::Index j = 0; j < cost.size(); ++j) cost.data()[j] = unit(rng);
        CodeMatrix c = codes_from_distances(cost, sharp);
        const double entropic = (c.q.array() * cost.array()).sum();
        const double exact = optimal_transport(ones, ones, cost).cost;
        worst_gap = std::max(worst_gap, std::abs(entropic - exact) / exact);
    }

    Eigen::MatrixXd two(2, 2);
    two << 0.0, 1.0, 1.0, 0.0;
    CodeMatrix c2 = codes_from_distances(two, SinkhornOptions::converged(0.05));
    const double off = std::max(c2.q(0, 1), c2.q(1, 0));

    Outcome o;
    o.pass = marginals && worst_gap < 0.01 && off <= 3e-9;
    o.detail = fmt("marginal error col %.2e row %.2e; eps=1e-3 worst cost gap %.3f%%; 2x2 off-diagonal %.3e; %.1fs",
                   worst_col, worst_row, 100.0 * worst_gap, off, seconds_since(t0));
    return o;
}

// ---- 4: gradients at default dimensions -------------------------------------------------

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    RunConfig defaults;
    DistractedEnv env(defaults.env);
    ReplayBuffer buffer(4096, env.observation_dim(), env.n_actions(), env.physical_dim());
    collect(env, buffer, 4096, 77);

    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    bool all = true;
    for (std::uint64_t i = 0; i < 20; ++i) {
        CbmConfig cfg = defaults.cbm;
        cfg.seed = i;
        CbmState st = initialize_state(cfg, env.observation_dim(), env.n_actions(), buffer);
        TransitionBatch batch = buffer.sample(cfg.batch, derive_seed(i, 2));
        Eigen::MatrixXd actions = uniform_prototype_actions(st.n_actions, cfg.prototypes, st.action_rng);
        Eigen::MatrixXd codes = target_codes(st, batch, actions, cfg).q;
        GradientCheckOptions opts;
        opts.step = 1e-5;
        opts.tolerance = 1e-4;
        opts.samples_per_tensor = 12;
        opts.seed = i;
        LossGradientCheck g = check_loss_gradients(st, batch, codes, cfg.tau, opts);
        for (const auto* r : {&g.cbm, &g.dynamics, &g.total}) {
            worst = std::max(worst, r->max_relative_error);
            checked += r->checked;
            skipped += r->skipped_nonsmooth;
        }
        all = all && g.passed();
    }
    Outcome o;
    o.pass = all && worst < 1e-4;
    o.detail = fmt("20 instances, %zu coordinates (%zu skipped at rectifier kinks), max relative error %.2e, %.1fs",
                   checked, skipped, worst, seconds_since(t0));
    return o;
}

// ---- 5: prototype reward estimator --------------------------------------------------------

Outcome reward_estimator() {
    const int K = 4, B = 64;
    const double beta = 0.01;
    const double means[K] = {0.15, 0.4, 0.65, 0.9};
    std::mt19937_64 rng(derive_seed(2024, 5));
    std::uniform_real_distribution<double> noise(-0.1, 0.1), unit(0.0, 1.0);

    CodeMatrix codes;
    codes.q = Eigen::MatrixXd::Zero(K, B);
    for (int i = 0; i < B; ++i) codes.q(i % K, i) = 1.0;
    Eigen::VectorXd r = Eigen::VectorXd::Zero(K);
    const Eigen::VectorXd r0 = r;
    for (int t = 0; t < 1000; ++t) {
        Eigen::VectorXd rewards(B);
        for (int i = 0; i < B; ++i) rewards(i) = means[i % K] + noise(rng);
        r = prototype_reward_update(r, prototype_reward_estimate(codes, rewards, true), beta);
    }
    double worst_mean = 0.0, worst_oracle = 0.0;
    const double decay = std::pow(1.0 - beta, 1000);
    for (int k = 0; k < K; ++k) {
        worst_mean = std::max(worst_mean, std::abs(r(k) - means[k]));
        const double expected = means[k] + decay * (r0(k) - means[k]);
        worst_oracle = std::max(worst_oracle, std::abs(r(k) - expected));
    }

    std::size_t out_of_range = 0;
    std::uniform_int_distribution<int> kd(2, 16), bd(4, 64), len(1, 50);
    for (int s = 0; s < 10000; ++s) {
        const int k = kd(rng), b = bd(rng);
        Eigen::VectorXd est(k);
        for (int j = 0; j < k; ++j) est(j) = unit(rng);
        const double bt = unit(rng);
        const int steps = len(rng);
        for (int t = 0; t < steps; ++t) {
            Eigen::MatrixXd logits(k, b);
            for (Eigen::Index j = 0; j < logits.size(); ++j) logits.data()[j] = 5.0 * unit(rng);
            SinkhornOptions o;
            o.iterations = 1 + static_cast<std::size_t>(t % 3);
            CodeMatrix c = codes_from_logits(logits, o);
            Eigen::VectorXd rewards(b);
            for (int j = 0; j < b; ++j) rewards(j) = unit(rng) < 0.2 ? std::round(unit(rng)) : unit(rng);
            est = prototype_reward_update(est, prototype_reward_estimate(c, rewards), bt);
            if ((est.array() < 0.0).any() || (est.array() > 1.0).any()) ++out_of_range;
        }
    }
    Outcome o;
    o.pass = worst_mean <= 1e-2 && worst_oracle <= 1e-2 && out_of_range == 0;
    o.detail = fmt("after 1000 updates max |r - mean| %.2e, max |r - geometric oracle| %.2e; %zu out-of-range "
                   "estimates over 10000 schedules",
                   worst_mean, worst_oracle, out_of_range);
    return o;
}

// ---- 6: clustering trend ------------------------------------------------------------------

Outcome clustering_trend() {
    RunConfig base;
    RunConfig ablation = base;
    ablation.cbm.objective = Objective::dynamics_only;
    std::vector<double> init, final_cbm, final_dyn;
    double slowest = 0.0;
    for (std::uint64_t seed : base.run.seeds) {
        for (bool cbm : {true, false}) {
            const auto t0 = Clock::now();
            TrainOutcome out = train(cbm ? base : ablation, seed);
            const double elapsed = seconds_since(t0);
            slowest = std::max(slowest, elapsed);
            if (cbm) {
                init.push_back(out.initial_ch());
                final_cbm.push_back(out.final_ch());
            } else {
                final_dyn.push_back(out.final_ch());
            }
            std::printf("  seed %llu %-13s initial CH %8.3f  final CH %8.3f  %.0fs\n",
                        static_cast<unsigned long long>(seed), cbm ? "cbm" : "dynamics_only", out.initial_ch(),
                        out.final_ch(), elapsed);
            std::fflush(stdout);
        }
    }
    const double mi = median(init), mc = median(final_cbm), md = median(final_dyn);
    Outcome o;
    o.pass = mc >= 3.0 * mi && mc > md && slowest < 300.0;
    o.detail = fmt("median CH initial %.2f, final CBM %.2f (%.2fx), final dynamics-only %.2f; slowest run %.0fs", mi,
                   mc, mc / mi, md, slowest);
    return o;
}

// ---- 7: determinism ------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / ("cbm_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string config =
        "[cbm]\nprototypes = 16\nbatch = 32\nlatent_dim = 8\nhidden_dim = 32\n\n"
        "[run]\ntotal_steps = 200\neval_interval = 100\nwarmup_steps = 256\nbuffer_capacity = 2048\n"
        "eval_buffer = 256\neval_samples = 128\n";
    cmd_train({config, 3, root / "a", false});
    cmd_train({config, 3, root / "b", false});
    const std::string ma = slurp(root / "a" / "metrics.csv");
    const bool train_same = !ma.empty() && ma == slurp(root / "b" / "metrics.csv") &&
                            slurp(root / "a" / "eval.csv") == slurp(root / "b" / "eval.csv");
    VerifyControls v;
    cmd_verify(v, 11, root / "va", false);
    cmd_verify(v, 11, root / "vb", false);
    const std::string va = slurp(root / "va" / "verify.csv");
    const bool verify_same = !va.empty() && va == slurp(root / "vb" / "verify.csv");
    fs::remove_all(root);
    Outcome o;
    o.pass = train_same && verify_same;
    o.detail = fmt("train metrics %s (%zu bytes), verify report %s (%zu bytes)", train_same ? "identical" : "differ",
                   ma.size(), verify_same ? "identical" : "differ", va.size());
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, exact_metric_suite}, {2, worked_example},   {3, sinkhorn_suite}, {4, gradient_suite},
        {5, reward_estimator},   {6, clustering_trend}, {7, determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

    bool all = true;
    for (const auto& [id, run] : criteria) {
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.pass;
        std::printf("criterion %d %s: %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
