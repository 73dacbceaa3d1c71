#include "cbm/run.hpp"

#include "cbm/csv.hpp"
#include "cbm/seeding.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace cbm {

namespace fs = std::filesystem;

namespace {

// stream ids for derive_seed
constexpr std::uint64_t kTrainCollect = 0x747263;
constexpr std::uint64_t kEvalCollect = 0x65766c;
constexpr std::uint64_t kEvalSample = 0x736d70;
constexpr std::uint64_t kBatchSample = 0x626174;
constexpr std::uint64_t kPolicy = 0x706f6c;
constexpr std::uint64_t kVerify = 0x766572;

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return f;
}

EvalPoint eval_point(std::size_t step, const EvalResult& r) {
    return {step, r.ch, median_within_spread(r.coherence)};
}

}  // namespace

RunData prepare_run(const RunConfig& config, std::uint64_t seed) {
    validate_run_config(config);
    DistractedEnv env(config.env);
    ReplayBuffer buffer(config.run.buffer_capacity, env.observation_dim(), env.n_actions(), env.physical_dim());
    collect(env, buffer, config.run.warmup_steps, derive_seed(seed, kTrainCollect));

    DistractedEnv eval_env(config.env);
    ReplayBuffer eval_buffer(config.run.eval_buffer, env.observation_dim(), env.n_actions(), env.physical_dim());
    collect(eval_env, eval_buffer, config.run.eval_buffer, derive_seed(seed, kEvalCollect));
    EvalSample sample = draw_eval_sample(eval_buffer, config.run.eval_samples, derive_seed(seed, kEvalSample));
    return {std::move(env), std::move(buffer), std::move(eval_buffer), std::move(sample)};
}

TrainOutcome train(const RunConfig& config, std::uint64_t seed, const TrainHooks& hooks) {
    RunData data = prepare_run(config, seed);
    return train(config, seed, data, hooks);
}

TrainOutcome train(const RunConfig& config, std::uint64_t seed, RunData& data, const TrainHooks& hooks) {
    CbmConfig cc = config.cbm;
    cc.seed = seed;
    TrainOutcome out;
    out.state = initialize_state(cc, data.env.observation_dim(), data.env.n_actions(), data.buffer);

    auto evaluate = [&](std::size_t step) {
        EvalResult r = evaluate_clustering(out.state, data.eval_sample);
        out.evals.push_back(eval_point(step, r));
        if (hooks.on_eval) hooks.on_eval(step, out.state, r);
    };

    std::mt19937_64 batch_rng(derive_seed(seed, kBatchSample));
    std::mt19937_64 policy_rng(derive_seed(seed, kPolicy));
    evaluate(0);
    for (std::size_t step = 1; step <= config.run.total_steps; ++step) {
        if (config.run.collect_per_step > 0) collect(data.env, data.buffer, config.run.collect_per_step, policy_rng);
        StepMetrics m = train_step(out.state, data.buffer.sample(cc.batch, batch_rng), cc);
        if (hooks.on_step) hooks.on_step(m);
        if (step % config.run.eval_interval == 0 || step == config.run.total_steps) evaluate(step);
    }
    return out;
}

void write_metrics_header(std::ostream& out) { out << "step,l_cbm,l_p,code_entropy,min_usage,max_usage\n"; }

void write_metrics_row(std::ostream& out, const StepMetrics& m) {
    out << m.step << ',' << format_double(m.cbm_loss) << ',' << format_double(m.dynamics_loss) << ','
        << format_double(m.code_entropy) << ',' << m.min_usage << ',' << m.max_usage << '\n';
}

void prepare_output_dir(const fs::path& dir, bool overwrite) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir)) {
            if (!overwrite)
                throw std::runtime_error(dir.string() + " is not empty; pass --overwrite to replace its contents");
            for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
        }
    }
    fs::create_directories(dir);
}

TrainOutcome cmd_train(const TrainCommand& cmd) {
    RunConfig config = parse_run_config_text(cmd.config_text);
    config.run.seed = cmd.seed;
    RunData data = prepare_run(config, cmd.seed);
    prepare_output_dir(cmd.out, cmd.overwrite);

    open_out(cmd.out / "config.ini") << cmd.config_text;
    open_out(cmd.out / "resolved_config.ini") << run_config_text(config);
    {
        Container c;
        data.eval_buffer.save_to(c);
        c.save((cmd.out / "eval_buffer.cbm").string());
    }

    std::ofstream metrics = open_out(cmd.out / "metrics.csv");
    write_metrics_header(metrics);
    std::ofstream evals = open_out(cmd.out / "eval.csv");
    evals << "step,ch,n_clusters,median_return_spread\n";

    const std::string resolved = run_config_text(config);
    TrainHooks hooks;
    hooks.on_step = [&](const StepMetrics& m) { write_metrics_row(metrics, m); };
    hooks.on_eval = [&](std::size_t step, const CbmState& state, const EvalResult& r) {
        evals << step << ',' << format_double(r.ch.ch) << ',' << r.ch.n_clusters << ','
              << format_double(median_within_spread(r.coherence)) << '\n';
        Container c;
        c.put_text("config", resolved);
        save_state(c, state);
        c.save((cmd.out / ("checkpoint_" + std::to_string(step) + ".cbm")).string());
    };
    TrainOutcome outcome = train(config, cmd.seed, data, hooks);
    metrics.flush();
    evals.flush();
    if (!metrics || !evals) throw std::runtime_error("failed writing run outputs in " + cmd.out.string());
    return outcome;
}

EvalResult cmd_eval(const EvalCommand& cmd) {
    if (!fs::is_regular_file(cmd.checkpoint)) throw std::runtime_error("checkpoint not found: " + cmd.checkpoint.string());
    if (!fs::is_regular_file(cmd.buffer)) throw std::runtime_error("buffer dump not found: " + cmd.buffer.string());
    Container ckpt = Container::load(cmd.checkpoint.string());
    CbmConfig cc;
    if (ckpt.has("config")) cc = parse_run_config_text(ckpt.text("config")).cbm;
    CbmState state = load_state(ckpt, cc);
    ReplayBuffer buffer = ReplayBuffer::load_from(Container::load(cmd.buffer.string()));
    if (buffer.obs_dim() != state.encoder.spec().input_dim())
        throw std::runtime_error("buffer observations do not match the encoder input dimension");
    EvalSample sample = draw_eval_sample(buffer, cmd.samples, derive_seed(cmd.seed, kEvalSample));
    EvalResult r = evaluate_clustering(state, sample);

    prepare_output_dir(cmd.out, cmd.overwrite);
    auto report = open_out(cmd.out / "ch_report.csv");
    write_ch_report(report, r.ch);
    auto coherence = open_out(cmd.out / "coherence.csv");
    write_coherence(coherence, r.coherence);
    export_embeddings((cmd.out / "embeddings.csv").string(), r.latents, sample.task_labels, sample.distractor_labels,
                      r.assignment);
    return r;
}

VerifySummary run_verify(const VerifyControls& controls, std::uint64_t seed, std::ostream& report) {
    report << "mdp,mdp_seed,n_states,n_actions,c,discount,iterations,epsilon,pair_checks,triple_checks,violations,"
              "min_pair_slack\n";
    VerifySummary summary;
    std::mt19937_64 rng(derive_seed(seed, kVerify));
    std::uniform_int_distribution<std::size_t> states(controls.min_states, controls.max_states);
    std::uniform_int_distribution<std::size_t> actions(1, controls.max_actions);
    for (std::size_t i = 0; i < controls.n_mdps; ++i) {
        const std::size_t n = states(rng);
        const std::size_t m = actions(rng);
        const std::uint64_t mdp_seed = rng();
        for (double c : controls.c_values) {
            FiniteMdp mdp = random_mdp(mdp_seed, n, m, c);
            BisimMetric metric = bisim_fixed_point(mdp, c);
            // a single state has no pairs; any positive epsilon is vacuous there
            double eps = n > 1 ? median_pairwise_distance(metric.dist) : 1.0;
            if (!(eps > 0.0)) eps = 1e-12;
            ValueBoundReport r = verify_value_bounds(mdp, metric, eps);
            ++summary.instances;
            summary.pair_checks += r.pair_checks;
            summary.triple_checks += r.triple_checks;
            summary.violations += r.violations.size();
            report << i << ',' << mdp_seed << ',' << n << ',' << m << ',' << format_double(c) << ','
                   << format_double(mdp.discount()) << ',' << metric.iterations << ',' << format_double(eps) << ','
                   << r.pair_checks << ',' << r.triple_checks << ',' << r.violations.size() << ','
                   << format_double(r.min_pair_slack) << '\n';
        }
    }
    return summary;
}

VerifySummary cmd_verify(const VerifyControls& controls, std::uint64_t seed, const fs::path& out, bool overwrite) {
    prepare_output_dir(out, overwrite);
    auto f = open_out(out / "verify.csv");
    VerifySummary s = run_verify(controls, seed, f);
    if (!f.flush()) throw std::runtime_error("failed writing " + (out / "verify.csv").string());
    return s;
}

BisimMetric cmd_bisim(const fs::path& mdp_path, double c, const fs::path& out, bool overwrite) {
    FiniteMdp mdp = load_mdp(mdp_path.string());
    BisimMetric metric = bisim_fixed_point(mdp, c);
    prepare_output_dir(out, overwrite);
    save_matrix_csv((out / "metric.csv").string(), metric.dist);
    if (mdp.discount() <= c && mdp.n_states() > 1) {
        double eps = median_pairwise_distance(metric.dist);
        if (!(eps > 0.0)) eps = 1e-12;
        ValueBoundReport r = verify_value_bounds(mdp, metric, eps);
        auto f = open_out(out / "report.csv");
        f << "kind,s1,s2,center,lhs,rhs\n";
        for (const auto& v : r.violations)
            f << (v.kind == BoundViolation::Kind::pair ? "pair" : "triple") << ',' << v.s1 << ',' << v.s2 << ','
              << v.center << ',' << format_double(v.lhs) << ',' << format_double(v.rhs) << '\n';
        auto s = open_out(out / "summary.csv");
        s << "c,discount,epsilon,iterations,pair_checks,triple_checks,violations,min_pair_slack\n"
          << format_double(c) << ',' << format_double(mdp.discount()) << ',' << format_double(eps) << ','
          << metric.iterations << ',' << r.pair_checks << ',' << r.triple_checks << ',' << r.violations.size() << ','
          << format_double(r.min_pair_slack) << '\n';
    }
    return metric;
}

CodeMatrix cmd_sinkhorn(const fs::path& input, SinkhornInput mode, const SinkhornOptions& options, const fs::path& out,
                        bool overwrite) {
    Eigen::MatrixXd m = load_matrix_csv(input.string());
    CodeMatrix codes = mode == SinkhornInput::logits ? codes_from_logits(m, options) : codes_from_distances(m, options);
    if (fs::exists(out) && !overwrite)
        throw std::runtime_error(out.string() + " exists; pass --overwrite to replace it");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_matrix_csv(out.string(), codes.q);
    return codes;
}

}  // namespace cbm
