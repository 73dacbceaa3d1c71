// cbm: training, evaluation, exact-metric verification and Sinkhorn utilities.

#include "cbm/run.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

cbm::RunConfig config_or_default(const std::string& path) {
    return path.empty() ? cbm::RunConfig{} : cbm::load_run_config(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prototype clustering under an approximate bisimulation distance"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool overwrite = false;
    auto common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", config_path, "Run configuration file");
        if (config_required) opt->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "Output location")->required();
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t s) { seed = s, seed_given = true; }, "Random seed");
        sub->add_flag("--overwrite", overwrite, "Replace existing outputs");
    };

    auto* train = app.add_subcommand("train", "Train an encoder and prototypes; writes metrics and checkpoints");
    common(train, true);

    auto* eval = app.add_subcommand("eval", "CH index, return coherence and embeddings of a checkpoint");
    common(eval, false);
    std::string checkpoint, buffer;
    std::size_t samples = 2048;
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    eval->add_option("--buffer", buffer, "Replay buffer dump")->required();
    eval->add_option("--samples", samples, "Number of evaluated observations");

    auto* bisim = app.add_subcommand("bisim", "Exact bisimulation metric of an MDP file");
    common(bisim, false);
    std::string mdp_path;
    double c = 0.9;
    bisim->add_option("--mdp", mdp_path, "MDP text file")->required()->check(CLI::ExistingFile);
    bisim->add_option("-c,--c", c, "Reward/transport mixing weight in [0,1)")->check(CLI::Range(0.0, 0.999999999));

    auto* verify = app.add_subcommand("verify", "Check the value bounds over random MDPs");
    common(verify, false);
    std::size_t n_mdps = 0;
    verify->add_option("--n-mdps", n_mdps, "Number of random MDPs (overrides the config)");

    auto* sinkhorn = app.add_subcommand("sinkhorn", "Code matrix from a logits or distance CSV");
    common(sinkhorn, false);
    std::string input, mode = "logits";
    double epsilon = 0.05;
    std::size_t iterations = 0;
    sinkhorn->add_option("--input", input, "K x B matrix CSV")->required()->check(CLI::ExistingFile);
    sinkhorn->add_option("--mode", mode, "Input kind")->check(CLI::IsMember({"logits", "distances"}));
    sinkhorn->add_option("--epsilon", epsilon, "Entropic regularization")->check(CLI::PositiveNumber);
    sinkhorn->add_option("--iterations", iterations, "Fixed sweep count; 0 runs to convergence");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            cbm::TrainCommand cmd;
            cmd.config_text = read_file(config_path);
            cmd.seed = seed_given ? seed : cbm::parse_run_config_text(cmd.config_text).run.seed;
            cmd.out = out;
            cmd.overwrite = overwrite;
            auto outcome = cbm::cmd_train(cmd);
            std::cout << "initial CH " << outcome.initial_ch() << ", final CH " << outcome.final_ch() << '\n';
        } else if (*eval) {
            cbm::EvalCommand cmd;
            cmd.checkpoint = checkpoint;
            cmd.buffer = buffer;
            cmd.samples = samples;
            cmd.seed = seed;
            cmd.out = out;
            cmd.overwrite = overwrite;
            auto r = cbm::cmd_eval(cmd);
            std::cout << "CH " << r.ch.ch << " over " << r.ch.n_clusters << " clusters\n";
        } else if (*bisim) {
            auto metric = cbm::cmd_bisim(mdp_path, c, out, overwrite);
            std::cout << "converged after " << metric.iterations << " iterations\n";
        } else if (*verify) {
            auto config = config_or_default(config_path);
            if (n_mdps > 0) config.verify.n_mdps = n_mdps;
            auto s = cbm::cmd_verify(config.verify, seed_given ? seed : config.run.seed, out, overwrite);
            std::cout << s.instances << " instances, " << s.pair_checks << " pair checks, " << s.triple_checks
                      << " triple checks, " << s.violations << " violations\n";
            return s.violations == 0 ? 0 : 3;
        } else if (*sinkhorn) {
            cbm::SinkhornOptions opts = iterations > 0 ? cbm::SinkhornOptions{} : cbm::SinkhornOptions::converged(epsilon);
            opts.epsilon = epsilon;
            if (iterations > 0) opts.iterations = iterations;
            auto codes = cbm::cmd_sinkhorn(input, mode == "logits" ? cbm::SinkhornInput::logits
                                                                   : cbm::SinkhornInput::distances,
                                           opts, out, overwrite);
            std::cout << codes.iterations << " sweeps, row residual " << codes.row_residual << '\n';
        }
    } catch (const cbm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
