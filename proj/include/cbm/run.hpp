#pragma once

#include "cbm/bisim.hpp"
#include "cbm/config.hpp"
#include "cbm/eval.hpp"
#include "cbm/sinkhorn.hpp"
#include "cbm/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace cbm {

// ---- training loop ---------------------------------------------------------------

struct EvalPoint {
    std::size_t step = 0;
    ChReport ch;
    double median_return_spread = 0.0;
};

struct TrainHooks {
    std::function<void(const StepMetrics&)> on_step;
    /// Called at step 0, every eval interval and after the final step.
    std::function<void(std::size_t step, const CbmState&, const EvalResult&)> on_eval;
};

struct TrainOutcome {
    CbmState state;
    std::vector<EvalPoint> evals;

    double initial_ch() const { return evals.front().ch.ch; }
    double final_ch() const { return evals.back().ch.ch; }
};

/// Environment and held-out evaluation data shared by a run.
struct RunData {
    DistractedEnv env;
    ReplayBuffer buffer;
    ReplayBuffer eval_buffer;
    EvalSample eval_sample;
};

/// Builds the environment, fills the training buffer with the warmup
/// transitions and collects a separate evaluation buffer. Deterministic in
/// (config, seed).
RunData prepare_run(const RunConfig& config, std::uint64_t seed);

/// Collect / train_step loop with seed `seed`; the CBM seed is overridden.
TrainOutcome train(const RunConfig& config, std::uint64_t seed, const TrainHooks& hooks = {});
TrainOutcome train(const RunConfig& config, std::uint64_t seed, RunData& data, const TrainHooks& hooks = {});

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const StepMetrics& m);

// ---- subcommands -----------------------------------------------------------------

/// Creates `dir`, or refuses if it exists and is nonempty unless `overwrite`
/// (in which case it is emptied first).
void prepare_output_dir(const std::filesystem::path& dir, bool overwrite);

struct TrainCommand {
    std::string config_text;  // copied verbatim into the run directory
    std::uint64_t seed = 0;
    std::filesystem::path out;
    bool overwrite = false;
};

/// Writes config.ini, resolved_config.ini, metrics.csv, eval.csv,
/// eval_buffer.cbm and checkpoint_<step>.cbm. Returns the outcome.
TrainOutcome cmd_train(const TrainCommand& cmd);

struct EvalCommand {
    std::filesystem::path checkpoint;
    std::filesystem::path buffer;
    std::size_t samples = 2048;
    std::uint64_t seed = 0;
    std::filesystem::path out;
    bool overwrite = false;
};

/// Writes ch_report.csv, coherence.csv and embeddings.csv.
EvalResult cmd_eval(const EvalCommand& cmd);

struct VerifySummary {
    std::size_t instances = 0;
    std::size_t pair_checks = 0;
    std::size_t triple_checks = 0;
    std::size_t violations = 0;
};

/// Random MDPs with n in [min_states, max_states], |A| in [1, max_actions],
/// one metric per c in c_values with discount = c and epsilon = median
/// pairwise distance. One CSV row per (MDP, c).
VerifySummary run_verify(const VerifyControls& controls, std::uint64_t seed, std::ostream& report);
VerifySummary cmd_verify(const VerifyControls& controls, std::uint64_t seed, const std::filesystem::path& out,
                         bool overwrite);

/// Metric of an MDP file; writes metric.csv and, when discount <= c,
/// report.csv with the value-bound checks.
BisimMetric cmd_bisim(const std::filesystem::path& mdp_path, double c, const std::filesystem::path& out,
                      bool overwrite);

enum class SinkhornInput { logits, distances };

/// Reads a K x B matrix CSV and writes the code matrix to `out` (a file).
CodeMatrix cmd_sinkhorn(const std::filesystem::path& input, SinkhornInput mode, const SinkhornOptions& options,
                        const std::filesystem::path& out, bool overwrite);

}  // namespace cbm
