#pragma once

#include "cbm/env.hpp"
#include "cbm/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbm {

struct RunControls {
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::size_t total_steps = 20000;
    std::size_t eval_interval = 5000;
    /// Random-policy transitions collected before the first update.
    std::size_t warmup_steps = 10000;
    /// Environment steps appended after every update.
    std::size_t collect_per_step = 1;
    std::size_t buffer_capacity = 100000;
    /// Held-out transitions collected for evaluation, and the CH sample size.
    std::size_t eval_buffer = 4096;
    std::size_t eval_samples = 2048;
    std::string output = "runs/cbm";

    bool operator==(const RunControls&) const = default;
};

struct VerifyControls {
    std::size_t n_mdps = 100;
    std::size_t min_states = 2;
    std::size_t max_states = 8;
    std::size_t max_actions = 3;
    std::vector<double> c_values{0.5, 0.9};

    bool operator==(const VerifyControls&) const = default;
};

/// Sections [cbm], [env], [run], [verify]. The CBM seed is not a key of its
/// own: training uses run.seed.
struct RunConfig {
    CbmConfig cbm;
    DistractedEnvConfig env;
    RunControls run;
    VerifyControls verify;

    bool operator==(const RunConfig&) const = default;
};

/// Parse or validation failure; `key()` is "section.name" when one applies.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& message)
        : std::runtime_error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

/// Lines are `key = value`, `[section]` or comments starting with '#'.
/// Missing keys keep their defaults; unknown keys and malformed values throw.
RunConfig parse_run_config(std::istream& in);
RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Every key, in a fixed order, with round-trip numeric formatting.
void write_run_config(std::ostream& out, const RunConfig& config);
std::string run_config_text(const RunConfig& config);

/// Throws ConfigError naming the first offending key.
void validate_run_config(const RunConfig& config);

}  // namespace cbm
