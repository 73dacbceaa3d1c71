#include "cbm/config.hpp"

#include "cbm/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace cbm {

namespace {

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

template <class T>
T parse_unsigned(std::string_view text) {
    T v{};
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || p != text.data() + text.size()) throw std::invalid_argument("expected a nonnegative integer");
    return v;
}

bool parse_bool(std::string_view text) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw std::invalid_argument("expected true or false");
}

template <class T>
std::string join(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_floating_point_v<T>)
            out += format_double(values[i]);
        else
            out += std::to_string(values[i]);
    }
    return out;
}

template <class T, class Parse>
std::vector<T> parse_list(std::string_view text, Parse parse) {
    std::vector<T> out;
    if (trim(text).empty()) return out;
    for (const auto& item : split(text, ',')) out.push_back(parse(trim(item)));
    return out;
}

// Member accessors in terms of a projection onto RunConfig.
template <class Proj>
Field real(std::string section, std::string key, Proj proj) {
    return {std::move(section), std::move(key), [proj](const RunConfig& c) { return format_double(proj(c)); },
            [proj](RunConfig& c, std::string_view v) { proj(c) = parse_double(v); }};
}

template <class Proj>
Field count(std::string section, std::string key, Proj proj) {
    using T = std::remove_cvref_t<decltype(proj(std::declval<RunConfig&>()))>;
    return {std::move(section), std::move(key),
            [proj](const RunConfig& c) { return std::to_string(proj(c)); },
            [proj](RunConfig& c, std::string_view v) { proj(c) = parse_unsigned<T>(v); }};
}

template <class Proj>
Field flag(std::string section, std::string key, Proj proj) {
    return {std::move(section), std::move(key),
            [proj](const RunConfig& c) { return std::string(proj(c) ? "true" : "false"); },
            [proj](RunConfig& c, std::string_view v) { proj(c) = parse_bool(v); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        // [cbm]
        f.push_back(real("cbm", "tau", [](auto& c) -> auto& { return c.cbm.tau; }));
        f.push_back(real("cbm", "beta", [](auto& c) -> auto& { return c.cbm.beta; }));
        f.push_back(real("cbm", "epsilon", [](auto& c) -> auto& { return c.cbm.epsilon; }));
        f.push_back(count("cbm", "prototypes", [](auto& c) -> auto& { return c.cbm.prototypes; }));
        f.push_back(count("cbm", "batch", [](auto& c) -> auto& { return c.cbm.batch; }));
        f.push_back(count("cbm", "latent_dim", [](auto& c) -> auto& { return c.cbm.latent_dim; }));
        f.push_back(count("cbm", "hidden_dim", [](auto& c) -> auto& { return c.cbm.hidden_dim; }));
        f.push_back(count("cbm", "encoder_hidden_layers",
                          [](auto& c) -> auto& { return c.cbm.encoder_hidden_layers; }));
        f.push_back(count("cbm", "dynamics_hidden_layers",
                          [](auto& c) -> auto& { return c.cbm.dynamics_hidden_layers; }));
        f.push_back(flag("cbm", "layer_norm", [](auto& c) -> auto& { return c.cbm.layer_norm; }));
        f.push_back(real("cbm", "learning_rate", [](auto& c) -> auto& { return c.cbm.learning_rate; }));
        f.push_back({"cbm", "optimizer",
                     [](const RunConfig& c) { return std::string(c.cbm.optimizer == OptimizerKind::adam ? "adam" : "sgd"); },
                     [](RunConfig& c, std::string_view v) {
                         if (v == "adam") c.cbm.optimizer = OptimizerKind::adam;
                         else if (v == "sgd") c.cbm.optimizer = OptimizerKind::sgd;
                         else throw std::invalid_argument("expected adam or sgd");
                     }});
        f.push_back(count("cbm", "sinkhorn_iterations",
                          [](auto& c) -> auto& { return c.cbm.sinkhorn_iterations; }));
        f.push_back(real("cbm", "reward_weight", [](auto& c) -> auto& { return c.cbm.reward_weight; }));
        f.push_back(real("cbm", "transition_weight", [](auto& c) -> auto& { return c.cbm.transition_weight; }));
        f.push_back(flag("cbm", "normalize_prototypes",
                         [](auto& c) -> auto& { return c.cbm.normalize_prototypes; }));
        f.push_back({"cbm", "objective",
                     [](const RunConfig& c) {
                         return std::string(c.cbm.objective == Objective::cbm ? "cbm" : "dynamics_only");
                     },
                     [](RunConfig& c, std::string_view v) {
                         if (v == "cbm") c.cbm.objective = Objective::cbm;
                         else if (v == "dynamics_only") c.cbm.objective = Objective::dynamics_only;
                         else throw std::invalid_argument("expected cbm or dynamics_only");
                     }});
        // [env]
        f.push_back({"env", "task",
                     [](const RunConfig& c) {
                         switch (c.env.task) {
                             case TaskKind::pendulum: return std::string("pendulum");
                             case TaskKind::track: return std::string("track");
                             case TaskKind::finite_mdp: break;
                         }
                         return std::string("finite_mdp");
                     },
                     [](RunConfig& c, std::string_view v) {
                         if (v == "pendulum") c.env.task = TaskKind::pendulum;
                         else if (v == "track") c.env.task = TaskKind::track;
                         else if (v == "finite_mdp") c.env.task = TaskKind::finite_mdp;
                         else throw std::invalid_argument("expected pendulum, track or finite_mdp");
                     }});
        f.push_back(count("env", "position_bins", [](auto& c) -> auto& { return c.env.position_bins; }));
        f.push_back(count("env", "velocity_bins", [](auto& c) -> auto& { return c.env.velocity_bins; }));
        f.push_back(real("env", "dt", [](auto& c) -> auto& { return c.env.dt; }));
        f.push_back(real("env", "gravity", [](auto& c) -> auto& { return c.env.gravity; }));
        f.push_back(real("env", "torque", [](auto& c) -> auto& { return c.env.torque; }));
        f.push_back(real("env", "damping", [](auto& c) -> auto& { return c.env.damping; }));
        f.push_back(real("env", "max_speed", [](auto& c) -> auto& { return c.env.max_speed; }));
        f.push_back(real("env", "track_force", [](auto& c) -> auto& { return c.env.track_force; }));
        f.push_back(real("env", "track_friction", [](auto& c) -> auto& { return c.env.track_friction; }));
        f.push_back(real("env", "track_max_speed", [](auto& c) -> auto& { return c.env.track_max_speed; }));
        f.push_back(count("env", "mdp_states", [](auto& c) -> auto& { return c.env.mdp_states; }));
        f.push_back(count("env", "mdp_actions", [](auto& c) -> auto& { return c.env.mdp_actions; }));
        f.push_back(count("env", "mdp_seed", [](auto& c) -> auto& { return c.env.mdp_seed; }));
        f.push_back(count("env", "distractor_dim", [](auto& c) -> auto& { return c.env.distractor_dim; }));
        f.push_back(real("env", "distractor_scale", [](auto& c) -> auto& { return c.env.distractor_scale; }));
        f.push_back(real("env", "distractor_step", [](auto& c) -> auto& { return c.env.distractor_step; }));
        f.push_back(flag("env", "resample_on_reset", [](auto& c) -> auto& { return c.env.resample_on_reset; }));
        f.push_back(count("env", "obs_dim", [](auto& c) -> auto& { return c.env.obs_dim; }));
        f.push_back(count("env", "mixing_seed", [](auto& c) -> auto& { return c.env.mixing_seed; }));
        f.push_back(real("env", "obs_noise", [](auto& c) -> auto& { return c.env.obs_noise; }));
        f.push_back(count("env", "episode_length", [](auto& c) -> auto& { return c.env.episode_length; }));
        f.push_back(count("env", "frame_stack", [](auto& c) -> auto& { return c.env.frame_stack; }));
        f.push_back(real("env", "return_discount", [](auto& c) -> auto& { return c.env.return_discount; }));
        // [run]
        f.push_back(count("run", "seed", [](auto& c) -> auto& { return c.run.seed; }));
        f.push_back({"run", "seeds", [](const RunConfig& c) { return join(c.run.seeds); },
                     [](RunConfig& c, std::string_view v) {
                         c.run.seeds = parse_list<std::uint64_t>(v, parse_unsigned<std::uint64_t>);
                     }});
        f.push_back(count("run", "total_steps", [](auto& c) -> auto& { return c.run.total_steps; }));
        f.push_back(count("run", "eval_interval", [](auto& c) -> auto& { return c.run.eval_interval; }));
        f.push_back(count("run", "warmup_steps", [](auto& c) -> auto& { return c.run.warmup_steps; }));
        f.push_back(
            count("run", "collect_per_step", [](auto& c) -> auto& { return c.run.collect_per_step; }));
        f.push_back(count("run", "buffer_capacity", [](auto& c) -> auto& { return c.run.buffer_capacity; }));
        f.push_back(count("run", "eval_buffer", [](auto& c) -> auto& { return c.run.eval_buffer; }));
        f.push_back(count("run", "eval_samples", [](auto& c) -> auto& { return c.run.eval_samples; }));
        f.push_back({"run", "output", [](const RunConfig& c) { return c.run.output; },
                     [](RunConfig& c, std::string_view v) { c.run.output = std::string(v); }});
        // [verify]
        f.push_back(count("verify", "n_mdps", [](auto& c) -> auto& { return c.verify.n_mdps; }));
        f.push_back(count("verify", "min_states", [](auto& c) -> auto& { return c.verify.min_states; }));
        f.push_back(count("verify", "max_states", [](auto& c) -> auto& { return c.verify.max_states; }));
        f.push_back(count("verify", "max_actions", [](auto& c) -> auto& { return c.verify.max_actions; }));
        f.push_back({"verify", "c_values", [](const RunConfig& c) { return join(c.verify.c_values); },
                     [](RunConfig& c, std::string_view v) { c.verify.c_values = parse_list<double>(v, parse_double); }});
        return f;
    }();
    return table;
}

}  // namespace

RunConfig parse_run_config(std::istream& in) {
    RunConfig config;
    std::string section;
    std::set<std::string> seen;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const std::string where = "line " + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("", where + ": malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section != "cbm" && section != "env" && section != "run" && section != "verify")
                throw ConfigError(section, where + ": unknown section");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("", where + ": expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        const std::string qualified = section.empty() ? key : section + "." + key;
        if (section.empty()) throw ConfigError(qualified, where + ": key outside of a section");
        const auto& table = fields();
        auto it = std::find_if(table.begin(), table.end(),
                               [&](const Field& f) { return f.section == section && f.key == key; });
        if (it == table.end()) throw ConfigError(qualified, where + ": unknown key");
        if (!seen.insert(qualified).second) throw ConfigError(qualified, where + ": duplicate key");
        try {
            it->set(config, value);
        } catch (const std::exception& e) {
            throw ConfigError(qualified, where + ": invalid value '" + std::string(value) + "' (" + e.what() + ")");
        }
    }
    validate_run_config(config);
    return config;
}

RunConfig parse_run_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_run_config(in);
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path);
    return parse_run_config(in);
}

void write_run_config(std::ostream& out, const RunConfig& config) {
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out << '\n';
            section = f.section;
            out << '[' << section << "]\n";
        }
        out << f.key << " = " << f.get(config) << '\n';
    }
}

std::string run_config_text(const RunConfig& config) {
    std::ostringstream out;
    write_run_config(out, config);
    return out.str();
}

void validate_run_config(const RunConfig& config) {
    auto require = [](bool ok, const char* key, const char* what) {
        if (!ok) throw ConfigError(key, what);
    };
    const auto& c = config.cbm;
    require(c.tau > 0.0 && std::isfinite(c.tau), "cbm.tau", "must be positive");
    require(c.beta >= 0.0 && c.beta <= 1.0, "cbm.beta", "must lie in [0,1]");
    require(c.epsilon > 0.0 && std::isfinite(c.epsilon), "cbm.epsilon", "must be positive");
    require(c.prototypes >= 2, "cbm.prototypes", "must be at least 2");
    require(c.batch >= 1, "cbm.batch", "must be positive");
    require(c.latent_dim >= 1, "cbm.latent_dim", "must be positive");
    require(c.hidden_dim >= 1, "cbm.hidden_dim", "must be positive");
    require(c.learning_rate >= 0.0 && std::isfinite(c.learning_rate), "cbm.learning_rate", "must be nonnegative");
    require(c.sinkhorn_iterations >= 1, "cbm.sinkhorn_iterations", "must be positive");
    require(c.reward_weight >= 0.0, "cbm.reward_weight", "must be nonnegative");
    require(c.transition_weight >= 0.0, "cbm.transition_weight", "must be nonnegative");

    const auto& e = config.env;
    require(e.position_bins >= 1, "env.position_bins", "must be positive");
    require(e.velocity_bins >= 1, "env.velocity_bins", "must be positive");
    require(e.dt > 0.0, "env.dt", "must be positive");
    require(e.max_speed > 0.0, "env.max_speed", "must be positive");
    require(e.mdp_states >= 1, "env.mdp_states", "must be positive");
    require(e.mdp_actions >= 1, "env.mdp_actions", "must be positive");
    require(e.distractor_scale >= 0.0, "env.distractor_scale", "must be nonnegative");
    require(e.distractor_step >= 0.0, "env.distractor_step", "must be nonnegative");
    require(e.obs_noise >= 0.0, "env.obs_noise", "must be nonnegative");
    require(e.episode_length >= 1, "env.episode_length", "must be positive");
    require(e.frame_stack >= 1, "env.frame_stack", "must be positive");
    require(e.return_discount >= 0.0 && e.return_discount < 1.0, "env.return_discount", "must lie in [0,1)");
    require(e.track_max_speed > 0.0, "env.track_max_speed", "must be positive");
    require(e.obs_dim >= mixed_feature_count(e), "env.obs_dim", "must be at least the number of mixed features");

    const auto& r = config.run;
    require(r.eval_interval >= 1, "run.eval_interval", "must be positive");
    require(r.buffer_capacity >= 1, "run.buffer_capacity", "must be positive");
    require(r.warmup_steps >= c.batch, "run.warmup_steps", "must be at least cbm.batch");
    require(r.buffer_capacity >= c.batch, "run.buffer_capacity", "must be at least cbm.batch");
    require(r.eval_buffer >= 2, "run.eval_buffer", "must be at least 2");
    require(r.eval_samples >= 2, "run.eval_samples", "must be at least 2");
    require(!r.output.empty(), "run.output", "must not be empty");

    const auto& v = config.verify;
    require(v.min_states >= 1, "verify.min_states", "must be positive");
    require(v.max_states >= v.min_states, "verify.max_states", "must be at least verify.min_states");
    require(v.max_actions >= 1, "verify.max_actions", "must be positive");
    for (double cv : v.c_values) require(cv >= 0.0 && cv < 1.0, "verify.c_values", "entries must lie in [0,1)");
}

}  // namespace cbm
