#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "currl/analysis.hpp"
#include "currl/baselines.hpp"
#include "currl/dqn.hpp"
#include "currl/env.hpp"
#include "currl/io.hpp"
#include "currl/json_util.hpp"
#include "currl/learned_env.hpp"
#include "currl/log.hpp"
#include "currl/runner.hpp"
#include "currl/synthetic_env.hpp"
#include "currl/task.hpp"
#include "currl/tscl.hpp"

namespace currl {

/// Student environment selection: kind plus the matching, fully resolved
/// calibration (file references are inlined at parse time).
struct EnvironmentSpec {
    std::string kind;  // "synthetic" | "tiny_learned"
    SyntheticConfig synthetic;
    LearnedConfig learned;

    nlohmann::json to_json() const {
        nlohmann::json j{{"kind", kind}};
        j["config"] = kind == "synthetic" ? synthetic.to_json() : learned.to_json();
        return j;
    }
};

/// A complete experiment description, as loaded from a spec file: which
/// scheduler, which student, the run shape, and the seeds to repeat it over.
///
/// Warm-up length and decision cadence are owned by the `run` block; the
/// scheduler blocks must not restate them (the loader rejects that rather
/// than risk two values drifting apart).
struct ExperimentSpec {
    int schema_version = 1;
    std::string name;
    std::string scheduler_kind;  // "tscl" | "dqn" | "uniform" | "proportional"
    TsclConfig tscl;
    DqnConfig dqn;
    BaselineConfig baseline;
    EnvironmentSpec env;
    RunConfig run;
    std::vector<std::uint64_t> seeds;
    std::string output_dir;

    static ExperimentSpec from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = ".");
    static ExperimentSpec from_file(const std::filesystem::path& path);

    /// The resolved configuration for one seed, embedded in that run's log.
    /// Excludes output locations and the seed list, so the same spec run
    /// anywhere yields byte-identical logs.
    nlohmann::json config_snapshot(std::uint64_t seed) const {
        nlohmann::json sched;
        if (scheduler_kind == "tscl") sched = tscl.to_json();
        else if (scheduler_kind == "dqn") sched = dqn.to_json();
        else sched = baseline.to_json();
        sched["kind"] = scheduler_kind;
        return {{"schema_version", schema_version},
                {"name", name},
                {"scheduler", std::move(sched)},
                {"environment", env.to_json()},
                {"run",
                 {{"total_steps", run.total_steps},
                  {"action_interval", run.action_interval},
                  {"warmup_steps", run.warmup_steps},
                  {"eval_mode", to_string(run.eval_mode)},
                  {"eval_cadence", run.eval_cadence},
                  {"snapshot_interval", run.snapshot_interval},
                  {"record_states", run.record_states}}},
                {"seed", seed}};
    }

    /// Full spec echo (config_snapshot plus seeds and output_dir), written
    /// once per invocation next to the outputs.
    nlohmann::json resolved_json() const {
        nlohmann::json j = config_snapshot(0);
        j.erase("seed");
        j["seeds"] = seeds;
        j["output_dir"] = output_dir;
        return j;
    }
};

inline std::unique_ptr<StudentEnvironment> make_environment(const ExperimentSpec& spec,
                                                            std::uint64_t seed) {
    if (spec.env.kind == "synthetic")
        return std::make_unique<SyntheticTransferStudent>(spec.env.synthetic, seed);
    return std::make_unique<TinyLearnedStudent>(spec.env.learned, seed);
}

inline std::unique_ptr<Scheduler> make_scheduler(const ExperimentSpec& spec,
                                                 const StudentEnvironment& env,
                                                 std::uint64_t seed) {
    if (spec.scheduler_kind == "tscl") return std::make_unique<TsclScheduler>(spec.tscl, env.tasks());
    if (spec.scheduler_kind == "dqn")
        return std::make_unique<DqnScheduler>(spec.dqn, env.tasks(), env.probes_per_task(), seed);
    return std::make_unique<BaselineScheduler>(spec.baseline, env.tasks());
}

/// Everything one seed of an experiment produces.
struct RunArtifacts {
    RunResult run;
    std::optional<nlohmann::json> checkpoint;  // learned schedulers only
};

/// Runs one seed of the experiment, fully in memory.
inline RunArtifacts run_one_seed(const ExperimentSpec& spec, std::uint64_t seed) {
    std::unique_ptr<StudentEnvironment> env = make_environment(spec, seed);
    std::unique_ptr<Scheduler> sched = make_scheduler(spec, *env, seed);
    RunConfig rc = spec.run;
    rc.seed = seed;
    RunArtifacts out;
    out.run = run_experiment(rc, *env, *sched);
    out.run.log.config_snapshot = spec.config_snapshot(seed);
    if (auto* dqn = dynamic_cast<DqnScheduler*>(sched.get())) out.checkpoint = dqn->checkpoint_json();
    return out;
}

namespace detail {

inline nlohmann::json scheduler_block_without_kind(const nlohmann::json& j, const std::string& path,
                                                   std::initializer_list<const char*> owned_by_run) {
    nlohmann::json rest = j;
    rest.erase("kind");
    for (const char* key : owned_by_run)
        if (rest.contains(key))
            throw ConfigError(path + "." + key + ": set run." + key +
                              " instead (warm-up and cadence are owned by the run block)");
    return rest;
}

}  // namespace detail

inline ExperimentSpec ExperimentSpec::from_file(const std::filesystem::path& path) {
    std::string text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": JSON parse error at " +
                          line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0) + ": " + e.what());
    }
    try {
        return from_json(j, path.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j,
                                                const std::filesystem::path& base_dir) {
    const std::string path = "spec";
    check_keys(j, path,
               {"schema_version", "name", "scheduler", "environment", "run", "seeds", "output_dir"});
    ExperimentSpec s;
    s.schema_version = req<int>(j, path, "schema_version");
    if (s.schema_version != 1)
        throw ConfigError("spec.schema_version: unsupported version " +
                          std::to_string(s.schema_version));
    s.name = req<std::string>(j, path, "name");
    if (s.name.empty() || s.name.find_first_of("/\\ \t") != std::string::npos)
        throw ConfigError("spec.name: must be a non-empty token without spaces or slashes");

    // run block first: it owns warm-up and cadence, which the scheduler
    // configs inherit below.
    auto rit = j.find("run");
    if (rit == j.end()) throw ConfigError("spec: missing required key 'run'");
    check_keys(*rit, "spec.run",
               {"total_steps", "action_interval", "warmup_steps", "eval_mode", "eval_cadence",
                "snapshot_interval", "record_states"});
    s.run.total_steps = req<long>(*rit, "spec.run", "total_steps");
    s.run.action_interval = opt<int>(*rit, "spec.run", "action_interval", s.run.action_interval);
    s.run.warmup_steps = opt<long>(*rit, "spec.run", "warmup_steps", s.run.warmup_steps);
    s.run.eval_mode =
        eval_mode_from_string(opt<std::string>(*rit, "spec.run", "eval_mode", "current_task"));
    s.run.eval_cadence = opt<long>(*rit, "spec.run", "eval_cadence", s.run.eval_cadence);
    s.run.snapshot_interval =
        opt<long>(*rit, "spec.run", "snapshot_interval", s.run.snapshot_interval);
    s.run.record_states = opt<bool>(*rit, "spec.run", "record_states", s.run.record_states);
    s.run.validate();

    auto sit = j.find("scheduler");
    if (sit == j.end()) throw ConfigError("spec: missing required key 'scheduler'");
    expect_object(*sit, "spec.scheduler");
    s.scheduler_kind = req<std::string>(*sit, "spec.scheduler", "kind");
    if (s.scheduler_kind == "tscl") {
        nlohmann::json rest = detail::scheduler_block_without_kind(
            *sit, "spec.scheduler", {"warmup_steps", "action_interval"});
        s.tscl = TsclConfig::from_json(rest, "spec.scheduler");
        s.tscl.warmup_steps = s.run.warmup_steps;
        s.tscl.action_interval = s.run.action_interval;
    } else if (s.scheduler_kind == "dqn") {
        nlohmann::json rest =
            detail::scheduler_block_without_kind(*sit, "spec.scheduler", {"warmup_steps"});
        if (rest.contains("epsilon") && rest["epsilon"].is_object() &&
            rest["epsilon"].contains("warmup_steps"))
            throw ConfigError(
                "spec.scheduler.epsilon.warmup_steps: set run.warmup_steps instead (the "
                "exploration schedule stays flat through the run's warm-up)");
        s.dqn = DqnConfig::from_json(rest, "spec.scheduler");
        s.dqn.warmup_steps = s.run.warmup_steps;
        s.dqn.epsilon.warmup_steps = s.run.warmup_steps;
        s.dqn.validate();
    } else if (s.scheduler_kind == "uniform" || s.scheduler_kind == "proportional") {
        nlohmann::json rest =
            detail::scheduler_block_without_kind(*sit, "spec.scheduler", {"warmup_steps"});
        rest["kind"] = s.scheduler_kind;
        s.baseline = BaselineConfig::from_json(rest, "spec.scheduler");
        s.baseline.warmup_steps = s.run.warmup_steps;
    } else {
        throw ConfigError("spec.scheduler.kind: unknown scheduler '" + s.scheduler_kind + "'");
    }

    auto eit = j.find("environment");
    if (eit == j.end()) throw ConfigError("spec: missing required key 'environment'");
    check_keys(*eit, "spec.environment", {"kind", "config", "config_file"});
    s.env.kind = req<std::string>(*eit, "spec.environment", "kind");
    if (s.env.kind != "synthetic" && s.env.kind != "tiny_learned")
        throw ConfigError("spec.environment.kind: unknown environment '" + s.env.kind + "'");
    bool has_inline = eit->contains("config");
    bool has_file = eit->contains("config_file");
    if (has_inline == has_file)
        throw ConfigError("spec.environment: provide exactly one of 'config' or 'config_file'");
    nlohmann::json env_cfg;
    if (has_file) {
        std::filesystem::path ref(req<std::string>(*eit, "spec.environment", "config_file"));
        if (ref.is_relative()) ref = base_dir / ref;
        std::string text = read_file(ref);
        try {
            env_cfg = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(ref.string() + ": JSON parse error at " +
                              line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0) + ": " + e.what());
        }
    } else {
        env_cfg = eit->at("config");
    }
    if (s.env.kind == "synthetic")
        s.env.synthetic = SyntheticConfig::from_json(env_cfg, "spec.environment.config");
    else
        s.env.learned = LearnedConfig::from_json(env_cfg, "spec.environment.config");

    auto seeds_it = j.find("seeds");
    if (seeds_it == j.end()) throw ConfigError("spec: missing required key 'seeds'");
    expect_array(*seeds_it, "spec.seeds");
    if (seeds_it->empty()) throw ConfigError("spec.seeds: at least one seed required");
    for (const nlohmann::json& v : *seeds_it) {
        if (!v.is_number_integer() && !v.is_number_unsigned())
            throw ConfigError("spec.seeds: seeds must be integers");
        s.seeds.push_back(v.get<std::uint64_t>());
    }
    for (std::size_t i = 0; i < s.seeds.size(); ++i)
        for (std::size_t k = 0; k < i; ++k)
            if (s.seeds[i] == s.seeds[k]) throw ConfigError("spec.seeds: duplicate seed");

    s.output_dir = opt<std::string>(j, path, "output_dir", "out/" + s.name);
    return s;
}

/// Headline numbers of one finished run, as printed by the report command.
struct RunSummary {
    std::string scheduler;
    std::uint64_t seed = 0;
    long total_steps = 0;
    std::optional<double> final_macro_low;
    std::optional<double> final_macro_all;
    std::optional<long> best_step;  // steps_to_best over the eval trace
    std::vector<double> total_fractions;
};

inline RunSummary summarize_run(const RunResult& run, int ensemble_width = 4) {
    RunSummary s;
    s.scheduler = run.log.scheduler_kind;
    s.seed = run.log.seed;
    s.total_steps = run.log.total_steps;
    if (!run.eval_trace.empty()) {
        s.final_macro_low = run.eval_trace.back().macro_low;
        s.final_macro_all = run.eval_trace.back().macro_all;
        if (static_cast<int>(run.eval_trace.size()) >= ensemble_width)
            s.best_step = steps_to_best(run.eval_trace, ensemble_width);
    }
    auto rep = action_proportions(run.log.records, static_cast<int>(run.log.task_names.size()));
    s.total_fractions = rep.total_fractions;
    return s;
}

}  // namespace currl
