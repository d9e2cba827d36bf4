// currl: run curriculum-scheduling experiments, summarize their logs, and
// probe trained Q-network checkpoints.
//
// Exit codes: 0 success; 2 invalid usage, spec, or inputs; 3 runtime failure
// (diverged training, non-finite evaluation, I/O failure mid-run).

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "currl/analysis.hpp"
#include "currl/dqn.hpp"
#include "currl/experiment.hpp"
#include "currl/io.hpp"
#include "currl/log.hpp"

namespace fs = std::filesystem;
using currl::ConfigError;
using currl::RunAbort;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 2;
constexpr int kExitRuntime = 3;

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) throw ConfigError("--seeds: empty entry in seed list");
        seeds.push_back(currl::parse_long(cur, "--seeds"));
        cur.clear();
    };
    for (char c : text) {
        if (c == ',') {
            flush();
        } else if (c >= '0' && c <= '9') {
            cur.push_back(c);
        } else {
            throw ConfigError(std::string("--seeds: unexpected character '") + c + "'");
        }
    }
    flush();
    return seeds;
}

/// Where outputs go, in precedence order: --out flag, then $CURRL_OUT_ROOT
/// joined with the spec's (relative) output_dir, then the spec's output_dir
/// resolved against the spec file's directory.
fs::path resolve_output_dir(const currl::ExperimentSpec& spec, const fs::path& spec_path,
                            const std::string& out_flag) {
    if (!out_flag.empty()) return out_flag;
    fs::path configured(spec.output_dir);
    if (configured.is_absolute()) return configured;
    if (const char* root = std::getenv("CURRL_OUT_ROOT")) return fs::path(root) / configured;
    return spec_path.parent_path() / configured;
}

int cmd_run(const std::string& spec_path, const std::string& out_flag, const std::string& seeds_flag,
            int jobs) {
    currl::ExperimentSpec spec = currl::ExperimentSpec::from_file(spec_path);
    if (!seeds_flag.empty()) {
        spec.seeds = parse_seed_list(seeds_flag);
        if (spec.seeds.empty()) throw ConfigError("--seeds: at least one seed required");
    }
    if (jobs < 1) throw ConfigError("--jobs: must be >= 1");

    fs::path out_dir = resolve_output_dir(spec, spec_path, out_flag);
    fs::create_directories(out_dir);
    currl::write_file_atomic(out_dir / "resolved_config.json", spec.resolved_json().dump(2) + "\n");

    std::mutex print_mutex;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= spec.seeds.size()) return;
            {
                std::lock_guard<std::mutex> lk(failure_mutex);
                if (failure) return;
            }
            std::uint64_t seed = spec.seeds[i];
            try {
                currl::RunArtifacts art = currl::run_one_seed(spec, seed);
                std::string stem = spec.name + "_seed" + std::to_string(seed);
                currl::write_file_atomic(out_dir / (stem + ".csv"), currl::log_to_csv(art.run.log));
                currl::write_file_atomic(out_dir / (stem + ".json"),
                                         currl::run_to_json(art.run).dump() + "\n");
                if (!art.run.eval_trace.empty())
                    currl::write_file_atomic(
                        out_dir / (stem + "_eval.csv"),
                        currl::eval_to_csv(art.run.eval_trace, art.run.log.task_names));
                if (art.checkpoint)
                    currl::write_file_atomic(out_dir / (stem + "_checkpoint.json"),
                                             art.checkpoint->dump() + "\n");
                std::lock_guard<std::mutex> lk(print_mutex);
                std::cout << "seed " << seed << ": wrote " << (out_dir / stem).string() << ".{csv,json}"
                          << std::endl;
            } catch (...) {
                std::lock_guard<std::mutex> lk(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    int n_workers = std::min<int>(jobs, static_cast<int>(spec.seeds.size()));
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return kExitOk;
}

std::string csv_opt(const std::optional<double>& v) {
    return v ? currl::fmt_double(*v) : std::string();
}

int cmd_report(const std::string& dir_flag, int ensemble_width) {
    fs::path dir(dir_flag);
    if (!fs::is_directory(dir)) throw ConfigError("report: not a directory: " + dir.string());

    std::vector<fs::path> run_files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (name.size() < 5 || name.substr(name.size() - 5) != ".json") continue;
        if (name.find("_seed") == std::string::npos) continue;
        if (name.find("_checkpoint.json") != std::string::npos) continue;
        run_files.push_back(entry.path());
    }
    std::sort(run_files.begin(), run_files.end());
    if (run_files.empty())
        throw ConfigError("report: no run logs (*_seed*.json) found in " + dir.string());

    std::string summary = "file,scheduler,seed,total_steps,final_macro_low,final_macro_all,best_step\n";
    std::string proportions = "file,scheduler,seed,task_name,count,fraction\n";
    for (const fs::path& file : run_files) {
        currl::RunResult run = currl::run_from_json(nlohmann::json::parse(currl::read_file(file)));
        currl::RunSummary s = currl::summarize_run(run, ensemble_width);
        std::string stem = file.stem().string();
        summary += stem + ',' + s.scheduler + ',' + std::to_string(s.seed) + ',' +
                   std::to_string(s.total_steps) + ',' + csv_opt(s.final_macro_low) + ',' +
                   csv_opt(s.final_macro_all) + ',' +
                   (s.best_step ? std::to_string(*s.best_step) : std::string()) + '\n';

        auto rep =
            currl::action_proportions(run.log.records, static_cast<int>(run.log.task_names.size()));
        for (std::size_t t = 0; t < run.log.task_names.size(); ++t)
            proportions += stem + ',' + s.scheduler + ',' + std::to_string(s.seed) + ',' +
                           run.log.task_names[t] + ',' + std::to_string(rep.total_counts[t]) + ',' +
                           currl::fmt_double(rep.total_fractions[t]) + '\n';

        std::string windows = "first_step,last_step";
        for (const std::string& n : run.log.task_names) windows += ",frac_" + n;
        windows += '\n';
        for (const currl::ProportionWindow& w : rep.windows) {
            windows += std::to_string(w.first_step) + ',' + std::to_string(w.last_step);
            for (double f : w.fractions) windows += ',' + currl::fmt_double(f);
            windows += '\n';
        }
        currl::write_file_atomic(dir / ("report_windows_" + stem + ".csv"), windows);
    }
    currl::write_file_atomic(dir / "report_summary.csv", summary);
    currl::write_file_atomic(dir / "report_proportions.csv", proportions);
    std::cout << "report: " << run_files.size() << " runs -> " << (dir / "report_summary.csv").string()
              << std::endl;
    return kExitOk;
}

int cmd_probe(const std::string& checkpoint_path, const std::string& log_path, long step,
              double amplification, const std::string& out_flag) {
    currl::DqnCheckpoint ckpt =
        currl::DqnCheckpoint::from_json(nlohmann::json::parse(currl::read_file(checkpoint_path)));
    currl::RunResult run =
        currl::run_from_json(nlohmann::json::parse(currl::read_file(log_path)));
    if (run.states.empty())
        throw ConfigError("probe: log has no recorded states (run with record_states: true)");

    const currl::RecordedState* found = nullptr;
    if (step < 0) {
        found = &run.states.back();
    } else {
        for (const currl::RecordedState& s : run.states)
            if (s.step == step) {
                found = &s;
                break;
            }
        if (!found)
            throw ConfigError("probe: no recorded state at step " + std::to_string(step) +
                              " (states span " + std::to_string(run.states.front().step) + ".." +
                              std::to_string(run.states.back().step) + ")");
    }

    currl::ProbeMatrix m = currl::probe_q_network(ckpt.selection_net(), found->state,
                                                  ckpt.probes_per_task, run.log.task_names,
                                                  amplification);
    fs::path out_dir = out_flag.empty() ? fs::path(log_path).parent_path() : fs::path(out_flag);
    fs::create_directories(out_dir);
    std::string stem = fs::path(log_path).stem().string() + "_probe_step" +
                       std::to_string(found->step);
    currl::write_file_atomic(out_dir / (stem + ".csv"), m.to_csv());
    nlohmann::json j = m.to_json();
    j["step"] = found->step;
    currl::write_file_atomic(out_dir / (stem + ".json"), j.dump(2) + "\n");
    std::cout << "probe: step " << found->step << " amplification " << amplification << " -> "
              << (out_dir / stem).string() << ".{csv,json}" << std::endl;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"curriculum scheduling experiments"};
    app.require_subcommand(1);

    std::string spec_path, out_flag, seeds_flag;
    int jobs = 1;
    CLI::App* run = app.add_subcommand("run", "run an experiment spec across its seeds");
    run->add_option("--spec", spec_path, "experiment spec file (JSON)")->required();
    run->add_option("--out", out_flag, "output directory (overrides spec and CURRL_OUT_ROOT)");
    run->add_option("--seeds", seeds_flag, "comma-separated seed list overriding the spec");
    run->add_option("--jobs", jobs, "seeds to run in parallel")->default_val(1);

    std::string report_dir;
    int ensemble_width = 4;
    CLI::App* report = app.add_subcommand("report", "summarize run logs in a directory");
    report->add_option("--dir", report_dir, "directory containing *_seed*.json run logs")->required();
    report->add_option("--ensemble-width", ensemble_width,
                       "evaluation rows averaged when locating the best level")
        ->default_val(4);

    std::string ckpt_path, log_path, probe_out;
    long probe_step = -1;
    double amplification = 5.0;
    CLI::App* probe = app.add_subcommand("probe", "probe a Q-network checkpoint with amplified states");
    probe->add_option("--checkpoint", ckpt_path, "checkpoint JSON from a dqn run")->required();
    probe->add_option("--log", log_path, "run log JSON with recorded states")->required();
    probe->add_option("--step", probe_step, "step of the recorded state to probe (default: last)");
    probe->add_option("--amplification", amplification, "factor applied to the probed task's block")
        ->default_val(5.0);
    probe->add_option("--out", probe_out, "output directory (default: alongside the log)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitBadInput;
    }

    try {
        if (run->parsed()) return cmd_run(spec_path, out_flag, seeds_flag, jobs);
        if (report->parsed()) return cmd_report(report_dir, ensemble_width);
        return cmd_probe(ckpt_path, log_path, probe_step, amplification, probe_out);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitBadInput;
    } catch (const RunAbort& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitRuntime;
    }
}
