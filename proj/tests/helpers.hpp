#pragma once

// Shared fixtures for the test suite: deterministic scripted environments,
// draw-count instrumentation, and temporary-directory plumbing for the CLI
// tests.  Everything here is intentionally free of randomness of its own so
// tests can reason about every draw the library makes.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "currl/env.hpp"
#include "currl/rng.hpp"
#include "currl/task.hpp"

namespace test {

/// Task set builder: k tasks named t0..t{k-1} with equal weights; the first
/// `eligible` tasks are warm-up eligible.
inline std::vector<currl::TaskProfile> make_profiles(int k, int eligible = 0) {
    std::vector<currl::TaskProfile> tasks;
    for (int i = 0; i < k; ++i)
        tasks.push_back(currl::TaskProfile{currl::TaskId{i}, "t" + std::to_string(i), 1.0 / k,
                                           i < eligible});
    return tasks;
}

/// Minimal deterministic student: per-task scalar losses mutated by an
/// injectable rule on each training step.  Scores are negated losses, the
/// state vector repeats each task's loss across its probes, and no call never
/// consumes randomness, so scheduler draw-order tests can treat the
/// environment as transparent.
class ScriptedEnv : public currl::StudentEnvironment {
  public:
    using StepRule = std::function<void(int trained, long step_index, std::vector<double>&)>;

    ScriptedEnv(std::vector<currl::TaskProfile> profiles, std::vector<double> initial_losses,
                int probes_per_task = 1, StepRule rule = nullptr)
        : profiles_(std::move(profiles)),
          initial_(std::move(initial_losses)),
          losses_(initial_),
          probes_(probes_per_task),
          rule_(std::move(rule)) {}

    int task_count() const override { return static_cast<int>(profiles_.size()); }
    const std::vector<currl::TaskProfile>& tasks() const override { return profiles_; }
    int probes_per_task() const override { return probes_; }
    long steps_trained() const override { return steps_; }

    void train_on(currl::TaskId task, currl::Rng&) override {
        trained_.push_back(task.value);
        if (rule_) rule_(task.value, steps_, losses_);
        ++steps_;
    }

    currl::Score eval_score(const currl::EvalTarget& target) const override {
        if (!target.is_mixed()) return currl::Score{-losses_[target.task->value]};
        double sum = 0.0;
        for (double l : losses_) sum += l;
        return currl::Score{-sum / losses_.size()};
    }

    currl::StateVector observe_state() const override {
        currl::StateVector s;
        for (double l : losses_)
            for (int p = 0; p < probes_; ++p) s.values.push_back(l);
        return s;
    }

    void reset(std::uint64_t) override {
        losses_ = initial_;
        steps_ = 0;
        trained_.clear();
    }

    const std::vector<int>& trained() const { return trained_; }
    std::vector<double>& losses() { return losses_; }

  private:
    std::vector<currl::TaskProfile> profiles_;
    std::vector<double> initial_;
    std::vector<double> losses_;
    int probes_;
    StepRule rule_;
    long steps_ = 0;
    std::vector<int> trained_;
};

/// Number of engine outputs `fn(rng)` consumes, measured by replaying a
/// clone of the same seed until its raw stream catches up.
template <typename Fn>
int draws_consumed(std::uint64_t seed, Fn&& fn) {
    currl::Rng used(seed);
    fn(used);
    std::uint64_t next = used.raw();
    for (int n = 0; n <= 64; ++n) {
        currl::Rng replay(seed);
        for (int i = 0; i < n; ++i) replay.raw();
        if (replay.raw() == next) return n;
    }
    return -1;
}

/// Unique temporary directory removed on destruction (best effort).
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("currl_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

/// Runs the built CLI with `args`, capturing exit code and stdout+stderr.
struct CliResult {
    int exit_code = -1;
    std::string output;
};

inline CliResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    static int counter = 0;
    std::filesystem::path cap = std::filesystem::temp_directory_path() /
                                ("currl_cli_out_" + std::to_string(::getpid()) + "_" +
                                 std::to_string(counter++) + ".txt");
    std::string cmd = env_prefix + std::string(CURRL_CLI_PATH) + " " + args + " > " +
                      cap.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    r.output = slurp(cap);
    std::error_code ec;
    std::filesystem::remove(cap, ec);
    return r;
}

}  // namespace test
