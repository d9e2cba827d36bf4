#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "currl/io.hpp"
#include "currl/json_util.hpp"
#include "currl/log.hpp"
#include "currl/runner.hpp"
#include "currl/scheduler.hpp"
#include "currl/task.hpp"
#include "helpers.hpp"

using namespace currl;

namespace {

/// Scheduler that observes every decision, echoes the score as the reward,
/// and walks tasks round-robin.  Records everything it is handed so the test
/// can audit the runner's call pattern.
class EchoScheduler : public Scheduler {
  public:
    explicit EchoScheduler(int k) : k_(k) {}

    std::string_view kind() const override { return "echo"; }
    int task_count() const override { return k_; }
    bool wants_observation(long) const override { return true; }

    Decision initial_action(Rng&) override {
        ++initial_calls;
        return {TaskId{0}, DecisionSource::UnvisitedQueue};
    }

    CycleOutcome decision_cycle(long step, TaskId current, std::optional<Score> score,
                                const StudentEnvironment&, Rng&) override {
        seen_steps.push_back(step);
        seen_actions.push_back(current.value);
        seen_scores.push_back(score ? score->value : std::nan(""));
        int next = (current.value + 1) % k_;
        CycleOutcome out;
        out.next = {TaskId{next}, DecisionSource::Greedy};
        out.reward = score ? std::optional<double>(score->value) : std::nullopt;
        out.epsilon = 0.5;
        return out;
    }

    nlohmann::json snapshot_state() const override { return {{"calls", seen_steps.size()}}; }

    int initial_calls = 0;
    std::vector<long> seen_steps;
    std::vector<int> seen_actions;
    std::vector<double> seen_scores;

  private:
    int k_;
};

/// Scheduler that never observes and keeps choosing task 0.
class BlindScheduler : public Scheduler {
  public:
    explicit BlindScheduler(int k) : k_(k) {}
    std::string_view kind() const override { return "blind"; }
    int task_count() const override { return k_; }
    bool wants_observation(long) const override { return false; }
    Decision initial_action(Rng&) override { return {TaskId{0}, DecisionSource::Random}; }
    CycleOutcome decision_cycle(long, TaskId, std::optional<Score> score,
                                const StudentEnvironment&, Rng&) override {
        saw_score = saw_score || score.has_value();
        return {{TaskId{0}, DecisionSource::Random}, std::nullopt, std::nullopt};
    }
    bool saw_score = false;

  private:
    int k_;
};

ExperimentLog make_log(int k, const std::vector<StepRecord>& records) {
    ExperimentLog log;
    log.scheduler_kind = "echo";
    log.seed = 3;
    log.total_steps = static_cast<long>(records.size());
    for (int i = 0; i < k; ++i) log.task_names.push_back("t" + std::to_string(i));
    log.config_snapshot = {{"note", "test"}};
    log.records = records;
    return log;
}

}  // namespace

TEST_CASE("task profile validation accepts a well-formed set") {
    auto tasks = test::make_profiles(4, 2);
    CHECK_NOTHROW(validate_profiles(tasks));
}

TEST_CASE("task profile validation rejects structural defects") {
    CHECK_THROWS_AS(validate_profiles({}), ConfigError);

    auto bad_id = test::make_profiles(3);
    bad_id[2].id = TaskId{5};
    CHECK_THROWS_WITH(validate_profiles(bad_id), Catch::Matchers::ContainsSubstring("id"));

    auto empty_name = test::make_profiles(3);
    empty_name[1].name = "";
    CHECK_THROWS_AS(validate_profiles(empty_name), ConfigError);

    auto dup_name = test::make_profiles(3);
    dup_name[2].name = dup_name[0].name;
    CHECK_THROWS_WITH(validate_profiles(dup_name), Catch::Matchers::ContainsSubstring("duplicate"));

    auto zero_weight = test::make_profiles(3);
    zero_weight[0].data_weight = 0.0;
    CHECK_THROWS_AS(validate_profiles(zero_weight), ConfigError);

    auto bad_sum = test::make_profiles(3);
    bad_sum[0].data_weight = 0.9;
    CHECK_THROWS_WITH(validate_profiles(bad_sum), Catch::Matchers::ContainsSubstring("sum"));
}

TEST_CASE("normalize_weights rescales to a valid distribution") {
    auto tasks = test::make_profiles(4);
    tasks[0].data_weight = 3.0;
    tasks[1].data_weight = 1.0;
    tasks[2].data_weight = 5.0;
    tasks[3].data_weight = 1.0;
    normalize_weights(tasks);
    CHECK_NOTHROW(validate_profiles(tasks));
    CHECK(tasks[0].data_weight == Catch::Approx(0.3));
    CHECK(tasks[2].data_weight == Catch::Approx(0.5));
}

TEST_CASE("warmup_pool selects only eligible tasks") {
    auto tasks = test::make_profiles(5, 0);
    tasks[1].warmup_eligible = true;
    tasks[4].warmup_eligible = true;
    auto pool = warmup_pool(tasks);
    REQUIRE(pool.size() == 2);
    CHECK(pool[0].value == 1);
    CHECK(pool[1].value == 4);
    CHECK(warmup_pool(test::make_profiles(3, 0)).empty());
}

TEST_CASE("fmt_double round-trips exactly") {
    for (double v : {0.1, 1.0 / 3.0, -2.5, 0.0, 1e-300, 6.02214076e23, 0.3321,
                     -0.59871234567890123, 1e300, 4.9406564584124654e-324}) {
        std::string s = fmt_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    CHECK(fmt_double(0.5) == "0.5");
    CHECK(fmt_double(-1.0) == "-1");
}

TEST_CASE("step log CSV round-trips with optional fields") {
    std::vector<StepRecord> records;
    records.push_back({1, TaskId{0}, std::nullopt, std::nullopt, std::nullopt,
                       DecisionSource::UnvisitedQueue});
    records.push_back({2, TaskId{1}, -0.25, -0.5, 1.0, DecisionSource::Warmup});
    records.push_back({3, TaskId{2}, 0.125, -0.375, std::nullopt, DecisionSource::Greedy});
    records.push_back({4, TaskId{0}, std::nullopt, std::nullopt, 0.01, DecisionSource::Random});
    ExperimentLog log = make_log(3, records);

    std::string csv = log_to_csv(log);
    CHECK(csv.substr(0, std::string(kLogCsvHeader).size()) == kLogCsvHeader);
    auto parsed = records_from_csv(csv);
    REQUIRE(parsed.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(parsed[i].step == records[i].step);
        CHECK(parsed[i].action.value == records[i].action.value);
        CHECK(parsed[i].reward == records[i].reward);
        CHECK(parsed[i].score == records[i].score);
        CHECK(parsed[i].epsilon == records[i].epsilon);
        CHECK(parsed[i].source == records[i].source);
    }
}

TEST_CASE("step log CSV parsing rejects malformed input") {
    CHECK_THROWS_WITH(records_from_csv("nonsense\n1,0,,,,greedy\n"),
                      Catch::Matchers::ContainsSubstring("header"));
    std::string header(kLogCsvHeader);
    CHECK_THROWS_WITH(records_from_csv(header + "\n1,0,,,greedy\n"),
                      Catch::Matchers::ContainsSubstring("6 fields"));
    CHECK_THROWS_WITH(records_from_csv(header + "\n1,0,abc,,,greedy\n"),
                      Catch::Matchers::ContainsSubstring("cannot parse"));
    CHECK_THROWS_WITH(records_from_csv(header + "\n1,0,,,,sideways\n"),
                      Catch::Matchers::ContainsSubstring("decision source"));
}

TEST_CASE("eval trace CSV round-trips") {
    std::vector<EvalRow> rows;
    rows.push_back({100, {-0.5, -0.25, -0.125}, -0.375, -0.2916666666666667});
    rows.push_back({200, {-0.4, -0.2, -0.1}, -0.3, -0.23333333333333334});
    std::vector<std::string> names = {"a", "b", "c"};

    std::string csv = eval_to_csv(rows, names);
    CHECK(csv.rfind("step,score_a,score_b,score_c,macro_low,macro_all\n", 0) == 0);
    auto parsed = eval_from_csv(csv, 3);
    REQUIRE(parsed.size() == 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(parsed[i].step == rows[i].step);
        CHECK(parsed[i].task_scores == rows[i].task_scores);
        CHECK(parsed[i].macro_low == rows[i].macro_low);
        CHECK(parsed[i].macro_all == rows[i].macro_all);
    }
    CHECK_THROWS_AS(eval_from_csv(csv, 4), ConfigError);
}

TEST_CASE("run JSON round-trips and re-serializes identically") {
    RunResult run;
    run.log = make_log(2, {{1, TaskId{0}, std::nullopt, std::nullopt, std::nullopt,
                            DecisionSource::UnvisitedQueue},
                           {2, TaskId{1}, 0.5, -1.5, 0.25, DecisionSource::Greedy}});
    run.eval_trace.push_back({2, {-1.0, -2.0}, -1.5, -1.5});
    run.states.push_back({2, StateVector{{0.5, 0.25, 0.125, 1.0}}});
    run.snapshots.push_back({2, nlohmann::json{{"q", {0.1, -0.2}}}});

    nlohmann::json j = run_to_json(run);
    RunResult back = run_from_json(j);
    CHECK(run_to_json(back).dump() == j.dump());
    CHECK(back.log.records[1].reward == run.log.records[1].reward);
    CHECK(back.eval_trace[0].task_scores == run.eval_trace[0].task_scores);
    CHECK(back.states[0].state.values == run.states[0].state.values);
    CHECK(back.snapshots[0].state == run.snapshots[0].state);

    nlohmann::json bad = j;
    bad["schema_version"] = 2;
    CHECK_THROWS_WITH(run_from_json(bad), Catch::Matchers::ContainsSubstring("schema_version"));
}

TEST_CASE("validate_log enforces structural invariants") {
    auto good = make_log(2, {{1, TaskId{0}, std::nullopt, std::nullopt, std::nullopt,
                              DecisionSource::Warmup},
                             {2, TaskId{1}, 0.5, 0.5, std::nullopt, DecisionSource::Greedy}});
    CHECK_NOTHROW(validate_log(good));

    auto short_log = good;
    short_log.total_steps = 3;
    CHECK_THROWS_WITH(validate_log(short_log), Catch::Matchers::ContainsSubstring("record count"));

    auto bad_step = good;
    bad_step.records[1].step = 5;
    CHECK_THROWS_WITH(validate_log(bad_step), Catch::Matchers::ContainsSubstring("expected 2"));

    auto bad_action = good;
    bad_action.records[0].action = TaskId{7};
    CHECK_THROWS_WITH(validate_log(bad_action),
                      Catch::Matchers::ContainsSubstring("unknown task"));

    auto desync = good;
    desync.records[1].score.reset();
    CHECK_THROWS_WITH(validate_log(desync), Catch::Matchers::ContainsSubstring("out of sync"));
}

TEST_CASE("atomic file writes replace content completely") {
    test::TempDir dir;
    auto p = dir / "file.txt";
    write_file_atomic(p, "first version\n");
    CHECK(read_file(p) == "first version\n");
    write_file_atomic(p, "x");
    CHECK(read_file(p) == "x");
    CHECK_THROWS_AS(read_file(dir / "missing.txt"), ConfigError);
}

TEST_CASE("json helpers reject unknown keys and wrong types") {
    nlohmann::json j = {{"alpha", 0.1}, {"beta", "x"}};
    CHECK_NOTHROW(check_keys(j, "ctx", {"alpha", "beta"}));
    CHECK_THROWS_WITH(check_keys(j, "ctx", {"alpha"}),
                      Catch::Matchers::ContainsSubstring("beta"));
    CHECK(req<double>(j, "ctx", "alpha") == 0.1);
    CHECK_THROWS_AS(req<double>(j, "ctx", "beta"), ConfigError);
    CHECK_THROWS_AS(req<double>(j, "ctx", "gamma"), ConfigError);
    CHECK(opt<double>(j, "ctx", "gamma", 7.0) == 7.0);
}

TEST_CASE("runner produces one record per step and decisions on the interval") {
    auto profiles = test::make_profiles(3);
    test::ScriptedEnv env(profiles, {1.0, 2.0, 3.0});
    EchoScheduler sched(3);
    RunConfig cfg;
    cfg.total_steps = 25;
    cfg.action_interval = 5;
    cfg.seed = 9;

    RunResult run = run_experiment(cfg, env, sched);

    REQUIRE(run.log.records.size() == 25);
    CHECK(run.log.scheduler_kind == "echo");
    CHECK(run.log.seed == 9);
    CHECK(run.log.task_names == std::vector<std::string>{"t0", "t1", "t2"});
    CHECK(sched.initial_calls == 1);
    CHECK(sched.seen_steps == std::vector<long>{5, 10, 15, 20, 25});

    for (const StepRecord& r : run.log.records) {
        bool decision = r.step % 5 == 0;
        CHECK(r.reward.has_value() == decision);
        CHECK(r.score.has_value() == decision);
        CHECK(r.epsilon.has_value() == decision);
    }

    // The first decision happens after five steps of the initial action, and
    // each decision's record still carries the action trained that step.
    for (long s = 1; s <= 5; ++s) CHECK(run.log.records[s - 1].action.value == 0);
    for (long s = 6; s <= 10; ++s) CHECK(run.log.records[s - 1].action.value == 1);
    CHECK(run.log.records[4].source == DecisionSource::UnvisitedQueue);
    CHECK(run.log.records[5].source == DecisionSource::Greedy);

    // The environment trained exactly the logged actions, in order.
    REQUIRE(env.trained().size() == 25);
    for (std::size_t i = 0; i < 25; ++i)
        CHECK(env.trained()[i] == run.log.records[i].action.value);
}

TEST_CASE("runner with total_steps equal to the interval makes one decision") {
    test::ScriptedEnv env(test::make_profiles(2), {1.0, 2.0});
    EchoScheduler sched(2);
    RunConfig cfg;
    cfg.total_steps = 10;
    cfg.action_interval = 10;

    RunResult run = run_experiment(cfg, env, sched);
    CHECK(sched.seen_steps == std::vector<long>{10});
    int with_reward = 0;
    for (const StepRecord& r : run.log.records) with_reward += r.reward.has_value();
    CHECK(with_reward == 1);
}

TEST_CASE("runner passes the configured evaluation mode to the environment") {
    auto profiles = test::make_profiles(2);
    test::ScriptedEnv env(profiles, {1.0, 3.0});
    EchoScheduler sched(2);
    RunConfig cfg;
    cfg.total_steps = 4;
    cfg.action_interval = 2;

    cfg.eval_mode = EvalMode::CurrentTask;
    RunResult per_task = run_experiment(cfg, env, sched);
    // Task 0 trains first (loss 1.0), then task 1 (loss 3.0).
    CHECK(per_task.log.records[1].score == -1.0);
    CHECK(per_task.log.records[3].score == -3.0);

    env.reset(0);
    EchoScheduler sched2(2);
    cfg.eval_mode = EvalMode::Mixed;
    RunResult mixed = run_experiment(cfg, env, sched2);
    CHECK(mixed.log.records[1].score == -2.0);
    CHECK(mixed.log.records[3].score == -2.0);
}

TEST_CASE("runner never evaluates for schedulers that do not observe") {
    test::ScriptedEnv env(test::make_profiles(2), {1.0, 2.0});
    BlindScheduler sched(2);
    RunConfig cfg;
    cfg.total_steps = 40;
    cfg.action_interval = 4;

    RunResult run = run_experiment(cfg, env, sched);
    CHECK_FALSE(sched.saw_score);
    for (const StepRecord& r : run.log.records) {
        CHECK_FALSE(r.reward.has_value());
        CHECK_FALSE(r.score.has_value());
        CHECK_FALSE(r.epsilon.has_value());
    }
}

TEST_CASE("runner emits eval rows on the configured cadence") {
    auto profiles = test::make_profiles(3, 1);  // t0 warm-up eligible; t1, t2 are not
    test::ScriptedEnv env(profiles, {1.0, 2.0, 4.0});
    EchoScheduler sched(3);
    RunConfig cfg;
    cfg.total_steps = 30;
    cfg.action_interval = 5;
    cfg.eval_cadence = 10;

    RunResult run = run_experiment(cfg, env, sched);
    REQUIRE(run.eval_trace.size() == 3);
    CHECK(run.eval_trace[0].step == 10);
    CHECK(run.eval_trace[2].step == 30);
    const EvalRow& row = run.eval_trace[0];
    REQUIRE(row.task_scores.size() == 3);
    CHECK(row.task_scores == std::vector<double>{-1.0, -2.0, -4.0});
    CHECK(row.macro_all == Catch::Approx((-1.0 - 2.0 - 4.0) / 3.0));
    CHECK(row.macro_low == Catch::Approx((-2.0 - 4.0) / 2.0));

    cfg.eval_cadence = 7;  // not a multiple of the interval
    test::ScriptedEnv env2(profiles, {1.0, 2.0, 4.0});
    EchoScheduler sched2(3);
    CHECK_THROWS_WITH(run_experiment(cfg, env2, sched2),
                      Catch::Matchers::ContainsSubstring("multiple of action_interval"));
}

TEST_CASE("macro_low falls back to macro_all when every task is warm-up eligible") {
    auto profiles = test::make_profiles(2, 2);
    test::ScriptedEnv env(profiles, {1.0, 3.0});
    EchoScheduler sched(2);
    RunConfig cfg;
    cfg.total_steps = 4;
    cfg.action_interval = 2;
    cfg.eval_cadence = 4;

    RunResult run = run_experiment(cfg, env, sched);
    REQUIRE(run.eval_trace.size() == 1);
    CHECK(run.eval_trace[0].macro_low == run.eval_trace[0].macro_all);
}

TEST_CASE("runner records states and snapshots at decision steps") {
    test::ScriptedEnv env(test::make_profiles(2), {1.0, 2.0}, 3);
    EchoScheduler sched(2);
    RunConfig cfg;
    cfg.total_steps = 20;
    cfg.action_interval = 5;
    cfg.record_states = true;
    cfg.snapshot_interval = 10;

    RunResult run = run_experiment(cfg, env, sched);
    REQUIRE(run.states.size() == 4);
    CHECK(run.states[0].step == 5);
    CHECK(run.states[0].state.values.size() == 6);  // 2 tasks x 3 probes
    REQUIRE(run.snapshots.size() == 2);
    CHECK(run.snapshots[0].step == 10);
    CHECK(run.snapshots[1].step == 20);
}

TEST_CASE("runner aborts with RunAbort when an evaluation is non-finite") {
    auto rule = [](int, long step, std::vector<double>& losses) {
        if (step >= 9) losses[0] = std::nan("");
    };
    test::ScriptedEnv env(test::make_profiles(2), {1.0, 2.0}, 1, rule);
    EchoScheduler sched(2);
    RunConfig cfg;
    cfg.total_steps = 20;
    cfg.action_interval = 5;

    CHECK_THROWS_AS(run_experiment(cfg, env, sched), RunAbort);
}

TEST_CASE("runner validates configuration bounds") {
    RunConfig cfg;
    cfg.total_steps = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.action_interval = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.warmup_steps = cfg.total_steps + 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    // Mismatched task counts are rejected before any step runs.
    test::ScriptedEnv env(test::make_profiles(3), {1.0, 2.0, 3.0});
    EchoScheduler sched(2);
    CHECK_THROWS_WITH(run_experiment(RunConfig{}, env, sched),
                      Catch::Matchers::ContainsSubstring("tasks"));
    CHECK(env.trained().empty());
}

TEST_CASE("runner output is identical across repeated runs with one seed") {
    auto profiles = test::make_profiles(2);
    auto rule = [](int trained, long, std::vector<double>& losses) {
        losses[trained] *= 0.99;
    };
    RunConfig cfg;
    cfg.total_steps = 60;
    cfg.action_interval = 3;
    cfg.eval_cadence = 15;
    cfg.seed = 42;

    test::ScriptedEnv env1(profiles, {1.0, 2.0}, 2, rule);
    EchoScheduler sched1(2);
    RunResult a = run_experiment(cfg, env1, sched1);

    test::ScriptedEnv env2(profiles, {1.0, 2.0}, 2, rule);
    EchoScheduler sched2(2);
    RunResult b = run_experiment(cfg, env2, sched2);

    CHECK(log_to_csv(a.log) == log_to_csv(b.log));
    CHECK(run_to_json(a).dump() == run_to_json(b).dump());
}
