#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "currl/env.hpp"
#include "currl/task.hpp"

namespace currl {

/// Why an action was selected.  Recorded per step so scheduler behavior can
/// be audited from the log alone.
enum class DecisionSource {
    Warmup,          // drawn from the warm-up pool before the warm-up horizon
    Random,          // exploration draw over all tasks
    Greedy,          // argmax of the scheduler's value estimates
    UnvisitedQueue,  // forced initial visit (round-robin queue / fixed start)
};

inline const char* to_string(DecisionSource s) {
    switch (s) {
        case DecisionSource::Warmup: return "warmup";
        case DecisionSource::Random: return "random";
        case DecisionSource::Greedy: return "greedy";
        case DecisionSource::UnvisitedQueue: return "unvisited_queue";
    }
    return "unknown";
}

inline DecisionSource decision_source_from_string(const std::string& s) {
    if (s == "warmup") return DecisionSource::Warmup;
    if (s == "random") return DecisionSource::Random;
    if (s == "greedy") return DecisionSource::Greedy;
    if (s == "unvisited_queue") return DecisionSource::UnvisitedQueue;
    throw ConfigError("unknown decision source '" + s + "'");
}

/// One training step as it appears in the log.  reward/score/epsilon are
/// present only on steps where the scheduler made an observation; reward and
/// score are always present or absent together.
struct StepRecord {
    long step = 0;  // 1-based
    TaskId action;
    std::optional<double> reward;
    std::optional<double> score;
    std::optional<double> epsilon;
    DecisionSource source = DecisionSource::Warmup;
};

/// One row of the periodic evaluation trace: per-task scores plus the two
/// macro-averages used by analysis (over the low-resource tasks and over all
/// tasks).  Scores here are mixture-independent; higher is better.
struct EvalRow {
    long step = 0;
    std::vector<double> task_scores;
    double macro_low = 0.0;
    double macro_all = 0.0;
};

/// A state observation captured at a decision step, kept for offline probing
/// of Q-networks against states the scheduler actually saw.
struct RecordedState {
    long step = 0;
    StateVector state;
};

/// Opaque scheduler internals captured periodically (e.g. value tables).
struct Snapshot {
    long step = 0;
    nlohmann::json state;
};

/// Complete per-step record of one run.
struct ExperimentLog {
    int schema_version = 1;
    std::string scheduler_kind;
    std::uint64_t seed = 0;
    long total_steps = 0;
    std::vector<std::string> task_names;
    /// Resolved configuration the run was produced from.  Deliberately
    /// excludes output locations so identical runs serialize identically
    /// wherever they are written.
    nlohmann::json config_snapshot;
    std::vector<StepRecord> records;
};

/// Everything a run produces.  The evaluation trace is separate from the
/// step log: evaluations happen on a fixed cadence regardless of scheduler
/// decisions and measure all tasks, not the trained one.
struct RunResult {
    ExperimentLog log;
    std::vector<EvalRow> eval_trace;
    std::vector<RecordedState> states;
    std::vector<Snapshot> snapshots;
};

/// Checks the structural invariants of a log: steps are 1..total_steps in
/// order, actions are in range, and reward/score presence matches.
inline void validate_log(const ExperimentLog& log) {
    if (static_cast<long>(log.records.size()) != log.total_steps)
        throw ConfigError("log: record count " + std::to_string(log.records.size()) +
                          " does not match total_steps " + std::to_string(log.total_steps));
    int k = static_cast<int>(log.task_names.size());
    for (std::size_t i = 0; i < log.records.size(); ++i) {
        const StepRecord& r = log.records[i];
        if (r.step != static_cast<long>(i) + 1)
            throw ConfigError("log: record " + std::to_string(i) + " has step " +
                              std::to_string(r.step) + ", expected " + std::to_string(i + 1));
        if (r.action.value < 0 || r.action.value >= k)
            throw ConfigError("log: step " + std::to_string(r.step) + " trains unknown task " +
                              std::to_string(r.action.value));
        if (r.reward.has_value() != r.score.has_value())
            throw ConfigError("log: step " + std::to_string(r.step) +
                              " has reward and score presence out of sync");
    }
}

/// Shortest round-trip decimal representation of a double.  Used everywhere
/// a number is written to CSV so that output bytes are stable.
inline std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ConfigError(where + ": cannot parse number '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s, const std::string& where) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ConfigError(where + ": cannot parse integer '" + s + "'");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline const char* kLogCsvHeader = "step,action,reward,score,epsilon,decision_source";

/// Step log as CSV.  Missing optionals serialize as empty fields.
inline std::string log_to_csv(const ExperimentLog& log) {
    std::string out = kLogCsvHeader;
    out += '\n';
    auto field = [](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); };
    for (const StepRecord& r : log.records) {
        out += std::to_string(r.step);
        out += ',';
        out += std::to_string(r.action.value);
        out += ',';
        out += field(r.reward);
        out += ',';
        out += field(r.score);
        out += ',';
        out += field(r.epsilon);
        out += ',';
        out += to_string(r.source);
        out += '\n';
    }
    return out;
}

/// Parses records from the CSV produced by log_to_csv.  Only the per-step
/// table lives in CSV; metadata (config, seed, task names) lives in the JSON
/// sibling, so the result carries records only.
inline std::vector<StepRecord> records_from_csv(const std::string& csv) {
    std::vector<StepRecord> records;
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != kLogCsvHeader)
        throw ConfigError("log csv: missing or unexpected header line");
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        const std::string where = "log csv line " + std::to_string(line_no);
        if (f.size() != 6) throw ConfigError(where + ": expected 6 fields, got " + std::to_string(f.size()));
        StepRecord r;
        r.step = parse_long(f[0], where);
        r.action = TaskId{static_cast<int>(parse_long(f[1], where))};
        if (!f[2].empty()) r.reward = parse_double(f[2], where);
        if (!f[3].empty()) r.score = parse_double(f[3], where);
        if (!f[4].empty()) r.epsilon = parse_double(f[4], where);
        r.source = decision_source_from_string(f[5]);
        records.push_back(r);
    }
    return records;
}

/// Evaluation trace as CSV: step, one score column per task, then the two
/// macro-averages.
inline std::string eval_to_csv(const std::vector<EvalRow>& rows,
                               const std::vector<std::string>& task_names) {
    std::string out = "step";
    for (const std::string& n : task_names) out += ",score_" + n;
    out += ",macro_low,macro_all\n";
    for (const EvalRow& r : rows) {
        out += std::to_string(r.step);
        for (double s : r.task_scores) {
            out += ',';
            out += fmt_double(s);
        }
        out += ',';
        out += fmt_double(r.macro_low);
        out += ',';
        out += fmt_double(r.macro_all);
        out += '\n';
    }
    return out;
}

inline std::vector<EvalRow> eval_from_csv(const std::string& csv, int task_count) {
    std::vector<EvalRow> rows;
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("eval csv: empty file");
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        const std::string where = "eval csv line " + std::to_string(line_no);
        if (static_cast<int>(f.size()) != task_count + 3)
            throw ConfigError(where + ": expected " + std::to_string(task_count + 3) + " fields");
        EvalRow r;
        r.step = parse_long(f[0], where);
        for (int i = 0; i < task_count; ++i) r.task_scores.push_back(parse_double(f[1 + i], where));
        r.macro_low = parse_double(f[task_count + 1], where);
        r.macro_all = parse_double(f[task_count + 2], where);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline nlohmann::json run_to_json(const RunResult& run) {
    const ExperimentLog& log = run.log;
    nlohmann::json records = nlohmann::json::array();
    auto or_null = [](const std::optional<double>& v) {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    for (const StepRecord& r : log.records)
        records.push_back({{"step", r.step},
                           {"action", r.action.value},
                           {"reward", or_null(r.reward)},
                           {"score", or_null(r.score)},
                           {"epsilon", or_null(r.epsilon)},
                           {"source", to_string(r.source)}});
    nlohmann::json eval = nlohmann::json::array();
    for (const EvalRow& r : run.eval_trace)
        eval.push_back({{"step", r.step},
                        {"scores", r.task_scores},
                        {"macro_low", r.macro_low},
                        {"macro_all", r.macro_all}});
    nlohmann::json states = nlohmann::json::array();
    for (const RecordedState& s : run.states)
        states.push_back({{"step", s.step}, {"values", s.state.values}});
    nlohmann::json snapshots = nlohmann::json::array();
    for (const Snapshot& s : run.snapshots) snapshots.push_back({{"step", s.step}, {"state", s.state}});
    return {{"schema_version", log.schema_version},
            {"scheduler", log.scheduler_kind},
            {"seed", log.seed},
            {"total_steps", log.total_steps},
            {"task_names", log.task_names},
            {"config", log.config_snapshot},
            {"records", std::move(records)},
            {"eval", std::move(eval)},
            {"states", std::move(states)},
            {"snapshots", std::move(snapshots)}};
}

inline RunResult run_from_json(const nlohmann::json& j) {
    RunResult run;
    ExperimentLog& log = run.log;
    log.schema_version = j.at("schema_version").get<int>();
    if (log.schema_version != 1)
        throw ConfigError("run json: unsupported schema_version " +
                          std::to_string(log.schema_version));
    log.scheduler_kind = j.at("scheduler").get<std::string>();
    log.seed = j.at("seed").get<std::uint64_t>();
    log.total_steps = j.at("total_steps").get<long>();
    log.task_names = j.at("task_names").get<std::vector<std::string>>();
    log.config_snapshot = j.at("config");
    for (const nlohmann::json& rj : j.at("records")) {
        StepRecord r;
        r.step = rj.at("step").get<long>();
        r.action = TaskId{rj.at("action").get<int>()};
        if (!rj.at("reward").is_null()) r.reward = rj.at("reward").get<double>();
        if (!rj.at("score").is_null()) r.score = rj.at("score").get<double>();
        if (!rj.at("epsilon").is_null()) r.epsilon = rj.at("epsilon").get<double>();
        r.source = decision_source_from_string(rj.at("source").get<std::string>());
        log.records.push_back(r);
    }
    for (const nlohmann::json& ej : j.at("eval")) {
        EvalRow r;
        r.step = ej.at("step").get<long>();
        r.task_scores = ej.at("scores").get<std::vector<double>>();
        r.macro_low = ej.at("macro_low").get<double>();
        r.macro_all = ej.at("macro_all").get<double>();
        run.eval_trace.push_back(std::move(r));
    }
    for (const nlohmann::json& sj : j.at("states")) {
        RecordedState s;
        s.step = sj.at("step").get<long>();
        s.state.values = sj.at("values").get<std::vector<double>>();
        run.states.push_back(std::move(s));
    }
    for (const nlohmann::json& sj : j.at("snapshots"))
        run.snapshots.push_back(Snapshot{sj.at("step").get<long>(), sj.at("state")});
    validate_log(log);
    return run;
}

}  // namespace currl
