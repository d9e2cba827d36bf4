#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "currl/log.hpp"
#include "currl/mlp.hpp"
#include "currl/task.hpp"

namespace currl {

/// Action counts and fractions over one step window.
struct ProportionWindow {
    long first_step = 0;
    long last_step = 0;
    std::vector<long> counts;
    std::vector<double> fractions;
};

struct ProportionReport {
    long window_size = 0;
    std::vector<ProportionWindow> windows;
    std::vector<long> total_counts;
    std::vector<double> total_fractions;
};

/// How often each task was trained, per fixed-size step window and overall.
/// Windows partition the steps in order ([1..w], [w+1..2w], ...); a partial
/// trailing window is reported with its actual extent.  Fractions in every
/// window sum to 1.
inline ProportionReport action_proportions(const std::vector<StepRecord>& records, int task_count,
                                           long window_size = 1000) {
    if (task_count <= 0) throw ConfigError("proportions: task_count must be positive");
    if (window_size <= 0) throw ConfigError("proportions: window_size must be positive");
    ProportionReport rep;
    rep.window_size = window_size;
    rep.total_counts.assign(task_count, 0);
    for (std::size_t i = 0; i < records.size();) {
        ProportionWindow w;
        w.first_step = records[i].step;
        w.counts.assign(task_count, 0);
        std::size_t end = std::min(records.size(), i + static_cast<std::size_t>(window_size));
        for (; i < end; ++i) {
            int a = records[i].action.value;
            if (a < 0 || a >= task_count)
                throw ConfigError("proportions: action " + std::to_string(a) + " out of range");
            ++w.counts[a];
            ++rep.total_counts[a];
            w.last_step = records[i].step;
        }
        long n = 0;
        for (long c : w.counts) n += c;
        for (long c : w.counts) w.fractions.push_back(static_cast<double>(c) / n);
        rep.windows.push_back(std::move(w));
    }
    long total = 0;
    for (long c : rep.total_counts) total += c;
    for (long c : rep.total_counts)
        rep.total_fractions.push_back(total > 0 ? static_cast<double>(c) / total : 0.0);
    return rep;
}

/// Numerically stable softmax (temperature 1).
inline std::vector<double> softmax(const std::vector<double>& z) {
    double mx = *std::max_element(z.begin(), z.end());
    std::vector<double> out;
    out.reserve(z.size());
    double sum = 0.0;
    for (double v : z) {
        double e = std::exp(v - mx);
        out.push_back(e);
        sum += e;
    }
    for (double& v : out) v /= sum;
    return out;
}

/// Response of a Q-network to one task's probes standing out: the probe block
/// of `task` in `base` is multiplied by `amplification`, the modified state
/// is pushed through `net`, and the Q-values are softmax-normalized into a
/// selection distribution.  amplification == 1 leaves the state untouched.
inline std::vector<double> probe_q_row(const Mlp& net, const StateVector& base, int probes_per_task,
                                       TaskId task, double amplification) {
    if (probes_per_task <= 0) throw ConfigError("probe: probes_per_task must be positive");
    if (base.dim() != net.input_dim())
        throw ConfigError("probe: state dim " + std::to_string(base.dim()) +
                          " does not match network input " + std::to_string(net.input_dim()));
    int k = net.output_dim();
    if (task.value < 0 || task.value >= k)
        throw ConfigError("probe: task " + std::to_string(task.value) + " out of range");
    if (base.dim() != k * probes_per_task)
        throw ConfigError("probe: state dim is not task_count * probes_per_task");
    std::vector<double> values = base.values;
    for (int p = 0; p < probes_per_task; ++p)
        values[static_cast<std::size_t>(task.value) * probes_per_task + p] *= amplification;
    return softmax(forward(net, values));
}

/// Selection distributions under single-task amplification, one row per
/// amplified task.  Row t answers: if task t's losses stood out by the given
/// factor, how would the network distribute its choices?
struct ProbeMatrix {
    double amplification = 1.0;
    std::vector<std::string> task_names;
    std::vector<std::vector<double>> rows;

    std::string to_csv() const {
        std::string out = "amplified_task";
        for (const std::string& n : task_names) out += ",p_" + n;
        out += '\n';
        for (std::size_t t = 0; t < rows.size(); ++t) {
            out += task_names[t];
            for (double v : rows[t]) {
                out += ',';
                out += fmt_double(v);
            }
            out += '\n';
        }
        return out;
    }

    nlohmann::json to_json() const {
        return {{"amplification", amplification}, {"task_names", task_names}, {"rows", rows}};
    }
};

inline ProbeMatrix probe_q_network(const Mlp& net, const StateVector& base, int probes_per_task,
                                   const std::vector<std::string>& task_names,
                                   double amplification = 5.0) {
    int k = net.output_dim();
    if (static_cast<int>(task_names.size()) != k)
        throw ConfigError("probe: task name count does not match network outputs");
    ProbeMatrix m;
    m.amplification = amplification;
    m.task_names = task_names;
    for (int t = 0; t < k; ++t)
        m.rows.push_back(probe_q_row(net, base, probes_per_task, TaskId{t}, amplification));
    return m;
}

/// Step at which the smoothed macro score over the low-resource tasks peaks.
/// The trace is smoothed with a rolling mean over `ensemble_width`
/// consecutive rows; the best window wins (earliest on ties) and the reported
/// step is that window's last row -- the point where the best level is fully
/// in evidence.
inline long steps_to_best(const std::vector<EvalRow>& trace, int ensemble_width = 4) {
    if (ensemble_width < 1) throw ConfigError("steps_to_best: ensemble_width must be >= 1");
    if (static_cast<int>(trace.size()) < ensemble_width)
        throw ConfigError("steps_to_best: trace has " + std::to_string(trace.size()) +
                          " rows, needs at least " + std::to_string(ensemble_width));
    double best_mean = 0.0;
    long best_step = 0;
    bool have = false;
    // Each window sum is computed fresh so tie comparisons are exact.
    for (std::size_t last = ensemble_width - 1; last < trace.size(); ++last) {
        double sum = 0.0;
        for (std::size_t i = last + 1 - ensemble_width; i <= last; ++i) sum += trace[i].macro_low;
        double mean = sum / ensemble_width;
        if (!have || mean > best_mean) {
            have = true;
            best_mean = mean;
            best_step = trace[last].step;
        }
    }
    return best_step;
}

}  // namespace currl
