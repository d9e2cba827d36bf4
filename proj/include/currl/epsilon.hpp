#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <json.hpp>

#include "currl/json_util.hpp"
#include "currl/task.hpp"

namespace currl {

/// Exploration schedule: flat at eps_start through the warm-up horizon, then
/// exponential decay sized to land exactly on eps_min after decay_horizon
/// steps, then flat at eps_min.
struct EpsilonSchedule {
    double eps_start = 1.0;
    double eps_min = 0.01;
    long warmup_steps = 0;
    long decay_horizon = 50000;

    void validate() const {
        if (!(eps_start > 0.0 && eps_start <= 1.0))
            throw ConfigError("epsilon: eps_start must be in (0, 1]");
        if (!(eps_min > 0.0 && eps_min <= eps_start))
            throw ConfigError("epsilon: eps_min must be in (0, eps_start]");
        if (warmup_steps < 0) throw ConfigError("epsilon: warmup_steps must be >= 0");
        if (decay_horizon < 1) throw ConfigError("epsilon: decay_horizon must be >= 1");
    }

    nlohmann::json to_json() const {
        return {{"eps_start", eps_start},
                {"eps_min", eps_min},
                {"warmup_steps", warmup_steps},
                {"decay_horizon", decay_horizon}};
    }

    static EpsilonSchedule from_json(const nlohmann::json& j, const std::string& path = "epsilon") {
        check_keys(j, path, {"eps_start", "eps_min", "warmup_steps", "decay_horizon"});
        EpsilonSchedule s;
        s.eps_start = opt<double>(j, path, "eps_start", s.eps_start);
        s.eps_min = opt<double>(j, path, "eps_min", s.eps_min);
        s.warmup_steps = opt<long>(j, path, "warmup_steps", s.warmup_steps);
        s.decay_horizon = opt<long>(j, path, "decay_horizon", s.decay_horizon);
        s.validate();
        return s;
    }
};

/// Exploration rate at a (0-based within the run) training step:
///
///   step <  warmup:                  eps_start
///   step >= warmup:                  max(eps_min,
///       eps_start * exp(-lambda * (step - warmup)))
///   with lambda = ln(eps_start / eps_min) / decay_horizon
///
/// so the schedule reaches eps_min exactly at warmup + decay_horizon and is
/// non-increasing throughout.
inline double epsilon_at(long step, const EpsilonSchedule& s) {
    if (step < s.warmup_steps) return s.eps_start;
    if (s.eps_start == s.eps_min) return s.eps_min;
    double lambda = std::log(s.eps_start / s.eps_min) / static_cast<double>(s.decay_horizon);
    double value = s.eps_start * std::exp(-lambda * static_cast<double>(step - s.warmup_steps));
    return std::max(s.eps_min, value);
}

}  // namespace currl
