#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <deque>
#include <optional>
#include <vector>

#include "currl/rng.hpp"
#include "currl/tscl.hpp"
#include "helpers.hpp"

using namespace currl;

namespace {

/// Independent mirror of the table scheduler, written straight from the
/// documented contract: selection precedence, draw discipline, and update
/// rules.  Used to replay the library's decisions draw for draw.
struct OracleTscl {
    TsclConfig cfg;
    std::vector<int> pool;
    std::vector<double> q, h;
    std::deque<int> unvisited;
    std::vector<bool> observed;

    OracleTscl(TsclConfig c, std::vector<int> warmup_pool, int k) : cfg(c), pool(std::move(warmup_pool)) {
        q.assign(k, 0.0);
        h.assign(k, 0.0);
        observed.assign(k, false);
        for (int i = 0; i < k; ++i) unvisited.push_back(i);
    }

    double observe_at(long step, int a, double x) {
        bool in_warmup = step < cfg.warmup_steps;
        bool first = !observed[a];
        double r = x - h[a];
        h[a] = x;
        observed[a] = true;
        if (!((cfg.freeze_q_during_warmup && in_warmup) || (cfg.skip_first_reward && first)))
            q[a] = cfg.alpha * r + (1.0 - cfg.alpha) * q[a];
        return r;
    }

    std::pair<int, DecisionSource> select(long step, Rng& rng) {
        bool in_warmup = step < cfg.warmup_steps;
        bool hold_queue = in_warmup && !cfg.warmup_all_tasks;
        if (!hold_queue && !unvisited.empty()) {
            int a = unvisited.front();
            unvisited.pop_front();
            return {a, DecisionSource::UnvisitedQueue};
        }
        double r = rng.uniform01();
        if (in_warmup) return {pool[rng.below(static_cast<int>(pool.size()))], DecisionSource::Warmup};
        if (r < cfg.epsilon)
            return {rng.below(static_cast<int>(q.size())), DecisionSource::Random};
        int best = 0;
        for (int i = 1; i < static_cast<int>(q.size()); ++i)
            if (std::abs(q[i]) > std::abs(q[best])) best = i;
        return {best, DecisionSource::Greedy};
    }
};

}  // namespace

TEST_CASE("return table starts empty with every task queued") {
    ReturnTable t = make_return_table(4);
    CHECK(t.q == std::vector<double>(4, 0.0));
    CHECK(t.h == std::vector<double>(4, 0.0));
    REQUIRE(t.unvisited.size() == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(t.unvisited[i].value == i);
        CHECK_FALSE(t.observed[i]);
    }
    CHECK_THROWS_AS(make_return_table(0), ConfigError);
}

TEST_CASE("observing a score updates reward estimate and baseline") {
    ReturnTable t = make_return_table(2);
    const double alpha = 0.3;

    // Rewards are consecutive score differences against a zero-initialized
    // baseline; q is their exponentially weighted average.
    double r1 = tscl_observe(t, TaskId{0}, Score{1.0}, alpha);
    CHECK(r1 == 1.0);
    CHECK(t.h[0] == 1.0);
    CHECK(t.q[0] == 0.3 * 1.0);
    CHECK(t.observed[0]);

    double r2 = tscl_observe(t, TaskId{0}, Score{1.5}, alpha);
    CHECK(r2 == 0.5);
    CHECK(t.q[0] == 0.3 * 0.5 + 0.7 * (0.3 * 1.0));

    double r3 = tscl_observe(t, TaskId{0}, Score{1.2}, alpha);
    CHECK(r3 == Catch::Approx(-0.3));
    CHECK(t.q[0] == Catch::Approx(0.3 * -0.3 + 0.7 * (0.3 * 0.5 + 0.7 * 0.3)));

    // The other task's slots are untouched.
    CHECK(t.q[1] == 0.0);
    CHECK(t.h[1] == 0.0);
    CHECK_FALSE(t.observed[1]);
}

TEST_CASE("score-only observation advances the baseline without touching q") {
    ReturnTable t = make_return_table(2);
    double r = tscl_observe_score_only(t, TaskId{1}, Score{-0.5});
    CHECK(r == -0.5);
    CHECK(t.h[1] == -0.5);
    CHECK(t.q[1] == 0.0);
    CHECK(t.observed[1]);

    CHECK(tscl_observe_score_only(t, TaskId{1}, Score{-0.2}) == Catch::Approx(0.3));
    CHECK(t.q[1] == 0.0);
}

TEST_CASE("selection drains the unvisited queue first, without any draws") {
    TsclConfig cfg;
    ReturnTable t = make_return_table(3);
    std::vector<TaskId> pool;

    for (int i = 0; i < 3; ++i) {
        int draws = test::draws_consumed(50 + i, [&](Rng& rng) {
            Decision d = tscl_select(t, 100, cfg, pool, rng);
            CHECK(d.action.value == i);
            CHECK(d.source == DecisionSource::UnvisitedQueue);
        });
        CHECK(draws == 0);
    }
    CHECK(t.unvisited.empty());
}

TEST_CASE("selection follows the frozen draw discipline after the queue") {
    TsclConfig cfg;
    cfg.epsilon = 0.25;
    ReturnTable t = make_return_table(4);
    t.unvisited.clear();
    t.q = {0.05, -0.3, 0.2, -0.1};

    std::vector<TaskId> pool;
    int greedy_seen = 0, random_seen = 0;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        Rng rng(seed);
        Rng mirror(seed);
        Decision d = tscl_select(t, 100, cfg, pool, rng);

        double r = mirror.uniform01();
        if (r < cfg.epsilon) {
            CHECK(d.source == DecisionSource::Random);
            CHECK(d.action.value == mirror.below(4));
            ++random_seen;
        } else {
            CHECK(d.source == DecisionSource::Greedy);
            CHECK(d.action.value == 1);  // argmax |q|
            ++greedy_seen;
        }
        // Both streams are aligned afterwards: greedy consumed one draw,
        // exploration two.
        CHECK(rng.raw() == mirror.raw());
    }
    CHECK(greedy_seen > 0);
    CHECK(random_seen > 0);
}

TEST_CASE("warm-up selection draws from the pool and holds the queue") {
    TsclConfig cfg;
    cfg.warmup_steps = 50;
    ReturnTable t = make_return_table(4);
    std::vector<TaskId> pool = {TaskId{1}, TaskId{3}};

    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        Rng mirror(seed);
        Decision d = tscl_select(t, 10, cfg, pool, rng);
        CHECK(d.source == DecisionSource::Warmup);
        (void)mirror.uniform01();  // the unused threshold draw still happens
        CHECK(d.action.value == pool[mirror.below(2)].value);
        CHECK(rng.raw() == mirror.raw());
    }
    // The queue was never popped during warm-up.
    CHECK(t.unvisited.size() == 4);

    // After warm-up ends the queue becomes live again.
    Rng rng(5);
    Decision d = tscl_select(t, 50, cfg, pool, rng);
    CHECK(d.source == DecisionSource::UnvisitedQueue);
    CHECK(d.action.value == 0);

    // In warmup_all_tasks mode the queue drains even during warm-up.
    cfg.warmup_all_tasks = true;
    ReturnTable t2 = make_return_table(4);
    Decision d2 = tscl_select(t2, 10, cfg, pool, rng);
    CHECK(d2.source == DecisionSource::UnvisitedQueue);
    CHECK(d2.action.value == 0);

    // Warm-up with an empty pool is a configuration error.
    cfg.warmup_all_tasks = false;
    ReturnTable t3 = make_return_table(4);
    t3.unvisited.clear();
    std::vector<TaskId> empty_pool;
    Rng rng2(1);
    CHECK_THROWS_AS(tscl_select(t3, 10, cfg, empty_pool, rng2), ConfigError);
}

TEST_CASE("greedy selection maximizes |q| and breaks ties toward lower indices") {
    TsclConfig cfg;
    cfg.epsilon = 0.0;  // force the greedy branch
    std::vector<TaskId> pool;

    auto pick = [&](std::vector<double> q) {
        ReturnTable t = make_return_table(static_cast<int>(q.size()));
        t.unvisited.clear();
        t.q = std::move(q);
        Rng rng(3);
        Decision d = tscl_select(t, 10, cfg, pool, rng);
        CHECK(d.source == DecisionSource::Greedy);
        return d.action.value;
    };

    // Falling scores are as interesting as rising ones: |-0.5| beats 0.3.
    CHECK(pick({0.1, -0.5, 0.3}) == 1);
    CHECK(pick({0.4, -0.2, 0.1}) == 0);
    CHECK(pick({0.5, -0.5}) == 0);        // exact tie: lowest index
    CHECK(pick({0.0, 0.0, 0.0}) == 0);    // all zero: lowest index
    CHECK(pick({-0.1, -0.2, -0.30001}) == 2);
}

TEST_CASE("tscl config validates and round-trips through JSON") {
    TsclConfig cfg;
    cfg.alpha = 0.05;
    cfg.epsilon = 0.2;
    cfg.warmup_steps = 100;
    cfg.action_interval = 5;
    cfg.skip_first_reward = true;
    nlohmann::json j = cfg.to_json();
    TsclConfig back = TsclConfig::from_json(j);
    CHECK(back.to_json().dump() == j.dump());

    nlohmann::json typo = j;
    typo["epsilon_start"] = 1.0;
    CHECK_THROWS_WITH(TsclConfig::from_json(typo),
                      Catch::Matchers::ContainsSubstring("unknown key"));

    TsclConfig bad;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TsclConfig{};
    bad.epsilon = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TsclConfig{};
    bad.action_interval = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("scheduler construction checks the warm-up pool") {
    TsclConfig cfg;
    cfg.warmup_steps = 100;
    // No task is warm-up eligible.
    CHECK_THROWS_WITH(TsclScheduler(cfg, test::make_profiles(3, 0)),
                      Catch::Matchers::ContainsSubstring("warmup-eligible"));
    // warmup_all_tasks lifts the requirement.
    cfg.warmup_all_tasks = true;
    CHECK_NOTHROW(TsclScheduler(cfg, test::make_profiles(3, 0)));
    // Without warm-up there is nothing to check.
    CHECK_NOTHROW(TsclScheduler(TsclConfig{}, test::make_profiles(3, 0)));
}

TEST_CASE("scheduler initial action pops the queue or draws from the pool") {
    // No warm-up: fixed start at task 0, no randomness.
    TsclScheduler sched(TsclConfig{}, test::make_profiles(3, 0));
    int draws = test::draws_consumed(8, [&](Rng& rng) {
        Decision d = sched.initial_action(rng);
        CHECK(d.action.value == 0);
        CHECK(d.source == DecisionSource::UnvisitedQueue);
    });
    CHECK(draws == 0);

    // Warm-up: drawn from the eligible pool, two draws.
    TsclConfig cfg;
    cfg.warmup_steps = 100;
    TsclScheduler warm(cfg, test::make_profiles(3, 1));
    draws = test::draws_consumed(8, [&](Rng& rng) {
        Decision d = warm.initial_action(rng);
        CHECK(d.action.value == 0);  // pool holds only task 0
        CHECK(d.source == DecisionSource::Warmup);
    });
    CHECK(draws == 2);
}

TEST_CASE("decision cycle requires a score and reports the fixed epsilon") {
    TsclScheduler sched(TsclConfig{}, test::make_profiles(2, 0));
    test::ScriptedEnv env(test::make_profiles(2, 0), {1.0, 1.0});
    Rng rng(1);
    (void)sched.initial_action(rng);
    CHECK_THROWS_WITH(sched.decision_cycle(10, TaskId{0}, std::nullopt, env, rng),
                      Catch::Matchers::ContainsSubstring("requires a score"));

    CycleOutcome out = sched.decision_cycle(10, TaskId{0}, Score{0.5}, env, rng);
    REQUIRE(out.reward.has_value());
    CHECK(*out.reward == 0.5);
    REQUIRE(out.epsilon.has_value());
    CHECK(*out.epsilon == sched.config().epsilon);
}

TEST_CASE("freeze and skip-first flags gate the q update") {
    test::ScriptedEnv env(test::make_profiles(2, 1), {1.0, 1.0});

    // freeze_q_during_warmup: h tracks scores during warm-up, q stays zero.
    TsclConfig cfg;
    cfg.warmup_steps = 100;
    cfg.freeze_q_during_warmup = true;
    TsclScheduler frozen(cfg, test::make_profiles(2, 2));
    Rng rng(4);
    (void)frozen.initial_action(rng);
    (void)frozen.decision_cycle(10, TaskId{0}, Score{0.7}, env, rng);
    (void)frozen.decision_cycle(20, TaskId{0}, Score{0.9}, env, rng);
    CHECK(frozen.table().q == std::vector<double>{0.0, 0.0});
    CHECK(frozen.table().h[0] == 0.9);
    // After warm-up the update is live again.
    (void)frozen.decision_cycle(100, TaskId{0}, Score{1.0}, env, rng);
    CHECK(frozen.table().q[0] == Catch::Approx(cfg.alpha * 0.1).margin(1e-15));

    // skip_first_reward: the first observation of each action moves h only.
    TsclConfig cfg2;
    cfg2.skip_first_reward = true;
    TsclScheduler skipper(cfg2, test::make_profiles(2, 0));
    Rng rng2(4);
    (void)skipper.initial_action(rng2);
    CycleOutcome first = skipper.decision_cycle(10, TaskId{0}, Score{5.0}, env, rng2);
    CHECK(*first.reward == 5.0);  // the spike is reported but not learned from
    CHECK(skipper.table().q[0] == 0.0);
    (void)skipper.decision_cycle(20, TaskId{0}, Score{5.5}, env, rng2);
    CHECK(skipper.table().q[0] == Catch::Approx(cfg2.alpha * 0.5).margin(1e-15));
}

TEST_CASE("snapshot exposes the value table and queue") {
    TsclScheduler sched(TsclConfig{}, test::make_profiles(3, 0));
    nlohmann::json snap = sched.snapshot_state();
    CHECK(snap.at("q").size() == 3);
    CHECK(snap.at("h").size() == 3);
    CHECK(snap.at("unvisited") == nlohmann::json({0, 1, 2}));
}

TEST_CASE("scheduler decisions replay against an independent oracle") {
    // Deterministic scripted scores: task a's score at its n-th observation.
    auto score_of = [](int a, int n) {
        return 0.1 * a + 0.05 * n * (a == 1 ? 1.0 : -0.4) + 0.001 * n * n * (a == 2 ? 1.0 : 0.0);
    };

    struct Variant {
        bool warmup_all;
        bool freeze;
        bool skip_first;
    };
    for (Variant v : {Variant{false, false, false}, Variant{true, false, false},
                      Variant{false, true, true}, Variant{true, true, false}}) {
        TsclConfig cfg;
        cfg.alpha = 0.2;
        cfg.epsilon = 0.15;
        cfg.warmup_steps = 40;
        cfg.action_interval = 10;
        cfg.warmup_all_tasks = v.warmup_all;
        cfg.freeze_q_during_warmup = v.freeze;
        cfg.skip_first_reward = v.skip_first;

        auto profiles = test::make_profiles(3, 2);  // tasks 0, 1 warm-up eligible
        TsclScheduler sched(cfg, profiles);
        test::ScriptedEnv env(profiles, {1.0, 1.0, 1.0});

        std::vector<int> pool = v.warmup_all ? std::vector<int>{0, 1, 2} : std::vector<int>{0, 1};
        OracleTscl oracle(cfg, pool, 3);

        const std::uint64_t seed = derive_seed(17, kStreamRun);
        Rng rng(seed);
        Rng mirror(seed);

        Decision current = sched.initial_action(rng);
        auto [oracle_action, oracle_source] = oracle.select(0, mirror);
        REQUIRE(current.action.value == oracle_action);
        REQUIRE(current.source == oracle_source);

        std::vector<int> obs_count(3, 0);
        for (long step = 10; step <= 2000; step += 10) {
            int a = current.action.value;
            double x = score_of(a, obs_count[a]++);

            CycleOutcome out = sched.decision_cycle(step, current.action, Score{x}, env, rng);
            double oracle_reward = oracle.observe_at(step, a, x);
            auto [next_a, next_src] = oracle.select(step, mirror);

            REQUIRE(*out.reward == oracle_reward);
            REQUIRE(out.next.action.value == next_a);
            REQUIRE(out.next.source == next_src);
            REQUIRE(sched.table().q == oracle.q);
            REQUIRE(sched.table().h == oracle.h);
            current = out.next;
        }
        // Draw streams stayed aligned through 200 decisions.
        CHECK(rng.raw() == mirror.raw());
    }
}

TEST_CASE("a steadily changing task dominates selection") {
    // Task 1's score rises by one per observation; the others never move.
    // After the queue drains, greedy selection should lock onto task 1,
    // leaving only the epsilon share to the rest.
    TsclConfig cfg;
    cfg.alpha = 0.3;
    cfg.epsilon = 0.1;
    auto profiles = test::make_profiles(3, 0);
    TsclScheduler sched(cfg, profiles);
    test::ScriptedEnv env(profiles, {1.0, 1.0, 1.0});

    Rng rng(derive_seed(5, kStreamRun));
    Decision current = sched.initial_action(rng);
    std::vector<int> obs_count(3, 0);
    std::vector<int> picks(3, 0);
    const int washout = 50;
    const int decisions = 2050;
    for (int n = 1; n <= decisions; ++n) {
        int a = current.action.value;
        double x = (a == 1) ? static_cast<double>(++obs_count[1]) : 1.0;
        CycleOutcome out = sched.decision_cycle(10 * n, current.action, Score{x}, env, rng);
        current = out.next;
        if (n > washout) ++picks[current.action.value];
    }
    double share = static_cast<double>(picks[1]) / (decisions - washout);
    CHECK(share >= 1.0 - cfg.epsilon - 0.05);

    // And the dominant estimate is task 1's.
    CHECK(std::abs(sched.table().q[1]) > std::abs(sched.table().q[0]));
    CHECK(std::abs(sched.table().q[1]) > std::abs(sched.table().q[2]));
}
