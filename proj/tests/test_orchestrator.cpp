#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "restage/orchestrator.hpp"
#include "restage/scenario.hpp"
#include "support/builders.hpp"

using namespace restage;
using namespace testsupport;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("apply_context_policy") {
    ApproxTokenCounter counter;
    ContextBudget budget;  // 32000 tokens, 0.8 trigger, keep 10

    auto make_step = [](std::size_t raw_chars, std::size_t obs_chars, int i) {
        TraceStep step;
        step.thought = "t" + std::to_string(i);
        step.call.name = "search";
        step.raw_assistant = "R" + std::to_string(i) + std::string(raw_chars, 'a');
        step.observation.body = "O" + std::to_string(i) + std::string(obs_chars, 'b');
        return step;
    };

    SECTION("small histories pass through untouched") {
        std::vector<TraceStep> steps;
        for (int i = 0; i < 3; ++i) steps.push_back(make_step(50, 50, i));
        auto out = apply_context_policy(steps, 500, budget, counter);
        REQUIRE(out.size() == 3);
        for (int i = 0; i < 3; ++i) REQUIRE(out[i].observation.body == steps[i].observation.body);
    }
    SECTION("crossing the trigger retains only the last ten steps") {
        std::vector<TraceStep> steps;
        for (int i = 0; i < 12; ++i) steps.push_back(make_step(9000, 50, i));  // ~27k tokens
        auto out = apply_context_policy(steps, 100, budget, counter);
        REQUIRE(out.size() == 10);
        REQUIRE(out.front().thought == "t2");
        REQUIRE(out.back().thought == "t11");
    }
    SECTION("swe_mode truncates old observations even below the token threshold") {
        ContextBudget swe = budget;
        swe.swe_mode = true;
        std::vector<TraceStep> steps;
        steps.push_back(make_step(50, 9000, 0));
        steps.push_back(make_step(50, 50, 1));
        auto out = apply_context_policy(steps, 100, swe, counter);
        REQUIRE(out.size() == 2);
        REQUIRE(out[0].observation.body.size() == 8000);
        REQUIRE_THAT(out[0].observation.body, ContainsSubstring("characters) ..."));
        REQUIRE(out[0].observation.truncated);
        REQUIRE(out[1].observation.body == steps[1].observation.body);
        // the caller's steps are untouched
        REQUIRE(steps[0].observation.body.size() == 9002);
    }
    SECTION("swe_mode compresses observations older than the keep window") {
        ContextBudget swe = budget;
        swe.swe_mode = true;
        std::vector<TraceStep> steps;
        for (int i = 0; i < 12; ++i) steps.push_back(make_step(50, 40, i));
        auto out = apply_context_policy(steps, 100, swe, counter);
        REQUIRE(out.size() == 12);
        REQUIRE_THAT(out[0].observation.body, ContainsSubstring("lines omitted"));
        REQUIRE_THAT(out[1].observation.body, ContainsSubstring("lines omitted"));
        REQUIRE(out[2].observation.body == steps[2].observation.body);
    }
}

namespace {

ScenarioRunResult run(const Scenario& scenario, RunLimits limits = {}, ContextBudget budget = {},
                      AblationMode mode = {}) {
    const auto& assets = Assets::get();
    return run_scenario(scenario, assets.pool, assets.templates, limits, budget, mode);
}

Scenario immediate_finish() {
    Scenario sc;
    sc.name = "finish_now";
    sc.task = "trivial";
    sc.completions.push_back(engine_entry("answer it", {"search", "visit", "code_interpreter"}));
    sc.completions.push_back(finish_turn("the-answer"));
    return sc;
}

}  // namespace

TEST_CASE("a finish call on the first step closes the run") {
    auto result = run(immediate_finish());
    const Trajectory& t = result.trajectory;
    REQUIRE(t.end_state == EndState::finished);
    REQUIRE(t.stages.size() == 1);
    REQUIRE(t.final["final_result"] == "the-answer");
    REQUIRE(t.metadata.metrics.reconfig_count == 0);
    REQUIRE(t.metadata.metrics.steps == 1);
    REQUIRE(t.stages[0].trace.steps.empty());
}

TEST_CASE("reconfiguration archives the summary and discards stage-local steps") {
    Scenario sc = linear_scenario({2, 1});
    auto result = run(sc);
    const Trajectory& t = result.trajectory;
    REQUIRE(t.end_state == EndState::finished);
    REQUIRE(t.stages.size() == 2);
    REQUIRE(t.stages[0].trace.steps.size() == 2);
    REQUIRE(t.stages[1].trace.steps.size() == 1);
    REQUIRE(t.metadata.metrics.reconfig_count == 1);
    // stage 1 prompts contain no verbatim step text from stage 0
    bool saw_stage1_prompt = false;
    bool past_second_engine_call = false;
    for (const auto& call : result.backend->recorded()) {
        if (call.role == "engine" && call.prompt_text.find("summary of stage 0") !=
                                         std::string::npos) {
            past_second_engine_call = true;
            continue;
        }
        if (call.role == "inference" && past_second_engine_call) {
            saw_stage1_prompt = true;
            REQUIRE(call.prompt_text.find("MARK_s0_") == std::string::npos);
            REQUIRE(call.prompt_text.find("THOUGHT_s0_") == std::string::npos);
        }
    }
    REQUIRE(saw_stage1_prompt);
    REQUIRE(past_second_engine_call);
}

TEST_CASE("fixed-interval ablation forces a reconfigure after n task-tool steps") {
    // 7 task turns + finish; interval 5 splits them 5 / 2
    Scenario sc;
    sc.name = "interval";
    sc.task = "synthetic";
    sc.completions.push_back(engine_entry("stage 0", {"search", "visit", "code_interpreter"}));
    for (int i = 0; i < 5; ++i) {
        sc.completions.push_back(task_turn("search", json{{"query", json::array({"q"})}},
                                           "thought line " + std::to_string(i) + "\nsecond line"));
    }
    sc.completions.push_back(engine_entry("stage 1", {"search", "visit", "code_interpreter"}));
    for (int i = 5; i < 7; ++i) {
        sc.completions.push_back(task_turn("search", json{{"query", json::array({"q"})}}));
    }
    sc.completions.push_back(finish_turn("done"));

    AblationMode mode;
    mode.fixed_interval_when = 5;
    auto result = run(sc, {}, {}, mode);
    const Trajectory& t = result.trajectory;
    REQUIRE(t.end_state == EndState::finished);
    REQUIRE(t.stages.size() == 2);
    REQUIRE(t.stages[0].trace.steps.size() == 5);
    REQUIRE(t.stages[0].trace.terminal.kind == StageEndKind::reconfigured);
    REQUIRE(t.stages[0].trace.terminal.forced);
    // auto-summary concatenates the first lines of the step thoughts
    REQUIRE_THAT(t.stages[0].trace.terminal.summary->summary,
                 ContainsSubstring("thought line 0"));
    REQUIRE(t.stages[0].trace.terminal.summary->summary.find("second line") ==
            std::string::npos);
    // the request carries the unchanged sub-goal
    REQUIRE(t.stages[0].trace.terminal.request->proposed_sub_goal == "stage 0");
    REQUIRE(t.stages[1].trace.steps.size() == 2);
    // nothing extra consumed from the script
    REQUIRE(result.backend->remaining_inference() == 0);
    REQUIRE(result.backend->remaining_engine() == 0);
}

TEST_CASE("fixed-interval mode removes adaptive triggering from the action space") {
    Scenario sc;
    sc.name = "interval_strict";
    sc.task = "synthetic";
    sc.completions.push_back(engine_entry("stage 0", {"search", "visit", "code_interpreter"}));
    sc.completions.push_back(task_turn("search", json{{"query", json::array({"a"})}}));
    // the agent tries to trigger adaptively; the call must be rejected
    sc.completions.push_back(reconfig_turn("premature", "early goal"));
    ScriptEntry resumed = task_turn("search", json{{"query", json::array({"b"})}});
    resumed.expect_substrings.push_back("scheduled externally");
    sc.completions.push_back(resumed);
    sc.completions.push_back(task_turn("search", json{{"query", json::array({"c"})}}));
    sc.completions.push_back(engine_entry("stage 1", {"search", "visit", "code_interpreter"}));
    sc.completions.push_back(finish_turn("done"));

    AblationMode mode;
    mode.fixed_interval_when = 3;
    auto result = run(sc, {}, {}, mode);
    const Trajectory& t = result.trajectory;
    REQUIRE(t.end_state == EndState::finished);
    REQUIRE(t.stages.size() == 2);
    // every stage except possibly the last has exactly n task-tool steps
    REQUIRE(t.stages[0].trace.steps.size() == 3);
    REQUIRE(t.stages[0].trace.terminal.forced);
    REQUIRE(t.stages[1].trace.steps.empty());
    // the reconfigure tool is not advertised in this mode
    for (const auto& call : result.backend->recorded()) {
        if (call.role != "inference") continue;
        REQUIRE(call.prompt_text.find("\"name\": \"reconfigure\"") == std::string::npos);
    }
}

TEST_CASE("forced intervals reconfigure strictly more often than the full mode") {
    // a script the agent never reconfigures on its own: full mode runs one
    // stage; the interval mode splits it
    auto make = []() {
        Scenario sc;
        sc.name = "seven";
        sc.task = "synthetic";
        sc.completions.push_back(engine_entry("g0", {"search", "visit", "code_interpreter"}));
        sc.completions.push_back(engine_entry("g1", {"search", "visit", "code_interpreter"}));
        for (int i = 0; i < 7; ++i) {
            sc.completions.push_back(task_turn("search", json{{"query", json::array({"q"})}}));
        }
        sc.completions.push_back(finish_turn("done"));
        return sc;
    };
    auto full = run(make());
    AblationMode wo_when;
    wo_when.fixed_interval_when = 5;
    auto forced = run(make(), {}, {}, wo_when);
    REQUIRE(full.trajectory.end_state == EndState::finished);
    REQUIRE(forced.trajectory.end_state == EndState::finished);
    REQUIRE(forced.trajectory.metadata.metrics.reconfig_count >
            full.trajectory.metadata.metrics.reconfig_count);
    REQUIRE(full.trajectory.metadata.metrics.reconfig_count == 0);
    REQUIRE(forced.trajectory.metadata.metrics.reconfig_count == 1);
}

TEST_CASE("replayed commands are byte-stable modulo timestamps") {
    Scenario sc = Scenario::load_file(default_assets_dir() / "scenarios" / "case1_nasa.json");
    const auto& assets = Assets::get();
    Trajectory a = run_scenario(sc, assets.pool, assets.templates).trajectory;
    Trajectory b = run_scenario(sc, assets.pool, assets.templates).trajectory;
    REQUIRE(persist(a, /*normalize=*/true).dump() == persist(b, /*normalize=*/true).dump());
    REQUIRE(a.id == b.id);
}

TEST_CASE("exceeding the reconfiguration budget fails the run") {
    Scenario sc;
    sc.name = "reconfig_storm";
    sc.task = "synthetic";
    const int reconfigures = 4;
    sc.completions.push_back(engine_entry("stage 0", {"search", "visit", "code_interpreter"}));
    for (int i = 0; i < reconfigures; ++i) {
        sc.completions.push_back(
            reconfig_turn("summary " + std::to_string(i), "goal " + std::to_string(i + 1)));
        if (i + 1 < reconfigures) {
            sc.completions.push_back(engine_entry("goal " + std::to_string(i + 1),
                                                  {"search", "visit", "code_interpreter"}));
        }
    }
    RunLimits limits;
    limits.max_reconfigs = 3;
    auto result = run(sc, limits);
    REQUIRE(result.trajectory.end_state == EndState::reconfig_limit);
    REQUIRE(result.trajectory.metadata.metrics.reconfig_count == 4);
    REQUIRE(result.trajectory.stages.size() == 4);
}

TEST_CASE("the iteration budget counts completions across the whole run") {
    Scenario sc;
    sc.name = "long";
    sc.task = "synthetic";
    sc.completions.push_back(engine_entry("stage 0", {"search", "visit", "code_interpreter"}));
    for (int i = 0; i < 10; ++i) {
        sc.completions.push_back(task_turn("search", json{{"query", json::array({"q"})}}));
    }
    RunLimits limits;
    limits.max_iterations = 4;
    auto result = run(sc, limits);
    REQUIRE(result.trajectory.end_state == EndState::iteration_limit);
    REQUIRE(result.trajectory.metadata.metrics.steps == 4);
    REQUIRE(result.trajectory.stages.back().trace.terminal.kind == StageEndKind::limit_exceeded);
}

TEST_CASE("malformed completions get corrective messages, then abort the stage") {
    SECTION("recovery after two failures") {
        Scenario sc;
        sc.name = "garbled";
        sc.task = "synthetic";
        sc.completions.push_back(engine_entry("g", {"search", "visit", "code_interpreter"}));
        sc.completions.push_back(raw_entry("line noise"));
        sc.completions.push_back(raw_entry("still not a tool call"));
        ScriptEntry good = finish_turn("ok");
        good.expect_substrings.push_back("not a valid tool call");
        good.expect_substrings.push_back("still not a tool call");
        sc.completions.push_back(good);
        auto result = run(sc);
        REQUIRE(result.trajectory.end_state == EndState::finished);
        REQUIRE(result.trajectory.metadata.metrics.steps == 3);
        REQUIRE(result.trajectory.stages[0].trace.steps.empty());
    }
    SECTION("three consecutive failures abort") {
        Scenario sc;
        sc.name = "hopeless";
        sc.task = "synthetic";
        sc.completions.push_back(engine_entry("g", {"search", "visit", "code_interpreter"}));
        for (int i = 0; i < 3; ++i) sc.completions.push_back(raw_entry("garbage " + std::to_string(i)));
        auto result = run(sc);
        REQUIRE(result.trajectory.end_state == EndState::aborted);
        REQUIRE_THAT(result.trajectory.stages[0].trace.terminal.detail,
                     ContainsSubstring("unparseable"));
    }
    SECTION("a parse success resets the failure counter") {
        Scenario sc;
        sc.name = "flaky";
        sc.task = "synthetic";
        sc.completions.push_back(engine_entry("g", {"search", "visit", "code_interpreter"}));
        sc.completions.push_back(raw_entry("noise 1"));
        sc.completions.push_back(raw_entry("noise 2"));
        sc.completions.push_back(task_turn("search", json{{"query", json::array({"q"})}}));
        sc.completions.push_back(raw_entry("noise 3"));
        sc.completions.push_back(raw_entry("noise 4"));
        sc.completions.push_back(finish_turn("ok"));
        auto result = run(sc);
        REQUIRE(result.trajectory.end_state == EndState::finished);
    }
}

TEST_CASE("tool contract violations become error observations, not crashes") {
    Scenario sc;
    sc.name = "bad_calls";
    sc.task = "synthetic";
    sc.completions.push_back(engine_entry("g", {"search", "visit", "code_interpreter"}));
    // not in the toolbox (but in the pool)
    sc.completions.push_back(task_turn("execute_bash", json{{"command", "ls"}}));
    // completely unknown tool
    sc.completions.push_back(task_turn("frobnicate", json{{"x", 1}}));
    // schema violation: missing required goal
    sc.completions.push_back(task_turn("visit", json{{"url", "https://a"}}));
    sc.completions.push_back(finish_turn("ok"));
    auto result = run(sc);
    const auto& steps = result.trajectory.stages[0].trace.steps;
    REQUIRE(result.trajectory.end_state == EndState::finished);
    REQUIRE(steps.size() == 3);
    REQUIRE_THAT(steps[0].observation.body, ContainsSubstring("not in the current toolbox"));
    REQUIRE_THAT(steps[1].observation.body, ContainsSubstring("not in the current toolbox"));
    REQUIRE_THAT(steps[2].observation.body, ContainsSubstring("MissingRequired"));
}

TEST_CASE("an invalid reconfigure call is retried without becoming a step") {
    Scenario sc;
    sc.name = "bad_reconfig";
    sc.task = "synthetic";
    sc.completions.push_back(engine_entry("g", {"search", "visit", "code_interpreter"}));
    // missing new_sub_goal
    sc.completions.push_back(raw_entry(assistant_turn_text(
        "try to reconfigure", "reconfigure",
        json{{"execution_summary", "s"}, {"update_content", "sub_goal"},
             {"update_reason", "r"}})));
    ScriptEntry retry = reconfig_turn("proper summary", "next goal");
    retry.expect_substrings.push_back("MissingRequired");
    sc.completions.push_back(retry);
    sc.completions.push_back(engine_entry("next goal", {"search", "visit", "code_interpreter"}));
    sc.completions.push_back(finish_turn("ok"));

    auto result = run(sc);
    const Trajectory& t = result.trajectory;
    REQUIRE(t.end_state == EndState::finished);
    REQUIRE(t.stages.size() == 2);
    // the malformed management call never appears as a task step
    REQUIRE(t.stages[0].trace.steps.empty());
    REQUIRE(t.stages[0].trace.terminal.kind == StageEndKind::reconfigured);
}

TEST_CASE("drop_request_how renders every later engine prompt with NONE") {
    Scenario sc = linear_scenario({1, 1, 1});
    AblationMode mode;
    mode.drop_request_how = true;
    auto result = run(sc, {}, {}, mode);
    REQUIRE(result.trajectory.end_state == EndState::finished);
    int engine_calls = 0;
    for (const auto& call : result.backend->recorded()) {
        if (call.role != "engine") continue;
        ++engine_calls;
        REQUIRE_THAT(call.prompt_text,
                     ContainsSubstring("<update_requirement>\nNONE\n</update_requirement>"));
    }
    REQUIRE(engine_calls == 3);
}

TEST_CASE("component disables pin the corresponding field on every stage") {
    const auto& assets = Assets::get();
    Scenario sc = linear_scenario({1, 1}, 32, "carried knowledge");

    SECTION("sub_goal pinned to the main task verbatim") {
        AblationMode mode;
        mode.disable_sub_goal = true;
        auto result = run(sc, {}, {}, mode);
        for (const auto& stage : result.trajectory.stages) {
            REQUIRE(stage.config.sub_goal == sc.task);
        }
    }
    SECTION("strategy pinned to the generic text") {
        AblationMode mode;
        mode.disable_strategy = true;
        auto result = run(sc, {}, {}, mode);
        for (const auto& stage : result.trajectory.stages) {
            REQUIRE(stage.config.strategy == kGenericStrategy);
        }
    }
    SECTION("toolbox pinned to the full pool") {
        AblationMode mode;
        mode.disable_toolbox = true;
        auto result = run(sc, {}, {}, mode);
        for (const auto& stage : result.trajectory.stages) {
            REQUIRE(stage.config.toolbox == assets.pool.names());
        }
    }
    SECTION("context pinned to empty knowledge") {
        AblationMode mode;
        mode.disable_context = true;
        auto result = run(sc, {}, {}, mode);
        for (const auto& stage : result.trajectory.stages) {
            REQUIRE(stage.config.knowledge.empty());
        }
    }
}

TEST_CASE("static baseline skips the engine and hides the reconfigure tool") {
    Scenario sc;
    sc.name = "static";
    sc.task = "plain task";
    sc.completions.push_back(task_turn("search", json{{"query", json::array({"q"})}}));
    sc.completions.push_back(finish_turn("done"));
    MockToolEntry tool;
    tool.tool = "search";
    tool.body = "result";
    sc.tool_entries.push_back(tool);

    AblationMode mode;
    mode.disable_sub_goal = mode.disable_strategy = mode.disable_toolbox = mode.disable_context =
        true;
    mode.disable_reconfigure = true;
    REQUIRE(mode.is_static_baseline());

    auto result = run(sc, {}, {}, mode);
    const Trajectory& t = result.trajectory;
    REQUIRE(t.end_state == EndState::finished);
    REQUIRE(t.stages.size() == 1);
    REQUIRE_FALSE(t.stages[0].engine.has_value());
    REQUIRE(t.stages[0].config.sub_goal == "plain task");
    REQUIRE(result.backend->remaining_engine() == 0);  // none were provided, none consumed
    for (const auto& call : result.backend->recorded()) {
        REQUIRE(call.role == "inference");
        REQUIRE(call.prompt_text.find("\"name\": \"reconfigure\"") == std::string::npos);
        REQUIRE_THAT(call.prompt_text, ContainsSubstring("\"name\": \"finish\""));
    }
}

TEST_CASE("swe budget shapes the prompts without touching the recorded trace") {
    Scenario sc;
    sc.name = "swe";
    sc.task = "synthetic";
    sc.completions.push_back(engine_entry("g", {"search", "visit", "code_interpreter"}));
    const int steps = 13;
    for (int i = 0; i < steps; ++i) {
        const std::string marker = "swe_q" + std::to_string(i);
        sc.completions.push_back(task_turn("search", json{{"query", json::array({marker})}}));
        MockToolEntry tool;
        tool.tool = "search";
        tool.match = marker;
        // multi-line and oversized so both mechanisms bite
        std::string body;
        for (int l = 0; l < 5; ++l) body += marker + " line " + std::to_string(l) + "\n";
        body += std::string(9000, 'z');
        tool.body = body;
        sc.tool_entries.push_back(std::move(tool));
    }
    sc.completions.push_back(finish_turn("swe-done"));

    ContextBudget budget;
    budget.swe_mode = true;
    auto result = run(sc, {}, budget);
    REQUIRE(result.trajectory.end_state == EndState::finished);

    // the last prompt saw compressed old observations and truncated bodies
    const auto& recorded = result.backend->recorded();
    const std::string& last_prompt = recorded.back().prompt_text;
    REQUIRE_THAT(last_prompt, ContainsSubstring("Old environment output: ("));
    REQUIRE_THAT(last_prompt, ContainsSubstring("characters) ..."));
    // recorded trace keeps the original bodies
    for (const auto& step : result.trajectory.stages[0].trace.steps) {
        REQUIRE(step.observation.body.size() > 9000);
        REQUIRE_FALSE(step.observation.truncated);
    }
}

TEST_CASE("invalid engine output on initialization propagates") {
    Scenario sc;
    sc.name = "bad_engine";
    sc.task = "synthetic";
    for (int i = 0; i < 3; ++i) sc.completions.push_back(raw_entry("no json here", "engine"));
    try {
        run(sc);
        FAIL("expected EngineOutputInvalid");
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::engine_output_invalid);
    }
}

TEST_CASE("a mid-run engine failure is recorded as an aborted trajectory") {
    Scenario sc;
    sc.name = "engine_dies";
    sc.task = "synthetic";
    sc.completions.push_back(engine_entry("g", {"search", "visit", "code_interpreter"}));
    sc.completions.push_back(reconfig_turn("done stage 0", "next"));
    // engine script is empty from here on -> BackendUnavailable inside reconfigure
    auto result = run(sc);
    REQUIRE(result.trajectory.end_state == EndState::aborted);
    REQUIRE(result.trajectory.stages.size() == 1);
    REQUIRE_THAT(result.trajectory.stages[0].trace.terminal.detail,
                 ContainsSubstring("script exhausted"));
}

TEST_CASE("logprob bundle matches a brute-force fold over the recorded events") {
    Scenario sc = linear_scenario({2, 1});
    auto result = run(sc);
    const Trajectory& t = result.trajectory;
    REQUIRE(t.logprobs.has_value());
    // fold oracle: initial engine + per-stage (steps + terminal) + reconfig engines
    double expected = *t.stages[0].engine->logprob;
    for (const auto& stage : t.stages) {
        for (const auto& step : stage.trace.steps) expected += *step.logprob;
        if (!stage.trace.terminal.raw.empty()) expected += *stage.trace.terminal.logprob;
    }
    for (std::size_t i = 1; i < t.stages.size(); ++i) expected += *t.stages[i].engine->logprob;
    REQUIRE(trajectory_logprob(t) == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("adoption metric aggregates across the run") {
    Scenario sc;
    sc.name = "adoption";
    sc.task = "synthetic";
    sc.completions.push_back(engine_entry("g0", {"search", "visit", "code_interpreter"}));
    sc.completions.push_back(reconfig_turn("s0", "adopted goal"));
    sc.completions.push_back(engine_entry("adopted goal", {"search", "visit", "code_interpreter"}));
    sc.completions.push_back(reconfig_turn("s1", "proposed goal"));
    sc.completions.push_back(engine_entry("replanned goal", {"search", "visit", "code_interpreter"}));
    sc.completions.push_back(finish_turn("done"));
    auto result = run(sc);
    REQUIRE(result.trajectory.metadata.metrics.adoption_total == 2);
    REQUIRE(result.trajectory.metadata.metrics.adoption_adopted == 1);
}

TEST_CASE("run metadata captures models, sampling, and the ablation mode") {
    Scenario sc = immediate_finish();
    AblationMode mode;
    mode.drop_request_how = true;
    auto result = run(sc, {}, {}, mode);
    const TrajectoryMetadata& m = result.trajectory.metadata;
    REQUIRE(m.inference_model == "inference");
    REQUIRE(m.engine_model == "engine");
    REQUIRE(m.sampling["inference"]["temperature"].get<double>() == 0.6);
    REQUIRE(m.ablation["drop_request_how"] == true);
    REQUIRE(m.scenario == "finish_now");
    REQUIRE_FALSE(m.created_at.empty());
    REQUIRE(m.metrics.max_prompt_tokens > 0);
}
