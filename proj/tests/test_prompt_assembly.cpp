#include <catch2/catch_amalgamated.hpp>

#include "restage/prompt_assembly.hpp"
#include "support/builders.hpp"

using namespace restage;
using Catch::Matchers::ContainsSubstring;

namespace {

std::vector<ToolSchema> schemas_for(const StageConfiguration& config, const GlobalToolPool& pool,
                                    bool with_reconfigure = true) {
    std::vector<ToolSchema> schemas;
    for (const auto& name : config.toolbox) schemas.push_back(pool.schema(name));
    if (with_reconfigure) schemas.push_back(pool.reconfigure_schema());
    schemas.push_back(pool.finish_schema());
    return schemas;
}

}  // namespace

TEST_CASE("render_inference_prompt fills every slot") {
    const auto& assets = testsupport::Assets::get();
    StageConfiguration config;
    config.sub_goal = "Visit the NASA APOD page for 2006-01-21 to identify the two astronauts.";
    config.strategy = "As a Data Analyst: inspect the page.";
    config.toolbox = {"visit", "code_interpreter", "str_replace_editor", "search"};
    config.knowledge = "";

    PromptBundle bundle = render_inference_prompt("What is in the image?", config,
                                                  schemas_for(config, assets.pool),
                                                  assets.templates);

    SECTION("empty knowledge renders as an empty tagged section") {
        REQUIRE_THAT(bundle.system_text, ContainsSubstring("<knowledge>\n\n</knowledge>"));
    }
    SECTION("sub-goal is wrapped in its tag") {
        REQUIRE_THAT(bundle.system_text,
                     ContainsSubstring("<sub_goal>\nVisit the NASA APOD page for 2006-01-21"));
    }
    SECTION("main task and toolbox list are embedded") {
        REQUIRE_THAT(bundle.system_text, ContainsSubstring("<main_task>\nWhat is in the image?"));
        REQUIRE_THAT(bundle.system_text,
                     ContainsSubstring("visit, code_interpreter, str_replace_editor, search"));
    }
    SECTION("no placeholder braces remain") {
        for (const char* slot : {"{MAIN_TASK_CONTENT}", "{SUB_GOAL_CONTENT}",
                                 "{EXECUTION_STRATEGY}", "{TOOLBOX_LIST}", "{KNOWLEDGE_CONTENT}"}) {
            REQUIRE(bundle.system_text.find(slot) == std::string::npos);
        }
    }
    SECTION("tool block lists each schema and the user suffix has the cycle instructions") {
        REQUIRE_THAT(bundle.tool_block, ContainsSubstring("\"name\": \"visit\""));
        REQUIRE_THAT(bundle.tool_block, ContainsSubstring("\"name\": \"reconfigure\""));
        REQUIRE_THAT(bundle.tool_block, ContainsSubstring("\"name\": \"finish\""));
        REQUIRE_THAT(bundle.user_suffix, ContainsSubstring("enclosed within their tags"));
        REQUIRE_THAT(bundle.user_prefix, ContainsSubstring("A conversation between User and Assistant"));
    }
}

TEST_CASE("render_inference_prompt reports missing schemas") {
    const auto& assets = testsupport::Assets::get();
    StageConfiguration config;
    config.sub_goal = "g";
    config.strategy = "s";
    config.toolbox = {"visit"};
    std::vector<ToolSchema> only_search{assets.pool.schema("search"),
                                        assets.pool.finish_schema()};
    try {
        render_inference_prompt("task", config, only_search, assets.templates);
        FAIL("expected MissingSchema");
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::missing_schema);
        REQUIRE_THAT(e.what(), ContainsSubstring("visit"));
    }
}

TEST_CASE("inference prompt never mentions tools outside toolbox plus management") {
    const auto& assets = testsupport::Assets::get();
    StageConfiguration config;
    config.sub_goal = "g";
    config.strategy = "s";
    config.toolbox = {"search"};
    // Pass the full pool's schemas; only toolbox + management may be rendered.
    std::vector<ToolSchema> all;
    for (const auto& name : assets.pool.names()) all.push_back(assets.pool.schema(name));
    all.push_back(assets.pool.reconfigure_schema());
    all.push_back(assets.pool.finish_schema());
    PromptBundle bundle = render_inference_prompt("task", config, all, assets.templates);
    const std::string full = bundle.system_text + "\n" + bundle.user_text();
    for (const char* outside : {"file_analyzer", "str_replace_editor", "execute_bash",
                                "code_interpreter"}) {
        REQUIRE(full.find(outside) == std::string::npos);
    }
    REQUIRE_THAT(full, ContainsSubstring("\"name\": \"search\""));
}

TEST_CASE("rendering is a pure function") {
    const auto& assets = testsupport::Assets::get();
    StageConfiguration config;
    config.sub_goal = "goal";
    config.strategy = "strategy";
    config.toolbox = {"visit", "search", "code_interpreter"};
    config.knowledge = "some knowledge";
    auto schemas = schemas_for(config, assets.pool);
    PromptBundle a = render_inference_prompt("task", config, schemas, assets.templates);
    PromptBundle b = render_inference_prompt("task", config, schemas, assets.templates);
    REQUIRE(a.system_text == b.system_text);
    REQUIRE(a.user_text() == b.user_text());
    REQUIRE(a.tool_block == b.tool_block);
}

TEST_CASE("render_reconfig_prompt") {
    const auto& assets = testsupport::Assets::get();
    GlobalHistoryPool empty;

    SECTION("empty history and absent request render as NONE") {
        PromptBundle bundle =
            render_reconfig_prompt("task", assets.pool, empty, std::nullopt, assets.templates);
        REQUIRE_THAT(bundle.system_text,
                     ContainsSubstring("<execution_history>\nNONE\n</execution_history>"));
        REQUIRE_THAT(bundle.system_text,
                     ContainsSubstring("<update_requirement>\nNONE\n</update_requirement>"));
        REQUIRE_THAT(bundle.system_text, ContainsSubstring("Agent Configuration Engineer"));
    }

    SECTION("history entries render as numbered iterations") {
        GlobalHistoryPool history;
        history.append({0, "first goal", "first summary"});
        history.append({1, "second goal", "second summary"});
        ReconfigRequest request;
        request.proposed_sub_goal = "List Group 2 members";
        request.update_reason = "previous goal complete";
        request.update_content = "sub_goal";
        PromptBundle bundle =
            render_reconfig_prompt("task", assets.pool, history, request, assets.templates);
        REQUIRE_THAT(bundle.system_text, ContainsSubstring("Iteration 1:"));
        REQUIRE_THAT(bundle.system_text, ContainsSubstring("Iteration 2:"));
        REQUIRE_THAT(bundle.system_text, ContainsSubstring("List Group 2 members"));
    }

    SECTION("request details omit absent fields and never include update_content") {
        ReconfigRequest request;
        request.proposed_sub_goal = "next";
        request.update_reason = "because";
        request.update_content = "knowledge";
        request.details.knowledge_requirements = "coordinates in decimal degrees";
        PromptBundle bundle =
            render_reconfig_prompt("task", assets.pool, empty, request, assets.templates);
        REQUIRE_THAT(bundle.system_text, ContainsSubstring("knowledge_requirements"));
        REQUIRE(bundle.system_text.find("toolbox_requirements") == std::string::npos);
        REQUIRE(bundle.system_text.find("execution_strategy_requirements") == std::string::npos);
        // update_content is metadata only
        REQUIRE(bundle.system_text.find("update_content") == std::string::npos);
    }

    SECTION("all six task tools are listed for the engine") {
        PromptBundle bundle =
            render_reconfig_prompt("task", assets.pool, empty, std::nullopt, assets.templates);
        for (const auto& name : assets.pool.names()) {
            REQUIRE_THAT(bundle.system_text, ContainsSubstring("\"name\": \"" + name + "\""));
        }
    }
}

TEST_CASE("template loading validates placeholders and normalizes line endings") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "restage_tpl_test";
    fs::create_directories(dir);
    auto write = [&](const char* name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        out << text;
    };
    write("inference_system.txt",
          "{MAIN_TASK_CONTENT}\r\n{SUB_GOAL_CONTENT} {EXECUTION_STRATEGY} {TOOLBOX_LIST} "
          "{KNOWLEDGE_CONTENT}");
    write("reconfig_system.txt",
          "{MAIN_TASK_CONTENT} {ALL_AVAILABLE_TOOLS} {EXECUTION_HISTORY} {UPDATE_REQUIREMENT}");
    write("react_user_prefix.txt", "prefix");
    write("react_user_suffix.txt", "suffix");

    PromptTemplates templates = PromptTemplates::load(dir);
    REQUIRE(templates.inference_system.find("\r\n") == std::string::npos);

    write("inference_system.txt", "missing slots");
    try {
        PromptTemplates::load(dir);
        FAIL("expected TemplateError");
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::template_error);
    }
    fs::remove_all(dir);
}
