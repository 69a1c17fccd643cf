#pragma once

// Planner protocol: the prompt handed to the planning model and the JSON
// plan coming back. Plans are canonical JSON ("mcot_plan_v1") so artifacts
// diff cleanly; parsing rejects out-of-bounds plans instead of truncating.

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "mcot/common.hpp"

namespace mcot {

using json = nlohmann::json;

inline constexpr const char* kPlanSchemaVersion = "mcot_plan_v1";

struct Instruction {
    std::string text;                // the user prompt
    std::string global_description;  // description of the input image
};

struct SubPrompt {
    int id = 0;  // 1-based, contiguous
    std::string text;

    friend bool operator==(const SubPrompt& a, const SubPrompt& b) {
        return a.id == b.id && a.text == b.text;
    }
};

struct EditPlan {
    std::vector<SubPrompt> sub_prompts;
    std::string rationale;
    bool double_checked = false;

    int k() const { return static_cast<int>(sub_prompts.size()); }

    friend bool operator==(const EditPlan& a, const EditPlan& b) {
        return a.sub_prompts == b.sub_prompts && a.rationale == b.rationale &&
               a.double_checked == b.double_checked;
    }
};

struct PlannerPromptConfig {
    int K = 3;
    std::string ability_prior =
        "The editing network reasons the editing region for each sub-prompt on its own, "
        "so sub-prompts must describe content changes only; never emit position or "
        "region-adjustment instructions.";
    std::string cot_trigger = "Let us think step by step";
    std::string double_check_phrase = "Please double check it when you generate the answer";
};

// Deterministic planner prompt. Element order: global description, user
// instruction, ability prior, K, CoT trigger, double-check phrase, output
// schema. The "Instruction:" line is also what mock planners key on.
inline std::string build_planner_prompt(const Instruction& instr, const PlannerPromptConfig& cfg) {
    if (instr.text.empty()) throw ValidationError("build_planner_prompt: empty instruction");
    if (cfg.K < 1) throw ValidationError("build_planner_prompt: K must be >= 1");
    if (cfg.cot_trigger.empty() || cfg.double_check_phrase.empty()) {
        throw ValidationError("build_planner_prompt: trigger phrases must be nonempty");
    }
    std::string p;
    p += "You are an image-editing planner.\n";
    p += "Image description: " + instr.global_description + "\n";
    p += "Instruction: " + instr.text + "\n";
    p += "Editing network ability: " + cfg.ability_prior + "\n";
    p += "Decompose the instruction into at most " + std::to_string(cfg.K) +
         " ordered sub-prompts; use fewer when fewer suffice.\n";
    p += cfg.cot_trigger + ".\n";
    p += cfg.double_check_phrase + ".\n";
    p += "Answer with exactly one JSON object, no other text:\n";
    p += R"({"schema":")" + std::string(kPlanSchemaVersion) +
         R"(","sub_prompts":[{"id":1,"text":"..."}],"rationale":"...","double_checked":true})";
    p += "\n";
    return p;
}

inline json plan_to_json(const EditPlan& plan) {
    json subs = json::array();
    for (const auto& sp : plan.sub_prompts) {
        subs.push_back(json{{"id", sp.id}, {"text", sp.text}});
    }
    return json{{"schema", kPlanSchemaVersion},
                {"sub_prompts", subs},
                {"rationale", plan.rationale},
                {"double_checked", plan.double_checked}};
}

// Canonical form: nlohmann orders object keys lexicographically, so two
// serializations of equal plans are byte-identical.
inline std::string serialize_plan(const EditPlan& plan) { return plan_to_json(plan).dump(); }

inline EditPlan parse_plan(const std::string& payload, int K) {
    if (K < 1) throw ValidationError("parse_plan: K must be >= 1");
    json j;
    try {
        j = json::parse(payload);
    } catch (const json::exception& e) {
        throw ParseError(std::string("parse_plan: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("parse_plan: top level must be an object");
    if (!j.contains("schema") || j["schema"] != kPlanSchemaVersion) {
        throw SchemaError(std::string("parse_plan: missing or unsupported schema version (expected ") +
                          kPlanSchemaVersion + ")");
    }
    if (!j.contains("sub_prompts") || !j["sub_prompts"].is_array()) {
        throw SchemaError("parse_plan: sub_prompts array required");
    }
    EditPlan plan;
    const auto& subs = j["sub_prompts"];
    const int k = static_cast<int>(subs.size());
    if (k == 0) throw PlanBoundsError("parse_plan: plan has no sub-prompts");
    if (k > K) {
        throw PlanBoundsError("parse_plan: " + std::to_string(k) + " sub-prompts exceed K=" +
                              std::to_string(K));
    }
    int expected_id = 1;
    for (const auto& s : subs) {
        if (!s.is_object() || !s.contains("id") || !s.contains("text") ||
            !s["id"].is_number_integer() || !s["text"].is_string()) {
            throw SchemaError("parse_plan: each sub-prompt needs integer id and string text");
        }
        SubPrompt sp{s["id"].get<int>(), s["text"].get<std::string>()};
        if (sp.id != expected_id) {
            throw SchemaError("parse_plan: sub-prompt ids must be contiguous from 1");
        }
        if (sp.text.empty()) throw SchemaError("parse_plan: empty sub-prompt text");
        ++expected_id;
        plan.sub_prompts.push_back(std::move(sp));
    }
    if (j.contains("rationale")) {
        if (!j["rationale"].is_string()) throw SchemaError("parse_plan: rationale must be a string");
        plan.rationale = j["rationale"].get<std::string>();
    }
    if (j.contains("double_checked")) {
        if (!j["double_checked"].is_boolean()) {
            throw SchemaError("parse_plan: double_checked must be a boolean");
        }
        plan.double_checked = j["double_checked"].get<bool>();
    }
    return plan;
}

}  // namespace mcot
