#pragma once

// Three-stage pipeline: plan once, then per sub-prompt reason a region and
// edit, iterating y_{i+1} = G(y_i, m_i, p_i) under the K bound. Every run
// yields a replayable RunRecord; hints can be overridden and the tail of the
// run replayed.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcot/backends.hpp"
#include "mcot/core.hpp"
#include "mcot/image_io.hpp"
#include "mcot/plan.hpp"
#include "mcot/sampler.hpp"

namespace mcot {

struct HintSet {
    std::vector<std::pair<Mask, SubPrompt>> hints;

    int k() const { return static_cast<int>(hints.size()); }
};

struct PipelineConfig {
    int K = 3;
    int steps = 100;
    GuidanceScales scales{1.5, 1.5, 7.5};
    std::uint64_t seed = 42;
    bool reason_per_step = true;  // reason against the latest y_i, not x_0
    double mask_threshold = 0.5;
    std::string codec = "identity";
    std::string planner;   // backend descriptors, kept for replay
    std::string reasoner;
    PlannerPromptConfig prompt;

    void validate() const {
        if (K < 1) throw ValidationError("PipelineConfig: K must be >= 1");
        if (steps < 1) throw ValidationError("PipelineConfig: steps must be >= 1");
        scales.validate();
        if (!(mask_threshold >= 0.0 && mask_threshold <= 1.0)) {
            throw ValidationError("PipelineConfig: mask_threshold in [0,1]");
        }
    }

    const LatentCodec& codec_impl() const {
        if (codec == "identity") return LatentCodec::identity();
        if (codec == "avgpool2") return LatentCodec::avgpool2();
        throw ValidationError("PipelineConfig: unknown codec '" + codec + "'");
    }

    json to_json() const {
        return json{{"K", K},
                    {"steps", steps},
                    {"scales", {{"s_f", scales.s_f}, {"s_b", scales.s_b}, {"s_p", scales.s_p}}},
                    {"seed", seed},
                    {"reason_per_step", reason_per_step},
                    {"mask_threshold", mask_threshold},
                    {"codec", codec},
                    {"planner", planner},
                    {"reasoner", reasoner}};
    }

    static PipelineConfig from_json(const json& j) {
        PipelineConfig c;
        c.K = j.value("K", 3);
        c.steps = j.value("steps", 100);
        if (j.contains("scales")) {
            c.scales.s_f = j["scales"].value("s_f", 1.5);
            c.scales.s_b = j["scales"].value("s_b", 1.5);
            c.scales.s_p = j["scales"].value("s_p", 7.5);
        }
        c.seed = j.value("seed", 42ull);
        c.reason_per_step = j.value("reason_per_step", true);
        c.mask_threshold = j.value("mask_threshold", 0.5);
        c.codec = j.value("codec", std::string("identity"));
        c.planner = j.value("planner", std::string());
        c.reasoner = j.value("reasoner", std::string());
        c.prompt.K = c.K;
        c.validate();
        return c;
    }
};

struct StepEntry {
    int index = 0;  // 1-based
    SubPrompt sub_prompt;
    Mask mask;
    Image pre_image;
    Image post_image;
    double wall_ms = 0.0;
};

struct RunRecord {
    Image input;
    Instruction instruction;
    EditPlan plan;
    std::vector<StepEntry> steps;
    Image final_image;
    PipelineConfig config;
    bool complete = false;
    std::string error_kind;     // empty when complete
    std::string error_message;

    // Content address over (input, instruction, config, seed).
    std::string address() const {
        std::uint64_t h = fnv1a64(image_hash(input));
        h = fnv1a64(instruction.text, h);
        h = fnv1a64(instruction.global_description, h);
        h = fnv1a64(config.to_json().dump(), h);
        return hex64(h);
    }
};

namespace detail {

inline std::string error_kind_of(const Error& e) {
    if (dynamic_cast<const PlanBoundsError*>(&e)) return "plan-bounds";
    if (dynamic_cast<const SchemaError*>(&e)) return "schema";
    if (dynamic_cast<const ParseError*>(&e)) return "parse";
    if (dynamic_cast<const VocabularyError*>(&e)) return "vocabulary";
    if (dynamic_cast<const ShapeError*>(&e)) return "shape";
    if (dynamic_cast<const ValidationError*>(&e)) return "validation";
    if (dynamic_cast<const BackendError*>(&e)) return "backend";
    if (dynamic_cast<const TrainingError*>(&e)) return "training";
    if (dynamic_cast<const NumericError*>(&e)) return "numeric";
    return "error";
}

}  // namespace detail

// Stage 1 once, stages 2+3 per sub-prompt. Backend and plan failures produce
// a partial record flagged incomplete instead of throwing.
inline RunRecord run_edit(const PlannerClient& planner, const ReasonerClient& reasoner,
                          const Denoiser& denoiser, const Image& x0, const Instruction& instr,
                          const PipelineConfig& cfg) {
    cfg.validate();
    if (instr.text.empty()) throw ValidationError("run_edit: empty instruction");

    RunRecord rec;
    rec.input = x0;
    rec.instruction = instr;
    rec.config = cfg;
    rec.config.planner = cfg.planner.empty() ? planner.descriptor() : cfg.planner;
    rec.config.reasoner = cfg.reasoner.empty() ? reasoner.descriptor() : cfg.reasoner;

    PlannerPromptConfig pcfg = cfg.prompt;
    pcfg.K = cfg.K;
    try {
        rec.plan = planner.request_plan(build_planner_prompt(instr, pcfg), cfg.K);
        if (rec.plan.k() > cfg.K) {  // parse_plan already enforces this bound
            throw PlanBoundsError("run_edit: plan exceeds K");
        }
        Image y = x0;
        for (int i = 1; i <= rec.plan.k(); ++i) {
            const SubPrompt& p = rec.plan.sub_prompts[static_cast<std::size_t>(i - 1)];
            const Image& basis = cfg.reason_per_step ? y : x0;
            const auto t0 = std::chrono::steady_clock::now();
            StepEntry entry;
            entry.index = i;
            entry.sub_prompt = p;
            entry.mask = reasoner.request_region(basis, p, cfg.mask_threshold);
            entry.pre_image = y;
            entry.post_image = edit_sample(denoiser, y, entry.mask, p, cfg.scales, cfg.steps,
                                           cfg.seed + static_cast<std::uint64_t>(i),
                                           cfg.codec_impl());
            entry.wall_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
            y = entry.post_image;
            rec.steps.push_back(std::move(entry));
        }
        rec.final_image = y;
        rec.complete = true;
    } catch (const Error& e) {
        rec.complete = false;
        rec.error_kind = detail::error_kind_of(e);
        rec.error_message = e.what();
        rec.final_image = rec.steps.empty() ? x0 : rec.steps.back().post_image;
    }
    return rec;
}

// Replays a record's pipeline from `step` (1-based) with a substituted hint,
// reusing recorded earlier states. Later steps re-reason against the new
// intermediate images; the reasoner is rebuilt from the record's descriptor
// unless one is supplied.
inline RunRecord override_hints(const RunRecord& record, int step,
                                const std::pair<Mask, SubPrompt>& new_hint, const Denoiser& denoiser,
                                const PipelineConfig& cfg,
                                const ReasonerClient* reasoner = nullptr) {
    cfg.validate();
    const int k = static_cast<int>(record.steps.size());
    if (step < 1 || step > k) throw ValidationError("override_hints: step out of range");
    const Image& basis = record.steps[static_cast<std::size_t>(step - 1)].pre_image;
    if (new_hint.first.height != basis.height || new_hint.first.width != basis.width) {
        throw ShapeError("override_hints: mask dimensions differ from step image");
    }
    if (new_hint.second.text.empty()) throw ValidationError("override_hints: empty sub-prompt");

    std::optional<ReasonerClient> rebuilt;
    if (!reasoner && step < k) {
        rebuilt.emplace(ReasonerClient::from_descriptor(record.config.reasoner));
        reasoner = &*rebuilt;
    }

    RunRecord out = record;
    out.steps.resize(static_cast<std::size_t>(step - 1));
    Image y = basis;
    for (int i = step; i <= k; ++i) {
        StepEntry entry;
        entry.index = i;
        const auto t0 = std::chrono::steady_clock::now();
        if (i == step) {
            entry.sub_prompt = new_hint.second;
            entry.mask = new_hint.first;
        } else {
            entry.sub_prompt = record.plan.sub_prompts[static_cast<std::size_t>(i - 1)];
            const Image& reason_basis = cfg.reason_per_step ? y : record.input;
            entry.mask = reasoner->request_region(reason_basis, entry.sub_prompt, cfg.mask_threshold);
        }
        entry.pre_image = y;
        entry.post_image = edit_sample(denoiser, y, entry.mask, entry.sub_prompt, cfg.scales,
                                       cfg.steps, cfg.seed + static_cast<std::uint64_t>(i),
                                       cfg.codec_impl());
        entry.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        y = entry.post_image;
        out.steps.push_back(std::move(entry));
    }
    out.final_image = y;
    out.complete = true;
    out.error_kind.clear();
    out.error_message.clear();
    return out;
}

// --- persistence ---------------------------------------------------------------

// Directory layout: record.json + input/final PNGs + per-step pre/post PNGs
// and mask PGMs.
inline void save_record(const std::string& dir, const RunRecord& rec) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path base(dir);
    write_png((base / "input.png").string(), rec.input);
    write_png((base / "final.png").string(), rec.final_image);

    json steps = json::array();
    for (const auto& s : rec.steps) {
        const std::string tag = "step_" + std::to_string(s.index);
        write_png((base / (tag + "_pre.png")).string(), s.pre_image);
        write_png((base / (tag + "_post.png")).string(), s.post_image);
        write_pgm((base / (tag + "_mask.pgm")).string(), s.mask);
        steps.push_back(json{{"index", s.index},
                             {"sub_prompt", {{"id", s.sub_prompt.id}, {"text", s.sub_prompt.text}}},
                             {"wall_ms", s.wall_ms},
                             {"pre_hash", image_hash(s.pre_image)},
                             {"post_hash", image_hash(s.post_image)},
                             {"mask_hash", mask_hash(s.mask)}});
    }
    json j{{"schema", "mcot_record_v1"},
           {"address", rec.address()},
           {"instruction", {{"text", rec.instruction.text},
                            {"global_description", rec.instruction.global_description}}},
           {"plan", plan_to_json(rec.plan)},
           {"config", rec.config.to_json()},
           {"steps", steps},
           {"complete", rec.complete},
           {"error_kind", rec.error_kind},
           {"error_message", rec.error_message},
           {"input_hash", image_hash(rec.input)},
           {"final_hash", image_hash(rec.final_image)}};
    std::ofstream out(base / "record.json");
    if (!out) throw ValidationError("save_record: cannot write record.json");
    out << j.dump(2) << "\n";
}

inline RunRecord load_record(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path base(dir);
    json j;
    {
        std::ifstream in(base / "record.json");
        if (!in) throw ValidationError("load_record: cannot open record.json in " + dir);
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ParseError(std::string("load_record: ") + e.what());
        }
    }
    if (j.value("schema", "") != "mcot_record_v1") throw SchemaError("load_record: bad schema");
    RunRecord rec;
    rec.input = read_png((base / "input.png").string());
    rec.final_image = read_png((base / "final.png").string());
    rec.instruction.text = j.at("instruction").at("text").get<std::string>();
    rec.instruction.global_description = j.at("instruction").at("global_description").get<std::string>();
    rec.plan = parse_plan(j.at("plan").dump(), j.at("config").value("K", 3));
    rec.config = PipelineConfig::from_json(j.at("config"));
    rec.complete = j.value("complete", false);
    rec.error_kind = j.value("error_kind", std::string());
    rec.error_message = j.value("error_message", std::string());
    for (const auto& s : j.at("steps")) {
        StepEntry e;
        e.index = s.at("index").get<int>();
        e.sub_prompt.id = s.at("sub_prompt").at("id").get<int>();
        e.sub_prompt.text = s.at("sub_prompt").at("text").get<std::string>();
        e.wall_ms = s.value("wall_ms", 0.0);
        const std::string tag = "step_" + std::to_string(e.index);
        e.pre_image = read_png((base / (tag + "_pre.png")).string());
        e.post_image = read_png((base / (tag + "_post.png")).string());
        e.mask = read_pgm_mask((base / (tag + "_mask.pgm")).string());
        rec.steps.push_back(std::move(e));
    }
    return rec;
}

// Per-step + final image hashes; the replay comparison key.
inline std::vector<std::string> record_hashes(const RunRecord& rec) {
    std::vector<std::string> out;
    out.push_back(image_hash(rec.input));
    for (const auto& s : rec.steps) {
        out.push_back(mask_hash(s.mask));
        out.push_back(image_hash(s.post_image));
    }
    out.push_back(image_hash(rec.final_image));
    return out;
}

}  // namespace mcot
