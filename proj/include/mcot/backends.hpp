#pragma once

// Planner and region-reasoner client contracts. Descriptors select the
// implementation:
//   planner:  "mock:<script>" | "http://host:port"
//   reasoner: "oracle:<scene-seed>[:size[:shapes]]" | "toy:<model-path>" | "http://host:port"
// Mock clients are table-driven and referentially transparent. HTTP clients
// retry transport failures and 5xx responses retry_count times.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "mcot/core.hpp"
#include "mcot/image_io.hpp"
#include "mcot/plan.hpp"
#include "mcot/reasoner.hpp"
#include "mcot/scenes.hpp"

namespace mcot {

namespace detail {

inline bool is_http(const std::string& desc) {
    return desc.rfind("http://", 0) == 0 || desc.rfind("https://", 0) == 0;
}

// Pulls the "Instruction: ..." line back out of a planner prompt; mock
// planners key on it.
inline std::string instruction_from_prompt(const std::string& prompt) {
    static const std::string tag = "Instruction: ";
    std::istringstream in(prompt);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(tag, 0) == 0) return line.substr(tag.size());
    }
    return prompt;  // bare instruction, e.g. direct mock use
}

inline void log_json_line(std::ostream* log, const json& j) {
    if (log) *log << j.dump() << "\n";
}

template <typename F>
auto with_retries(F&& attempt, int retry_count, std::ostream* log, const std::string& what) {
    std::string last_error;
    for (int i = 0; i <= retry_count; ++i) {
        try {
            return attempt();
        } catch (const BackendError& e) {
            last_error = e.what();
            log_json_line(log, json{{"event", "retry"}, {"what", what}, {"attempt", i + 1}, {"error", last_error}});
        }
    }
    throw BackendError(what + ": failed after " + std::to_string(retry_count + 1) + " attempts: " +
                       last_error);
}

}  // namespace detail

// --- planner -----------------------------------------------------------------

class PlannerClient {
public:
    PlannerClient(std::string descriptor, double timeout_s = 5.0, int retry_count = 2)
        : desc_(std::move(descriptor)), timeout_s_(timeout_s), retry_count_(retry_count) {
        if (!(timeout_s_ > 0.0)) throw ValidationError("PlannerClient: timeout must be > 0");
        if (retry_count_ < 0) throw ValidationError("PlannerClient: retry_count must be >= 0");
    }

    static PlannerClient from_descriptor(const std::string& desc, double timeout_s = 5.0,
                                         int retry_count = 2) {
        return PlannerClient(desc, timeout_s, retry_count);
    }

    const std::string& descriptor() const { return desc_; }
    void set_log(std::ostream* log) { log_ = log; }

    EditPlan request_plan(const std::string& prompt, int K) const {
        if (desc_.rfind("mock:", 0) == 0) {
            const std::string payload = run_mock_script(desc_.substr(5), prompt);
            detail::log_json_line(log_, json{{"event", "plan"}, {"backend", desc_}, {"response", payload}});
            return parse_plan(payload, K);
        }
        if (detail::is_http(desc_)) {
            const std::string body = json{{"prompt", prompt}, {"K", K}}.dump();
            const std::string payload = detail::with_retries(
                [&] { return http_post("/plan", body); }, retry_count_, log_, "request_plan");
            detail::log_json_line(log_, json{{"event", "plan"}, {"backend", desc_}, {"response", payload}});
            return parse_plan(payload, K);
        }
        throw ValidationError("PlannerClient: unknown descriptor '" + desc_ + "'");
    }

private:
    std::string http_post(const std::string& path, const std::string& body) const {
        httplib::Client cli(desc_);
        const auto secs = static_cast<time_t>(timeout_s_);
        const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
        cli.set_connection_timeout(secs, usecs);
        cli.set_read_timeout(secs, usecs);
        cli.set_write_timeout(secs, usecs);
        auto res = cli.Post(path, body, "application/json");
        if (!res) throw BackendError("transport: " + httplib::to_string(res.error()));
        if (res->status >= 500) throw BackendError("server error " + std::to_string(res->status));
        if (res->status != 200) {
            throw SchemaError("backend rejected request with status " + std::to_string(res->status) +
                              ": " + res->body);
        }
        return res->body;
    }

    // Built-in deterministic planner scripts.
    //   demo  -- instruction table with a decomposition for "make it dramatic"
    //   echo  -- one sub-prompt repeating the instruction
    //   split -- sub-prompt per ';'-separated clause
    static std::string run_mock_script(const std::string& script, const std::string& prompt) {
        const std::string instr = detail::instruction_from_prompt(prompt);
        EditPlan plan;
        if (script == "demo") {
            if (instr == "make it dramatic") {
                plan.sub_prompts = {{1, "add turbulent waves"},
                                    {2, "add dark storm clouds and lightning"}};
                plan.rationale =
                    "A dramatic nighttime scene needs motion first, then weather: turbulent "
                    "waves establish energy and storm clouds with lightning complete the mood.";
                plan.double_checked = true;
            } else if (instr == "make it warm") {
                plan.sub_prompts = {{1, "add a glowing sunset sky"}, {2, "add warm orange light"}};
                plan.rationale = "Warmth reads as golden light: sky first, then cast light.";
                plan.double_checked = true;
            } else {
                plan.sub_prompts = {{1, instr}};
                plan.rationale = "Single concrete instruction; no decomposition needed.";
                plan.double_checked = true;
            }
        } else if (script == "echo") {
            plan.sub_prompts = {{1, instr}};
            plan.rationale = "Pass-through plan.";
            plan.double_checked = true;
        } else if (script == "split") {
            int id = 1;
            std::string part;
            std::istringstream in(instr);
            while (std::getline(in, part, ';')) {
                const auto b = part.find_first_not_of(" \t");
                const auto e = part.find_last_not_of(" \t");
                if (b == std::string::npos) continue;
                plan.sub_prompts.push_back({id++, part.substr(b, e - b + 1)});
            }
            plan.rationale = "One step per ';'-separated clause.";
            plan.double_checked = true;
        } else {
            throw ValidationError("PlannerClient: unknown mock script '" + script + "'");
        }
        return serialize_plan(plan);
    }

    std::string desc_;
    double timeout_s_;
    int retry_count_;
    std::ostream* log_ = nullptr;
};

inline EditPlan request_plan(const PlannerClient& client, const std::string& prompt, int K) {
    return client.request_plan(prompt, K);
}

// --- reasoner ----------------------------------------------------------------

class ReasonerClient {
public:
    explicit ReasonerClient(std::string descriptor, double timeout_s = 5.0, int retry_count = 2)
        : desc_(std::move(descriptor)), timeout_s_(timeout_s), retry_count_(retry_count) {
        if (!(timeout_s_ > 0.0)) throw ValidationError("ReasonerClient: timeout must be > 0");
        if (desc_.rfind("toy:", 0) == 0) {
            model_ = std::make_shared<ToyReasonerModel>(load_reasoner(desc_.substr(4)));
        } else if (desc_.rfind("oracle:", 0) == 0) {
            scene_ = std::make_shared<SyntheticScene>(parse_oracle_descriptor(desc_.substr(7)));
        } else if (!detail::is_http(desc_)) {
            throw ValidationError("ReasonerClient: unknown descriptor '" + desc_ + "'");
        }
    }

    static ReasonerClient from_descriptor(const std::string& desc, double timeout_s = 5.0,
                                          int retry_count = 2) {
        return ReasonerClient(desc, timeout_s, retry_count);
    }

    // Direct construction from an in-memory model (tests, CLI after training).
    static ReasonerClient from_model(ToyReasonerModel model) {
        ReasonerClient c;
        c.desc_ = "toy:<memory>";
        c.model_ = std::make_shared<ToyReasonerModel>(std::move(model));
        return c;
    }

    const std::string& descriptor() const { return desc_; }
    void set_log(std::ostream* log) { log_ = log; }

    Mask request_region(const Image& image, const SubPrompt& sub_prompt, double threshold = 0.5) const {
        if (sub_prompt.text.empty()) throw ValidationError("request_region: empty sub-prompt");
        if (scene_) {
            if (image.height != scene_->image.height || image.width != scene_->image.width) {
                throw ShapeError("oracle reasoner: image dimensions differ from scene");
            }
            return oracle_region(*scene_, sub_prompt.text);
        }
        if (model_) {
            return binarize(predict_region(*model_, image, sub_prompt.text), threshold);
        }
        return http_region(image, sub_prompt);
    }

private:
    ReasonerClient() : desc_(), timeout_s_(5.0), retry_count_(2) {}

    static SyntheticScene parse_oracle_descriptor(const std::string& spec) {
        // <seed>[:<size>[:<nshapes>]]
        SceneOptions opts;
        std::uint64_t seed = 0;
        std::istringstream in(spec);
        std::string part;
        int field = 0;
        while (std::getline(in, part, ':')) {
            try {
                if (field == 0) seed = std::stoull(part);
                if (field == 1) opts.size = std::stoi(part);
                if (field == 2) opts.n_shapes = std::stoi(part);
            } catch (const std::exception&) {
                throw ValidationError("ReasonerClient: bad oracle descriptor field '" + part + "'");
            }
            ++field;
        }
        if (field == 0) throw ValidationError("ReasonerClient: oracle descriptor needs a seed");
        return make_scene(seed, opts);
    }

    Mask http_region(const Image& image, const SubPrompt& sub_prompt) const {
        const json req{{"image", base64_encode(pnm_encode(image))},
                       {"sub_prompt", json{{"id", sub_prompt.id}, {"text", sub_prompt.text}}}};
        const std::string body = req.dump();
        const std::string payload = detail::with_retries(
            [&] {
                httplib::Client cli(desc_);
                const auto secs = static_cast<time_t>(timeout_s_);
                const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
                cli.set_connection_timeout(secs, usecs);
                cli.set_read_timeout(secs, usecs);
                auto res = cli.Post("/reason", body, "application/json");
                if (!res) throw BackendError("transport: " + httplib::to_string(res.error()));
                if (res->status >= 500) throw BackendError("server error " + std::to_string(res->status));
                if (res->status != 200) {
                    throw SchemaError("backend rejected request with status " +
                                      std::to_string(res->status) + ": " + res->body);
                }
                return res->body;
            },
            retry_count_, log_, "request_region");
        detail::log_json_line(log_, json{{"event", "reason"}, {"backend", desc_}, {"bytes", payload.size()}});
        json j;
        try {
            j = json::parse(payload);
        } catch (const json::exception& e) {
            throw SchemaError(std::string("request_region: response JSON: ") + e.what());
        }
        if (!j.contains("mask") || !j["mask"].is_string()) {
            throw SchemaError("request_region: response lacks mask field");
        }
        Mask m = pgm_decode_mask(base64_decode(j["mask"].get<std::string>()));
        if (m.height != image.height || m.width != image.width) {
            throw SchemaError("request_region: mask dimensions differ from image");
        }
        return m;
    }

    std::string desc_;
    double timeout_s_;
    int retry_count_;
    std::ostream* log_ = nullptr;
    std::shared_ptr<const ToyReasonerModel> model_;
    std::shared_ptr<const SyntheticScene> scene_;
};

inline Mask request_region(const ReasonerClient& client, const Image& image,
                           const SubPrompt& sub_prompt, double threshold = 0.5) {
    return client.request_region(image, sub_prompt, threshold);
}

}  // namespace mcot
