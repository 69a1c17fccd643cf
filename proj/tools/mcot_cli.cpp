// mcot: single entry point for scene generation, training, planning,
// reasoning, editing runs, evaluation, guidance sweeps and the acceptance
// suite. Every subcommand is deterministic given (--seed, config, inputs) and
// prints a JSON manifest of produced files on success.
//
// Exit codes: 0 success, 1 validation/parse error, 2 backend error,
// 3 numeric error, 4 acceptance-check failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mcot/acceptance.hpp"
#include "mcot/backends.hpp"
#include "mcot/eval.hpp"
#include "mcot/image_io.hpp"
#include "mcot/orchestrator.hpp"
#include "mcot/plan.hpp"
#include "mcot/reasoner.hpp"
#include "mcot/sampler.hpp"
#include "mcot/scenes.hpp"

namespace {

namespace fs = std::filesystem;
using mcot::json;

struct GlobalOpts {
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    bool verbose = false;
    std::string config_path;
};

struct OutputManifest {
    std::vector<std::string> files;

    std::string add(const std::string& path) {
        files.push_back(path);
        return path;
    }
    void print() const {
        json j{{"outputs", files}};
        std::cout << j.dump() << "\n";
    }
};

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw mcot::ValidationError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw mcot::ParseError(std::string("config: ") + e.what());
    }
    return j;
}

// Flags override config-file values; the effective config is echoed into the
// output directory.
mcot::PipelineConfig effective_pipeline_config(const GlobalOpts& g, const CLI::App* cmd,
                                               int k_flag, int steps_flag, double sf, double sb,
                                               double sp, bool reason_on_input) {
    json file = load_config_file(g.config_path);
    mcot::PipelineConfig cfg = mcot::PipelineConfig::from_json(file);
    cfg.seed = g.seed;
    if (cmd->count("--k")) cfg.K = k_flag;
    if (cmd->count("--steps")) cfg.steps = steps_flag;
    if (cmd->count("--scale-fg")) cfg.scales.s_f = sf;
    if (cmd->count("--scale-bg")) cfg.scales.s_b = sb;
    if (cmd->count("--scale-text")) cfg.scales.s_p = sp;
    if (cmd->count("--reason-on-input")) cfg.reason_per_step = !reason_on_input;
    cfg.prompt.K = cfg.K;
    cfg.validate();
    return cfg;
}

void echo_config(const fs::path& dir, const json& effective, OutputManifest& outputs) {
    fs::create_directories(dir);
    const auto path = dir / "effective_config.json";
    std::ofstream out(path);
    out << effective.dump(2) << "\n";
    outputs.add(path.string());
}

std::vector<double> parse_scales(const std::string& spec) {
    // "a:b:step" range or comma-separated list
    std::vector<double> out;
    if (spec.find(':') != std::string::npos) {
        double a = 0, b = 0, step = 0;
        if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &a, &b, &step) != 3 || step <= 0) {
            throw mcot::ValidationError("scales: expected a:b:step");
        }
        for (double v = a; v <= b + 1e-9; v += step) out.push_back(v);
        return out;
    }
    std::istringstream in(spec);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    if (out.empty()) throw mcot::ValidationError("scales: empty list");
    return out;
}

// Denoiser descriptors: "tiny:<weights-path>" or "gaussian:<image-path>:<sigma>".
std::unique_ptr<mcot::Denoiser> make_denoiser(const std::string& desc, const mcot::Image& fallback) {
    if (desc.rfind("tiny:", 0) == 0) {
        auto [model, sched] = mcot::load_denoiser(desc.substr(5));
        (void)sched;
        return std::make_unique<mcot::TinyDenoiser>(std::move(model));
    }
    if (desc.rfind("gaussian:", 0) == 0) {
        const std::string rest = desc.substr(9);
        const auto colon = rest.rfind(':');
        if (colon == std::string::npos) {
            throw mcot::ValidationError("denoiser: expected gaussian:<image>:<sigma>");
        }
        const std::string img_path = rest.substr(0, colon);
        const double sigma = std::stod(rest.substr(colon + 1));
        const mcot::Image target = img_path == "input" ? fallback : mcot::read_image(img_path);
        return std::make_unique<mcot::GaussianWorld>(
            mcot::GaussianWorld::uniform(mcot::image_to_latent(target), sigma));
    }
    throw mcot::ValidationError("denoiser: unknown descriptor '" + desc + "'");
}

int exit_code_for(const mcot::Error& e) {
    if (dynamic_cast<const mcot::BackendError*>(&e)) return 2;
    if (dynamic_cast<const mcot::NumericError*>(&e)) return 3;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal chain-of-thought image editing pipeline"};
    app.require_subcommand(1);

    GlobalOpts g;
    if (const char* env = std::getenv("MCOT_OUT")) g.out_dir = env;
    app.add_option("--seed", g.seed, "global random seed")->capture_default_str();
    app.add_option("--out,-o", g.out_dir, "output directory (env MCOT_OUT)")->capture_default_str();
    app.add_option("--config", g.config_path, "pipeline config JSON file");
    app.add_flag("--verbose,-v", g.verbose, "JSON-line progress and backend logs");

    // --- gen-scenes ---
    auto* gen = app.add_subcommand("gen-scenes", "generate synthetic scenes with ground truth");
    int gen_count = 8, gen_size = 16, gen_shapes = 1;
    gen->add_option("--count", gen_count, "number of scenes")->capture_default_str();
    gen->add_option("--size", gen_size, "canvas size")->capture_default_str();
    gen->add_option("--shapes", gen_shapes, "shapes per scene")->capture_default_str();

    // --- train-reasoner ---
    auto* trr = app.add_subcommand("train-reasoner", "train the toy region reasoner");
    int trr_scenes = 128, trr_epochs = 200;
    double trr_lr = 0.05;
    trr->add_option("--scenes", trr_scenes, "training scene count")->capture_default_str();
    trr->add_option("--epochs", trr_epochs, "training epochs")->capture_default_str();
    trr->add_option("--lr", trr_lr, "learning rate")->capture_default_str();

    // --- train-denoiser ---
    auto* trd = app.add_subcommand("train-denoiser", "train the tiny hint-guided denoiser");
    int trd_scenes = 12, trd_epochs = 40;
    double trd_lr = 0.01;
    trd->add_option("--scenes", trd_scenes, "training scene count")->capture_default_str();
    trd->add_option("--epochs", trd_epochs, "training epochs")->capture_default_str();
    trd->add_option("--lr", trd_lr, "learning rate")->capture_default_str();

    // --- plan ---
    auto* plan_cmd = app.add_subcommand("plan", "build the planner prompt and request a plan");
    std::string plan_instruction, plan_description = "an input image", plan_backend = "mock:demo";
    int plan_k = 3;
    plan_cmd->add_option("--instruction", plan_instruction, "user editing instruction")->required();
    plan_cmd->add_option("--description", plan_description, "global description of the input image")
        ->capture_default_str();
    plan_cmd->add_option("--k", plan_k, "maximum sub-prompt count K")->capture_default_str();
    plan_cmd->add_option("--planner", plan_backend, "planner descriptor")->capture_default_str();

    // --- reason ---
    auto* reason_cmd = app.add_subcommand("reason", "request an editing region for a sub-prompt");
    std::string reason_image, reason_prompt, reason_backend;
    double reason_threshold = 0.5;
    reason_cmd->add_option("--image", reason_image, "input image (png/pgm/ppm)")->required();
    reason_cmd->add_option("--prompt", reason_prompt, "sub-prompt text")->required();
    reason_cmd->add_option("--reasoner", reason_backend, "reasoner descriptor")->required();
    reason_cmd->add_option("--threshold", reason_threshold, "binarization threshold")
        ->capture_default_str();

    // --- run ---
    auto* run_cmd = app.add_subcommand("run", "full plan/reason/edit pipeline");
    std::string run_image, run_instruction, run_description = "an input image";
    std::string run_planner = "mock:demo", run_reasoner, run_denoiser = "gaussian:input:0.05";
    int run_k = 3, run_steps = 100;
    double run_sf = 1.5, run_sb = 1.5, run_sp = 7.5;
    bool run_reason_on_input = false;
    run_cmd->add_option("--image", run_image, "input image")->required();
    run_cmd->add_option("--instruction", run_instruction, "editing instruction")->required();
    run_cmd->add_option("--description", run_description, "global description")->capture_default_str();
    run_cmd->add_option("--planner", run_planner, "planner descriptor")->capture_default_str();
    run_cmd->add_option("--reasoner", run_reasoner, "reasoner descriptor")->required();
    run_cmd->add_option("--denoiser", run_denoiser, "denoiser descriptor")->capture_default_str();
    run_cmd->add_option("--k", run_k, "maximum sub-prompt count K");
    run_cmd->add_option("--steps", run_steps, "DDIM steps");
    run_cmd->add_option("--scale-fg", run_sf, "foreground guidance scale");
    run_cmd->add_option("--scale-bg", run_sb, "background guidance scale");
    run_cmd->add_option("--scale-text", run_sp, "text guidance scale");
    run_cmd->add_flag("--reason-on-input", run_reason_on_input,
                      "reason every region against the original image instead of the latest");

    // --- eval ---
    auto* eval_cmd = app.add_subcommand("eval", "score edited outputs against a manifest");
    std::string eval_manifest, eval_outputs;
    eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest JSON")->required();
    eval_cmd->add_option("--outputs", eval_outputs,
                         "directory of edited images named <input-stem>_edited.png")
        ->required();

    // --- sweep-cfg ---
    auto* sweep_cmd = app.add_subcommand("sweep-cfg", "guidance-scale sweep in the analytic world");
    std::string sweep_scales = "1.0:2.0:0.2";
    double sweep_sp = 7.5, sweep_sigma = 0.1;
    int sweep_trials = 100;
    sweep_cmd->add_option("--scales", sweep_scales, "a:b:step or comma list")->capture_default_str();
    sweep_cmd->add_option("--text-scale", sweep_sp, "fixed text guidance scale")->capture_default_str();
    sweep_cmd->add_option("--trials", sweep_trials, "trials per scale point")->capture_default_str();
    sweep_cmd->add_option("--sigma", sweep_sigma, "analytic world noise level")->capture_default_str();

    // --- verify ---
    auto* verify_cmd = app.add_subcommand("verify", "run the acceptance suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 1;
    }

    std::ostream* log = g.verbose ? &std::cerr : nullptr;
    OutputManifest outputs;
    const fs::path out_dir(g.out_dir);

    try {
        if (*gen) {
            fs::create_directories(out_dir);
            json index = json::array();
            for (int i = 0; i < gen_count; ++i) {
                const std::uint64_t seed = g.seed + static_cast<std::uint64_t>(i);
                const mcot::SyntheticScene scene =
                    mcot::make_scene(seed, mcot::SceneOptions{gen_size, gen_shapes});
                const std::string stem = "scene_" + std::to_string(seed);
                mcot::write_png(outputs.add((out_dir / (stem + ".png")).string()), scene.image);
                json requests = json::array();
                for (std::size_t q = 0; q < scene.requests.size(); ++q) {
                    const auto& req = scene.requests[q];
                    const std::string mask_path =
                        (out_dir / (stem + "_req" + std::to_string(q) + "_mask.pgm")).string();
                    mcot::write_pgm(outputs.add(mask_path), req.region);
                    requests.push_back(json{{"prompt", req.prompt}, {"mask", mask_path}});
                }
                json shapes = json::array();
                for (const auto& s : scene.shapes) {
                    shapes.push_back(json{{"kind", mcot::to_string(s.kind)},
                                          {"color", mcot::to_string(s.color)},
                                          {"y", s.y},
                                          {"x", s.x}});
                }
                index.push_back(json{{"seed", seed},
                                     {"image", (out_dir / (stem + ".png")).string()},
                                     {"oracle", "oracle:" + std::to_string(seed) + ":" +
                                                    std::to_string(gen_size) + ":" +
                                                    std::to_string(gen_shapes)},
                                     {"shapes", shapes},
                                     {"requests", requests}});
            }
            const auto index_path = out_dir / "scenes.json";
            std::ofstream idx(index_path);
            idx << index.dump(2) << "\n";
            outputs.add(index_path.string());
            echo_config(out_dir, json{{"command", "gen-scenes"}, {"seed", g.seed},
                                      {"count", gen_count}, {"size", gen_size},
                                      {"shapes", gen_shapes}},
                        outputs);
        } else if (*trr) {
            fs::create_directories(out_dir);
            std::vector<mcot::SyntheticScene> scenes;
            for (int i = 0; i < trr_scenes; ++i) {
                scenes.push_back(mcot::make_scene(700000 + g.seed + static_cast<std::uint64_t>(i),
                                                  mcot::SceneOptions{16, 1}));
            }
            const mcot::ToyReasonerModel model =
                mcot::train_toy_reasoner(scenes, trr_epochs, trr_lr, g.seed, log);
            const double bce =
                mcot::reasoner_dataset_loss(model, mcot::reasoner_examples_from_scenes(scenes));
            const auto path = out_dir / "reasoner.mcw";
            mcot::save_reasoner(outputs.add(path.string()), model);
            std::cerr << "final training BCE " << mcot::format_double(bce, 6) << "\n";
            echo_config(out_dir, json{{"command", "train-reasoner"}, {"seed", g.seed},
                                      {"scenes", trr_scenes}, {"epochs", trr_epochs}, {"lr", trr_lr},
                                      {"final_bce", bce}},
                        outputs);
        } else if (*trd) {
            fs::create_directories(out_dir);
            std::vector<mcot::SyntheticScene> scenes;
            for (int i = 0; i < trd_scenes; ++i) {
                scenes.push_back(mcot::make_scene(300000 + g.seed + static_cast<std::uint64_t>(i),
                                                  mcot::SceneOptions{16, 1}));
            }
            const auto pairs = mcot::edit_pairs_from_scenes(scenes);
            const mcot::TinyDenoiser model = mcot::train_tiny_denoiser(
                pairs, trd_epochs, trd_lr, g.seed, mcot::DropoutPolicy{},
                mcot::default_schedule(), mcot::LatentCodec::identity(),
                mcot::default_text_embedder(), log);
            const auto path = out_dir / "denoiser.mcw";
            mcot::save_denoiser(outputs.add(path.string()), model, mcot::default_schedule());
            echo_config(out_dir, json{{"command", "train-denoiser"}, {"seed", g.seed},
                                      {"scenes", trd_scenes}, {"epochs", trd_epochs}, {"lr", trd_lr}},
                        outputs);
        } else if (*plan_cmd) {
            fs::create_directories(out_dir);
            mcot::PlannerPromptConfig pcfg;
            pcfg.K = plan_k;
            const mcot::Instruction instr{plan_instruction, plan_description};
            const std::string prompt = mcot::build_planner_prompt(instr, pcfg);
            mcot::PlannerClient planner(plan_backend);
            planner.set_log(log);
            const mcot::EditPlan plan = planner.request_plan(prompt, plan_k);
            const std::string payload = mcot::serialize_plan(plan);
            const auto plan_path = out_dir / "plan.json";
            {
                std::ofstream out(plan_path);
                out << payload << "\n";
            }
            outputs.add(plan_path.string());
            const auto prompt_path = out_dir / "planner_prompt.txt";
            {
                std::ofstream out(prompt_path);
                out << prompt;
            }
            outputs.add(prompt_path.string());
            std::cout << payload << "\n";
            echo_config(out_dir, json{{"command", "plan"}, {"seed", g.seed}, {"K", plan_k},
                                      {"planner", plan_backend}},
                        outputs);
        } else if (*reason_cmd) {
            fs::create_directories(out_dir);
            const mcot::Image img = mcot::read_image(reason_image);
            mcot::ReasonerClient reasoner(reason_backend);
            reasoner.set_log(log);
            const mcot::Mask mask =
                reasoner.request_region(img, mcot::SubPrompt{1, reason_prompt}, reason_threshold);
            const auto mask_path = out_dir / "mask.pgm";
            mcot::write_pgm(outputs.add(mask_path.string()), mask);
            echo_config(out_dir, json{{"command", "reason"}, {"reasoner", reason_backend},
                                      {"threshold", reason_threshold}},
                        outputs);
        } else if (*run_cmd) {
            const mcot::Image x0 = mcot::read_image(run_image);
            mcot::PipelineConfig cfg = effective_pipeline_config(
                g, run_cmd, run_k, run_steps, run_sf, run_sb, run_sp, run_reason_on_input);
            cfg.planner = run_planner;
            cfg.reasoner = run_reasoner;
            mcot::PlannerClient planner(run_planner);
            planner.set_log(log);
            mcot::ReasonerClient reasoner = mcot::ReasonerClient::from_descriptor(run_reasoner);
            reasoner.set_log(log);
            const auto denoiser = make_denoiser(run_denoiser, x0);
            const mcot::Instruction instr{run_instruction, run_description};
            const mcot::RunRecord rec = mcot::run_edit(planner, reasoner, *denoiser, x0, instr, cfg);
            const fs::path rec_dir = out_dir / ("run-" + rec.address());
            mcot::save_record(rec_dir.string(), rec);
            outputs.add((rec_dir / "record.json").string());
            outputs.add((rec_dir / "final.png").string());
            echo_config(rec_dir, json{{"command", "run"}, {"denoiser", run_denoiser},
                                      {"config", cfg.to_json()}},
                        outputs);
            if (!rec.complete) {
                std::cerr << "run incomplete (" << rec.error_kind << "): " << rec.error_message
                          << "\n";
                outputs.print();
                return rec.error_kind == "backend" ? 2 : 1;
            }
        } else if (*eval_cmd) {
            fs::create_directories(out_dir);
            const mcot::DatasetManifest manifest = mcot::load_manifest(eval_manifest);
            const fs::path manifest_base = fs::path(eval_manifest).parent_path();
            std::vector<mcot::MetricReport> rows;
            for (const auto& entry : manifest.entries) {
                auto resolve = [&](const std::string& p) {
                    return fs::path(p).is_absolute() ? p : (manifest_base / p).string();
                };
                const mcot::Image gt = mcot::read_image(resolve(entry.ground_truth));
                const std::string stem = fs::path(entry.input).stem().string();
                const std::string out_path = (fs::path(eval_outputs) / (stem + "_edited.png")).string();
                if (!fs::exists(out_path)) {
                    throw mcot::ValidationError("eval: missing output " + out_path);
                }
                const mcot::Image out_img = mcot::read_image(out_path);
                mcot::MetricReport row = mcot::metric_report(out_img, gt, entry.global_description,
                                                             entry.local_description);
                row.name = stem;
                rows.push_back(row);
            }
            mcot::write_metric_reports(outputs.add((out_dir / "metrics.json").string()),
                                       outputs.add((out_dir / "metrics.csv").string()), rows);
            for (const auto& row : rows) {
                std::cout << row.name << " total " << mcot::format_double(row.total, 6) << "\n";
            }
            echo_config(out_dir, json{{"command", "eval"}, {"manifest", eval_manifest}}, outputs);
        } else if (*sweep_cmd) {
            fs::create_directories(out_dir);
            mcot::SweepWorld world;
            world.sigma = sweep_sigma;
            const mcot::SweepReport rep =
                mcot::sweep_cfg(world, parse_scales(sweep_scales), sweep_sp, sweep_trials, g.seed);
            {
                std::ofstream out(outputs.add((out_dir / "sweep.json").string()));
                out << mcot::sweep_report_to_json(rep).dump(2) << "\n";
            }
            mcot::write_sweep_svg(outputs.add((out_dir / "sweep.svg").string()), rep);
            std::cout << mcot::sweep_report_to_json(rep).dump() << "\n";
            echo_config(out_dir, json{{"command", "sweep-cfg"}, {"seed", g.seed},
                                      {"scales", sweep_scales}, {"s_p", sweep_sp},
                                      {"trials", sweep_trials}, {"sigma", sweep_sigma}},
                        outputs);
        } else if (*verify_cmd) {
            const auto results = mcot::run_acceptance(&std::cout);
            bool all = true;
            for (const auto& r : results) all = all && r.pass;
            if (!all) return 4;
            return 0;
        }
    } catch (const mcot::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    outputs.print();
    return 0;
}
