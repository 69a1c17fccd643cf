#pragma once

// Embedding-based metric suite: two seeded random-projection image embedders
// (the CLIP-I / DINO-I roles), a hashed text embedder, a shared color-space
// for image-text alignment scoring, and the guidance-scale sweep harness.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "mcot/core.hpp"
#include "mcot/denoiser.hpp"
#include "mcot/sampler.hpp"
#include "mcot/scenes.hpp"

namespace mcot {

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("cosine: dimension mismatch");
    if (a.empty()) throw ValidationError("cosine: empty vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero vector");
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

struct ImageEmbedder {
    std::string tag;
    std::function<std::vector<double>(const Image&)> embed;
};

struct TextEmbedder {
    std::string tag;
    std::function<std::vector<double>(const std::string&)> embed;
};

inline constexpr int kMetricEmbedDim = 64;

namespace detail {

// Mean-pool any image onto a 16x16x3 grid (gray replicated across channels).
inline std::vector<double> pool16(const Image& img) {
    constexpr int N = 16;
    std::vector<double> out(N * N * 3, 0.0);
    for (int by = 0; by < N; ++by) {
        const int y0 = by * img.height / N;
        const int y1 = std::max(y0 + 1, (by + 1) * img.height / N);
        for (int bx = 0; bx < N; ++bx) {
            const int x0 = bx * img.width / N;
            const int x1 = std::max(x0 + 1, (bx + 1) * img.width / N);
            double acc[3] = {0.0, 0.0, 0.0};
            int count = 0;
            for (int y = y0; y < std::min(y1, img.height); ++y) {
                for (int x = x0; x < std::min(x1, img.width); ++x) {
                    for (int c = 0; c < 3; ++c) {
                        acc[c] += img.at(y, x, img.channels == 3 ? c : 0);
                    }
                    ++count;
                }
            }
            for (int c = 0; c < 3; ++c) {
                out[(static_cast<std::size_t>(by) * N + bx) * 3 + static_cast<std::size_t>(c)] =
                    count ? acc[c] / count : 0.0;
            }
        }
    }
    return out;
}

inline void normalize_unit(std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0) {
        for (double& x : v) x /= n;
    }
}

}  // namespace detail

// Seeded random projection of the 16x16 downsample, plus a constant bias
// feature so the output is never the zero vector; unit norm.
inline ImageEmbedder make_randproj_embedder(std::uint64_t seed, const std::string& tag) {
    constexpr int in_dim = 16 * 16 * 3 + 1;
    auto matrix = std::make_shared<std::vector<double>>();
    matrix->resize(static_cast<std::size_t>(kMetricEmbedDim) * in_dim);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& w : *matrix) w = scale * rng.normal();
    return ImageEmbedder{
        tag,
        [matrix](const Image& img) {
            std::vector<double> feat = detail::pool16(img);
            feat.push_back(1.0);
            std::vector<double> out(kMetricEmbedDim, 0.0);
            for (int o = 0; o < kMetricEmbedDim; ++o) {
                const double* row = matrix->data() + static_cast<std::size_t>(o) * feat.size();
                double acc = 0.0;
                for (std::size_t i = 0; i < feat.size(); ++i) acc += row[i] * feat[i];
                out[static_cast<std::size_t>(o)] = acc;
            }
            detail::normalize_unit(out);
            return out;
        },
    };
}

inline TextEmbedder make_hashed_text_embedder(const std::string& tag = "hashed-bot-64") {
    return TextEmbedder{tag, [](const std::string& text) { return hash_text_embedding(text, kMetricEmbedDim); }};
}

// --- joint image/text color space ---------------------------------------------
// Alignment scoring maps prompt target colors and region mean colors into one
// space: [r, g, b, 1, 0, ...] padded to kMetricEmbedDim and normalized. Known color
// words dominate the text side; a perfect recolor scores strictly higher than
// a no-op.

inline std::vector<double> joint_color_vector(double r, double g, double b) {
    std::vector<double> v(kMetricEmbedDim, 0.0);
    v[0] = r;
    v[1] = g;
    v[2] = b;
    v[3] = 1.0;  // bias keeps the vector nonzero for any color
    detail::normalize_unit(v);
    return v;
}

inline std::vector<double> joint_text_embedding(const std::string& text) {
    double acc[3] = {0.0, 0.0, 0.0};
    int hits = 0;
    for (const auto& tok : tokenize_lower(text)) {
        if (auto c = color_from_token(tok)) {
            const auto rgb = color_rgb(*c);
            for (int i = 0; i < 3; ++i) acc[i] += rgb[static_cast<std::size_t>(i)];
            ++hits;
        }
    }
    if (hits == 0) return joint_color_vector(0.5, 0.5, 0.5);
    return joint_color_vector(acc[0] / hits, acc[1] / hits, acc[2] / hits);
}

// Mean color over the region (whole image when absent).
inline std::vector<double> joint_image_embedding(const Image& img, const Mask* region = nullptr) {
    if (region && (region->height != img.height || region->width != img.width)) {
        throw ShapeError("joint_image_embedding: region dimensions differ");
    }
    double acc[3] = {0.0, 0.0, 0.0};
    std::size_t count = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (region && region->at(y, x) == 0.0) continue;
            for (int c = 0; c < 3; ++c) acc[c] += img.at(y, x, img.channels == 3 ? c : 0);
            ++count;
        }
    }
    if (count == 0) return joint_color_vector(0.5, 0.5, 0.5);
    return joint_color_vector(acc[0] / static_cast<double>(count), acc[1] / static_cast<double>(count),
                              acc[2] / static_cast<double>(count));
}

struct Embedders {
    ImageEmbedder image_a = make_randproj_embedder(0xc11a, "randproj-seedA");
    ImageEmbedder image_b = make_randproj_embedder(0xd110, "randproj-seedB");
    TextEmbedder text = make_hashed_text_embedder();
};

inline const Embedders& default_embedders() {
    static const Embedders e;
    return e;
}

struct MetricReport {
    std::string name;
    double clip_i = 0.0;
    double dino_i = 0.0;
    double clip_t_global = 0.0;
    double clip_t_local = 0.0;
    double total = 0.0;  // arithmetic mean of the four scores
};

inline double metric_total(double clip_i, double dino_i, double clip_t_global, double clip_t_local) {
    return (clip_i + dino_i + clip_t_global + clip_t_local) / 4.0;
}

// The local description is scored over `region` when given, else the whole
// image.
inline MetricReport metric_report(const Image& output, const Image& gt, const std::string& global_desc,
                                  const std::string& local_desc,
                                  const Embedders& emb = default_embedders(),
                                  const Mask* region = nullptr) {
    MetricReport r;
    r.clip_i = cosine(emb.image_a.embed(output), emb.image_a.embed(gt));
    r.dino_i = cosine(emb.image_b.embed(output), emb.image_b.embed(gt));
    r.clip_t_global = cosine(joint_image_embedding(output), joint_text_embedding(global_desc));
    r.clip_t_local = cosine(joint_image_embedding(output, region), joint_text_embedding(local_desc));
    r.total = metric_total(r.clip_i, r.dino_i, r.clip_t_global, r.clip_t_local);
    return r;
}

// --- rank correlation -----------------------------------------------------------

// Spearman rank correlation; ties get average ranks. Returns 0 and sets
// *degenerate when either side has zero rank variance.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys,
                       bool* degenerate = nullptr) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    auto ranks = [](const std::vector<double>& v) {
        const std::size_t n = v.size();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0u);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n, 0.0);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(xs);
    const auto ry = ranks(ys);
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    if (degenerate) *degenerate = false;
    return sxy / std::sqrt(sxx * syy);
}

// --- guidance-scale sweep -------------------------------------------------------

// World model for the sweep: data means are derived per trial scene so that
// raising the hint scales pulls the sample toward the input (preservation)
// while a fixed prompt-colored component keeps competing with it (alignment).
//   mu_none = 0, mu_f = kappa * fg-only, mu_fb = kappa * input,
//   mu_fbp  = mu_fb + delta; in-region delta lands the edit exactly at the
//   reference scales, out-of-region delta is a `leak`-sized prompt-color cast.
struct SweepWorld {
    double sigma = 0.1;
    double kappa = 0.45;  // input gain; keeps 2x scale inside [0,1]
    double leak = 0.25;   // prompt-color cast applied outside the region
    int scene_size = 16;
    int ddim_steps = 25;

    void validate() const {
        if (!(sigma > 0.0)) throw ValidationError("SweepWorld: sigma must be > 0");
        if (!(kappa > 0.0) || !(leak >= 0.0)) throw ValidationError("SweepWorld: bad gains");
        if (ddim_steps < 1) throw ValidationError("SweepWorld: ddim_steps must be >= 1");
    }
};

struct SweepPoint {
    double scale = 0.0;
    double preservation = 0.0;  // cosine of background-region embeddings vs input
    double alignment = 0.0;     // color-space agreement of the region with the prompt
};

struct SweepReport {
    std::vector<SweepPoint> points;
    double s_p = 7.5;
    int trials = 0;
    std::uint64_t seed = 0;
    double preservation_rho = 0.0;
    double alignment_rho = 0.0;
    bool degenerate = false;  // correlation undefined (e.g. one repeated scale)
};

inline SweepReport sweep_cfg(const SweepWorld& world, const std::vector<double>& scales, double s_p,
                             int trials, std::uint64_t seed) {
    world.validate();
    if (scales.size() < 3) throw ValidationError("sweep_cfg: need >= 3 scale points");
    if (trials < 50) throw ValidationError("sweep_cfg: need >= 50 trials per point");

    SweepReport report;
    report.s_p = s_p;
    report.trials = trials;
    report.seed = seed;

    struct Trial {
        SyntheticScene scene;
        const EditRequest* request;
        GaussianWorld denoiser;
        Mask bg_region;
    };

    const auto& emb = default_embedders().image_a;

    std::vector<SweepPoint> points;
    for (std::size_t pi = 0; pi < scales.size(); ++pi) {
        SweepPoint pt;
        pt.scale = scales[pi];
        double pres_acc = 0.0, align_acc = 0.0;
        for (int trial = 0; trial < trials; ++trial) {
            // same scene set across scale points: paired comparison
            const std::uint64_t scene_seed = seed * 1000003ull + static_cast<std::uint64_t>(trial);
            const SyntheticScene scene = make_scene(scene_seed, SceneOptions{world.scene_size, 1});
            const EditRequest& req = scene.requests[0];  // recolor request

            const Image& input = scene.image;
            const Mask& region = req.region;
            const auto target_rgb = color_rgb(*req.target_color);

            const Latent zero(input.height, input.width, 3);
            Latent mu_fb = image_to_latent(input);
            for (double& v : mu_fb.data) v *= world.kappa;
            Latent mu_f = image_to_latent(split_foreground(input, region).first);
            for (double& v : mu_f.data) v *= world.kappa;

            Latent mu_fbp = mu_fb;
            for (int y = 0; y < input.height; ++y) {
                for (int x = 0; x < input.width; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        const double tgt = target_rgb[static_cast<std::size_t>(c)];
                        if (region.at(y, x) != 0.0) {
                            // calibrated so scales (1,1,s_p) land the region on the target
                            mu_fbp.at(y, x, c) += (tgt - mu_fb.at(y, x, c)) / s_p;
                        } else {
                            mu_fbp.at(y, x, c) += world.leak * (tgt - 0.5) / s_p;
                        }
                    }
                }
            }
            GaussianWorld den({{CondPattern::None, zero},
                               {CondPattern::F, std::move(mu_f)},
                               {CondPattern::FB, std::move(mu_fb)},
                               {CondPattern::FBP, std::move(mu_fbp)}},
                              world.sigma);

            const SubPrompt sp{1, req.prompt};
            const GuidanceScales gs{pt.scale, pt.scale, s_p};
            const Image out = edit_sample(den, input, region, sp, gs, world.ddim_steps,
                                          scene_seed ^ 0x5eedull);

            const Image out_bg = split_foreground(out, region).second;
            const Image in_bg = split_foreground(input, region).second;
            pres_acc += cosine(emb.embed(out_bg), emb.embed(in_bg));
            align_acc += cosine(joint_image_embedding(out, &region), joint_text_embedding(req.prompt));
        }
        pt.preservation = pres_acc / trials;
        pt.alignment = align_acc / trials;
        points.push_back(pt);
    }
    report.points = std::move(points);

    std::vector<double> xs, pres, align;
    for (const auto& p : report.points) {
        xs.push_back(p.scale);
        pres.push_back(p.preservation);
        align.push_back(p.alignment);
    }
    bool deg_p = false, deg_a = false;
    report.preservation_rho = spearman(xs, pres, &deg_p);
    report.alignment_rho = spearman(xs, align, &deg_a);
    report.degenerate = deg_p || deg_a;
    return report;
}

// --- dataset manifest -----------------------------------------------------------

struct ManifestEntry {
    std::string input;
    std::string instruction;
    std::string ground_truth;
    std::string global_description;
    std::string local_description;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
};

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("load_manifest: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("load_manifest: ") + e.what());
    }
    if (!j.is_array()) throw SchemaError("load_manifest: expected a JSON array");
    DatasetManifest m;
    std::string missing;
    const auto base = std::filesystem::path(path).parent_path();
    for (const auto& e : j) {
        ManifestEntry entry;
        entry.input = e.at("input").get<std::string>();
        entry.instruction = e.at("instruction").get<std::string>();
        entry.ground_truth = e.at("ground_truth").get<std::string>();
        entry.global_description = e.value("global_description", std::string());
        entry.local_description = e.value("local_description", std::string());
        for (const std::string* p : {&entry.input, &entry.ground_truth}) {
            const auto resolved = std::filesystem::path(*p).is_absolute() ? *p : (base / *p).string();
            if (!std::filesystem::exists(resolved)) missing += "\n  " + *p;
        }
        m.entries.push_back(std::move(entry));
    }
    if (!missing.empty()) throw ValidationError("load_manifest: missing files:" + missing);
    return m;
}

// --- report writers -------------------------------------------------------------

inline json metric_report_to_json(const MetricReport& r) {
    return json{{"name", r.name},          {"clip_i", r.clip_i},
                {"dino_i", r.dino_i},      {"clip_t_global", r.clip_t_global},
                {"clip_t_local", r.clip_t_local}, {"total", r.total}};
}

inline void write_metric_reports(const std::string& json_path, const std::string& csv_path,
                                 const std::vector<MetricReport>& rows) {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(metric_report_to_json(r));
    std::ofstream out(json_path);
    if (!out) throw ValidationError("write_metric_reports: cannot open " + json_path);
    out << arr.dump(2) << "\n";

    std::ofstream csv(csv_path);
    if (!csv) throw ValidationError("write_metric_reports: cannot open " + csv_path);
    csv << "name,clip_i,dino_i,clip_t_global,clip_t_local,total\n";
    for (const auto& r : rows) {
        csv << r.name << "," << format_double(r.clip_i) << "," << format_double(r.dino_i) << ","
            << format_double(r.clip_t_global) << "," << format_double(r.clip_t_local) << ","
            << format_double(r.total) << "\n";
    }
}

inline json sweep_report_to_json(const SweepReport& r) {
    json pts = json::array();
    for (const auto& p : r.points) {
        pts.push_back(json{{"scale", p.scale}, {"preservation", p.preservation}, {"alignment", p.alignment}});
    }
    return json{{"points", pts},
                {"s_p", r.s_p},
                {"trials", r.trials},
                {"seed", r.seed},
                {"preservation_rho", r.preservation_rho},
                {"alignment_rho", r.alignment_rho},
                {"degenerate", r.degenerate}};
}

// Minimal SVG line chart: scale on x, both curves normalized to their own
// [min,max] band so trends are visible on one canvas.
inline void write_sweep_svg(const std::string& path, const SweepReport& r) {
    if (r.points.empty()) throw ValidationError("write_sweep_svg: empty report");
    const double W = 560, H = 360, ml = 60, mr = 20, mt = 24, mb = 48;
    auto minmax = [](const std::vector<double>& v) {
        auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        double a = *lo, b = *hi;
        if (a == b) {
            a -= 0.5;
            b += 0.5;
        }
        return std::pair<double, double>(a, b);
    };
    std::vector<double> xs, pres, align;
    for (const auto& p : r.points) {
        xs.push_back(p.scale);
        pres.push_back(p.preservation);
        align.push_back(p.alignment);
    }
    const auto [x0, x1] = minmax(xs);
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double y, double lo, double hi) {
        return H - mb - (y - lo) / (hi - lo) * (H - mt - mb);
    };
    auto polyline = [&](const std::vector<double>& ys, const char* color) {
        const auto [lo, hi] = minmax(ys);
        std::string pts;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            pts += format_double(px(xs[i]), 6) + "," + format_double(py(ys[i], lo, hi), 6) + " ";
        }
        return "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    };
    std::ofstream out(path);
    if (!out) throw ValidationError("write_sweep_svg: cannot open " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
        << "\" stroke=\"black\"/>\n";
    for (double x : xs) {
        out << "<text x=\"" << format_double(px(x), 6) << "\" y=\"" << H - mb + 18
            << "\" font-size=\"11\" text-anchor=\"middle\">" << format_double(x, 4) << "</text>\n";
    }
    out << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
        << "\" font-size=\"12\" text-anchor=\"middle\">hint guidance scale (s_f = s_b)</text>\n";
    out << polyline(pres, "#1f77b4");
    out << polyline(align, "#d62728");
    out << "<text x=\"" << W - mr - 8 << "\" y=\"" << mt + 12
        << "\" font-size=\"12\" text-anchor=\"end\" fill=\"#1f77b4\">preservation</text>\n";
    out << "<text x=\"" << W - mr - 8 << "\" y=\"" << mt + 28
        << "\" font-size=\"12\" text-anchor=\"end\" fill=\"#d62728\">alignment</text>\n";
    out << "</svg>\n";
}

}  // namespace mcot
