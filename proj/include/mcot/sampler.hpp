#pragma once

// Hint-guided editing: split the working image into foreground/background by
// the reasoned mask, encode both as spatial conditions, then run seeded DDIM
// from Gaussian noise evaluating the denoiser on all four guidance branches
// per step.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mcot/core.hpp"
#include "mcot/denoiser.hpp"
#include "mcot/diffusion.hpp"
#include "mcot/plan.hpp"
#include "mcot/scenes.hpp"

namespace mcot {

struct LatentCodec {
    std::string name;
    std::function<Latent(const Image&)> encode;
    std::function<Image(const Latent&)> decode;

    // decode(encode(x)) == x; the codec used by every exactness test.
    static const LatentCodec& identity() {
        static const LatentCodec c{
            "identity",
            [](const Image& img) { return image_to_latent(img); },
            [](const Latent& z) { return latent_to_image_clamped(z); },
        };
        return c;
    }

    // 2x2 average-pool encode with nearest-neighbor decode. Lossy; kept out
    // of exactness tests.
    static const LatentCodec& avgpool2() {
        static const LatentCodec c{
            "avgpool2",
            [](const Image& img) {
                if (img.height % 2 != 0 || img.width % 2 != 0) {
                    throw ShapeError("avgpool2: even dimensions required");
                }
                Latent z(img.height / 2, img.width / 2, img.channels);
                for (int y = 0; y < z.height; ++y) {
                    for (int x = 0; x < z.width; ++x) {
                        for (int ch = 0; ch < z.channels; ++ch) {
                            z.at(y, x, ch) = 0.25 * (img.at(2 * y, 2 * x, ch) + img.at(2 * y, 2 * x + 1, ch) +
                                                     img.at(2 * y + 1, 2 * x, ch) +
                                                     img.at(2 * y + 1, 2 * x + 1, ch));
                        }
                    }
                }
                return z;
            },
            [](const Latent& z) {
                Image img(z.height * 2, z.width * 2, z.channels);
                for (int y = 0; y < img.height; ++y) {
                    for (int x = 0; x < img.width; ++x) {
                        for (int ch = 0; ch < img.channels; ++ch) {
                            img.at(y, x, ch) = std::clamp(z.at(y / 2, x / 2, ch), 0.0, 1.0);
                        }
                    }
                }
                return img;
            },
        };
        return c;
    }
};

using TextEmbedderFn = std::function<std::vector<double>(const std::string&)>;

inline TextEmbedderFn default_text_embedder(int dims = 8) {
    return [dims](const std::string& text) { return hash_text_embedding(text, dims); };
}

inline Latent gaussian_latent(int h, int w, int c, Rng& rng) {
    Latent z(h, w, c);
    for (double& v : z.data) v = rng.normal();
    return z;
}

// One hint-guided edit y -> y'.
inline Image edit_sample(const Denoiser& denoiser, const Image& y, const Mask& m, const SubPrompt& p,
                         const GuidanceScales& scales, int steps, std::uint64_t seed,
                         const LatentCodec& codec = LatentCodec::identity(),
                         const TextEmbedderFn& text_embedder = default_text_embedder(),
                         const DiffusionSchedule& sched = default_schedule()) {
    if (steps < 1) throw ValidationError("edit_sample: steps must be >= 1");
    scales.validate();
    auto [x_f, x_b] = split_foreground(y, m);

    ConditionSet full;
    full.fg_latent = codec.encode(x_f);
    full.bg_latent = codec.encode(x_b);
    full.text_embedding = text_embedder(p.text);
    const ConditionSet cond_none = full.restricted(CondPattern::None);
    const ConditionSet cond_f = full.restricted(CondPattern::F);
    const ConditionSet cond_fb = full.restricted(CondPattern::FB);

    Rng rng(seed);
    Latent z = gaussian_latent(full.fg_latent->height, full.fg_latent->width,
                               full.fg_latent->channels, rng);

    const std::vector<int> ts = ddim_timesteps(sched.T, steps);
    for (std::size_t j = 0; j + 1 < ts.size(); ++j) {
        const int t = ts[j];
        const int t_prev = ts[j + 1];
        const Latent eps_u = denoiser.evaluate(z, t, cond_none);
        const Latent eps_f = denoiser.evaluate(z, t, cond_f);
        const Latent eps_fb = denoiser.evaluate(z, t, cond_fb);
        const Latent eps_full = denoiser.evaluate(z, t, full);
        const Latent eps_hat = cfg_combine(eps_u, eps_f, eps_fb, eps_full, scales);
        z = ddim_step(z, eps_hat, t, t_prev, sched);
    }
    return codec.decode(z);
}

// --- denoiser training over synthetic edit pairs -------------------------------

struct EditPairExample {
    Image input;
    Mask mask;
    std::string prompt;
    Image target;
};

// (input, mask, prompt, exact edited target) per scene request.
inline std::vector<EditPairExample> edit_pairs_from_scenes(const std::vector<SyntheticScene>& scenes) {
    std::vector<EditPairExample> out;
    for (const auto& sc : scenes) {
        for (const auto& req : sc.requests) {
            out.push_back(EditPairExample{sc.image, req.region, req.prompt,
                                          apply_request_exactly(sc, req)});
        }
    }
    return out;
}

// Per-example plain gradient descent on the epsilon-prediction loss; the
// condition dropout bands are sampled once per visit.
inline TinyDenoiser train_tiny_denoiser(const std::vector<EditPairExample>& examples, int epochs,
                                        double lr, std::uint64_t seed,
                                        const DropoutPolicy& policy = {},
                                        const DiffusionSchedule& sched = default_schedule(),
                                        const LatentCodec& codec = LatentCodec::identity(),
                                        const TextEmbedderFn& text_embedder = default_text_embedder(),
                                        std::ostream* progress = nullptr) {
    if (examples.empty()) throw ValidationError("train_tiny_denoiser: empty dataset");
    if (!(lr > 0.0)) throw ValidationError("train_tiny_denoiser: lr must be > 0");
    if (epochs < 1) throw ValidationError("train_tiny_denoiser: epochs must be >= 1");
    policy.validate();

    TinyDenoiser model = TinyDenoiser::init(seed);
    Rng rng(seed ^ 0x7a11ull);
    std::vector<double> grad;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const auto& ex : examples) {
            auto [x_f, x_b] = split_foreground(ex.input, ex.mask);
            ConditionSet full;
            full.fg_latent = codec.encode(x_f);
            full.bg_latent = codec.encode(x_b);
            full.text_embedding = text_embedder(ex.prompt);
            const ConditionSet cond = full.restricted(sample_dropout(policy, rng.uniform()));

            const Latent z0 = codec.encode(ex.target);
            const int t = rng.uniform_int(1, sched.T);
            const Latent eps = gaussian_latent(z0.height, z0.width, z0.channels, rng);
            epoch_loss += training_loss(model, z0, cond, t, eps, sched, &grad);
            for (std::size_t i = 0; i < model.params.size(); ++i) model.params[i] -= lr * grad[i];
        }
        if (!std::isfinite(epoch_loss)) throw TrainingError("train_tiny_denoiser: loss diverged");
        if (progress) {
            *progress << "{\"event\":\"epoch\",\"model\":\"denoiser\",\"epoch\":" << epoch + 1
                      << ",\"mean_loss\":"
                      << format_double(epoch_loss / static_cast<double>(examples.size())) << "}\n";
        }
    }
    return model;
}

}  // namespace mcot
