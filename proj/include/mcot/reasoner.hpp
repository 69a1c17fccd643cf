#pragma once

// Toy editing-region reasoner: a two-layer conv net over the image plus a
// broadcast keyword embedding, trained with per-pixel binary cross-entropy.
// Stands in for the MLLM+SAM stack behind the same contract.
//
// conv1 is 3x3; conv2 is 3x3 with dilation 2, so the receptive field (7x7)
// covers an add-beside region adjacent to a 3px shape. The embedding table is
// frozen after seeded init, mirroring a frozen prompt encoder.

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mcot/core.hpp"
#include "mcot/scenes.hpp"
#include "mcot/weights_io.hpp"

namespace mcot {

namespace reasoner_dims {
inline constexpr int kEmbedDim = 8;
inline constexpr int kImageChannels = 3;
inline constexpr int kInChannels = kImageChannels + kEmbedDim;  // 11
inline constexpr int kHidden = 8;
inline constexpr int kKernel = 3;
inline constexpr int kDilation2 = 2;
inline constexpr int kW1 = kHidden * kInChannels * kKernel * kKernel;  // 792
inline constexpr int kB1 = kHidden;
inline constexpr int kW2 = kHidden * kKernel * kKernel;  // 72
inline constexpr int kB2 = 1;
inline constexpr int kParamCount = kW1 + kB1 + kW2 + kB2;  // 873
}  // namespace reasoner_dims

struct ToyReasonerModel {
    // [w1 | b1 | w2 | b2] flat; w1[h][in][ky][kx], w2[h][ky][kx]
    std::vector<double> params;
    std::map<std::string, std::array<double, reasoner_dims::kEmbedDim>> embeddings;
    std::uint64_t seed = 0;

    static const std::vector<std::string>& vocabulary() {
        static const std::vector<std::string> v = {"recolor", "remove", "add",
                                                   "square",  "circle", "triangle"};
        return v;
    }

    static ToyReasonerModel init(std::uint64_t seed) {
        using namespace reasoner_dims;
        ToyReasonerModel m;
        m.seed = seed;
        m.params.assign(kParamCount, 0.0);
        Rng rng(seed ^ 0x7ea50ecull);
        const double s1 = std::sqrt(1.0 / (kInChannels * kKernel * kKernel));
        for (int i = 0; i < kW1; ++i) m.params[static_cast<std::size_t>(i)] = s1 * rng.normal();
        const double s2 = std::sqrt(1.0 / (kHidden * kKernel * kKernel));
        for (int i = 0; i < kW2; ++i) {
            m.params[static_cast<std::size_t>(kW1 + kB1 + i)] = s2 * rng.normal();
        }
        // frozen keyword embeddings, unit-scale gaussian entries
        Rng erng(seed ^ 0xe3bedull);
        for (const auto& tok : vocabulary()) {
            std::array<double, kEmbedDim> e{};
            for (double& v : e) v = erng.normal();
            m.embeddings[tok] = e;
        }
        return m;
    }

    static ToyReasonerModel zeros(std::uint64_t seed = 0) {
        ToyReasonerModel m = init(seed);
        std::fill(m.params.begin(), m.params.end(), 0.0);
        return m;
    }
};

namespace detail {

// Condition vector: emb[action] + emb[anchor kind]. Throws VocabularyError
// for prompts outside the closed grammar.
inline std::array<double, reasoner_dims::kEmbedDim> reasoner_condition(const ToyReasonerModel& m,
                                                                       const std::string& prompt) {
    const ParsedPrompt p = parse_scene_prompt(prompt);
    const char* action = p.action == EditAction::Recolor   ? "recolor"
                         : p.action == EditAction::Remove ? "remove"
                                                          : "add";
    const auto ita = m.embeddings.find(action);
    const auto itk = m.embeddings.find(to_string(p.anchor));
    if (ita == m.embeddings.end() || itk == m.embeddings.end()) {
        throw VocabularyError("reasoner: keyword missing from embedding table");
    }
    std::array<double, reasoner_dims::kEmbedDim> e{};
    for (int i = 0; i < reasoner_dims::kEmbedDim; ++i) {
        e[static_cast<std::size_t>(i)] = ita->second[static_cast<std::size_t>(i)] +
                                         itk->second[static_cast<std::size_t>(i)];
    }
    return e;
}

struct ReasonerActivations {
    int h = 0, w = 0;
    std::vector<double> input;   // [in][h][w]
    std::vector<double> hidden;  // [hid][h][w], post-tanh
    std::vector<double> logits;  // [h][w]
};

inline void reasoner_forward(const ToyReasonerModel& m, const Image& img,
                             const std::array<double, reasoner_dims::kEmbedDim>& cond,
                             ReasonerActivations& act) {
    using namespace reasoner_dims;
    if (img.channels != kImageChannels) throw ShapeError("reasoner: expected 3-channel image");
    const int H = img.height, W = img.width;
    act.h = H;
    act.w = W;
    act.input.assign(static_cast<std::size_t>(kInChannels) * H * W, 0.0);
    act.hidden.assign(static_cast<std::size_t>(kHidden) * H * W, 0.0);
    act.logits.assign(static_cast<std::size_t>(H) * W, 0.0);

    auto in_at = [&](int c, int y, int x) -> double& {
        return act.input[(static_cast<std::size_t>(c) * H + y) * W + x];
    };
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < kImageChannels; ++c) in_at(c, y, x) = img.at(y, x, c);
            for (int c = 0; c < kEmbedDim; ++c) {
                in_at(kImageChannels + c, y, x) = cond[static_cast<std::size_t>(c)];
            }
        }
    }

    const double* w1 = m.params.data();
    const double* b1 = w1 + kW1;
    const double* w2 = b1 + kB1;
    const double b2 = m.params[static_cast<std::size_t>(kParamCount - 1)];

    // conv1, zero padding 1, tanh
    for (int o = 0; o < kHidden; ++o) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double acc = b1[o];
                for (int c = 0; c < kInChannels; ++c) {
                    const double* wk = w1 + ((o * kInChannels + c) * kKernel) * kKernel;
                    for (int ky = 0; ky < kKernel; ++ky) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= H) continue;
                        for (int kx = 0; kx < kKernel; ++kx) {
                            const int sx = x + kx - 1;
                            if (sx < 0 || sx >= W) continue;
                            acc += wk[ky * kKernel + kx] * act.input[(static_cast<std::size_t>(c) * H + sy) * W + sx];
                        }
                    }
                }
                act.hidden[(static_cast<std::size_t>(o) * H + y) * W + x] = std::tanh(acc);
            }
        }
    }

    // conv2, dilation 2, zero padding 2, linear logits
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double acc = b2;
            for (int c = 0; c < kHidden; ++c) {
                const double* wk = w2 + (c * kKernel) * kKernel;
                for (int ky = 0; ky < kKernel; ++ky) {
                    const int sy = y + (ky - 1) * kDilation2;
                    if (sy < 0 || sy >= H) continue;
                    for (int kx = 0; kx < kKernel; ++kx) {
                        const int sx = x + (kx - 1) * kDilation2;
                        if (sx < 0 || sx >= W) continue;
                        acc += wk[ky * kKernel + kx] * act.hidden[(static_cast<std::size_t>(c) * H + sy) * W + sx];
                    }
                }
            }
            act.logits[static_cast<std::size_t>(y) * W + x] = acc;
        }
    }
}

}  // namespace detail

// Sigmoid soft mask for a sub-prompt against an image.
inline SoftMask predict_region(const ToyReasonerModel& m, const Image& img,
                               const std::string& sub_prompt_text) {
    detail::ReasonerActivations act;
    detail::reasoner_forward(m, img, detail::reasoner_condition(m, sub_prompt_text), act);
    SoftMask soft(img.height, img.width);
    for (std::size_t i = 0; i < act.logits.size(); ++i) {
        soft.data[i] = 1.0 / (1.0 + std::exp(-act.logits[i]));
    }
    return soft;
}

struct ReasonerExample {
    Image image;
    std::string prompt;
    Mask target;
};

// Mean per-pixel BCE (computed from logits for stability) and its gradient
// with respect to every conv parameter, in the flat [w1|b1|w2|b2] layout.
inline double reasoner_loss_and_grad(const ToyReasonerModel& m, const ReasonerExample& ex,
                                     std::vector<double>* grad_out) {
    using namespace reasoner_dims;
    if (ex.image.height != ex.target.height || ex.image.width != ex.target.width) {
        throw ShapeError("reasoner_loss_and_grad: image/target dimensions differ");
    }
    detail::ReasonerActivations act;
    detail::reasoner_forward(m, ex.image, detail::reasoner_condition(m, ex.prompt), act);
    const int H = act.h, W = act.w;
    const double inv_n = 1.0 / (static_cast<double>(H) * W);

    double loss = 0.0;
    std::vector<double> dlogits(static_cast<std::size_t>(H) * W, 0.0);
    for (int i = 0; i < H * W; ++i) {
        const double l = act.logits[static_cast<std::size_t>(i)];
        const double y = ex.target.data[static_cast<std::size_t>(i)];
        // softplus(l) - y*l, evaluated stably
        loss += (std::max(l, 0.0) + std::log1p(std::exp(-std::abs(l))) - y * l) * inv_n;
        const double p = 1.0 / (1.0 + std::exp(-l));
        dlogits[static_cast<std::size_t>(i)] = (p - y) * inv_n;
    }
    if (!std::isfinite(loss)) throw TrainingError("reasoner: non-finite loss");
    if (!grad_out) return loss;

    grad_out->assign(kParamCount, 0.0);
    double* gw1 = grad_out->data();
    double* gb1 = gw1 + kW1;
    double* gw2 = gb1 + kB1;
    double* gb2 = gw2 + kW2;
    const double* w1 = m.params.data();
    const double* w2 = w1 + kW1 + kB1;

    std::vector<double> dhidden(static_cast<std::size_t>(kHidden) * H * W, 0.0);

    // conv2 backward (dilation 2)
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double dl = dlogits[static_cast<std::size_t>(y) * W + x];
            if (dl == 0.0) continue;
            *gb2 += dl;
            for (int c = 0; c < kHidden; ++c) {
                for (int ky = 0; ky < kKernel; ++ky) {
                    const int sy = y + (ky - 1) * kDilation2;
                    if (sy < 0 || sy >= H) continue;
                    for (int kx = 0; kx < kKernel; ++kx) {
                        const int sx = x + (kx - 1) * kDilation2;
                        if (sx < 0 || sx >= W) continue;
                        const std::size_t hidx = (static_cast<std::size_t>(c) * H + sy) * W + sx;
                        gw2[(c * kKernel + ky) * kKernel + kx] += dl * act.hidden[hidx];
                        dhidden[hidx] += dl * w2[(c * kKernel + ky) * kKernel + kx];
                    }
                }
            }
        }
    }

    // tanh'
    for (std::size_t i = 0; i < dhidden.size(); ++i) {
        const double t = act.hidden[i];
        dhidden[i] *= (1.0 - t * t);
    }

    // conv1 backward
    for (int o = 0; o < kHidden; ++o) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const double dh = dhidden[(static_cast<std::size_t>(o) * H + y) * W + x];
                if (dh == 0.0) continue;
                gb1[o] += dh;
                for (int c = 0; c < kInChannels; ++c) {
                    for (int ky = 0; ky < kKernel; ++ky) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= H) continue;
                        for (int kx = 0; kx < kKernel; ++kx) {
                            const int sx = x + kx - 1;
                            if (sx < 0 || sx >= W) continue;
                            gw1[((o * kInChannels + c) * kKernel + ky) * kKernel + kx] +=
                                dh * act.input[(static_cast<std::size_t>(c) * H + sy) * W + sx];
                        }
                    }
                }
            }
        }
    }
    return loss;
}

// One training example per scene, rotating through the request list so all
// three actions are covered evenly.
inline std::vector<ReasonerExample> reasoner_examples_from_scenes(
    const std::vector<SyntheticScene>& scenes) {
    std::vector<ReasonerExample> out;
    out.reserve(scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& sc = scenes[i];
        if (sc.requests.empty()) throw ValidationError("reasoner: scene has no requests");
        const auto& req = sc.requests[i % sc.requests.size()];
        out.push_back(ReasonerExample{sc.image, req.prompt, req.region});
    }
    return out;
}

// Plain per-example gradient descent in a fixed order; deterministic given
// the seed. Returns the trained model; final mean BCE is available via
// reasoner_dataset_loss.
inline ToyReasonerModel train_toy_reasoner(const std::vector<SyntheticScene>& scenes, int epochs,
                                           double lr, std::uint64_t seed,
                                           std::ostream* progress = nullptr) {
    if (scenes.empty()) throw ValidationError("train_toy_reasoner: empty dataset");
    if (scenes.size() < 32) throw ValidationError("train_toy_reasoner: need >= 32 scenes");
    if (!(lr > 0.0)) throw ValidationError("train_toy_reasoner: lr must be > 0");
    if (epochs < 1) throw ValidationError("train_toy_reasoner: epochs must be >= 1");

    const auto examples = reasoner_examples_from_scenes(scenes);
    ToyReasonerModel model = ToyReasonerModel::init(seed);
    std::vector<double> grad;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const auto& ex : examples) {
            const double loss = reasoner_loss_and_grad(model, ex, &grad);
            epoch_loss += loss;
            for (std::size_t i = 0; i < model.params.size(); ++i) model.params[i] -= lr * grad[i];
        }
        if (progress) {
            *progress << "{\"event\":\"epoch\",\"model\":\"reasoner\",\"epoch\":" << epoch + 1
                      << ",\"mean_bce\":" << format_double(epoch_loss / static_cast<double>(examples.size()))
                      << "}\n";
        }
        if (!std::isfinite(epoch_loss)) throw TrainingError("train_toy_reasoner: loss diverged");
    }
    return model;
}

inline double reasoner_dataset_loss(const ToyReasonerModel& m,
                                    const std::vector<ReasonerExample>& examples) {
    if (examples.empty()) throw ValidationError("reasoner_dataset_loss: empty dataset");
    double total = 0.0;
    for (const auto& ex : examples) total += reasoner_loss_and_grad(m, ex, nullptr);
    return total / static_cast<double>(examples.size());
}

// --- persistence ("toy:<model-path>") ---------------------------------------

inline void save_reasoner(const std::string& path, const ToyReasonerModel& m) {
    nlohmann::json header;
    header["kind"] = "toy_reasoner_v1";
    header["seed"] = m.seed;
    header["layers"] = {{"conv1", {reasoner_dims::kHidden, reasoner_dims::kInChannels, 3, 3}},
                        {"conv2", {1, reasoner_dims::kHidden, 3, 3}}};
    nlohmann::json emb = nlohmann::json::object();
    for (const auto& [tok, vec] : m.embeddings) emb[tok] = vec;
    header["embeddings"] = emb;
    write_weights(path, header, m.params);
}

inline ToyReasonerModel load_reasoner(const std::string& path) {
    auto [header, values] = read_weights(path);
    if (!header.contains("kind") || header["kind"] != "toy_reasoner_v1") {
        throw ParseError("load_reasoner: not a toy_reasoner_v1 file");
    }
    if (values.size() != reasoner_dims::kParamCount) {
        throw ParseError("load_reasoner: parameter count mismatch");
    }
    ToyReasonerModel m;
    m.seed = header.value("seed", 0ull);
    m.params = std::move(values);
    for (const auto& [tok, vec] : header.at("embeddings").items()) {
        std::array<double, reasoner_dims::kEmbedDim> e{};
        if (!vec.is_array() || vec.size() != e.size()) throw ParseError("load_reasoner: bad embedding");
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = vec[i].get<double>();
        m.embeddings[tok] = e;
    }
    return m;
}

}  // namespace mcot
