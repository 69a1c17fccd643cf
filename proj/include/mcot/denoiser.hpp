#pragma once

// Denoiser contract plus the two implementations used throughout:
//  - TinyDenoiser: a three-conv epsilon-prediction net whose first layer
//    ingests [z_t | fg latent | bg latent] concatenated with broadcast time
//    and text embedding channels. Absent conditions are zero tensors.
//  - GaussianWorld: Bayes-optimal epsilon for data ~ N(mu(cond), sigma^2 I),
//    the closed-form oracle the samplers and guidance algebra are verified
//    against.

#include <nlohmann/json.hpp>

#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mcot/core.hpp"
#include "mcot/diffusion.hpp"
#include "mcot/weights_io.hpp"

namespace mcot {

struct Denoiser {
    virtual ~Denoiser() = default;
    // epsilon prediction; output shape equals z_t, deterministic given inputs.
    virtual Latent evaluate(const Latent& z_t, int t, const ConditionSet& cond) const = 0;
};

// Deterministic 8-dim sinusoidal step embedding, broadcast as channels.
inline std::vector<double> time_embedding(int t, int dims = 8) {
    if (dims % 2 != 0) throw ValidationError("time_embedding: dims must be even");
    std::vector<double> e(static_cast<std::size_t>(dims));
    const int half = dims / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        e[static_cast<std::size_t>(i)] = std::sin(t * freq);
        e[static_cast<std::size_t>(half + i)] = std::cos(t * freq);
    }
    return e;
}

// Hashed bag-of-tokens embedding; position-salted so token order matters.
// Unit norm unless the text has no tokens.
inline std::vector<double> hash_text_embedding(const std::string& text, int dims,
                                               std::uint64_t salt = 0) {
    if (dims < 1) throw ValidationError("hash_text_embedding: dims must be >= 1");
    std::vector<double> e(static_cast<std::size_t>(dims), 0.0);
    std::string token;
    int position = 0;
    auto flush = [&] {
        if (token.empty()) return;
        std::uint64_t h = fnv1a64(token, 0xcbf29ce484222325ull ^ salt);
        h = fnv1a64(&position, sizeof position, h);
        e[static_cast<std::size_t>(h % static_cast<std::uint64_t>(dims))] +=
            ((h >> 32) & 1) ? 1.0 : -1.0;
        token.clear();
        ++position;
    };
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else {
            flush();
        }
    }
    flush();
    double norm = 0.0;
    for (double v : e) norm += v * v;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& v : e) v /= norm;
    }
    return e;
}

// --- TinyDenoiser --------------------------------------------------------------

struct TinyDenoiserConfig {
    int latent_channels = 3;
    int hidden = 16;
    int time_dims = 8;
    int text_dims = 8;

    int in_channels() const { return 3 * latent_channels + time_dims + text_dims; }

    friend bool operator==(const TinyDenoiserConfig&, const TinyDenoiserConfig&) = default;
};

class TinyDenoiser final : public Denoiser {
public:
    TinyDenoiserConfig config;
    std::vector<double> params;  // [w1|b1|w2|b2|w3|b3]
    std::uint64_t seed = 0;

    static TinyDenoiser init(std::uint64_t seed, const TinyDenoiserConfig& cfg = {}) {
        TinyDenoiser d;
        d.config = cfg;
        d.seed = seed;
        d.params.assign(static_cast<std::size_t>(d.param_count()), 0.0);
        Rng rng(seed ^ 0xd0e15ull);
        auto fill = [&](std::size_t off, std::size_t n, double scale) {
            for (std::size_t i = 0; i < n; ++i) d.params[off + i] = scale * rng.normal();
        };
        const auto [w1, b1, w2, b2, w3, b3] = d.layout();
        fill(w1.first, w1.second, std::sqrt(1.0 / (cfg.in_channels() * 9)));
        fill(w2.first, w2.second, std::sqrt(1.0 / (cfg.hidden * 9)));
        fill(w3.first, w3.second, std::sqrt(1.0 / (cfg.hidden * 9)));
        (void)b1;
        (void)b2;
        (void)b3;
        return d;
    }

    int param_count() const {
        const int ic = config.in_channels(), h = config.hidden, c = config.latent_channels;
        return h * ic * 9 + h + h * h * 9 + h + c * h * 9 + c;
    }

    // offsets and sizes of [w1,b1,w2,b2,w3,b3] in the flat parameter vector
    std::array<std::pair<std::size_t, std::size_t>, 6> layout() const {
        const std::size_t ic = static_cast<std::size_t>(config.in_channels());
        const std::size_t h = static_cast<std::size_t>(config.hidden);
        const std::size_t c = static_cast<std::size_t>(config.latent_channels);
        std::array<std::pair<std::size_t, std::size_t>, 6> out{};
        std::size_t off = 0;
        auto put = [&](std::size_t idx, std::size_t n) {
            out[idx] = {off, n};
            off += n;
        };
        put(0, h * ic * 9);
        put(1, h);
        put(2, h * h * 9);
        put(3, h);
        put(4, c * h * 9);
        put(5, c);
        return out;
    }

    Latent evaluate(const Latent& z_t, int t, const ConditionSet& cond) const override {
        Activations act;
        forward(z_t, t, cond, act);
        Latent out(z_t.height, z_t.width, z_t.channels);
        out.data = act.output;
        return out;
    }

    struct Activations {
        int h = 0, w = 0;
        std::vector<double> input;   // [in][h][w]
        std::vector<double> h1;      // [hid][h][w] post-tanh
        std::vector<double> h2;      // [hid][h][w] post-tanh
        std::vector<double> output;  // [h][w][c] channel-last to match Latent
    };

    void forward(const Latent& z_t, int t, const ConditionSet& cond, Activations& act) const {
        const int C = config.latent_channels;
        if (z_t.channels != C) throw ShapeError("TinyDenoiser: latent channel mismatch");
        const CondPattern pat = cond.pattern();  // validates nesting
        const int H = z_t.height, W = z_t.width;
        const int IC = config.in_channels();
        const int HID = config.hidden;
        act.h = H;
        act.w = W;
        act.input.assign(static_cast<std::size_t>(IC) * H * W, 0.0);
        act.h1.assign(static_cast<std::size_t>(HID) * H * W, 0.0);
        act.h2.assign(static_cast<std::size_t>(HID) * H * W, 0.0);
        act.output.assign(static_cast<std::size_t>(C) * H * W, 0.0);

        auto plane = [&](int c) { return act.input.data() + static_cast<std::size_t>(c) * H * W; };
        for (int c = 0; c < C; ++c) {
            double* dst = plane(c);
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) dst[y * W + x] = z_t.at(y, x, c);
            }
        }
        auto copy_latent = [&](const Latent& src, int base) {
            if (!src.same_shape(z_t)) throw ShapeError("TinyDenoiser: condition latent shape mismatch");
            for (int c = 0; c < C; ++c) {
                double* dst = plane(base + c);
                for (int y = 0; y < H; ++y) {
                    for (int x = 0; x < W; ++x) dst[y * W + x] = src.at(y, x, c);
                }
            }
        };
        if (pat != CondPattern::None) copy_latent(*cond.fg_latent, C);
        if (pat == CondPattern::FB || pat == CondPattern::FBP) copy_latent(*cond.bg_latent, 2 * C);

        const auto te = time_embedding(t, config.time_dims);
        for (int i = 0; i < config.time_dims; ++i) {
            double* dst = plane(3 * C + i);
            std::fill(dst, dst + static_cast<std::size_t>(H) * W, te[static_cast<std::size_t>(i)]);
        }
        if (pat == CondPattern::FBP) {
            const auto& txt = *cond.text_embedding;
            if (static_cast<int>(txt.size()) != config.text_dims) {
                throw ShapeError("TinyDenoiser: text embedding dimension mismatch");
            }
            for (int i = 0; i < config.text_dims; ++i) {
                double* dst = plane(3 * C + config.time_dims + i);
                std::fill(dst, dst + static_cast<std::size_t>(H) * W, txt[static_cast<std::size_t>(i)]);
            }
        }

        const auto L = layout();
        const double* w1 = params.data() + L[0].first;
        const double* b1 = params.data() + L[1].first;
        const double* w2 = params.data() + L[2].first;
        const double* b2 = params.data() + L[3].first;
        const double* w3 = params.data() + L[4].first;
        const double* b3 = params.data() + L[5].first;

        conv3x3(act.input.data(), IC, H, W, w1, b1, HID, act.h1.data(), true);
        conv3x3(act.h1.data(), HID, H, W, w2, b2, HID, act.h2.data(), true);
        // output conv writes channel-last
        std::vector<double> out_planes(static_cast<std::size_t>(C) * H * W, 0.0);
        conv3x3(act.h2.data(), HID, H, W, w3, b3, C, out_planes.data(), false);
        for (int c = 0; c < C; ++c) {
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    act.output[(static_cast<std::size_t>(y) * W + x) * C + c] =
                        out_planes[(static_cast<std::size_t>(c) * H + y) * W + x];
                }
            }
        }
    }

    static void conv3x3(const double* src, int in_ch, int H, int W, const double* w, const double* b,
                        int out_ch, double* dst, bool tanh_act) {
        for (int o = 0; o < out_ch; ++o) {
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    double acc = b[o];
                    for (int c = 0; c < in_ch; ++c) {
                        const double* wk = w + ((o * in_ch + c) * 3) * 3;
                        const double* sp = src + static_cast<std::size_t>(c) * H * W;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int sy = y + ky - 1;
                            if (sy < 0 || sy >= H) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sx = x + kx - 1;
                                if (sx < 0 || sx >= W) continue;
                                acc += wk[ky * 3 + kx] * sp[sy * W + sx];
                            }
                        }
                    }
                    dst[(static_cast<std::size_t>(o) * H + y) * W + x] = tanh_act ? std::tanh(acc) : acc;
                }
            }
        }
    }

    static void conv3x3_backward(const double* src, int in_ch, int H, int W, const double* w,
                                 int out_ch, const double* ddst, double* gw, double* gb,
                                 double* dsrc) {
        for (int o = 0; o < out_ch; ++o) {
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    const double d = ddst[(static_cast<std::size_t>(o) * H + y) * W + x];
                    if (d == 0.0) continue;
                    gb[o] += d;
                    for (int c = 0; c < in_ch; ++c) {
                        const double* wk = w ? w + ((o * in_ch + c) * 3) * 3 : nullptr;
                        double* gwk = gw + ((o * in_ch + c) * 3) * 3;
                        const double* sp = src + static_cast<std::size_t>(c) * H * W;
                        double* dp = dsrc ? dsrc + static_cast<std::size_t>(c) * H * W : nullptr;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int sy = y + ky - 1;
                            if (sy < 0 || sy >= H) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sx = x + kx - 1;
                                if (sx < 0 || sx >= W) continue;
                                gwk[ky * 3 + kx] += d * sp[sy * W + sx];
                                if (dp) dp[sy * W + sx] += d * wk[ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
    }
};

// Mean-squared epsilon-prediction loss with optional backprop through the
// tiny net. Gradient layout matches TinyDenoiser::params.
inline double training_loss(const TinyDenoiser& d, const Latent& z0, const ConditionSet& cond, int t,
                            const Latent& eps, const DiffusionSchedule& sched,
                            std::vector<double>* grad_out = nullptr) {
    const Latent z_t = forward_noise(z0, t, eps, sched);
    TinyDenoiser::Activations act;
    d.forward(z_t, t, cond, act);
    const int H = act.h, W = act.w, C = d.config.latent_channels;
    const double inv_n = 1.0 / static_cast<double>(eps.data.size());
    double loss = 0.0;
    std::vector<double> dout(act.output.size(), 0.0);
    for (std::size_t i = 0; i < act.output.size(); ++i) {
        const double r = eps.data[i] - act.output[i];
        loss += r * r * inv_n;
        dout[i] = -2.0 * r * inv_n;
    }
    if (!std::isfinite(loss)) throw NumericError("training_loss: non-finite loss");
    if (!grad_out) return loss;

    const auto L = d.layout();
    grad_out->assign(static_cast<std::size_t>(d.param_count()), 0.0);
    double* gw1 = grad_out->data() + L[0].first;
    double* gb1 = grad_out->data() + L[1].first;
    double* gw2 = grad_out->data() + L[2].first;
    double* gb2 = grad_out->data() + L[3].first;
    double* gw3 = grad_out->data() + L[4].first;
    double* gb3 = grad_out->data() + L[5].first;
    const double* w2 = d.params.data() + L[2].first;
    const double* w3 = d.params.data() + L[4].first;
    const int IC = d.config.in_channels(), HID = d.config.hidden;

    // channel-last dout -> planes
    std::vector<double> dplanes(static_cast<std::size_t>(C) * H * W, 0.0);
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                dplanes[(static_cast<std::size_t>(c) * H + y) * W + x] =
                    dout[(static_cast<std::size_t>(y) * W + x) * C + c];
            }
        }
    }

    std::vector<double> dh2(act.h2.size(), 0.0);
    TinyDenoiser::conv3x3_backward(act.h2.data(), HID, H, W, w3, C, dplanes.data(), gw3, gb3,
                                   dh2.data());
    for (std::size_t i = 0; i < dh2.size(); ++i) dh2[i] *= 1.0 - act.h2[i] * act.h2[i];

    std::vector<double> dh1(act.h1.size(), 0.0);
    TinyDenoiser::conv3x3_backward(act.h1.data(), HID, H, W, w2, HID, dh2.data(), gw2, gb2,
                                   dh1.data());
    for (std::size_t i = 0; i < dh1.size(); ++i) dh1[i] *= 1.0 - act.h1[i] * act.h1[i];

    TinyDenoiser::conv3x3_backward(act.input.data(), IC, H, W, nullptr, HID, dh1.data(), gw1, gb1,
                                   nullptr);
    return loss;
}

// --- GaussianWorld -------------------------------------------------------------

// Data distribution N(mu(cond), sigma^2 I) keyed by presence pattern; the
// Bayes-optimal epsilon-prediction is available in closed form.
class GaussianWorld final : public Denoiser {
public:
    std::map<CondPattern, Latent> means;
    double sigma = 1.0;
    DiffusionSchedule schedule;

    GaussianWorld() : schedule(default_schedule()) {}
    GaussianWorld(std::map<CondPattern, Latent> mu, double sigma_,
                  DiffusionSchedule sched = default_schedule())
        : means(std::move(mu)), sigma(sigma_), schedule(std::move(sched)) {
        if (!(sigma > 0.0)) throw ValidationError("GaussianWorld: sigma must be > 0");
    }

    // One mean for every branch: guidance becomes scale-independent.
    static GaussianWorld uniform(const Latent& mu, double sigma,
                                 DiffusionSchedule sched = default_schedule()) {
        std::map<CondPattern, Latent> m;
        for (CondPattern p :
             {CondPattern::None, CondPattern::F, CondPattern::FB, CondPattern::FBP}) {
            m.emplace(p, mu);
        }
        return GaussianWorld(std::move(m), sigma, std::move(sched));
    }

    const Latent& mean_for(CondPattern p) const {
        const auto it = means.find(p);
        if (it == means.end()) {
            throw ValidationError(std::string("GaussianWorld: no mean for pattern ") + to_string(p));
        }
        return it->second;
    }

    Latent evaluate(const Latent& z_t, int t, const ConditionSet& cond) const override;
};

// Bayes-optimal epsilon for z_t = a z0 + b eps with z0 ~ N(mu, sigma^2 I):
//   posterior mean m = mu + (a sigma^2 / (a^2 sigma^2 + b^2)) (z_t - a mu)
//   eps_hat = (z_t - a m) / b
inline Latent analytic_gaussian_eps(const Latent& z_t, int t, const GaussianWorld& world,
                                    const ConditionSet& cond, const DiffusionSchedule& sched) {
    if (t < 1 || t > sched.T) throw ValidationError("analytic_gaussian_eps: t out of range");
    if (!(world.sigma > 0.0)) throw ValidationError("analytic_gaussian_eps: sigma must be > 0");
    const Latent& mu = world.mean_for(cond.pattern());
    if (!mu.same_shape(z_t)) throw ShapeError("analytic_gaussian_eps: mean/z shape mismatch");
    const double abar = sched.alpha_bar(t);
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    const double s2 = world.sigma * world.sigma;
    const double gain = a * s2 / (a * a * s2 + b * b);
    Latent out(z_t.height, z_t.width, z_t.channels);
    for (std::size_t i = 0; i < z_t.data.size(); ++i) {
        const double m = mu.data[i] + gain * (z_t.data[i] - a * mu.data[i]);
        out.data[i] = (z_t.data[i] - a * m) / b;
    }
    return out;
}

inline Latent GaussianWorld::evaluate(const Latent& z_t, int t, const ConditionSet& cond) const {
    return analytic_gaussian_eps(z_t, t, *this, cond, schedule);
}

// --- persistence ----------------------------------------------------------------

inline void save_denoiser(const std::string& path, const TinyDenoiser& d,
                          const DiffusionSchedule& sched) {
    nlohmann::json header;
    header["kind"] = "tiny_denoiser_v1";
    header["seed"] = d.seed;
    header["config"] = {{"latent_channels", d.config.latent_channels},
                        {"hidden", d.config.hidden},
                        {"time_dims", d.config.time_dims},
                        {"text_dims", d.config.text_dims}};
    const int h = d.config.hidden, ic = d.config.in_channels(), c = d.config.latent_channels;
    header["layers"] = {{"conv1", {h, ic, 3, 3}}, {"conv2", {h, h, 3, 3}}, {"conv3", {c, h, 3, 3}}};
    header["schedule"] = {{"T", sched.T},
                          {"beta_start", sched.betas.front()},
                          {"beta_end", sched.betas.back()}};
    write_weights(path, header, d.params);
}

inline std::pair<TinyDenoiser, DiffusionSchedule> load_denoiser(const std::string& path) {
    auto [header, values] = read_weights(path);
    if (!header.contains("kind") || header["kind"] != "tiny_denoiser_v1") {
        throw ParseError("load_denoiser: not a tiny_denoiser_v1 file");
    }
    TinyDenoiser d;
    const auto& cfg = header.at("config");
    d.config.latent_channels = cfg.at("latent_channels").get<int>();
    d.config.hidden = cfg.at("hidden").get<int>();
    d.config.time_dims = cfg.at("time_dims").get<int>();
    d.config.text_dims = cfg.at("text_dims").get<int>();
    d.seed = header.value("seed", 0ull);
    if (static_cast<int>(values.size()) != d.param_count()) {
        throw ParseError("load_denoiser: parameter count mismatch");
    }
    d.params = std::move(values);
    const auto& s = header.at("schedule");
    DiffusionSchedule sched = make_schedule(s.at("T").get<int>(), s.at("beta_start").get<double>(),
                                            s.at("beta_end").get<double>());
    return {std::move(d), std::move(sched)};
}

}  // namespace mcot
