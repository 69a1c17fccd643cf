#pragma once

// Diffusion numerics: linear-beta schedule, forward noising, the deterministic
// DDIM update, three-condition classifier-free guidance and the training-time
// condition dropout bands.

#include <cmath>
#include <optional>
#include <vector>

#include "mcot/core.hpp"

namespace mcot {

struct DiffusionSchedule {
    int T = 0;
    std::vector<double> betas;       // betas[t-1] for t in 1..T
    std::vector<double> alphas;      // 1 - beta
    std::vector<double> alpha_bars;  // alpha_bars[t] for t in 0..T, alpha_bars[0] == 1

    double alpha_bar(int t) const {
        if (t < 0 || t > T) throw ValidationError("alpha_bar: t out of range");
        return alpha_bars[static_cast<std::size_t>(t)];
    }
};

inline DiffusionSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ValidationError("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw ValidationError("make_schedule: need 0 < beta_start <= beta_end < 1");
    }
    DiffusionSchedule s;
    s.T = T;
    s.betas.resize(static_cast<std::size_t>(T));
    s.alphas.resize(static_cast<std::size_t>(T));
    s.alpha_bars.resize(static_cast<std::size_t>(T) + 1);
    s.alpha_bars[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        s.betas[static_cast<std::size_t>(t - 1)] = beta;
        s.alphas[static_cast<std::size_t>(t - 1)] = 1.0 - beta;
        s.alpha_bars[static_cast<std::size_t>(t)] =
            s.alpha_bars[static_cast<std::size_t>(t - 1)] * (1.0 - beta);
    }
    return s;
}

// Default training-time schedule used throughout: T=1000, linear 1e-4 -> 2e-2.
inline const DiffusionSchedule& default_schedule() {
    static const DiffusionSchedule s = make_schedule(1000, 1e-4, 2e-2);
    return s;
}

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
inline Latent forward_noise(const Latent& z0, int t, const Latent& eps, const DiffusionSchedule& sched) {
    if (t < 1 || t > sched.T) throw ValidationError("forward_noise: t out of range");
    if (!z0.same_shape(eps)) throw ShapeError("forward_noise: z0/eps dimensions differ");
    const double abar = sched.alpha_bar(t);
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    Latent out(z0.height, z0.width, z0.channels);
    for (std::size_t i = 0; i < z0.data.size(); ++i) out.data[i] = a * z0.data[i] + b * eps.data[i];
    return out;
}

struct GuidanceScales {
    double s_f = 1.5;  // foreground-image condition
    double s_b = 1.5;  // background-image condition
    double s_p = 7.5;  // text condition

    void validate() const {
        if (!(std::isfinite(s_f) && std::isfinite(s_b) && std::isfinite(s_p)) || s_f < 0 || s_b < 0 ||
            s_p < 0) {
            throw ValidationError("GuidanceScales: scales must be finite and non-negative");
        }
    }
};

// The four nested presence patterns of the guidance expansion:
// nothing / fg only / fg+bg / fg+bg+text.
enum class CondPattern { None, F, FB, FBP };

inline const char* to_string(CondPattern p) {
    switch (p) {
        case CondPattern::None: return "none";
        case CondPattern::F: return "f";
        case CondPattern::FB: return "fb";
        default: return "fbp";
    }
}

struct ConditionSet {
    std::optional<std::vector<double>> text_embedding;
    std::optional<Latent> fg_latent;
    std::optional<Latent> bg_latent;

    // presence must be nested: text => bg => fg
    CondPattern pattern() const {
        const bool f = fg_latent.has_value();
        const bool b = bg_latent.has_value();
        const bool p = text_embedding.has_value();
        if (p && (!f || !b)) throw ValidationError("ConditionSet: text requires fg and bg");
        if (b && !f) throw ValidationError("ConditionSet: bg requires fg");
        if (p) return CondPattern::FBP;
        if (b) return CondPattern::FB;
        if (f) return CondPattern::F;
        return CondPattern::None;
    }

    // Restriction of a fully-conditioned set onto a branch pattern.
    ConditionSet restricted(CondPattern p) const {
        ConditionSet out;
        if (p == CondPattern::None) return out;
        out.fg_latent = fg_latent;
        if (p == CondPattern::F) return out;
        out.bg_latent = bg_latent;
        if (p == CondPattern::FB) return out;
        out.text_embedding = text_embedding;
        return out;
    }
};

struct DropoutPolicy {
    double p_drop_text = 0.05;     // keep fg+bg, drop text
    double p_drop_text_bg = 0.05;  // keep fg only
    double p_drop_all = 0.05;      // drop all three

    void validate() const {
        for (double p : {p_drop_text, p_drop_text_bg, p_drop_all}) {
            if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("DropoutPolicy: probabilities in [0,1]");
        }
        if (p_drop_text + p_drop_text_bg + p_drop_all > 1.0) {
            throw ValidationError("DropoutPolicy: probabilities sum above 1");
        }
    }
};

// Mutually exclusive bands over one uniform draw:
// [0, p1) -> FB, [p1, p1+p2) -> F, [p1+p2, p1+p2+p3) -> None, rest -> FBP.
inline CondPattern sample_dropout(const DropoutPolicy& policy, double draw) {
    policy.validate();
    if (!(draw >= 0.0 && draw < 1.0)) throw ValidationError("sample_dropout: draw outside [0,1)");
    if (draw < policy.p_drop_text) return CondPattern::FB;
    if (draw < policy.p_drop_text + policy.p_drop_text_bg) return CondPattern::F;
    if (draw < policy.p_drop_text + policy.p_drop_text_bg + policy.p_drop_all) {
        return CondPattern::None;
    }
    return CondPattern::FBP;
}

// Three-condition guidance combination:
//   out = eps_u + s_f (eps_f - eps_u) + s_b (eps_fb - eps_f) + s_p (eps_full - eps_fb)
// evaluated in the grouped form
//   (1-s_f) eps_u + (s_f-s_b) eps_f + (s_b-s_p) eps_fb + s_p eps_full
// so (1,1,1) returns eps_full and (0,0,0) returns eps_uncond bit-for-bit.
// s_b scales the background delta and s_p the text delta.
inline Latent cfg_combine(const Latent& eps_uncond, const Latent& eps_f, const Latent& eps_fb,
                          const Latent& eps_full, const GuidanceScales& scales) {
    scales.validate();
    if (!eps_uncond.same_shape(eps_f) || !eps_uncond.same_shape(eps_fb) ||
        !eps_uncond.same_shape(eps_full)) {
        throw ShapeError("cfg_combine: branch latents must share one shape");
    }
    const double cu = 1.0 - scales.s_f;
    const double cf = scales.s_f - scales.s_b;
    const double cb = scales.s_b - scales.s_p;
    const double cp = scales.s_p;
    Latent out(eps_uncond.height, eps_uncond.width, eps_uncond.channels);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = cu * eps_uncond.data[i] + cf * eps_f.data[i] + cb * eps_fb.data[i] +
                      cp * eps_full.data[i];
    }
    return out;
}

// Deterministic (eta = 0) DDIM update from step t to t_prev < t:
//   zhat0 = (z_t - sqrt(1-abar_t) eps) / sqrt(abar_t)
//   out   = sqrt(abar_prev) zhat0 + sqrt(1-abar_prev) eps
inline Latent ddim_step(const Latent& z_t, const Latent& eps_hat, int t, int t_prev,
                        const DiffusionSchedule& sched) {
    if (t < 1 || t > sched.T) throw ValidationError("ddim_step: t out of range");
    if (t_prev < 0 || t_prev >= t) throw ValidationError("ddim_step: need 0 <= t_prev < t");
    if (!z_t.same_shape(eps_hat)) throw ShapeError("ddim_step: z/eps dimensions differ");
    const double abar_t = sched.alpha_bar(t);
    const double abar_p = sched.alpha_bar(t_prev);
    const double a_t = std::sqrt(abar_t);
    const double b_t = std::sqrt(1.0 - abar_t);
    const double a_p = std::sqrt(abar_p);
    const double b_p = std::sqrt(1.0 - abar_p);
    Latent out(z_t.height, z_t.width, z_t.channels);
    for (std::size_t i = 0; i < z_t.data.size(); ++i) {
        const double zhat0 = (z_t.data[i] - b_t * eps_hat.data[i]) / a_t;
        out.data[i] = a_p * zhat0 + b_p * eps_hat.data[i];
    }
    return out;
}

// Uniformly strided timestep ladder T = t_0 > t_1 > ... > t_steps = 0.
inline std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 1) throw ValidationError("ddim_timesteps: steps must be >= 1");
    if (steps > T) throw ValidationError("ddim_timesteps: steps must not exceed T");
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(steps) + 1);
    for (int j = 0; j <= steps; ++j) {
        const int t = static_cast<int>(std::llround(static_cast<double>(T) *
                                                    (1.0 - static_cast<double>(j) / steps)));
        if (!ts.empty() && t >= ts.back()) {
            throw ValidationError("ddim_timesteps: stride collapsed; reduce steps");
        }
        ts.push_back(t);
    }
    return ts;
}

}  // namespace mcot
