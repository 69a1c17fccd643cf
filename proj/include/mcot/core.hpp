#pragma once

// Dense image / mask / latent value types and the mask algebra the rest of
// the pipeline builds on. All values are immutable-by-convention after
// construction and every operation here is pure.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "mcot/common.hpp"

namespace mcot {

// Scalar grid in [0,1], row-major, channel-last.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c) : height(h), width(w), channels(c) {
        if (h < 1 || w < 1 || c < 1) throw ValidationError("Image: dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(h) * w * c, 0.0);
    }

    static Image from_data(int h, int w, int c, std::vector<double> values) {
        Image img(h, w, c);
        if (values.size() != img.data.size()) throw ShapeError("Image: data length mismatch");
        for (double v : values) {
            if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("Image: values must lie in [0,1]");
        }
        img.data = std::move(values);
        return img;
    }

    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t size() const { return data.size(); }

    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    friend bool operator==(const Image& a, const Image& b) {
        return a.height == b.height && a.width == b.width && a.channels == b.channels && a.data == b.data;
    }
};

// Binary grid {0,1}; one plane broadcasts over all channels of its paired image.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Mask() = default;
    Mask(int h, int w) : height(h), width(w) {
        if (h < 1 || w < 1) throw ValidationError("Mask: dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(h) * w, 0.0);
    }

    static Mask from_data(int h, int w, std::vector<double> values) {
        Mask m(h, w);
        if (values.size() != m.data.size()) throw ShapeError("Mask: data length mismatch");
        for (double v : values) {
            if (v != 0.0 && v != 1.0) throw ValidationError("Mask: values must be exactly 0 or 1");
        }
        m.data = std::move(values);
        return m;
    }

    double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }

    friend bool operator==(const Mask& a, const Mask& b) {
        return a.height == b.height && a.width == b.width && a.data == b.data;
    }
};

// Pre-threshold reasoner output, values in [0,1].
struct SoftMask {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    SoftMask() = default;
    SoftMask(int h, int w) : height(h), width(w) {
        if (h < 1 || w < 1) throw ValidationError("SoftMask: dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(h) * w, 0.0);
    }
    double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
};

// Diffusion working space: unbounded reals, finite only.
struct Latent {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Latent() = default;
    Latent(int h, int w, int c) : height(h), width(w), channels(c) {
        if (h < 1 || w < 1 || c < 1) throw ValidationError("Latent: dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(h) * w * c, 0.0);
    }

    static Latent from_data(int h, int w, int c, std::vector<double> values) {
        Latent z(h, w, c);
        if (values.size() != z.data.size()) throw ShapeError("Latent: data length mismatch");
        for (double v : values) {
            if (!std::isfinite(v)) throw NumericError("Latent: non-finite value");
        }
        z.data = std::move(values);
        return z;
    }

    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t size() const { return data.size(); }

    bool same_shape(const Latent& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    friend bool operator==(const Latent& a, const Latent& b) {
        return a.height == b.height && a.width == b.width && a.channels == b.channels && a.data == b.data;
    }
};

inline void require_match(const Image& img, const Mask& m, const char* where) {
    if (img.height != m.height || img.width != m.width) {
        throw ShapeError(std::string(where) + ": image/mask dimensions differ");
    }
}

// fg = image * mask, bg = image * (1 - mask); fg + bg == image exactly.
inline std::pair<Image, Image> split_foreground(const Image& image, const Mask& mask) {
    require_match(image, mask, "split_foreground");
    Image fg(image.height, image.width, image.channels);
    Image bg(image.height, image.width, image.channels);
    const int c = image.channels;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const double m = mask.at(y, x);
            for (int ch = 0; ch < c; ++ch) {
                const double v = image.at(y, x, ch);
                fg.at(y, x, ch) = v * m;
                bg.at(y, x, ch) = v * (1.0 - m);
            }
        }
    }
    return {std::move(fg), std::move(bg)};
}

inline Image composite(const Image& fg, const Image& bg, const Mask& mask) {
    if (!fg.same_shape(bg)) throw ShapeError("composite: fg/bg dimensions differ");
    require_match(fg, mask, "composite");
    Image out(fg.height, fg.width, fg.channels);
    for (int y = 0; y < fg.height; ++y) {
        for (int x = 0; x < fg.width; ++x) {
            const double m = mask.at(y, x);
            for (int ch = 0; ch < fg.channels; ++ch) {
                out.at(y, x, ch) = fg.at(y, x, ch) * m + bg.at(y, x, ch) * (1.0 - m);
            }
        }
    }
    return out;
}

// Intersection over union. Two empty masks agree perfectly by convention.
inline double mask_iou(const Mask& a, const Mask& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("mask_iou: dimensions differ");
    }
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool pa = a.data[i] != 0.0;
        const bool pb = b.data[i] != 0.0;
        inter += static_cast<std::size_t>(pa && pb);
        uni += static_cast<std::size_t>(pa || pb);
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// Inclusive threshold: pixel is 1 iff soft >= threshold.
inline Mask binarize(const SoftMask& soft, double threshold = 0.5) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw ValidationError("binarize: threshold must lie in [0,1]");
    }
    Mask m(soft.height, soft.width);
    for (std::size_t i = 0; i < soft.data.size(); ++i) {
        m.data[i] = soft.data[i] >= threshold ? 1.0 : 0.0;
    }
    return m;
}

// --- conversions between image space and the (identity-codec) latent space ---

inline Latent image_to_latent(const Image& img) {
    Latent z(img.height, img.width, img.channels);
    z.data = img.data;
    return z;
}

inline Image latent_to_image_clamped(const Latent& z) {
    Image img(z.height, z.width, z.channels);
    for (std::size_t i = 0; i < z.data.size(); ++i) {
        img.data[i] = std::clamp(z.data[i], 0.0, 1.0);
    }
    return img;
}

// Content hash over the 8-bit quantization of an image; matches what the
// persisted PNG carries, so replays can be compared against artifacts.
inline std::string image_hash(const Image& img) {
    std::vector<unsigned char> q(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        q[i] = static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
    }
    std::uint64_t h = fnv1a64(&img.height, sizeof img.height);
    h = fnv1a64(&img.width, sizeof img.width, h);
    h = fnv1a64(&img.channels, sizeof img.channels, h);
    h = fnv1a64(q.data(), q.size(), h);
    return hex64(h);
}

inline std::string mask_hash(const Mask& m) {
    std::vector<unsigned char> q(m.data.size());
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        q[i] = m.data[i] != 0.0 ? 255 : 0;
    }
    std::uint64_t h = fnv1a64(&m.height, sizeof m.height);
    h = fnv1a64(&m.width, sizeof m.width, h);
    h = fnv1a64(q.data(), q.size(), h);
    return hex64(h);
}

}  // namespace mcot
