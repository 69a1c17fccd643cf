#pragma once

// Synthetic scenes: colored geometric shapes on a flat gray background, with
// ground-truth editing regions per request. "add ... beside" regions are
// shape-sized blank areas adjacent to the referenced shape (right, then down
// on overflow) -- deliberately not object segmentations.

#include <array>
#include <cctype>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcot/core.hpp"

namespace mcot {

enum class ShapeKind { Square, Circle, Triangle };
enum class ColorName { Red, Green, Blue, Yellow };
enum class EditAction { Recolor, Remove, AddBeside };

inline const char* to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::Square: return "square";
        case ShapeKind::Circle: return "circle";
        default: return "triangle";
    }
}

inline const char* to_string(ColorName c) {
    switch (c) {
        case ColorName::Red: return "red";
        case ColorName::Green: return "green";
        case ColorName::Blue: return "blue";
        default: return "yellow";
    }
}

inline std::array<double, 3> color_rgb(ColorName c) {
    switch (c) {
        case ColorName::Red: return {1.0, 0.0, 0.0};
        case ColorName::Green: return {0.0, 1.0, 0.0};
        case ColorName::Blue: return {0.0, 0.0, 1.0};
        default: return {1.0, 1.0, 0.0};
    }
}

// All shapes occupy a 3x3 bounding box; cells are (dy, dx) offsets.
inline const std::vector<std::pair<int, int>>& shape_cells(ShapeKind k) {
    static const std::vector<std::pair<int, int>> square = {{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1},
                                                            {1, 2}, {2, 0}, {2, 1}, {2, 2}};
    static const std::vector<std::pair<int, int>> circle = {{0, 1}, {1, 0}, {1, 1}, {1, 2}, {2, 1}};
    static const std::vector<std::pair<int, int>> triangle = {{0, 1}, {1, 0}, {1, 1}, {1, 2}};
    switch (k) {
        case ShapeKind::Square: return square;
        case ShapeKind::Circle: return circle;
        default: return triangle;
    }
}

inline constexpr int kShapeBox = 3;

struct PlacedShape {
    ShapeKind kind;
    ColorName color;
    int y = 0;  // bounding-box top-left
    int x = 0;
};

struct EditRequest {
    EditAction action;
    std::string prompt;            // canonical sub-prompt text
    Mask region;                   // ground-truth editing region
    int shape_index = 0;           // referenced shape
    std::optional<ColorName> target_color;  // recolor target / added-object color
};

struct SceneOptions {
    int size = 16;
    int n_shapes = 1;

    friend bool operator==(const SceneOptions&, const SceneOptions&) = default;
};

struct SyntheticScene {
    Image image;
    std::vector<PlacedShape> shapes;
    std::vector<EditRequest> requests;
    double background = 0.5;
    std::uint64_t seed = 0;
    SceneOptions options;
};

namespace detail {

inline Mask shape_mask(const PlacedShape& s, int size) {
    Mask m(size, size);
    for (const auto& [dy, dx] : shape_cells(s.kind)) m.at(s.y + dy, s.x + dx) = 1.0;
    return m;
}

// Region for "add ... beside": a box-sized area to the right of the anchor's
// bounding box, or below it when the right side overflows the canvas.
inline Mask add_region(const PlacedShape& s, int size) {
    Mask m(size, size);
    int oy = s.y, ox = s.x + kShapeBox;
    if (ox + kShapeBox > size) {
        oy = s.y + kShapeBox;
        ox = s.x;
    }
    if (oy + kShapeBox > size) throw ValidationError("add_region: no room beside shape");
    for (int dy = 0; dy < kShapeBox; ++dy) {
        for (int dx = 0; dx < kShapeBox; ++dx) m.at(oy + dy, ox + dx) = 1.0;
    }
    return m;
}

inline bool boxes_overlap(int y0, int x0, int y1, int x1, int box, int margin) {
    return std::abs(y0 - y1) < box + margin && std::abs(x0 - x1) < box + margin;
}

}  // namespace detail

// Deterministic scene from a seed. Shapes have distinct kinds, never overlap,
// and always leave room for their add-beside region.
inline SyntheticScene make_scene(std::uint64_t seed, const SceneOptions& opts = {}) {
    if (opts.size < 10) throw ValidationError("make_scene: size must be >= 10");
    if (opts.n_shapes < 1 || opts.n_shapes > 3) {
        throw ValidationError("make_scene: n_shapes must be in [1,3]");
    }
    Rng rng(seed * 0x9e3779b97f4a7c15ull + 0x5ce5ced1a55ull);
    SyntheticScene scene;
    scene.seed = seed;
    scene.options = opts;
    scene.background = 0.40 + 0.20 * rng.uniform();

    const int n = opts.size;
    scene.image = Image(n, n, 3);
    for (double& v : scene.image.data) v = scene.background;

    std::vector<ShapeKind> kinds = {ShapeKind::Square, ShapeKind::Circle, ShapeKind::Triangle};
    // shuffle kinds so single-shape scenes cover all kinds across seeds
    for (int i = 2; i > 0; --i) std::swap(kinds[i], kinds[rng.uniform_int(0, i)]);

    for (int si = 0; si < opts.n_shapes; ++si) {
        PlacedShape s;
        s.kind = kinds[static_cast<std::size_t>(si)];
        s.color = static_cast<ColorName>(rng.uniform_int(0, 3));
        for (int attempt = 0;; ++attempt) {
            if (attempt > 200) throw ValidationError("make_scene: placement failed");
            s.y = rng.uniform_int(0, n - kShapeBox);
            s.x = rng.uniform_int(0, n - kShapeBox);
            // room for the add-beside region: right, or down as fallback
            const bool right_ok = s.x + 2 * kShapeBox <= n;
            const bool down_ok = s.y + 2 * kShapeBox <= n;
            if (!right_ok && !down_ok) continue;
            bool clash = false;
            for (const auto& other : scene.shapes) {
                // keep other shapes out of both the bounding boxes and the add regions
                if (detail::boxes_overlap(s.y, s.x, other.y, other.x, kShapeBox, 2 * kShapeBox)) {
                    clash = true;
                    break;
                }
            }
            if (!clash) break;
        }
        const auto rgb = color_rgb(s.color);
        for (const auto& [dy, dx] : shape_cells(s.kind)) {
            for (int c = 0; c < 3; ++c) scene.image.at(s.y + dy, s.x + dx, c) = rgb[c];
        }
        scene.shapes.push_back(s);
    }

    // Requests: recolor / remove / add-beside for every shape, fixed order.
    for (int si = 0; si < static_cast<int>(scene.shapes.size()); ++si) {
        const auto& s = scene.shapes[static_cast<std::size_t>(si)];
        ColorName recolor_to = static_cast<ColorName>(rng.uniform_int(0, 3));
        if (recolor_to == s.color) {
            recolor_to = static_cast<ColorName>((static_cast<int>(recolor_to) + 1) % 4);
        }
        EditRequest rc;
        rc.action = EditAction::Recolor;
        rc.prompt = std::string("recolor the ") + to_string(s.kind) + " " + to_string(recolor_to);
        rc.region = detail::shape_mask(s, n);
        rc.shape_index = si;
        rc.target_color = recolor_to;
        scene.requests.push_back(std::move(rc));

        EditRequest rm;
        rm.action = EditAction::Remove;
        rm.prompt = std::string("remove the ") + to_string(s.kind);
        rm.region = detail::shape_mask(s, n);
        rm.shape_index = si;
        scene.requests.push_back(std::move(rm));

        ShapeKind added = kinds[static_cast<std::size_t>(rng.uniform_int(0, 2))];
        ColorName added_color = static_cast<ColorName>(rng.uniform_int(0, 3));
        EditRequest ad;
        ad.action = EditAction::AddBeside;
        ad.prompt = std::string("add a ") + to_string(added_color) + " " + to_string(added) +
                    " beside the " + to_string(s.kind);
        ad.region = detail::add_region(s, n);
        ad.shape_index = si;
        ad.target_color = added_color;
        scene.requests.push_back(std::move(ad));
    }
    return scene;
}

// --- canonical prompt grammar -------------------------------------------------

struct ParsedPrompt {
    EditAction action;
    ShapeKind anchor;                       // the referenced shape
    std::optional<ColorName> target_color;  // recolor target / added color
    std::optional<ShapeKind> added_kind;
};

inline std::vector<std::string> tokenize_lower(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::optional<ShapeKind> kind_from_token(const std::string& t) {
    if (t == "square") return ShapeKind::Square;
    if (t == "circle") return ShapeKind::Circle;
    if (t == "triangle") return ShapeKind::Triangle;
    return std::nullopt;
}

inline std::optional<ColorName> color_from_token(const std::string& t) {
    if (t == "red") return ColorName::Red;
    if (t == "green") return ColorName::Green;
    if (t == "blue") return ColorName::Blue;
    if (t == "yellow") return ColorName::Yellow;
    return std::nullopt;
}

// Parses the closed-world grammar:
//   recolor|make|paint the <kind> <color>
//   remove|delete|erase the <kind>
//   add|put|place a [<color>] <kind2> beside the <kind>
inline ParsedPrompt parse_scene_prompt(const std::string& prompt) {
    const auto toks = tokenize_lower(prompt);
    if (toks.empty()) throw VocabularyError("parse_scene_prompt: empty prompt");
    ParsedPrompt out{};
    const std::string& verb = toks.front();
    if (verb == "recolor" || verb == "make" || verb == "paint") {
        out.action = EditAction::Recolor;
    } else if (verb == "remove" || verb == "delete" || verb == "erase") {
        out.action = EditAction::Remove;
    } else if (verb == "add" || verb == "put" || verb == "place") {
        out.action = EditAction::AddBeside;
    } else {
        throw VocabularyError("parse_scene_prompt: unknown action verb '" + verb + "'");
    }

    if (out.action == EditAction::AddBeside) {
        // anchor = kind after "beside"; added kind = first kind before it
        std::size_t beside = toks.size();
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (toks[i] == "beside" || toks[i] == "near") {
                beside = i;
                break;
            }
        }
        if (beside == toks.size()) throw VocabularyError("parse_scene_prompt: add requires 'beside'");
        std::optional<ShapeKind> anchor;
        for (std::size_t i = beside + 1; i < toks.size(); ++i) {
            if (auto k = kind_from_token(toks[i])) {
                anchor = k;
                break;
            }
        }
        if (!anchor) throw VocabularyError("parse_scene_prompt: no anchor shape after 'beside'");
        out.anchor = *anchor;
        for (std::size_t i = 0; i < beside; ++i) {
            if (!out.added_kind) out.added_kind = kind_from_token(toks[i]);
            if (!out.target_color) out.target_color = color_from_token(toks[i]);
        }
        return out;
    }

    std::optional<ShapeKind> anchor;
    for (const auto& t : toks) {
        if (auto k = kind_from_token(t)) {
            anchor = k;
            break;
        }
    }
    if (!anchor) throw VocabularyError("parse_scene_prompt: no shape kind in prompt");
    out.anchor = *anchor;
    if (out.action == EditAction::Recolor) {
        for (auto it = toks.rbegin(); it != toks.rend(); ++it) {
            if (auto c = color_from_token(*it)) {
                out.target_color = c;
                break;
            }
        }
        if (!out.target_color) throw VocabularyError("parse_scene_prompt: recolor needs a color");
    }
    return out;
}

// Ground-truth editing region for a prompt against a scene.
inline Mask oracle_region(const SyntheticScene& scene, const std::string& prompt) {
    const ParsedPrompt p = parse_scene_prompt(prompt);
    for (std::size_t si = 0; si < scene.shapes.size(); ++si) {
        if (scene.shapes[si].kind != p.anchor) continue;
        const auto& s = scene.shapes[si];
        if (p.action == EditAction::AddBeside) return detail::add_region(s, scene.options.size);
        return detail::shape_mask(s, scene.options.size);
    }
    throw ValidationError(std::string("oracle_region: scene has no ") + to_string(p.anchor));
}

// Expected image after applying a request exactly (recolor paints the region,
// remove fills it with background, add paints the region with the added color).
inline Image apply_request_exactly(const SyntheticScene& scene, const EditRequest& req) {
    Image out = scene.image;
    std::array<double, 3> rgb{scene.background, scene.background, scene.background};
    if (req.action != EditAction::Remove && req.target_color) rgb = color_rgb(*req.target_color);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            if (req.region.at(y, x) == 0.0) continue;
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = rgb[c];
        }
    }
    return out;
}

}  // namespace mcot
