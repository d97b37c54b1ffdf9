#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "a2rl/errors.hpp"

namespace a2rl {

/// Geometric slack for window invariants; absorbs accumulated rounding of
/// repeated 0.05 steps.
inline constexpr double kWindowEps = 1e-9;

/// Normalized crop rectangle on the unit square.
struct CropWindow {
    double x = 0.0;
    double y = 0.0;
    double w = 1.0;
    double h = 1.0;

    static constexpr CropWindow full() { return {0.0, 0.0, 1.0, 1.0}; }

    double right() const { return x + w; }
    double bottom() const { return y + h; }

    friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

struct ImageDims {
    int width = 0;
    int height = 0;

    friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

/// Integer pixel rectangle, origin top-left.
struct PixelRect {
    int left = 0;
    int top = 0;
    int width = 0;
    int height = 0;

    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

enum class ActionGroup { Scaling, Translation, AspectRatio, Termination };

// The numeric ids are part of the checkpoint contract (policy head order).
enum class Action : int {
    ShrinkAnchorBottomRight = 0,  // left and top edges move inward
    ShrinkAnchorBottomLeft = 1,   // right and top edges move inward
    ShrinkAnchorTopRight = 2,     // left and bottom edges move inward
    ShrinkAnchorTopLeft = 3,      // right and bottom edges move inward
    ShrinkCenter = 4,
    MoveLeft = 5,
    MoveRight = 6,
    MoveUp = 7,
    MoveDown = 8,
    Widen = 9,
    Narrow = 10,
    Heighten = 11,
    Shorten = 12,
    Terminate = 13,
};

inline constexpr int kNumActions = 14;

inline constexpr Action action_from_id(int id) {
    if (id < 0 || id >= kNumActions) {
        throw ContractViolation("action id out of range: " + std::to_string(id));
    }
    return static_cast<Action>(id);
}

inline constexpr int action_id(Action a) { return static_cast<int>(a); }

inline constexpr ActionGroup action_group(Action a) {
    const int id = action_id(a);
    if (id <= 4) return ActionGroup::Scaling;
    if (id <= 8) return ActionGroup::Translation;
    if (id <= 12) return ActionGroup::AspectRatio;
    return ActionGroup::Termination;
}

inline constexpr std::string_view action_name(Action a) {
    constexpr std::array<std::string_view, kNumActions> names = {
        "shrink_anchor_bottom_right", "shrink_anchor_bottom_left", "shrink_anchor_top_right",
        "shrink_anchor_top_left",     "shrink_center",             "move_left",
        "move_right",                 "move_up",                   "move_down",
        "widen",                      "narrow",                    "heighten",
        "shorten",                    "terminate"};
    return names[static_cast<std::size_t>(action_id(a))];
}

/// Edge deltas (left, top, right, bottom) in units of the step size.
struct EdgeDelta {
    double left, top, right, bottom;
};

inline constexpr EdgeDelta action_edge_delta(Action a) {
    switch (a) {
        case Action::ShrinkAnchorBottomRight: return {1, 1, 0, 0};
        case Action::ShrinkAnchorBottomLeft: return {0, 1, -1, 0};
        case Action::ShrinkAnchorTopRight: return {1, 0, 0, -1};
        case Action::ShrinkAnchorTopLeft: return {0, 0, -1, -1};
        case Action::ShrinkCenter: return {0.5, 0.5, -0.5, -0.5};
        case Action::MoveLeft: return {-1, 0, -1, 0};
        case Action::MoveRight: return {1, 0, 1, 0};
        case Action::MoveUp: return {0, -1, 0, -1};
        case Action::MoveDown: return {0, 1, 0, 1};
        case Action::Widen: return {-0.5, 0, 0.5, 0};
        case Action::Narrow: return {0.5, 0, -0.5, 0};
        case Action::Heighten: return {0, -0.5, 0, 0.5};
        case Action::Shorten: return {0, 0.5, 0, -0.5};
        case Action::Terminate: break;
    }
    return {0, 0, 0, 0};
}

/// 64-bit FNV-1a over a canonical rendering of the action table. Stored in
/// checkpoints so a binary with a different table refuses to load them.
inline std::uint64_t action_table_hash() {
    std::string canon;
    for (int id = 0; id < kNumActions; ++id) {
        const Action a = action_from_id(id);
        const EdgeDelta d = action_edge_delta(a);
        canon += std::to_string(id) + ':' + std::string(action_name(a)) + ':' +
                 std::to_string(static_cast<int>(action_group(a))) + ':' +
                 std::to_string(d.left) + ',' + std::to_string(d.top) + ',' +
                 std::to_string(d.right) + ',' + std::to_string(d.bottom) + ';';
    }
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

struct EnvConfig {
    double step = 0.05;  // fraction of the original image size
    double min_w = 0.1;
    double min_h = 0.1;
    int max_steps = 50;
};

inline bool is_valid_window(const CropWindow& win, const EnvConfig& cfg = {}) {
    return std::isfinite(win.x) && std::isfinite(win.y) && std::isfinite(win.w) &&
           std::isfinite(win.h) && win.x >= -kWindowEps && win.y >= -kWindowEps &&
           win.right() <= 1.0 + kWindowEps && win.bottom() <= 1.0 + kWindowEps &&
           win.w >= cfg.min_w - kWindowEps && win.h >= cfg.min_h - kWindowEps;
}

/// Transforms `win` by one action. Deltas are fractions of the original
/// image, not of the current window. Translations slide the window until it
/// touches the border and keep (w, h); the other groups clip edges to the unit
/// square. A result below the minimum size leaves the window unchanged.
inline CropWindow apply_action(const CropWindow& win, Action action, const EnvConfig& cfg = {}) {
    if (action == Action::Terminate) {
        throw ContractViolation("apply_action: termination is not a window transformation");
    }
    detail::require(is_valid_window(win, cfg), "apply_action: window violates invariants");

    const EdgeDelta d = action_edge_delta(action);
    const double s = cfg.step;

    if (action_group(action) == ActionGroup::Translation) {
        CropWindow out = win;
        out.x = std::clamp(win.x + d.left * s, 0.0, std::max(0.0, 1.0 - win.w));
        out.y = std::clamp(win.y + d.top * s, 0.0, std::max(0.0, 1.0 - win.h));
        return out;
    }

    const double left = std::clamp(win.x + d.left * s, 0.0, 1.0);
    const double top = std::clamp(win.y + d.top * s, 0.0, 1.0);
    const double right = std::clamp(win.right() + d.right * s, 0.0, 1.0);
    const double bottom = std::clamp(win.bottom() + d.bottom * s, 0.0, 1.0);

    // Untouched edges keep their exact representation.
    const double new_w = (d.left == 0 && d.right == 0) ? win.w : right - left;
    const double new_h = (d.top == 0 && d.bottom == 0) ? win.h : bottom - top;
    if (new_w < cfg.min_w - kWindowEps || new_h < cfg.min_h - kWindowEps) {
        return win;
    }
    return {left, top, new_w, new_h};
}

struct EpisodeState {
    CropWindow window = CropWindow::full();
    int t = 0;
    bool terminated = false;
    ImageDims image_dims{};
};

inline EpisodeState start_episode(ImageDims dims) {
    detail::require(dims.width > 0 && dims.height > 0, "start_episode: image dims must be positive");
    return EpisodeState{CropWindow::full(), 0, false, dims};
}

/// One transition. Termination keeps the window; every call consumes a step
/// and reaching the step cap ends the episode.
inline EpisodeState episode_step(const EpisodeState& state, Action action, const EnvConfig& cfg = {}) {
    if (state.terminated) {
        throw ContractViolation("episode_step: episode already terminated");
    }
    detail::require(state.t < cfg.max_steps, "episode_step: step cap exceeded");

    EpisodeState next = state;
    if (action == Action::Terminate) {
        next.terminated = true;
    } else {
        next.window = apply_action(state.window, action, cfg);
    }
    next.t = state.t + 1;
    if (next.t >= cfg.max_steps) {
        next.terminated = true;
    }
    return next;
}

inline PixelRect to_pixel_rect(const CropWindow& win, ImageDims dims) {
    detail::require(dims.width > 0 && dims.height > 0, "to_pixel_rect: image dims must be positive");
    PixelRect r;
    r.left = std::clamp(static_cast<int>(std::lround(win.x * dims.width)), 0, dims.width - 1);
    r.top = std::clamp(static_cast<int>(std::lround(win.y * dims.height)), 0, dims.height - 1);
    r.width = std::clamp(static_cast<int>(std::lround(win.w * dims.width)), 1, dims.width - r.left);
    r.height = std::clamp(static_cast<int>(std::lround(win.h * dims.height)), 1, dims.height - r.top);
    return r;
}

inline CropWindow from_pixel_rect(const PixelRect& r, ImageDims dims) {
    return {static_cast<double>(r.left) / dims.width, static_cast<double>(r.top) / dims.height,
            static_cast<double>(r.width) / dims.width, static_cast<double>(r.height) / dims.height};
}

/// Pixel-space width over height.
inline double aspect_ratio(const CropWindow& win, ImageDims dims) {
    return (win.w * dims.width) / (win.h * dims.height);
}

}  // namespace a2rl
