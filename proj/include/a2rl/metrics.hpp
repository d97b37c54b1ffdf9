#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>

#include "a2rl/env.hpp"
#include "a2rl/errors.hpp"

namespace a2rl {

/// Intersection over union of two normalized windows.
inline double iou(const CropWindow& a, const CropWindow& b) {
    const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

/// Pixel rectangles use exact integer areas.
inline double iou(const PixelRect& a, const PixelRect& b) {
    detail::require(a.width > 0 && a.height > 0 && b.width > 0 && b.height > 0,
                    "iou: rectangles must have positive area");
    const std::int64_t iw = std::int64_t{std::min(a.left + a.width, b.left + b.width)} - std::max(a.left, b.left);
    const std::int64_t ih = std::int64_t{std::min(a.top + a.height, b.top + b.height)} - std::max(a.top, b.top);
    if (iw <= 0 || ih <= 0) return 0.0;
    const std::int64_t inter = iw * ih;
    const std::int64_t uni = std::int64_t{a.width} * a.height + std::int64_t{b.width} * b.height - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Mean distance between the four corresponding edges. Horizontal edge
/// offsets are divided by the image width, vertical ones by the height.
inline double boundary_displacement(const PixelRect& a, const PixelRect& b, ImageDims dims) {
    detail::require(dims.width > 0 && dims.height > 0, "boundary_displacement: image dims must be positive");
    const double W = dims.width;
    const double H = dims.height;
    const double dl = std::abs(a.left - b.left) / W;
    const double dr = std::abs((a.left + a.width) - (b.left + b.width)) / W;
    const double du = std::abs(a.top - b.top) / H;
    const double db = std::abs((a.top + a.height) - (b.top + b.height)) / H;
    return (dl + dr + du + db) / 4.0;
}

/// Best IoU between any of the first K ranked candidates and any ground truth.
inline double topk_max_iou(std::span<const PixelRect> candidates, std::span<const PixelRect> truths, std::size_t k) {
    detail::require(!truths.empty(), "topk_max_iou: need at least one ground-truth window");
    detail::require(k >= 1, "topk_max_iou: K must be at least 1");
    const std::size_t n = std::min(k, candidates.size());
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& gt : truths) {
            best = std::max(best, iou(candidates[i], gt));
        }
    }
    return best;
}

}  // namespace a2rl
