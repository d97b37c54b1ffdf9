#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "a2rl/env.hpp"
#include "a2rl/image.hpp"
#include "a2rl/metrics.hpp"

namespace a2rl {

/// Aesthetics oracle driving the reward. Only the ordering of scores matters
/// to the agent, since the reward takes the sign of score differences.
/// Implementations must be deterministic and safe for concurrent calls.
class AestheticScorer {
public:
    virtual ~AestheticScorer() = default;
    virtual double score(const ImageRaster& image, const CropWindow& window) const = 0;
    virtual std::string_view name() const = 0;
};

/// Synthetic oracle with a known optimum: IoU against a hidden target window.
class TargetIouScorer final : public AestheticScorer {
public:
    explicit TargetIouScorer(CropWindow target) : target_(target) {}

    double score(const ImageRaster&, const CropWindow& window) const override { return iou(window, target_); }
    std::string_view name() const override { return "target-iou"; }

    const CropWindow& target() const { return target_; }

private:
    CropWindow target_;
};

inline double target_iou_score(const ImageRaster& image, const CropWindow& window, const CropWindow& target) {
    return TargetIouScorer(target).score(image, window);
}

struct CompositionConfig {
    double content_weight = 0.7;
    double thirds_weight = 0.3;
    double thirds_sigma = 1.0 / 12.0;  // in crop-normalized units
};

/// Handcrafted composition score over gradient-magnitude energy.
///
/// content = (E_in / E_total) * m_in / (m_in + m_img), where E is summed
/// energy and m is mean energy per pixel (crop vs whole image). A crop that
/// keeps all the structure and drops empty margins scores above the full
/// frame (0.5 when nothing is dropped).
///
/// thirds = energy-weighted mean of a Gaussian proximity to the nearest
/// third-line of the crop.
///
/// Both terms lie in [0, 1]; an image without gradients scores 0.
class CompositionScorer final : public AestheticScorer {
public:
    explicit CompositionScorer(CompositionConfig cfg = {}) : cfg_(cfg) {}

    double score(const ImageRaster& image, const CropWindow& window) const override {
        const auto energy = gradient_energy(image);
        const int W = image.width();
        const int H = image.height();
        double total = 0.0;
        for (double e : energy) total += e;
        if (total <= 1e-12) return 0.0;

        const PixelRect r = to_pixel_rect(window, image.dims());
        double inside = 0.0;
        double thirds_mass = 0.0;
        const double two_sigma_sq = 2.0 * cfg_.thirds_sigma * cfg_.thirds_sigma;
        auto third_proximity = [&](double u) {
            const double d = std::min(std::abs(u - 1.0 / 3.0), std::abs(u - 2.0 / 3.0));
            return std::exp(-d * d / two_sigma_sq);
        };
        std::vector<double> prox_x(static_cast<std::size_t>(r.width));
        for (int i = 0; i < r.width; ++i) prox_x[static_cast<std::size_t>(i)] = third_proximity((i + 0.5) / r.width);
        for (int j = 0; j < r.height; ++j) {
            const double py = third_proximity((j + 0.5) / r.height);
            const std::size_t row = static_cast<std::size_t>(r.top + j) * W;
            for (int i = 0; i < r.width; ++i) {
                const double e = energy[row + static_cast<std::size_t>(r.left + i)];
                inside += e;
                thirds_mass += e * std::max(prox_x[static_cast<std::size_t>(i)], py);
            }
        }
        if (inside <= 0.0) return 0.0;

        const double mean_in = inside / (static_cast<double>(r.width) * r.height);
        const double mean_img = total / (static_cast<double>(W) * H);
        const double content = (inside / total) * mean_in / (mean_in + mean_img);
        const double thirds = thirds_mass / inside;
        return cfg_.content_weight * content + cfg_.thirds_weight * thirds;
    }

    std::string_view name() const override { return "composition"; }

    /// Central-difference gradient magnitude of luma, borders clamped.
    static std::vector<double> gradient_energy(const ImageRaster& image) {
        const int W = image.width();
        const int H = image.height();
        std::vector<double> luma(static_cast<std::size_t>(W) * H);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) luma[static_cast<std::size_t>(y) * W + x] = image.luma(x, y);
        auto L = [&](int x, int y) {
            return luma[static_cast<std::size_t>(std::clamp(y, 0, H - 1)) * W + std::clamp(x, 0, W - 1)];
        };
        std::vector<double> out(luma.size());
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const double gx = 0.5 * (L(x + 1, y) - L(x - 1, y));
                const double gy = 0.5 * (L(x, y + 1) - L(x, y - 1));
                out[static_cast<std::size_t>(y) * W + x] = std::sqrt(gx * gx + gy * gy);
            }
        }
        return out;
    }

private:
    CompositionConfig cfg_;
};

inline double composition_score(const ImageRaster& image, const CropWindow& window, const CompositionConfig& cfg = {}) {
    return CompositionScorer(cfg).score(image, window);
}

/// Wraps a scorer and counts invocations for efficiency accounting.
class CountingScorer {
public:
    explicit CountingScorer(const AestheticScorer& inner) : inner_(&inner) {}

    double operator()(const ImageRaster& image, const CropWindow& window) {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return inner_->score(image, window);
    }

    std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
    const AestheticScorer& inner() const { return *inner_; }

private:
    const AestheticScorer* inner_;
    std::atomic<std::uint64_t> calls_{0};
};

inline double score_crop(CountingScorer& scorer, const ImageRaster& image, const CropWindow& window) {
    return scorer(image, window);
}

}  // namespace a2rl
