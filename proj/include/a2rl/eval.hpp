#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "a2rl/env.hpp"
#include "a2rl/errors.hpp"
#include "a2rl/image.hpp"
#include "a2rl/metrics.hpp"
#include "a2rl/net.hpp"
#include "a2rl/rng.hpp"
#include "a2rl/scorer.hpp"

namespace a2rl {

// ---------------------------------------------------------------------------
// Sliding-window baseline

/// Candidate grid: every scale x aspect ratio at every stride offset.
/// An aspect ratio of 0 stands for the image's own ratio. Scales are linear
/// fractions of the image (a window with the image ratio at scale s is s x s
/// in normalized units; other ratios keep the same area).
struct GridConfig {
    std::vector<double> scales;
    std::vector<double> aspect_ratios;
    double stride = 0.1;
};

inline GridConfig grid_preset(std::string_view name) {
    if (name == "default") return {{0.5, 0.6, 0.7, 0.8, 0.9}, {0.0, 1.0, 4.0 / 3.0, 3.0 / 4.0, 16.0 / 9.0}, 0.1};
    if (name == "sparse") return {{0.6, 0.8}, {0.0, 1.0}, 0.2};
    if (name == "dense")
        return {{0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95},
                {0.0, 1.0, 4.0 / 3.0, 3.0 / 4.0, 16.0 / 9.0, 9.0 / 16.0, 3.0 / 2.0, 2.0 / 3.0},
                0.05};
    throw ConfigError("unknown grid preset '" + std::string(name) + "' (expected default|dense|sparse)");
}

/// Windows in generation order (scale, ratio, row, column), clipped to the
/// image and with duplicates removed (first occurrence kept).
inline std::vector<CropWindow> generate_grid(const GridConfig& grid, ImageDims dims) {
    detail::require(grid.stride > 0.0, "generate_grid: stride must be positive");
    detail::require(dims.width > 0 && dims.height > 0, "generate_grid: image dims must be positive");
    const double image_ratio = static_cast<double>(dims.width) / dims.height;
    std::vector<CropWindow> out;
    auto seen = [&out](const CropWindow& c) {
        return std::any_of(out.begin(), out.end(), [&](const CropWindow& o) {
            return std::abs(o.x - c.x) < 1e-9 && std::abs(o.y - c.y) < 1e-9 && std::abs(o.w - c.w) < 1e-9 &&
                   std::abs(o.h - c.h) < 1e-9;
        });
    };
    for (double s : grid.scales) {
        for (double r0 : grid.aspect_ratios) {
            const double r = r0 > 0.0 ? r0 : image_ratio;
            // Same area as an image-ratio window at scale s.
            const double w = std::min(1.0, s * std::sqrt(r / image_ratio));
            const double h = std::min(1.0, s * std::sqrt(image_ratio / r));
            for (int j = 0; j * grid.stride + h <= 1.0 + 1e-9; ++j) {
                for (int i = 0; i * grid.stride + w <= 1.0 + 1e-9; ++i) {
                    CropWindow c{std::min(i * grid.stride, 1.0 - w), std::min(j * grid.stride, 1.0 - h), w, h};
                    if (!seen(c)) out.push_back(c);
                }
            }
        }
    }
    return out;
}

struct RankedCrop {
    CropWindow window;
    double score = 0.0;
};

struct SearchResult {
    std::vector<RankedCrop> ranked;  // score descending, ties in generation order
    std::uint64_t scorer_calls = 0;
};

inline SearchResult sliding_window_search(const ImageRaster& image, const AestheticScorer& scorer, const GridConfig& grid) {
    const auto windows = generate_grid(grid, image.dims());
    detail::require(!windows.empty(), "sliding_window_search: grid produced no windows");
    CountingScorer counter(scorer);
    SearchResult res;
    res.ranked.reserve(windows.size());
    for (const auto& w : windows) res.ranked.push_back({w, score_crop(counter, image, w)});
    std::stable_sort(res.ranked.begin(), res.ranked.end(),
                     [](const RankedCrop& a, const RankedCrop& b) { return a.score > b.score; });
    res.scorer_calls = counter.calls();
    return res;
}

// ---------------------------------------------------------------------------
// Agent inference

struct AgentCrop {
    CropWindow window;
    int steps = 0;
    std::uint64_t scorer_calls = 0;  // inference never consults the scorer
    std::vector<Action> actions;
};

/// Argmax over the actions that change the window, plus termination. A
/// deterministic policy would otherwise repeat a clamped move until the cap.
inline Action greedy_effective_action(const std::array<double, kNumActions>& probs, const CropWindow& win,
                                      const EnvConfig& env = {}) {
    std::array<double, kNumActions> masked = probs;
    for (int a = 0; a < kNumActions; ++a) {
        const Action act = action_from_id(a);
        if (act != Action::Terminate && apply_action(win, act, env) == win) masked[static_cast<std::size_t>(a)] = -1.0;
    }
    return greedy_action(masked);
}

/// Greedy rollout from the full image until the termination action or the
/// step cap. With mask_noops, actions that leave the window unchanged are
/// never chosen.
inline AgentCrop agent_crop(const PolicyParams& params, const ImageRaster& image, const EnvConfig& env = {},
                            bool mask_noops = true) {
    EpisodeState st = start_episode(image.dims());
    RecurrentState memory = RecurrentState::zeros(params.config());
    GlobalFeatureCache global;
    AgentCrop out;
    while (!st.terminated) {
        const Observation obs = encode_observation(params, image, st.window, global);
        PolicyOutput po = forward(params, memory, obs);
        const Action a = mask_noops ? greedy_effective_action(po.probs, st.window, env) : greedy_action(po.probs);
        out.actions.push_back(a);
        st = episode_step(st, a, env);
        memory = std::move(po.next_state);
    }
    out.window = st.window;
    out.steps = st.t;
    return out;
}

/// Uniform-random policy over all 14 actions, the untrained reference.
inline AgentCrop random_policy_crop(const ImageRaster& image, Rng& rng, const EnvConfig& env = {}) {
    EpisodeState st = start_episode(image.dims());
    AgentCrop out;
    while (!st.terminated) {
        const Action a = action_from_id(static_cast<int>(rng.below(kNumActions)));
        out.actions.push_back(a);
        st = episode_step(st, a, env);
    }
    out.window = st.window;
    out.steps = st.t;
    return out;
}

// ---------------------------------------------------------------------------
// Dataset evaluation

struct GroundTruth {
    ImageDims dims;
    std::vector<PixelRect> boxes;  // one per annotator
};

/// One method's result on one image.
struct CropOutcome {
    std::vector<PixelRect> ranked;  // best first; the first one is "the" crop
    double steps = 0.0;
    double scorer_calls = 0.0;
    double seconds = 0.0;
};

struct EvalReport {
    std::size_t images = 0;
    std::vector<double> avg_iou;   // per annotator
    std::vector<double> avg_disp;  // per annotator
    std::vector<std::pair<std::size_t, double>> topk_max_iou;
    double avg_steps = 0.0;
    double avg_scorer_calls = 0.0;
    double avg_seconds = 0.0;
};

inline EvalReport evaluate_dataset(std::span<const CropOutcome> crops, std::span<const GroundTruth> truths,
                                   std::span<const std::size_t> ks = std::span<const std::size_t>{}) {
    if (crops.empty()) throw ContractViolation("evaluate_dataset: empty dataset");
    detail::require(crops.size() == truths.size(), "evaluate_dataset: crops and ground truth misaligned");
    const std::size_t annotators = truths.front().boxes.size();
    detail::require(annotators > 0, "evaluate_dataset: every image needs a ground-truth window");
    for (std::size_t i = 0; i < truths.size(); ++i) {
        detail::require(truths[i].boxes.size() == annotators, "evaluate_dataset: annotator count differs across images");
        detail::require(!crops[i].ranked.empty(), "evaluate_dataset: missing crop");
    }

    EvalReport rep;
    rep.images = crops.size();
    rep.avg_iou.assign(annotators, 0.0);
    rep.avg_disp.assign(annotators, 0.0);
    std::vector<std::size_t> k_list(ks.begin(), ks.end());
    if (k_list.empty()) k_list.push_back(1);
    for (std::size_t k : k_list) rep.topk_max_iou.emplace_back(k, 0.0);

    for (std::size_t i = 0; i < crops.size(); ++i) {
        const auto& gt = truths[i];
        const PixelRect& crop = crops[i].ranked.front();
        for (std::size_t j = 0; j < annotators; ++j) {
            rep.avg_iou[j] += iou(crop, gt.boxes[j]);
            rep.avg_disp[j] += boundary_displacement(crop, gt.boxes[j], gt.dims);
        }
        for (auto& [k, v] : rep.topk_max_iou) v += topk_max_iou(crops[i].ranked, gt.boxes, k);
        rep.avg_steps += crops[i].steps;
        rep.avg_scorer_calls += crops[i].scorer_calls;
        rep.avg_seconds += crops[i].seconds;
    }
    const double n = static_cast<double>(crops.size());
    for (auto& v : rep.avg_iou) v /= n;
    for (auto& v : rep.avg_disp) v /= n;
    for (auto& kv : rep.topk_max_iou) kv.second /= n;
    rep.avg_steps /= n;
    rep.avg_scorer_calls /= n;
    rep.avg_seconds /= n;
    return rep;
}

/// Tab-separated header + one row, four decimals. Multi-annotator reports get
/// one avg_iou/avg_disp column pair per annotator.
inline std::string format_report(const EvalReport& rep, std::string_view method, bool with_time = true) {
    auto fmt4 = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f", v);
        return std::string(buf);
    };
    std::string header = "method";
    std::string row(method);
    const bool multi = rep.avg_iou.size() > 1;
    for (std::size_t j = 0; j < rep.avg_iou.size(); ++j) {
        const std::string suffix = multi ? "_" + std::to_string(j + 1) : "";
        header += "\tavg_iou" + suffix + "\tavg_disp" + suffix;
        row += "\t" + fmt4(rep.avg_iou[j]) + "\t" + fmt4(rep.avg_disp[j]);
    }
    for (const auto& [k, v] : rep.topk_max_iou) {
        header += "\ttop" + std::to_string(k) + "_max_iou";
        row += "\t" + fmt4(v);
    }
    header += "\tavg_steps\tavg_scorer_calls";
    row += "\t" + fmt4(rep.avg_steps) + "\t" + fmt4(rep.avg_scorer_calls);
    if (with_time) {
        header += "\tavg_seconds";
        row += "\t" + fmt4(rep.avg_seconds);
    }
    return header + "\n" + row + "\n";
}

// ---------------------------------------------------------------------------
// Annotation files

struct AnnotationRecord {
    std::string image;
    std::vector<PixelRect> boxes;
    int line = 0;
};

/// One record per line: image path, then 4K integers (left top width height
/// per annotator), all tab-separated. Blank lines are skipped.
inline std::vector<AnnotationRecord> parse_annotations(std::istream& in) {
    std::vector<AnnotationRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto fail = [lineno](const std::string& why) {
            return FormatError("annotations line " + std::to_string(lineno) + ": " + why);
        };
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() < 5 || (fields.size() - 1) % 4 != 0) {
            throw fail("expected an image path followed by 4K integers");
        }
        AnnotationRecord rec;
        rec.image = fields[0];
        rec.line = lineno;
        if (rec.image.empty()) throw fail("empty image path");
        std::vector<int> nums;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            std::size_t used = 0;
            int v = 0;
            try {
                v = std::stoi(fields[i], &used);
            } catch (const std::exception&) {
                throw fail("'" + fields[i] + "' is not an integer");
            }
            if (used != fields[i].size()) throw fail("'" + fields[i] + "' is not an integer");
            nums.push_back(v);
        }
        for (std::size_t i = 0; i < nums.size(); i += 4) {
            PixelRect r{nums[i], nums[i + 1], nums[i + 2], nums[i + 3]};
            if (r.left < 0 || r.top < 0 || r.width <= 0 || r.height <= 0) throw fail("box must have non-negative origin and positive size");
            rec.boxes.push_back(r);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

inline bool box_inside(const PixelRect& r, ImageDims dims) {
    return r.left >= 0 && r.top >= 0 && r.width > 0 && r.height > 0 && r.left + r.width <= dims.width &&
           r.top + r.height <= dims.height;
}

}  // namespace a2rl
