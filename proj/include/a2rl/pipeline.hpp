#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "a2rl/errors.hpp"
#include "a2rl/eval.hpp"
#include "a2rl/image.hpp"
#include "a2rl/run_config.hpp"
#include "a2rl/scorer.hpp"
#include "a2rl/trainer.hpp"

namespace a2rl {

/// .pgm/.ppm files of a directory, sorted by name.
inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("images directory not found: " + dir.string());
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::shared_ptr<const AestheticScorer> make_scorer(const RunConfig& cfg) {
    detail::require(cfg.scorer == ScorerKind::Composition, "make_scorer: only the composition scorer is image-generic");
    return std::make_shared<const CompositionScorer>(cfg.composition);
}

/// Hidden-target scenes for target-iou, the images directory for composition.
inline std::shared_ptr<const TaskSource> make_task_source(const RunConfig& cfg) {
    if (cfg.scorer == ScorerKind::TargetIou) return std::make_shared<const HiddenTargetTaskSource>(cfg.synthetic, cfg.reward);
    if (cfg.images.empty()) throw ConfigError("the composition scorer needs an images directory");
    std::vector<std::shared_ptr<const ImageRaster>> images;
    for (const auto& p : list_images(cfg.images)) images.push_back(std::make_shared<const ImageRaster>(load_image(p)));
    if (images.empty()) throw ConfigError("no .pgm/.ppm images in " + cfg.images);
    return std::make_shared<const ImageListTaskSource>(std::move(images), make_scorer(cfg));
}

inline TrainResult train_run(const RunConfig& cfg, const std::function<void(const LogRecord&)>& on_log = {}) {
    cfg.validate();
    return train(cfg.trainer, cfg.reward, cfg.net, make_task_source(cfg), on_log);
}

inline std::string format_log(const std::vector<LogRecord>& log) {
    std::string out;
    for (const auto& r : log) out += format_log_record(r) + "\n";
    return out;
}

/// Reads an annotation file and checks that every image exists and every box
/// fits. Relative image paths resolve against `images_dir`, or against the
/// annotation file's directory when `images_dir` is empty.
struct AnnotatedImage {
    std::filesystem::path path;
    ImageRaster image;
    GroundTruth truth;
};

inline std::vector<AnnotatedImage> load_annotated(const std::filesystem::path& annotations,
                                                  const std::filesystem::path& images_dir = {}) {
    std::ifstream in(annotations);
    if (!in) throw ConfigError("cannot open annotations file " + annotations.string());
    const auto records = parse_annotations(in);
    if (records.empty()) throw FormatError("annotations file " + annotations.string() + " has no records");
    const std::filesystem::path root = images_dir.empty() ? annotations.parent_path() : images_dir;
    std::vector<AnnotatedImage> out;
    for (const auto& rec : records) {
        std::filesystem::path p = rec.image;
        if (p.is_relative()) p = root / p;
        if (!std::filesystem::exists(p)) {
            throw FormatError("annotations line " + std::to_string(rec.line) + ": image not found: " + p.string());
        }
        AnnotatedImage a{p, load_image(p), {}};
        a.truth.dims = a.image.dims();
        for (const auto& b : rec.boxes) {
            if (!box_inside(b, a.truth.dims)) {
                throw FormatError("annotations line " + std::to_string(rec.line) + ": box outside the image");
            }
        }
        a.truth.boxes = rec.boxes;
        out.push_back(std::move(a));
    }
    if (out.size() > 1) {
        for (const auto& a : out) {
            if (a.truth.boxes.size() != out.front().truth.boxes.size()) {
                throw FormatError("annotations: every record needs the same number of boxes");
            }
        }
    }
    return out;
}

/// Greedy agent crop with timing, as one evaluation outcome.
inline CropOutcome agent_outcome(const PolicyParams& params, const ImageRaster& image, const EnvConfig& env) {
    const auto t0 = std::chrono::steady_clock::now();
    const AgentCrop c = agent_crop(params, image, env);
    const auto t1 = std::chrono::steady_clock::now();
    CropOutcome o;
    o.ranked = {to_pixel_rect(c.window, image.dims())};
    o.steps = c.steps;
    o.scorer_calls = static_cast<double>(c.scorer_calls);
    o.seconds = std::chrono::duration<double>(t1 - t0).count();
    return o;
}

inline EvalReport evaluate_agent(const PolicyParams& params, const std::vector<AnnotatedImage>& data,
                                 const EnvConfig& env, std::span<const std::size_t> ks = {}) {
    std::vector<CropOutcome> crops;
    std::vector<GroundTruth> truths;
    for (const auto& a : data) {
        crops.push_back(agent_outcome(params, a.image, env));
        truths.push_back(a.truth);
    }
    return evaluate_dataset(crops, truths, ks);
}

// ---------------------------------------------------------------------------
// Efficiency benchmark

struct BenchRow {
    std::string method;
    double avg_steps = 0.0;  // actions for the agent, windows for a grid
    double avg_scorer_calls = 0.0;
    double avg_seconds = 0.0;
};

/// One image of a benchmark together with the scorer a sliding window uses.
struct BenchItem {
    std::shared_ptr<const ImageRaster> image;
    std::shared_ptr<const AestheticScorer> scorer;
};

inline std::vector<BenchRow> run_bench(const PolicyParams& params, const std::vector<BenchItem>& items,
                                       const std::vector<std::string>& presets, const EnvConfig& env) {
    if (items.empty()) throw ConfigError("benchmark needs at least one image");
    using clock = std::chrono::steady_clock;
    const double n = static_cast<double>(items.size());
    std::vector<BenchRow> rows;

    BenchRow agent{"agent"};
    for (const auto& it : items) {
        const auto t0 = clock::now();
        const AgentCrop c = agent_crop(params, *it.image, env);
        agent.avg_seconds += std::chrono::duration<double>(clock::now() - t0).count();
        agent.avg_steps += c.steps;
        agent.avg_scorer_calls += static_cast<double>(c.scorer_calls);
    }
    rows.push_back(agent);

    for (const auto& name : presets) {
        const GridConfig grid = grid_preset(name);
        BenchRow row{"sliding-" + name};
        for (const auto& it : items) {
            const auto t0 = clock::now();
            const SearchResult s = sliding_window_search(*it.image, *it.scorer, grid);
            row.avg_seconds += std::chrono::duration<double>(clock::now() - t0).count();
            row.avg_steps += static_cast<double>(s.ranked.size());
            row.avg_scorer_calls += static_cast<double>(s.scorer_calls);
        }
        rows.push_back(row);
    }
    for (auto& r : rows) {
        r.avg_steps /= n;
        r.avg_scorer_calls /= n;
        r.avg_seconds /= n;
    }
    return rows;
}

inline std::string format_bench(const std::vector<BenchRow>& rows, bool with_time = true) {
    std::string out = with_time ? "method\tavg_steps\tavg_scorer_calls\tavg_seconds\n" : "method\tavg_steps\tavg_scorer_calls\n";
    char buf[160];
    for (const auto& r : rows) {
        if (with_time) {
            std::snprintf(buf, sizeof buf, "%s\t%.4f\t%.4f\t%.4f\n", r.method.c_str(), r.avg_steps, r.avg_scorer_calls,
                          r.avg_seconds);
        } else {
            std::snprintf(buf, sizeof buf, "%s\t%.4f\t%.4f\n", r.method.c_str(), r.avg_steps, r.avg_scorer_calls);
        }
        out += buf;
    }
    return out;
}

/// Hidden-target benchmark scenes drawn from `seed`, each with its own
/// target-IoU scorer.
inline std::vector<BenchItem> synthetic_bench_items(const RunConfig& cfg, int count, std::uint64_t seed) {
    HiddenTargetTaskSource src(cfg.synthetic, cfg.reward);
    Rng rng(seed);
    std::vector<BenchItem> items;
    for (int i = 0; i < count; ++i) {
        const EpisodeTask t = src.next(rng);
        items.push_back({t.image, t.scorer});
    }
    return items;
}

}  // namespace a2rl
