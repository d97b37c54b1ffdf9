// a2rl: train, crop, eval and bench front end.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "a2rl/checkpoint.hpp"
#include "a2rl/errors.hpp"
#include "a2rl/eval.hpp"
#include "a2rl/image.hpp"
#include "a2rl/io.hpp"
#include "a2rl/pipeline.hpp"
#include "a2rl/run_config.hpp"

namespace fs = std::filesystem;
using namespace a2rl;

namespace {

enum Exit { kOk = 0, kFailure = 1, kInputError = 2, kNumericAbort = 3, kMismatch = 4 };

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("a2rl");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* lvl = std::getenv("A2RL_LOG")) {
        const auto parsed = spdlog::level::from_str(lvl);
        // from_str maps unknown names to "off"; only honor a real "off".
        if (parsed != spdlog::level::off || std::string(lvl) == "off") spdlog::set_level(parsed);
        else spdlog::warn("A2RL_LOG={} not recognized; using info", lvl);
    }
}

/// Flags that map one-to-one onto RunConfig keys. Values are applied after
/// the config file, so flags win.
struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values;
    bool no_recurrent = false;

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        app->add_option(flag, values[key], help);
        keys_.push_back({flag, key});
    }

    void add_config_file(CLI::App* app) {
        app->add_option("--config", config_file, "key = value config file (flags override it)")->check(CLI::ExistingFile);
    }

    RunConfig resolve(CLI::App* app, RunConfig cfg) const {
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw ConfigError("cannot open config file " + config_file);
            apply_config_stream(cfg, in, config_file);
        }
        for (const auto& [flag, key] : keys_) {
            if (app->count(flag) > 0) cfg.set(key, values.at(key));
        }
        if (no_recurrent) cfg.net.recurrent = false;
        cfg.validate();
        return cfg;
    }

private:
    std::vector<std::pair<std::string, std::string>> keys_;
};

Checkpoint load_checked(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
    return load_checkpoint(path);
}

std::string as_table(const std::string& tsv) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(tsv);
    std::string line;
    std::vector<std::size_t> widths;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, '\t')) cells.push_back(cell);
        if (widths.size() < cells.size()) widths.resize(cells.size(), 0);
        for (std::size_t i = 0; i < cells.size(); ++i) widths[i] = std::max(widths[i], cells[i].size());
        rows.push_back(std::move(cells));
    }
    std::string out;
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            out += r[i];
            if (i + 1 < r.size()) out += std::string(widths[i] - r[i].size() + 2, ' ');
        }
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    ConfigFlags flags;
    std::string out;
    std::string log;
};

int cmd_train(CLI::App* app, const TrainArgs& a) {
    const RunConfig cfg = a.flags.resolve(app, RunConfig{});
    if (cfg.scorer == ScorerKind::Composition && !cfg.images.empty() && !fs::is_directory(cfg.images)) {
        throw ConfigError("images directory not found: " + cfg.images);
    }
    const std::string log_path = a.log.empty() ? a.out + ".log" : a.log;
    spdlog::info("training: scorer={} encoder={} steps={} batch={} seed={}", scorer_name(cfg.scorer),
                 encoder_name(cfg.net.encoder), cfg.trainer.total_steps, cfg.trainer.batch_size, cfg.trainer.seed);
    const TrainResult res = train_run(cfg, [](const LogRecord& r) { spdlog::debug("{}", format_log_record(r)); });
    save_checkpoint(a.out, res.params, cfg);
    atomic_write_file(log_path, format_log(res.log));
    if (!res.log.empty()) {
        const auto& last = res.log.back();
        spdlog::info("done: step {} mean reward {:.4f} mean length {:.2f} mean final score {:.4f}", last.step,
                     last.mean_reward, last.mean_length, last.mean_final_score);
    }
    spdlog::info("wrote {} and {}", a.out, log_path);
    return kOk;
}

struct CropArgs {
    std::string checkpoint;
    std::string image;
    std::string emit_image;
};

int cmd_crop(const CropArgs& a) {
    const Checkpoint ck = load_checked(a.checkpoint);
    if (!fs::exists(a.image)) throw ConfigError("image not found: " + a.image);
    const ImageRaster img = load_image(a.image);
    const AgentCrop c = agent_crop(ck.params, img, ck.config.env());
    const PixelRect r = to_pixel_rect(c.window, img.dims());
    if (!a.emit_image.empty()) atomic_write_file(a.emit_image, encode_netpbm(crop_image(img, r)));
    std::cout << r.left << ' ' << r.top << ' ' << r.width << ' ' << r.height << '\n';
    std::cerr << "steps " << c.steps << '\n';
    return kOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string annotations;
    std::string images;
    std::string format;
    std::vector<std::size_t> topk{1};
    bool no_time = false;
};

int cmd_eval(const EvalArgs& a) {
    const Checkpoint ck = load_checked(a.checkpoint);
    const auto data = load_annotated(a.annotations, a.images);
    const EvalReport rep = evaluate_agent(ck.params, data, ck.config.env(), a.topk);
    const std::string tsv = format_report(rep, "agent", !a.no_time);
    const std::string fmt = a.format.empty() ? ck.config.format : a.format;
    std::cout << (fmt == "table" ? as_table(tsv) : tsv);
    return kOk;
}

struct BenchArgs {
    std::string checkpoint;
    std::string images;
    std::vector<std::string> grids;
    int count = 50;
    std::uint64_t seed = 1;
    bool no_time = false;
};

int cmd_bench(const BenchArgs& a) {
    const Checkpoint ck = load_checked(a.checkpoint);
    std::vector<BenchItem> items;
    if (a.images.empty()) {
        items = synthetic_bench_items(ck.config, a.count, a.seed);
    } else {
        RunConfig cfg = ck.config;
        const auto scorer = std::make_shared<const CompositionScorer>(cfg.composition);
        for (const auto& p : list_images(a.images)) items.push_back({std::make_shared<const ImageRaster>(load_image(p)), scorer});
        if (items.empty()) throw ConfigError("no .pgm/.ppm images in " + a.images);
    }
    std::vector<std::string> grids = a.grids.empty() ? std::vector<std::string>{"sparse", "default", "dense"} : a.grids;
    for (const auto& g : grids) grid_preset(g);  // validate names before running
    std::cout << format_bench(run_bench(ck.params, items, grids, ck.config.env()), !a.no_time);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Sequential aesthetic image cropping with a recurrent actor-critic agent"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train a policy and write a checkpoint");
    {
        auto& f = train_args.flags;
        f.add_config_file(train);
        f.add(train, "--scorer", "scorer", "target-iou | composition");
        f.add(train, "--encoder", "encoder", "pixel | coordinate");
        f.add(train, "--steps", "steps", "lockstep environment steps (each advances every stream)");
        f.add(train, "--seed", "seed", "random seed");
        f.add(train, "--nr", "nr", "aspect-ratio penalty (0 disables)");
        f.add(train, "--gamma", "gamma", "discount");
        f.add(train, "--beta", "beta", "entropy weight");
        f.add(train, "--tmax", "tmax", "update period");
        f.add(train, "--Tmax", "Tmax", "episode step cap");
        f.add(train, "--lr", "lr", "learning rate");
        f.add(train, "--batch", "batch", "parallel episode streams");
        f.add(train, "--hidden", "hidden", "hidden units");
        f.add(train, "--feature-dim", "feature_dim", "global/local feature length");
        f.add(train, "--grad-clip", "grad_clip", "mean-gradient norm clip (0 disables)");
        f.add(train, "--images", "images", "training images directory (composition scorer)");
        train->add_flag("--no-recurrent", f.no_recurrent, "disable the recurrent cell");
        train->add_option("--out", train_args.out, "checkpoint path")->required();
        train->add_option("--log", train_args.log, "training log path (default: <out>.log)");
    }

    CropArgs crop_args;
    auto* crop = app.add_subcommand("crop", "crop one image with a trained policy");
    crop->add_option("--checkpoint", crop_args.checkpoint, "checkpoint path")->required();
    crop->add_option("image", crop_args.image, "PGM/PPM image")->required();
    crop->add_option("--emit-image", crop_args.emit_image, "also write the cropped raster here");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "evaluate crops against annotations");
    eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint path")->required();
    eval->add_option("--annotations", eval_args.annotations, "annotation file")->required();
    eval->add_option("--images", eval_args.images, "root for relative image paths (default: annotation dir)");
    eval->add_option("--format", eval_args.format, "tsv | table")->check(CLI::IsMember({"tsv", "table"}));
    eval->add_option("--topk", eval_args.topk, "K values for top-K max IoU");
    eval->add_flag("--no-time", eval_args.no_time, "omit the wall-clock column");

    BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench", "agent steps vs sliding-window candidate counts");
    bench->add_option("--checkpoint", bench_args.checkpoint, "checkpoint path")->required();
    bench->add_option("--images", bench_args.images, "images scored by the composition scorer (default: hidden-target scenes)");
    bench->add_option("--grid", bench_args.grids, "grid preset(s): default | dense | sparse")
        ->check(CLI::IsMember({"default", "dense", "sparse"}));
    bench->add_option("--count", bench_args.count, "hidden-target scenes when no images are given")->check(CLI::PositiveNumber);
    bench->add_option("--seed", bench_args.seed, "seed for hidden-target scenes");
    bench->add_flag("--no-time", bench_args.no_time, "omit the wall-clock column");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kInputError;
    }

    try {
        if (train->parsed()) return cmd_train(train, train_args);
        if (crop->parsed()) return cmd_crop(crop_args);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (bench->parsed()) return cmd_bench(bench_args);
    } catch (const CheckpointMismatch& e) {
        spdlog::error("{}", e.what());
        return kMismatch;
    } catch (const NumericAbort& e) {
        spdlog::error("{}", e.what());
        return kNumericAbort;
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return kInputError;
    } catch (const FormatError& e) {
        spdlog::error("{}", e.what());
        return kInputError;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kFailure;
    }
    return kFailure;
}
