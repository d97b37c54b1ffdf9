#pragma once

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "a2rl/errors.hpp"
#include "a2rl/net.hpp"
#include "a2rl/reward.hpp"
#include "a2rl/scorer.hpp"
#include "a2rl/trainer.hpp"

namespace a2rl {

enum class ScorerKind { TargetIou, Composition };

inline std::string_view scorer_name(ScorerKind k) { return k == ScorerKind::TargetIou ? "target-iou" : "composition"; }

inline ScorerKind parse_scorer(std::string_view s) {
    if (s == "target-iou") return ScorerKind::TargetIou;
    if (s == "composition") return ScorerKind::Composition;
    throw ConfigError("unknown scorer '" + std::string(s) + "' (expected target-iou|composition)");
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

/// Shortest %g rendering that parses back to the same double.
inline std::string format_real(double v) {
    char buf[64];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline double parse_real(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return x;
}

inline long long parse_int(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return x;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    char* end = nullptr;
    if (v.empty() || v[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true|false, got '" + v + "'");
}

}  // namespace detail

/// Everything a command needs. Serialized as `key = value` lines, both for
/// config files and for checkpoint headers.
struct RunConfig {
    TrainerConfig trainer;
    RewardConfig reward;
    NetConfig net;
    ScorerKind scorer = ScorerKind::TargetIou;
    CompositionConfig composition;
    ImageDims synthetic{64, 64};  // raster size of hidden-target training scenes
    std::string images;           // directory of training images (composition scorer)
    std::string annotations;
    std::string format = "tsv";  // report layout: tsv | table

    void set(const std::string& key, const std::string& value) {
        using namespace detail;
        const std::string& v = value;
        if (key == "scorer") scorer = parse_scorer(v);
        else if (key == "encoder") net.encoder = parse_encoder(v);
        else if (key == "recurrent") net.recurrent = parse_bool(key, v);
        else if (key == "feature_dim") net.feature_dim = static_cast<int>(parse_int(key, v));
        else if (key == "hidden") net.hidden = static_cast<int>(parse_int(key, v));
        else if (key == "grid") net.grid = static_cast<int>(parse_int(key, v));
        else if (key == "steps") trainer.total_steps = parse_int(key, v);
        else if (key == "seed") trainer.seed = parse_uint(key, v);
        else if (key == "gamma") trainer.gamma = parse_real(key, v);
        else if (key == "beta") trainer.beta = parse_real(key, v);
        else if (key == "tmax") trainer.t_max = static_cast<int>(parse_int(key, v));
        else if (key == "Tmax") trainer.T_max = static_cast<int>(parse_int(key, v));
        else if (key == "lr") trainer.learning_rate = parse_real(key, v);
        else if (key == "batch") trainer.batch_size = static_cast<int>(parse_int(key, v));
        else if (key == "rms_decay") trainer.rms_decay = parse_real(key, v);
        else if (key == "rms_epsilon") trainer.rms_epsilon = parse_real(key, v);
        else if (key == "grad_clip") trainer.grad_clip = parse_real(key, v);
        else if (key == "log_interval") trainer.log_interval = static_cast<int>(parse_int(key, v));
        else if (key == "nr") reward.nr = parse_real(key, v);
        else if (key == "step_penalty") reward.step_penalty_coeff = parse_real(key, v);
        else if (key == "ar_low") reward.ar_low = parse_real(key, v);
        else if (key == "ar_high") reward.ar_high = parse_real(key, v);
        else if (key == "content_weight") composition.content_weight = parse_real(key, v);
        else if (key == "thirds_weight") composition.thirds_weight = parse_real(key, v);
        else if (key == "thirds_sigma") composition.thirds_sigma = parse_real(key, v);
        else if (key == "synthetic_width") synthetic.width = static_cast<int>(parse_int(key, v));
        else if (key == "synthetic_height") synthetic.height = static_cast<int>(parse_int(key, v));
        else if (key == "images") images = v;
        else if (key == "annotations") annotations = v;
        else if (key == "format") format = v;
        else throw ConfigError("unknown config key '" + key + "'");
    }

    /// All fields in a fixed order; reals round-trip exactly.
    std::vector<std::pair<std::string, std::string>> to_pairs() const {
        using detail::format_real;
        return {
            {"scorer", std::string(scorer_name(scorer))},
            {"encoder", std::string(encoder_name(net.encoder))},
            {"recurrent", net.recurrent ? "true" : "false"},
            {"feature_dim", std::to_string(net.feature_dim)},
            {"hidden", std::to_string(net.hidden)},
            {"grid", std::to_string(net.grid)},
            {"steps", std::to_string(trainer.total_steps)},
            {"seed", std::to_string(trainer.seed)},
            {"gamma", format_real(trainer.gamma)},
            {"beta", format_real(trainer.beta)},
            {"tmax", std::to_string(trainer.t_max)},
            {"Tmax", std::to_string(trainer.T_max)},
            {"lr", format_real(trainer.learning_rate)},
            {"batch", std::to_string(trainer.batch_size)},
            {"rms_decay", format_real(trainer.rms_decay)},
            {"rms_epsilon", format_real(trainer.rms_epsilon)},
            {"grad_clip", format_real(trainer.grad_clip)},
            {"log_interval", std::to_string(trainer.log_interval)},
            {"nr", format_real(reward.nr)},
            {"step_penalty", format_real(reward.step_penalty_coeff)},
            {"ar_low", format_real(reward.ar_low)},
            {"ar_high", format_real(reward.ar_high)},
            {"content_weight", format_real(composition.content_weight)},
            {"thirds_weight", format_real(composition.thirds_weight)},
            {"thirds_sigma", format_real(composition.thirds_sigma)},
            {"synthetic_width", std::to_string(synthetic.width)},
            {"synthetic_height", std::to_string(synthetic.height)},
            {"images", images},
            {"annotations", annotations},
            {"format", format},
        };
    }

    EnvConfig env() const {
        EnvConfig e;
        e.max_steps = trainer.T_max;
        return e;
    }

    void validate() const {
        trainer.validate();
        reward.validate();
        net.validate();
        if (synthetic.width < 1 || synthetic.height < 1) throw ConfigError("synthetic image size must be positive");
        if (!(composition.thirds_sigma > 0.0)) throw ConfigError("thirds_sigma must be > 0");
        if (format != "tsv" && format != "table") throw ConfigError("format must be tsv|table");
    }

    friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.to_pairs() == b.to_pairs(); }
};

/// Splits a `key = value` line. Returns false for blank and `#` comment lines.
inline bool parse_config_line(const std::string& raw, std::string& key, std::string& value) {
    const std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') return false;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'");
    key = detail::trim(std::string_view(line).substr(0, eq));
    value = detail::trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key");
    return true;
}

/// Applies a config file on top of `cfg`. Errors name the offending line.
inline void apply_config_stream(RunConfig& cfg, std::istream& in, const std::string& origin = "config") {
    std::string raw, key, value;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        try {
            if (parse_config_line(raw, key, value)) cfg.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

}  // namespace a2rl
