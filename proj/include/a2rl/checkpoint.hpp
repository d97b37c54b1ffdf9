#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>

#include "a2rl/env.hpp"
#include "a2rl/errors.hpp"
#include "a2rl/io.hpp"
#include "a2rl/net.hpp"
#include "a2rl/run_config.hpp"

namespace a2rl {

// Layout:
//   a2rl-checkpoint
//   version = 1
//   action_table_hash = <16 hex digits>
//   <key = value lines of the RunConfig>
//   tensor <name> <rows> <cols>      (one per tensor, in storage order)
//   data
//   <tensors as little-endian float64, column-major, concatenated>
//   end a2rl-checkpoint
inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "a2rl-checkpoint";
inline constexpr std::string_view kCheckpointFooter = "end a2rl-checkpoint\n";

struct Checkpoint {
    RunConfig config;
    PolicyParams params;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline void put_le_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline double get_le_f64(const char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

}  // namespace detail

/// Serializes params with the run configuration that produced them. The
/// network shape stored in the header is params.config().
inline std::string serialize_checkpoint(const PolicyParams& params, const RunConfig& cfg) {
    RunConfig rc = cfg;
    rc.net = params.config();
    std::string out;
    out += kCheckpointMagic;
    out += "\nversion = " + std::to_string(kCheckpointVersion) + "\n";
    out += "action_table_hash = " + detail::hex64(action_table_hash()) + "\n";
    for (const auto& [k, v] : rc.to_pairs()) {
        if (v.find('\n') != std::string::npos) throw ConfigError(k + ": value contains a newline");
        out += k + " = " + v + "\n";
    }
    for (std::size_t id = 0; id < kNumParamTensors; ++id) {
        out += "tensor " + std::string(kParamNames[id]) + " " + std::to_string(params[id].rows()) + " " +
               std::to_string(params[id].cols()) + "\n";
    }
    out += "data\n";
    for (std::size_t id = 0; id < kNumParamTensors; ++id) {
        const Mat& m = params[id];
        for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_le_f64(out, m.data()[i]);
    }
    out += kCheckpointFooter;
    return out;
}

/// Throws CheckpointMismatch for a foreign version or action table and
/// FormatError for anything structurally wrong.
inline Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "<memory>") {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw FormatError(origin + ": truncated checkpoint header");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    if (next_line() != kCheckpointMagic) throw FormatError(origin + ": not a checkpoint");
    Checkpoint ck;
    bool have_version = false, have_hash = false;
    std::vector<std::pair<std::string, std::pair<long long, long long>>> shapes;
    for (;;) {
        const std::string line = next_line();
        if (line == "data") break;
        if (line.rfind("tensor ", 0) == 0) {
            std::istringstream ss(line.substr(7));
            std::string name;
            long long r = -1, c = -1;
            if (!(ss >> name >> r >> c) || r < 0 || c < 0) throw FormatError(origin + ": bad tensor line '" + line + "'");
            shapes.push_back({name, {r, c}});
            continue;
        }
        std::string key, value;
        try {
            if (!parse_config_line(line, key, value)) continue;
        } catch (const ConfigError&) {
            throw FormatError(origin + ": bad header line '" + line + "'");
        }
        if (key == "version") {
            if (value != std::to_string(kCheckpointVersion)) {
                throw CheckpointMismatch(origin + ": checkpoint version " + value + ", expected " +
                                         std::to_string(kCheckpointVersion));
            }
            have_version = true;
        } else if (key == "action_table_hash") {
            if (value != detail::hex64(action_table_hash())) {
                throw CheckpointMismatch(origin + ": action table hash " + value + " differs from this build (" +
                                         detail::hex64(action_table_hash()) + ")");
            }
            have_hash = true;
        } else {
            try {
                ck.config.set(key, value);
            } catch (const ConfigError& e) {
                throw FormatError(origin + ": " + e.what());
            }
        }
    }
    if (!have_version) throw FormatError(origin + ": missing version");
    if (!have_hash) throw FormatError(origin + ": missing action_table_hash");

    try {
        ck.params = PolicyParams::zeros(ck.config.net);
    } catch (const ConfigError& e) {
        throw FormatError(origin + ": " + e.what());
    }
    if (shapes.size() != kNumParamTensors) throw FormatError(origin + ": expected 13 tensors");
    std::size_t need = 0;
    for (std::size_t id = 0; id < kNumParamTensors; ++id) {
        const Mat& m = ck.params[id];
        if (shapes[id].first != kParamNames[id] || shapes[id].second.first != m.rows() ||
            shapes[id].second.second != m.cols()) {
            throw FormatError(origin + ": tensor " + shapes[id].first + " does not match the header configuration");
        }
        need += static_cast<std::size_t>(m.size()) * 8;
    }
    if (bytes.size() != pos + need + kCheckpointFooter.size() ||
        bytes.compare(pos + need, kCheckpointFooter.size(), kCheckpointFooter) != 0) {
        throw FormatError(origin + ": truncated or trailing checkpoint data");
    }
    for (std::size_t id = 0; id < kNumParamTensors; ++id) {
        Mat& m = ck.params[id];
        for (Eigen::Index i = 0; i < m.size(); ++i, pos += 8) m.data()[i] = detail::get_le_f64(bytes.data() + pos);
    }
    if (!ck.params.all_finite()) throw FormatError(origin + ": non-finite parameter");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params, const RunConfig& cfg) {
    atomic_write_file(path, serialize_checkpoint(params, cfg));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(read_file(path), path.string());
}

}  // namespace a2rl
