#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "a2rl/env.hpp"
#include "a2rl/errors.hpp"

namespace a2rl {

/// Row-major raster with interleaved channels and intensities in [0, 1].
class ImageRaster {
public:
    ImageRaster() = default;

    ImageRaster(int width, int height, int channels, double fill = 0.0)
        : width_(width), height_(height), channels_(channels) {
        detail::require(width > 0 && height > 0, "ImageRaster: dimensions must be positive");
        detail::require(channels == 1 || channels == 3, "ImageRaster: channels must be 1 or 3");
        data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
    }

    ImageRaster(int width, int height, int channels, std::vector<double> data)
        : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
        detail::require(width > 0 && height > 0, "ImageRaster: dimensions must be positive");
        detail::require(channels == 1 || channels == 3, "ImageRaster: channels must be 1 or 3");
        detail::require(data_.size() == static_cast<std::size_t>(width) * height * channels,
                        "ImageRaster: payload size does not match dimensions");
        for (double v : data_) {
            detail::require(v >= 0.0 && v <= 1.0, "ImageRaster: intensities must lie in [0,1]");
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    ImageDims dims() const { return {width_, height_}; }
    bool empty() const { return data_.empty(); }

    double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
    double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }

    /// Rec. 601 luma for color rasters; the single channel otherwise.
    double luma(int x, int y) const {
        if (channels_ == 1) return at(x, y);
        return 0.299 * at(x, y, 0) + 0.587 * at(x, y, 1) + 0.114 * at(x, y, 2);
    }

    const std::vector<double>& data() const { return data_; }

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::vector<double> data_;
};

namespace detail {

struct NetpbmHeader {
    int channels = 0;
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::size_t payload_offset = 0;
};

inline NetpbmHeader parse_netpbm_header(const std::string& bytes, const std::string& origin) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw FormatError(origin + ": not a binary PGM (P5) or PPM (P6) file");
    }
    NetpbmHeader hdr;
    hdr.channels = bytes[1] == '5' ? 1 : 3;

    std::size_t pos = 2;
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
    auto next_int = [&]() -> int {
        for (;;) {
            while (pos < bytes.size() && is_space(bytes[pos])) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n' && bytes[pos] != '\r') ++pos;
                continue;
            }
            break;
        }
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') {
            throw FormatError(origin + ": truncated or malformed header");
        }
        long long v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos] - '0');
            if (v > (1LL << 30)) throw FormatError(origin + ": header value too large");
            ++pos;
        }
        return static_cast<int>(v);
    };
    hdr.width = next_int();
    hdr.height = next_int();
    hdr.maxval = next_int();
    // Exactly one whitespace byte separates maxval from the raster.
    if (pos >= bytes.size() || !is_space(bytes[pos])) {
        throw FormatError(origin + ": missing whitespace after maxval");
    }
    hdr.payload_offset = pos + 1;

    if (hdr.width <= 0 || hdr.height <= 0) {
        throw FormatError(origin + ": image dimensions must be positive");
    }
    if (hdr.maxval <= 0 || hdr.maxval > 255) {
        throw FormatError(origin + ": maxval must be in 1..255, got " + std::to_string(hdr.maxval));
    }
    return hdr;
}

}  // namespace detail

/// Decodes a P5/P6 byte buffer; trailing bytes beyond the raster are ignored.
inline ImageRaster decode_netpbm(const std::string& bytes, const std::string& origin = "<memory>") {
    const auto hdr = detail::parse_netpbm_header(bytes, origin);
    const std::size_t count = static_cast<std::size_t>(hdr.width) * hdr.height * hdr.channels;
    if (bytes.size() - hdr.payload_offset < count) {
        throw FormatError(origin + ": payload shorter than " + std::to_string(hdr.width) + "x" +
                          std::to_string(hdr.height) + " raster");
    }
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto v = static_cast<unsigned char>(bytes[hdr.payload_offset + i]);
        if (v > hdr.maxval) {
            throw FormatError(origin + ": sample exceeds maxval");
        }
        data[i] = static_cast<double>(v) / hdr.maxval;
    }
    return ImageRaster(hdr.width, hdr.height, hdr.channels, std::move(data));
}

inline ImageRaster load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(path.string() + ": cannot open file");
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_netpbm(bytes, path.string());
}

/// Encodes with maxval 255 (P5 for gray, P6 for color).
inline std::string encode_netpbm(const ImageRaster& img) {
    std::string out = (img.channels() == 1 ? "P5\n" : "P6\n") + std::to_string(img.width()) + " " +
                      std::to_string(img.height()) + "\n255\n";
    out.reserve(out.size() + img.data().size());
    for (double v : img.data()) {
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
    return out;
}

inline ImageRaster crop_image(const ImageRaster& img, const PixelRect& r) {
    detail::require(r.left >= 0 && r.top >= 0 && r.width > 0 && r.height > 0 &&
                        r.left + r.width <= img.width() && r.top + r.height <= img.height(),
                    "crop_image: rectangle outside image");
    ImageRaster out(r.width, r.height, img.channels());
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                out.at(x, y, c) = img.at(r.left + x, r.top + y, c);
            }
        }
    }
    return out;
}

/// Box-filter resample of the window's luma onto a grid x grid lattice. Each
/// cell is the exact area-weighted mean of the pixels it covers, with the
/// window taken in continuous pixel coordinates.
inline std::vector<double> area_average_grid(const ImageRaster& img, const CropWindow& win, int grid) {
    detail::require(grid > 0, "area_average_grid: grid must be positive");
    const double x0 = win.x * img.width();
    const double y0 = win.y * img.height();
    const double cw = win.w * img.width() / grid;
    const double ch = win.h * img.height() / grid;

    // Per-axis overlap weights of cell k with pixel p.
    auto weights = [grid](double origin, double cell, int limit) {
        std::vector<std::vector<std::pair<int, double>>> out(static_cast<std::size_t>(grid));
        for (int k = 0; k < grid; ++k) {
            const double a = origin + k * cell;
            const double b = a + cell;
            const int p0 = std::max(0, static_cast<int>(std::floor(a)));
            const int p1 = std::min(limit - 1, static_cast<int>(std::ceil(b)) - 1);
            for (int p = p0; p <= p1; ++p) {
                const double ov = std::min(b, p + 1.0) - std::max(a, static_cast<double>(p));
                if (ov > 0) out[static_cast<std::size_t>(k)].emplace_back(p, ov);
            }
            if (out[static_cast<std::size_t>(k)].empty()) {
                // Degenerate sub-pixel cell: sample the nearest pixel.
                const int p = std::clamp(static_cast<int>(std::floor(a)), 0, limit - 1);
                out[static_cast<std::size_t>(k)].emplace_back(p, 1.0);
            }
        }
        return out;
    };
    const auto wx = weights(x0, cw, img.width());
    const auto wy = weights(y0, ch, img.height());

    std::vector<double> out(static_cast<std::size_t>(grid) * grid, 0.0);
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            double acc = 0.0;
            double mass = 0.0;
            for (const auto& [py, vy] : wy[static_cast<std::size_t>(gy)]) {
                for (const auto& [px, vx] : wx[static_cast<std::size_t>(gx)]) {
                    acc += vx * vy * img.luma(px, py);
                    mass += vx * vy;
                }
            }
            out[static_cast<std::size_t>(gy) * grid + gx] = acc / mass;
        }
    }
    return out;
}

}  // namespace a2rl
