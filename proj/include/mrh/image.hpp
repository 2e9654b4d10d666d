#ifndef MRH_IMAGE_HPP
#define MRH_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrh/binary_io.hpp"

namespace mrh {

/// Grayscale image with real-valued intensities in [0, 1], row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const GrayImage&) const = default;

    void check_shape() const {
        if (width < 1 || height < 1)
            throw std::invalid_argument("image has zero dimension");
        if (pixels.size() != static_cast<std::size_t>(width) * height)
            throw std::invalid_argument("image pixel count does not match dimensions");
    }
};

namespace detail {

inline bool pgm_is_space(std::uint8_t c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}

// Skips whitespace and '#' comment lines between header tokens.
inline void pgm_skip(std::span<const std::uint8_t> d, std::size_t& pos) {
    while (pos < d.size()) {
        if (pgm_is_space(d[pos])) {
            ++pos;
        } else if (d[pos] == '#') {
            while (pos < d.size() && d[pos] != '\n') ++pos;
        } else {
            return;
        }
    }
}

inline long pgm_uint(std::span<const std::uint8_t> d, std::size_t& pos, const char* what) {
    pgm_skip(d, pos);
    if (pos >= d.size() || d[pos] < '0' || d[pos] > '9')
        throw std::runtime_error(std::string("PGM header: expected ") + what);
    long v = 0;
    while (pos < d.size() && d[pos] >= '0' && d[pos] <= '9') {
        v = v * 10 + (d[pos] - '0');
        if (v > 1000000000L) throw std::runtime_error(std::string("PGM header: ") + what + " out of range");
        ++pos;
    }
    return v;
}

} // namespace detail

/// Parses a binary PGM (P5, maxval 255). Intensities are scaled to [0, 1].
inline GrayImage load_pgm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw std::runtime_error("unsupported image format: not a binary PGM (P5)");
    std::size_t pos = 2;
    long w = detail::pgm_uint(bytes, pos, "width");
    long h = detail::pgm_uint(bytes, pos, "height");
    long maxval = detail::pgm_uint(bytes, pos, "maxval");
    if (w < 1 || h < 1) throw std::runtime_error("PGM header: zero dimension");
    if (maxval != 255) throw std::runtime_error("PGM header: unsupported maxval " + std::to_string(maxval));
    if (pos >= bytes.size() || !detail::pgm_is_space(bytes[pos]))
        throw std::runtime_error("PGM header: missing separator before pixel data");
    ++pos; // single whitespace byte separates header from payload

    const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() - pos < count)
        throw std::runtime_error("PGM: truncated pixel data (expected " + std::to_string(count) +
                                 " bytes, got " + std::to_string(bytes.size() - pos) + ")");
    GrayImage img;
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.pixels.resize(count);
    for (std::size_t i = 0; i < count; ++i) img.pixels[i] = bytes[pos + i] / 255.0;
    return img;
}

/// Serializes to binary PGM; intensities quantized to 1/255 steps, round half up.
inline Bytes save_pgm(const GrayImage& img) {
    img.check_shape();
    std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.reserve(out.size() + img.pixels.size());
    for (double v : img.pixels) {
        double q = std::floor(v * 255.0 + 0.5);
        q = std::clamp(q, 0.0, 255.0);
        out.push_back(static_cast<std::uint8_t>(q));
    }
    return out;
}

inline GrayImage load_pgm_file(const std::filesystem::path& path) {
    try {
        return load_pgm(read_file(path));
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

inline void save_pgm_file(const GrayImage& img, const std::filesystem::path& path) {
    write_file_atomic(path, save_pgm(img));
}

/// Bilinear resampling with half-pixel-center alignment: output pixel i samples
/// source coordinate (i + 0.5) * in/out - 0.5, clamped to the source range.
inline GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
    img.check_shape();
    if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize: zero output dimension");

    GrayImage out;
    out.width = out_w;
    out.height = out_h;
    out.pixels.resize(static_cast<std::size_t>(out_w) * out_h);

    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, img.height - 1);
        double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, img.width - 1);
            double wx = fx - x0;
            double top = (1.0 - wx) * img.at(x0, y0) + wx * img.at(x1, y0);
            double bot = (1.0 - wx) * img.at(x0, y1) + wx * img.at(x1, y1);
            out.at(ox, oy) = std::clamp((1.0 - wy) * top + wy * bot, 0.0, 1.0);
        }
    }
    return out;
}

/// Resolution degradation: downscale to r x r, then upscale back to the
/// canonical size. The result has the canonical pixel dimensions but an
/// underlying resolution of r.
inline GrayImage degrade(const GrayImage& img, int r, int canonical = 64) {
    if (r < 1) throw std::invalid_argument("degrade: resolution must be >= 1");
    if (r > canonical)
        throw std::invalid_argument("degrade: resolution " + std::to_string(r) +
                                    " exceeds canonical size " + std::to_string(canonical));
    return resize_bilinear(resize_bilinear(img, r, r), canonical, canonical);
}

} // namespace mrh

#endif
