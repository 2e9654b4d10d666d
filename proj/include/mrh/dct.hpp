#ifndef MRH_DCT_HPP
#define MRH_DCT_HPP

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mrh/image.hpp"

namespace mrh {

inline constexpr int kBlockSize = 8;
inline constexpr int kBlockArea = kBlockSize * kBlockSize;
inline constexpr int kFeatureDim = 15;
inline constexpr double kVarianceFloor = 1e-8;

/// One 8x8 pixel block, row-major.
using Block = std::array<double, kBlockArea>;

/// 15 low-frequency DCT coefficients: the top-left 4x4 of the coefficient
/// matrix in row-major order with the (0,0) entry dropped.
using FeatureVector = std::array<double, kFeatureDim>;

struct PositionedFeature {
    int x = 0; // left column of the block in the image
    int y = 0; // top row
    FeatureVector feature{};

    int center_x() const { return x + kBlockSize / 2; }
    int center_y() const { return y + kBlockSize / 2; }
};

/// Zero mean, unit variance (population variance over the 64 pixels).
/// Constant blocks map to all zeros via the variance floor.
inline Block normalize_block(const Block& b, double variance_floor = kVarianceFloor) {
    if (variance_floor <= 0.0) throw std::invalid_argument("variance floor must be positive");
    double mean = 0.0;
    for (double v : b) mean += v;
    mean /= kBlockArea;
    double var = 0.0;
    for (double v : b) var += (v - mean) * (v - mean);
    var /= kBlockArea;
    const double inv_sd = 1.0 / std::sqrt(std::max(var, variance_floor));
    Block out;
    for (int i = 0; i < kBlockArea; ++i) out[i] = (b[i] - mean) * inv_sd;
    return out;
}

namespace detail {

// Orthonormal DCT-II basis: basis[u][x] = a(u) * cos(pi * (2x+1) * u / 16),
// a(0) = sqrt(1/8), a(u>0) = sqrt(2/8).
inline const std::array<std::array<double, kBlockSize>, kBlockSize>& dct_basis() {
    static const auto basis = [] {
        std::array<std::array<double, kBlockSize>, kBlockSize> t{};
        const double pi = std::acos(-1.0);
        for (int u = 0; u < kBlockSize; ++u) {
            double a = u == 0 ? std::sqrt(1.0 / kBlockSize) : std::sqrt(2.0 / kBlockSize);
            for (int x = 0; x < kBlockSize; ++x)
                t[u][x] = a * std::cos(pi * (2 * x + 1) * u / (2.0 * kBlockSize));
        }
        return t;
    }();
    return basis;
}

} // namespace detail

/// Orthonormal type-II 2D DCT of an 8x8 block (separable; energy preserving).
inline Block dct2(const Block& b) {
    const auto& t = detail::dct_basis();
    // rows first: tmp[u][y] = sum_x t[u][x] * b[x][y]
    std::array<std::array<double, kBlockSize>, kBlockSize> tmp{};
    for (int u = 0; u < kBlockSize; ++u)
        for (int y = 0; y < kBlockSize; ++y) {
            double s = 0.0;
            for (int x = 0; x < kBlockSize; ++x) s += t[u][x] * b[x * kBlockSize + y];
            tmp[u][y] = s;
        }
    Block out;
    for (int u = 0; u < kBlockSize; ++u)
        for (int v = 0; v < kBlockSize; ++v) {
            double s = 0.0;
            for (int y = 0; y < kBlockSize; ++y) s += tmp[u][y] * t[v][y];
            out[u * kBlockSize + v] = s;
        }
    return out;
}

/// Keeps the top-left 4x4 coefficients minus (0,0), row-major:
/// (0,1),(0,2),(0,3),(1,0),...,(3,3).
inline FeatureVector select_coeffs(const Block& c) {
    FeatureVector f;
    int k = 0;
    for (int u = 0; u < 4; ++u)
        for (int v = 0; v < 4; ++v) {
            if (u == 0 && v == 0) continue;
            f[k++] = c[u * kBlockSize + v];
        }
    return f;
}

/// Slides 8x8 blocks over the image at the given step, normalizes each block,
/// and keeps its 15 low-frequency DCT coefficients. Blocks are enumerated
/// row-major over (y, x) placements with x + 8 <= width and y + 8 <= height.
inline std::vector<PositionedFeature> extract_features(const GrayImage& img, int step = 4,
                                                       double variance_floor = kVarianceFloor) {
    img.check_shape();
    if (step < 1) throw std::invalid_argument("block step must be >= 1");
    if (img.width < kBlockSize || img.height < kBlockSize)
        throw std::runtime_error("image smaller than " + std::to_string(kBlockSize) + "x" +
                                 std::to_string(kBlockSize) + " block");

    std::vector<PositionedFeature> feats;
    for (int y = 0; y + kBlockSize <= img.height; y += step) {
        for (int x = 0; x + kBlockSize <= img.width; x += step) {
            Block b;
            for (int r = 0; r < kBlockSize; ++r)
                for (int c = 0; c < kBlockSize; ++c)
                    b[r * kBlockSize + c] = img.at(x + c, y + r);
            PositionedFeature pf;
            pf.x = x;
            pf.y = y;
            pf.feature = select_coeffs(dct2(normalize_block(b, variance_floor)));
            feats.push_back(pf);
        }
    }
    return feats;
}

} // namespace mrh

#endif
