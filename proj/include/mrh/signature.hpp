#ifndef MRH_SIGNATURE_HPP
#define MRH_SIGNATURE_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrh/binary_io.hpp"
#include "mrh/dct.hpp"
#include "mrh/gmm.hpp"
#include "mrh/image.hpp"

namespace mrh {

/// Geometry of signature extraction: the intermediate-format size the face is
/// rescaled to, the region grid, and the block step. dict_id pins the
/// dictionary the signature is built against (0 = take it from the
/// dictionary passed to build_signature).
struct SignatureConfig {
    int if_size = 64;
    int region_rows = 3;
    int region_cols = 3;
    int step = 4;
    std::uint64_t dict_id = 0;

    void validate() const {
        if (if_size < kBlockSize)
            throw std::invalid_argument("intermediate format size must be >= " + std::to_string(kBlockSize));
        if (region_rows < 1 || region_cols < 1) throw std::invalid_argument("region grid must be >= 1x1");
        if (step < 1) throw std::invalid_argument("block step must be >= 1");
        // every region must receive at least one block center
        std::vector<char> row_hit(region_rows, 0), col_hit(region_cols, 0);
        for (int x = 0; x + kBlockSize <= if_size; x += step) {
            const int cx = x + kBlockSize / 2;
            col_hit[static_cast<std::size_t>(cx) * region_cols / if_size] = 1;
            row_hit[static_cast<std::size_t>(cx) * region_rows / if_size] = 1;
        }
        for (int r = 0; r < region_rows; ++r)
            if (!row_hit[r])
                throw std::invalid_argument("region row " + std::to_string(r) +
                                            " receives no block centers with this geometry");
        for (int c = 0; c < region_cols; ++c)
            if (!col_hit[c])
                throw std::invalid_argument("region column " + std::to_string(c) +
                                            " receives no block centers with this geometry");
    }

    std::uint64_t hash_with(std::uint64_t dictionary_id) const {
        ByteWriter w;
        w.u32(static_cast<std::uint32_t>(if_size));
        w.u32(static_cast<std::uint32_t>(region_rows));
        w.u32(static_cast<std::uint32_t>(region_cols));
        w.u32(static_cast<std::uint32_t>(step));
        w.u64(dictionary_id);
        return fnv1a(w.bytes());
    }

    bool operator==(const SignatureConfig&) const = default;
};

/// Region index for a block center: row-major over the region grid.
inline int assign_region(int center_x, int center_y, const SignatureConfig& cfg) {
    if (center_x < 0 || center_x >= cfg.if_size || center_y < 0 || center_y >= cfg.if_size)
        throw std::invalid_argument("block center (" + std::to_string(center_x) + "," +
                                    std::to_string(center_y) + ") outside the intermediate format");
    const int row = static_cast<int>(static_cast<std::size_t>(center_y) * cfg.region_rows / cfg.if_size);
    const int col = static_cast<int>(static_cast<std::size_t>(center_x) * cfg.region_cols / cfg.if_size);
    return row * cfg.region_cols + col;
}

/// Per-face descriptor: one averaged posterior histogram per region,
/// flattened row-major as data[region * components + g].
struct FaceSignature {
    int regions = 0;
    int components = 0;
    std::uint64_t config_id = 0;
    std::vector<double> data;

    std::span<const double> region(int r) const {
        return {data.data() + static_cast<std::size_t>(r) * components,
                static_cast<std::size_t>(components)};
    }

    bool operator==(const FaceSignature&) const = default;
};

/// Rescales the image to the intermediate format, extracts block features,
/// converts each to a posterior histogram, and averages histograms per
/// region (blocks are assigned to regions by their centers).
inline FaceSignature build_signature(const GrayImage& img, const VisualDictionary& dict,
                                     const SignatureConfig& cfg) {
    cfg.validate();
    if (cfg.dict_id != 0 && cfg.dict_id != dict.id())
        throw std::runtime_error("signature config is bound to a different dictionary");

    const int g = dict.components();
    const int r_count = cfg.region_rows * cfg.region_cols;
    FaceSignature sig;
    sig.regions = r_count;
    sig.components = g;
    sig.config_id = cfg.hash_with(dict.id());
    sig.data.assign(static_cast<std::size_t>(r_count) * g, 0.0);

    const GrayImage scaled = resize_bilinear(img, cfg.if_size, cfg.if_size);
    const auto features = extract_features(scaled, cfg.step);
    std::vector<int> block_counts(r_count, 0);
    std::vector<double> post(g);
    for (const auto& pf : features) {
        const int region = assign_region(pf.center_x(), pf.center_y(), cfg);
        posterior_histogram(dict, pf.feature, post.data());
        double* acc = sig.data.data() + static_cast<std::size_t>(region) * g;
        for (int c = 0; c < g; ++c) acc[c] += post[c];
        ++block_counts[region];
    }
    for (int r = 0; r < r_count; ++r) {
        if (block_counts[r] == 0)
            throw std::runtime_error("region " + std::to_string(r) + " received no blocks");
        const double inv = 1.0 / block_counts[r];
        double* acc = sig.data.data() + static_cast<std::size_t>(r) * g;
        for (int c = 0; c < g; ++c) acc[c] *= inv;
    }
    return sig;
}

/// Region-averaged L1 distance between two signatures, in [0, 2].
inline double d_raw(const FaceSignature& x, const FaceSignature& y) {
    if (x.config_id != y.config_id || x.regions != y.regions || x.components != y.components)
        throw std::runtime_error("d_raw: signatures built under different configurations");
    double total = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) total += std::abs(x.data[i] - y.data[i]);
    return total / x.regions;
}

inline constexpr std::string_view kSignatureMagic = "MRHSIG01";

inline Bytes save_signature(const FaceSignature& sig) {
    ByteWriter w;
    w.tag(kSignatureMagic);
    w.u32(static_cast<std::uint32_t>(sig.regions));
    w.u32(static_cast<std::uint32_t>(sig.components));
    w.u64(sig.config_id);
    for (double v : sig.data) w.f64(v);
    return w.take();
}

inline FaceSignature load_signature(std::span<const std::uint8_t> bytes,
                                    const std::string& name = "signature") {
    ByteReader r(bytes, name);
    r.expect_tag(kSignatureMagic);
    FaceSignature sig;
    sig.regions = static_cast<int>(r.u32());
    sig.components = static_cast<int>(r.u32());
    sig.config_id = r.u64();
    if (sig.regions < 1 || sig.components < 1)
        throw std::runtime_error(name + ": invalid region or component count");
    const std::size_t count = static_cast<std::size_t>(sig.regions) * sig.components;
    const std::size_t expected = kSignatureMagic.size() + 16 + count * 8;
    if (bytes.size() != expected)
        throw std::runtime_error(name + ": truncated or oversized (expected " + std::to_string(expected) +
                                 " bytes, got " + std::to_string(bytes.size()) + ")");
    sig.data.resize(count);
    for (auto& v : sig.data) v = r.f64();
    for (int reg = 0; reg < sig.regions; ++reg) {
        double sum = 0.0;
        for (double v : sig.region(reg)) {
            if (!std::isfinite(v) || v < 0.0)
                throw std::runtime_error(name + ": region " + std::to_string(reg) +
                                         " holds a negative or non-finite entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::runtime_error(name + ": region " + std::to_string(reg) + " sums to " +
                                     std::to_string(sum) + ", not 1");
    }
    return sig;
}

inline FaceSignature load_signature_file(const std::filesystem::path& path) {
    return load_signature(read_file(path), path.string());
}

inline void save_signature_file(const FaceSignature& sig, const std::filesystem::path& path) {
    write_file_atomic(path, save_signature(sig));
}

} // namespace mrh

#endif
