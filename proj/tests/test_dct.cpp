#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mrh/dct.hpp"
#include "support/synthetic_corpus.hpp"

using mrh::Block;
using mrh::FeatureVector;
using mrh::kBlockSize;

namespace {

// Brute-force orthonormal DCT-II, straight from the definition. Kept
// independent of the separable implementation it checks.
Block dct2_oracle(const Block& b) {
    const double pi = std::acos(-1.0);
    Block out{};
    for (int u = 0; u < kBlockSize; ++u) {
        for (int v = 0; v < kBlockSize; ++v) {
            const double au = u == 0 ? std::sqrt(1.0 / kBlockSize) : std::sqrt(2.0 / kBlockSize);
            const double av = v == 0 ? std::sqrt(1.0 / kBlockSize) : std::sqrt(2.0 / kBlockSize);
            double s = 0.0;
            for (int x = 0; x < kBlockSize; ++x)
                for (int y = 0; y < kBlockSize; ++y)
                    s += b[x * kBlockSize + y] * std::cos(pi * (2 * x + 1) * u / 16.0) *
                         std::cos(pi * (2 * y + 1) * v / 16.0);
            out[u * kBlockSize + v] = au * av * s;
        }
    }
    return out;
}

// Inverse of the orthonormal DCT-II (the transpose transform).
Block idct2_oracle(const Block& c) {
    const double pi = std::acos(-1.0);
    Block out{};
    for (int x = 0; x < kBlockSize; ++x) {
        for (int y = 0; y < kBlockSize; ++y) {
            double s = 0.0;
            for (int u = 0; u < kBlockSize; ++u)
                for (int v = 0; v < kBlockSize; ++v) {
                    const double au = u == 0 ? std::sqrt(1.0 / kBlockSize) : std::sqrt(2.0 / kBlockSize);
                    const double av = v == 0 ? std::sqrt(1.0 / kBlockSize) : std::sqrt(2.0 / kBlockSize);
                    s += au * av * c[u * kBlockSize + v] * std::cos(pi * (2 * x + 1) * u / 16.0) *
                         std::cos(pi * (2 * y + 1) * v / 16.0);
                }
            out[x * kBlockSize + y] = s;
        }
    }
    return out;
}

Block random_block(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Block b;
    for (auto& v : b) v = testsupport::uniform(rng, lo, hi);
    return b;
}

double energy(const Block& b) {
    double s = 0.0;
    for (double v : b) s += v * v;
    return s;
}

} // namespace

TEST_CASE("normalize_block maps constant blocks to zero") {
    Block b;
    b.fill(0.5);
    const Block out = mrh::normalize_block(b);
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("normalize_block leaves a zero-mean unit-variance block unchanged") {
    Block b;
    for (int i = 0; i < mrh::kBlockArea; ++i) b[i] = (i % 2 == 0) ? 1.0 : -1.0;
    const Block out = mrh::normalize_block(b);
    for (int i = 0; i < mrh::kBlockArea; ++i) CHECK_THAT(out[i], Catch::Matchers::WithinAbs(b[i], 1e-12));
}

TEST_CASE("normalize_block is invariant to affine intensity changes") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Block b = random_block(rng, 0.0, 1.0);
        Block affine;
        for (int i = 0; i < mrh::kBlockArea; ++i) affine[i] = 0.3 * b[i] + 0.2;
        const Block nb = mrh::normalize_block(b);
        const Block na = mrh::normalize_block(affine);
        double mean = 0.0;
        for (double v : nb) mean += v;
        CHECK_THAT(mean / mrh::kBlockArea, Catch::Matchers::WithinAbs(0.0, 1e-12));
        for (int i = 0; i < mrh::kBlockArea; ++i)
            CHECK_THAT(na[i], Catch::Matchers::WithinAbs(nb[i], 1e-12));
    }
}

TEST_CASE("dct2 of the zero block is zero") {
    Block b{};
    const Block out = mrh::dct2(b);
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("dct2 of a constant block concentrates everything in (0,0)") {
    Block b;
    b.fill(0.35);
    const Block out = mrh::dct2(b);
    CHECK_THAT(out[0], Catch::Matchers::WithinAbs(8.0 * 0.35, 1e-12));
    for (int i = 1; i < mrh::kBlockArea; ++i) CHECK_THAT(out[i], Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("dct2 matches the brute-force definition on random blocks") {
    std::mt19937_64 rng(123);
    double max_err = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Block b = random_block(rng);
        const Block fast = mrh::dct2(b);
        const Block slow = dct2_oracle(b);
        for (int i = 0; i < mrh::kBlockArea; ++i) max_err = std::max(max_err, std::abs(fast[i] - slow[i]));
    }
    CHECK(max_err < 1e-10);
}

TEST_CASE("dct2 preserves energy and inverts exactly") {
    std::mt19937_64 rng(321);
    for (int trial = 0; trial < 20; ++trial) {
        const Block b = random_block(rng);
        const Block c = mrh::dct2(b);
        CHECK_THAT(energy(c), Catch::Matchers::WithinAbs(energy(b), 1e-10));
        const Block back = idct2_oracle(c);
        for (int i = 0; i < mrh::kBlockArea; ++i)
            CHECK_THAT(back[i], Catch::Matchers::WithinAbs(b[i], 1e-10));
    }
}

TEST_CASE("select_coeffs keeps the documented order") {
    Block c{};
    c[0 * kBlockSize + 1] = 7.0;
    FeatureVector f = mrh::select_coeffs(c);
    CHECK(f[0] == 7.0);
    for (int i = 1; i < mrh::kFeatureDim; ++i) CHECK(f[i] == 0.0);

    Block c2{};
    c2[3 * kBlockSize + 3] = 2.0;
    f = mrh::select_coeffs(c2);
    CHECK(f[14] == 2.0);
    for (int i = 0; i < 14; ++i) CHECK(f[i] == 0.0);
}

TEST_CASE("normalization drains the excluded (0,0) coefficient") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        const Block b = random_block(rng, 0.0, 1.0);
        const Block c = mrh::dct2(mrh::normalize_block(b));
        CHECK(std::abs(c[0]) < 1e-9);
    }
}

TEST_CASE("extract_features enumerates the expected grid") {
    std::mt19937_64 rng(5);
    mrh::GrayImage img;
    img.width = img.height = 64;
    img.pixels.resize(64 * 64);
    for (auto& p : img.pixels) p = testsupport::uniform(rng);

    const auto feats = mrh::extract_features(img, 4);
    REQUIRE(feats.size() == 225); // 15 x 15 placements
    CHECK(feats.front().x == 0);
    CHECK(feats.front().y == 0);
    CHECK(feats.back().x == 56);
    CHECK(feats.back().y == 56);
    CHECK(feats.front().center_x() == 4);

    mrh::GrayImage small;
    small.width = small.height = 32;
    small.pixels.assign(32 * 32, 0.5);
    CHECK(mrh::extract_features(small, 4).size() == 49); // 7 x 7

    mrh::GrayImage tiny;
    tiny.width = tiny.height = 8;
    tiny.pixels.assign(64, 0.25);
    const auto single = mrh::extract_features(tiny, 3);
    REQUIRE(single.size() == 1);
    CHECK(single[0].x == 0);
    CHECK(single[0].y == 0);
}

TEST_CASE("extract_features rejects images smaller than a block") {
    mrh::GrayImage img;
    img.width = 7;
    img.height = 9;
    img.pixels.assign(63, 0.0);
    CHECK_THROWS_AS(mrh::extract_features(img, 4), std::runtime_error);
}

TEST_CASE("extract_features is affine-intensity invariant and finite") {
    std::mt19937_64 rng(17);
    mrh::GrayImage img;
    img.width = img.height = 32;
    img.pixels.resize(32 * 32);
    for (auto& p : img.pixels) p = testsupport::uniform(rng);

    mrh::GrayImage affine = img;
    for (auto& p : affine.pixels) p = 0.5 * p + 0.25;

    const auto f1 = mrh::extract_features(img, 4);
    const auto f2 = mrh::extract_features(affine, 4);
    REQUIRE(f1.size() == f2.size());
    for (std::size_t i = 0; i < f1.size(); ++i)
        for (int d = 0; d < mrh::kFeatureDim; ++d) {
            CHECK(std::isfinite(f1[i].feature[d]));
            CHECK_THAT(f2[i].feature[d], Catch::Matchers::WithinAbs(f1[i].feature[d], 1e-9));
        }

    // constant images have no texture: features collapse to (numerical) zero
    mrh::GrayImage flat;
    flat.width = flat.height = 16;
    flat.pixels.assign(256, 0.8);
    for (const auto& pf : mrh::extract_features(flat, 4))
        for (double v : pf.feature) CHECK_THAT(v, Catch::Matchers::WithinAbs(0.0, 1e-9));
}

TEST_CASE("extract_features is deterministic") {
    std::mt19937_64 rng(77);
    mrh::GrayImage img;
    img.width = img.height = 24;
    img.pixels.resize(24 * 24);
    for (auto& p : img.pixels) p = testsupport::uniform(rng);
    const auto a = mrh::extract_features(img, 4);
    const auto b = mrh::extract_features(img, 4);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].feature == b[i].feature);
}
