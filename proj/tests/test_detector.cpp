#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mrh/detector.hpp"
#include "support/synthetic_corpus.hpp"

using mrh::FaceSignature;
using mrh::ReferenceSets;
using mrh::ResolutionLabel;

namespace {

mrh::VisualDictionary corpus_dictionary(const std::vector<mrh::GrayImage>& images, int g,
                                        std::uint64_t seed) {
    std::vector<mrh::FeatureVector> feats;
    for (const auto& img : images) {
        for (const auto& pf : mrh::extract_features(mrh::resize_bilinear(img, 64, 64), 4))
            feats.push_back(pf.feature);
    }
    mrh::TrainConfig cfg;
    cfg.components = g;
    cfg.seed = seed;
    return mrh::train_dictionary(feats, cfg);
}

FaceSignature flat_signature(double p0, std::uint64_t config_id = 11) {
    FaceSignature s;
    s.regions = 1;
    s.components = 2;
    s.config_id = config_id;
    s.data = {p0, 1.0 - p0};
    return s;
}

} // namespace

TEST_CASE("d_avg averages raw distances") {
    const FaceSignature q = flat_signature(0.5);
    // L1 distances from q: 2*|0.5 - p0|
    const std::vector<FaceSignature> set{flat_signature(0.6), flat_signature(0.7)};
    CHECK_THAT(mrh::d_avg(q, set), Catch::Matchers::WithinAbs(0.3, 1e-12));
    CHECK(mrh::d_avg(q, {q}) == 0.0);
    CHECK_THROWS_AS(mrh::d_avg(q, {}), std::invalid_argument);
}

TEST_CASE("classification ties break toward A") {
    ReferenceSets refs;
    refs.cfg = mrh::SignatureConfig{};
    refs.set_a = {flat_signature(0.6)};
    refs.set_b = {flat_signature(0.6)};
    const auto scores = mrh::classify_signature(refs, flat_signature(0.5));
    CHECK(scores.d_avg_a == scores.d_avg_b);
    CHECK(scores.label == ResolutionLabel::A);
}

TEST_CASE("build_reference_sets builds one signature per input in each set") {
    const auto images = testsupport::render_corpus_images(8, 1234);
    const auto dict = corpus_dictionary(images, 8, 5);
    const mrh::SignatureConfig cfg;
    const ReferenceSets refs = mrh::build_reference_sets(images, dict, cfg);
    REQUIRE(refs.set_a.size() == 8);
    REQUIRE(refs.set_b.size() == 8);
    refs.validate();

    // deterministic rebuild
    const ReferenceSets again = mrh::build_reference_sets(images, dict, cfg);
    for (std::size_t i = 0; i < refs.set_a.size(); ++i) {
        CHECK(refs.set_a[i] == again.set_a[i]);
        CHECK(refs.set_b[i] == again.set_b[i]);
    }

    CHECK_THROWS_AS(mrh::build_reference_sets({}, dict, cfg), std::invalid_argument);
}

TEST_CASE("a constant image still yields legal reference signatures") {
    mrh::GrayImage flat;
    flat.width = flat.height = 64;
    flat.pixels.assign(64 * 64, 0.4);
    const auto images = testsupport::render_corpus_images(4, 77);
    const auto dict = corpus_dictionary(images, 4, 9);
    const ReferenceSets refs = mrh::build_reference_sets({flat}, dict, mrh::SignatureConfig{});
    for (const auto& sig : {refs.set_a[0], refs.set_b[0]}) {
        for (int r = 0; r < sig.regions; ++r) {
            double sum = 0.0;
            for (double v : sig.region(r)) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
        }
    }
}

TEST_CASE("detector separates sharp from degraded probes on a small corpus") {
    // 24 reference identities, 16 held-out probe identities
    const auto all = testsupport::render_corpus_images(40, 5150);
    const std::vector<mrh::GrayImage> ref_images(all.begin(), all.begin() + 24);
    const std::vector<mrh::GrayImage> probes(all.begin() + 24, all.end());

    const auto dict = corpus_dictionary(ref_images, 16, 3);
    const mrh::SignatureConfig cfg;
    const ReferenceSets refs = mrh::build_reference_sets(ref_images, dict, cfg);

    double sum_a_sharp = 0.0, sum_b_sharp = 0.0, sum_a_low = 0.0, sum_b_low = 0.0;
    int correct_sharp = 0, correct_low = 0;
    for (const auto& img : probes) {
        const auto sharp = mrh::classify_scores(refs, img, dict);
        sum_a_sharp += sharp.d_avg_a;
        sum_b_sharp += sharp.d_avg_b;
        correct_sharp += sharp.label == ResolutionLabel::A;

        const auto low = mrh::classify_scores(refs, mrh::degrade(img, 8, 64), dict);
        sum_a_low += low.d_avg_a;
        sum_b_low += low.d_avg_b;
        correct_low += low.label == ResolutionLabel::B;
    }
    // degraded probes sit closer to the degraded reference set on average
    CHECK(sum_b_low < sum_a_low);
    CHECK(sum_a_sharp < sum_b_sharp);
    // desk-scale sanity; the acceptance suite checks the tighter bounds
    CHECK(correct_sharp >= static_cast<int>(probes.size() * 3 / 4));
    CHECK(correct_low >= static_cast<int>(probes.size() * 3 / 4));
}

TEST_CASE("detector label is invariant to affine intensity changes of the probe") {
    const auto images = testsupport::render_corpus_images(12, 31);
    const std::vector<mrh::GrayImage> refs_src(images.begin(), images.begin() + 8);
    const auto dict = corpus_dictionary(refs_src, 8, 21);
    const ReferenceSets refs = mrh::build_reference_sets(refs_src, dict, mrh::SignatureConfig{});

    for (std::size_t i = 8; i < images.size(); ++i) {
        mrh::GrayImage mod = images[i];
        for (auto& p : mod.pixels) p = 0.5 * p + 0.1;
        CHECK(mrh::classify(refs, images[i], dict) == mrh::classify(refs, mod, dict));
    }
}
