#ifndef MRH_DETECTOR_HPP
#define MRH_DETECTOR_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "mrh/image.hpp"
#include "mrh/signature.hpp"

namespace mrh {

/// Which intermediate-format size a face is suited for: A = large (sharp
/// underlying resolution), B = small (degraded underlying resolution).
enum class ResolutionLabel { A, B };

inline const char* to_string(ResolutionLabel l) { return l == ResolutionLabel::A ? "A" : "B"; }

/// Reference signatures the detector compares probes against. set_a comes
/// from faces at full underlying resolution, set_b from the same kind of
/// faces pushed through a 16x16 bottleneck.
struct ReferenceSets {
    std::vector<FaceSignature> set_a;
    std::vector<FaceSignature> set_b;
    SignatureConfig cfg;

    void validate() const {
        if (set_a.empty() || set_b.empty())
            throw std::invalid_argument("reference sets must be non-empty");
        const std::uint64_t id = set_a.front().config_id;
        for (const auto& s : set_a)
            if (s.config_id != id) throw std::runtime_error("reference set A mixes configurations");
        for (const auto& s : set_b)
            if (s.config_id != id) throw std::runtime_error("reference set B mixes configurations");
    }
};

/// Builds both reference sets from high-resolution source images: set A from
/// the images as-is (rescaled to the canonical size inside build_signature),
/// set B from deliberately degraded copies.
inline ReferenceSets build_reference_sets(const std::vector<GrayImage>& high_res_images,
                                          const VisualDictionary& dict, const SignatureConfig& cfg,
                                          int degraded_resolution = 16) {
    if (high_res_images.empty())
        throw std::invalid_argument("build_reference_sets: no input images");
    ReferenceSets refs;
    refs.cfg = cfg;
    refs.set_a.reserve(high_res_images.size());
    refs.set_b.reserve(high_res_images.size());
    for (const auto& img : high_res_images) {
        refs.set_a.push_back(build_signature(img, dict, cfg));
        refs.set_b.push_back(build_signature(degrade(img, degraded_resolution, cfg.if_size), dict, cfg));
    }
    return refs;
}

/// Mean raw distance of a probe signature to a reference set.
inline double d_avg(const FaceSignature& q, const std::vector<FaceSignature>& set) {
    if (set.empty()) throw std::invalid_argument("d_avg: empty reference set");
    double total = 0.0;
    for (const auto& s : set) total += d_raw(q, s);
    return total / static_cast<double>(set.size());
}

struct DetectorScores {
    double d_avg_a = 0.0;
    double d_avg_b = 0.0;
    ResolutionLabel label = ResolutionLabel::A;
};

inline DetectorScores classify_signature(const ReferenceSets& refs, const FaceSignature& q) {
    DetectorScores s;
    s.d_avg_a = d_avg(q, refs.set_a);
    s.d_avg_b = d_avg(q, refs.set_b);
    s.label = s.d_avg_a <= s.d_avg_b ? ResolutionLabel::A : ResolutionLabel::B; // tie goes to A
    return s;
}

/// Full detector pass: rescale to the canonical size, build the probe
/// signature, and pick the reference set with the smaller average distance.
inline DetectorScores classify_scores(const ReferenceSets& refs, const GrayImage& img,
                                      const VisualDictionary& dict) {
    refs.validate();
    return classify_signature(refs, build_signature(img, dict, refs.cfg));
}

inline ResolutionLabel classify(const ReferenceSets& refs, const GrayImage& img,
                                const VisualDictionary& dict) {
    return classify_scores(refs, img, dict).label;
}

struct ResolutionDetector {
    ReferenceSets refs;
    VisualDictionary dict;
};

} // namespace mrh

#endif
