#ifndef MRH_MATCHER_HPP
#define MRH_MATCHER_HPP

#include <algorithm>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mrh/detector.hpp"
#include "mrh/signature.hpp"

namespace mrh {

/// Reference faces known to depict nobody in the pairs being compared.
struct CohortSet {
    std::vector<FaceSignature> cohorts;

    void validate() const {
        if (cohorts.empty()) throw std::invalid_argument("cohort set must hold at least one signature");
        for (const auto& c : cohorts)
            if (c.config_id != cohorts.front().config_id)
                throw std::runtime_error("cohort set mixes configurations");
    }
};

/// Sum of raw distances from one signature to every cohort. Callers that
/// score a signature against many partners can compute this once per
/// signature instead of once per pair.
inline double cohort_distance_sum(const FaceSignature& x, const CohortSet& cohorts) {
    double s = 0.0;
    for (const auto& c : cohorts.cohorts) s += d_raw(x, c);
    return s;
}

inline double d_norm_from_sums(double raw, double sum_x, double sum_y, std::size_t m) {
    const double denom = (sum_x + sum_y) / (2.0 * static_cast<double>(m));
    if (denom == 0.0)
        throw std::runtime_error("d_norm: degenerate cohorts (both faces at zero distance from every cohort)");
    return raw / denom;
}

/// Cohort-normalized distance: the raw distance divided by the average
/// distance of both faces to the cohort set. Approximately 1 for faces of
/// two different people.
inline double d_norm(const FaceSignature& x, const FaceSignature& y, const CohortSet& cohorts) {
    cohorts.validate();
    return d_norm_from_sums(d_raw(x, y), cohort_distance_sum(x, cohorts),
                            cohort_distance_sum(y, cohorts), cohorts.cohorts.size());
}

/// Picks the threshold t maximizing the accuracy of "same iff score < t".
/// Candidates are midpoints of adjacent sorted scores plus sentinels below
/// the minimum and above the maximum; ties break toward the smallest t.
inline double calibrate_threshold(std::vector<std::pair<double, bool>> scores) {
    std::size_t n_same = 0, n_diff = 0;
    for (const auto& [s, same] : scores) (same ? n_same : n_diff)++;
    if (n_same == 0 || n_diff == 0)
        throw std::invalid_argument("calibrate_threshold: need at least one score of each label");

    std::sort(scores.begin(), scores.end());
    const std::size_t n = scores.size();
    std::vector<double> candidates;
    candidates.reserve(n + 1);
    candidates.push_back(scores.front().first - 1.0);
    for (std::size_t i = 0; i + 1 < n; ++i)
        candidates.push_back(0.5 * (scores[i].first + scores[i + 1].first));
    candidates.push_back(scores.back().first + 1.0);

    double best_t = candidates.front();
    std::size_t best_correct = 0;
    std::size_t below = 0;       // scores strictly below the current candidate
    std::size_t same_below = 0;
    for (double t : candidates) {
        while (below < n && scores[below].first < t) {
            if (scores[below].second) ++same_below;
            ++below;
        }
        // same-labeled below t are right; different-labeled at/above t are right
        const std::size_t diff_below = below - same_below;
        const std::size_t correct = same_below + (n_diff - diff_below);
        if (correct > best_correct) {
            best_correct = correct;
            best_t = t;
        }
    }
    return best_t;
}

/// One tuned recognition pipeline: extraction geometry, dictionary, cohorts,
/// and a calibrated decision threshold on the normalized distance.
struct RecognitionSystem {
    ResolutionLabel label = ResolutionLabel::A;
    SignatureConfig cfg;
    VisualDictionary dict;
    CohortSet cohorts;
    double threshold = 0.0;

    void validate() const {
        cfg.validate();
        cohorts.validate();
        if (cohorts.cohorts.front().config_id != cfg.hash_with(dict.id()))
            throw std::runtime_error("cohort signatures do not match the system configuration");
        if (threshold <= 0.0) throw std::invalid_argument("system threshold is not calibrated");
    }
};

struct VerificationResult {
    ResolutionLabel selected = ResolutionLabel::A;
    double distance = 0.0;
    bool same = false;
};

/// Compares two face images under one system: build both signatures, take
/// the cohort-normalized distance, and call them the same person iff it is
/// strictly below the threshold.
inline VerificationResult verify(const RecognitionSystem& sys, const GrayImage& img1,
                                 const GrayImage& img2) {
    sys.validate();
    const FaceSignature s1 = build_signature(img1, sys.dict, sys.cfg);
    const FaceSignature s2 = build_signature(img2, sys.dict, sys.cfg);
    VerificationResult r;
    r.selected = sys.label;
    r.distance = d_norm(s1, s2, sys.cohorts);
    r.same = r.distance < sys.threshold;
    return r;
}

/// Both images must look sharp to stay on the large-format system; any
/// low-resolution evidence routes the pair to the mismatch-robust one.
inline ResolutionLabel route(ResolutionLabel first, ResolutionLabel second) {
    return (first == ResolutionLabel::A && second == ResolutionLabel::A) ? ResolutionLabel::A
                                                                         : ResolutionLabel::B;
}

/// Pair of tuned systems plus the resolution detector that switches
/// between them.
struct DynamicSystem {
    RecognitionSystem system_a;
    RecognitionSystem system_b;
    ResolutionDetector detector;

    void validate() const {
        system_a.validate();
        system_b.validate();
        detector.refs.validate();
        if (system_a.cfg.if_size <= system_b.cfg.if_size)
            throw std::invalid_argument("system A must use the larger intermediate format");
    }
};

/// Classifies both images with the resolution detector and runs the pair
/// through whichever system the routing rule selects.
inline VerificationResult dynamic_verify(const DynamicSystem& dyn, const GrayImage& img1,
                                         const GrayImage& img2) {
    dyn.validate();
    const ResolutionLabel l1 = classify(dyn.detector.refs, img1, dyn.detector.dict);
    const ResolutionLabel l2 = classify(dyn.detector.refs, img2, dyn.detector.dict);
    const RecognitionSystem& sys = route(l1, l2) == ResolutionLabel::A ? dyn.system_a : dyn.system_b;
    return verify(sys, img1, img2);
}

} // namespace mrh

#endif
