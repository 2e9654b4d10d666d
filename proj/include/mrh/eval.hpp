#ifndef MRH_EVAL_HPP
#define MRH_EVAL_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mrh/binary_io.hpp"
#include "mrh/detector.hpp"
#include "mrh/gmm.hpp"
#include "mrh/image.hpp"
#include "mrh/matcher.hpp"
#include "mrh/parallel.hpp"
#include "mrh/signature.hpp"

namespace mrh {

inline constexpr std::string_view kToolVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Pair lists
// ---------------------------------------------------------------------------

struct PairRecord {
    int fold = 0;
    std::string path1;
    std::string path2;
    bool same = false;

    bool operator==(const PairRecord&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

inline long parse_int(const std::string& s, const std::string& what) {
    if (s.empty()) throw std::runtime_error(what + ": empty integer");
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(s, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error(what + ": not an integer: \"" + s + "\"");
    }
    if (pos != s.size()) throw std::runtime_error(what + ": not an integer: \"" + s + "\"");
    return v;
}

inline void check_contiguous_folds(const std::vector<PairRecord>& records, const std::string& what) {
    if (records.empty()) throw std::runtime_error(what + ": no pair records");
    int max_fold = 0;
    for (const auto& r : records) max_fold = std::max(max_fold, r.fold);
    std::vector<char> seen(static_cast<std::size_t>(max_fold) + 1, 0);
    for (const auto& r : records) seen[r.fold] = 1;
    for (int f = 0; f <= max_fold; ++f)
        if (!seen[f])
            throw std::runtime_error(what + ": non-contiguous folds (fold " + std::to_string(f) +
                                     " missing, max fold " + std::to_string(max_fold) + ")");
}

} // namespace detail

/// Parses the native pair list: one `fold,path_1,path_2,label` record per
/// line, with '#' comments and blank lines skipped. Fold indices must be
/// contiguous from 0.
inline std::vector<PairRecord> parse_pairs(const std::string& text) {
    std::vector<PairRecord> records;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto fields = detail::split(t, ',');
        const std::string where = "pairs line " + std::to_string(line_no);
        if (fields.size() != 4)
            throw std::runtime_error(where + ": expected fold,path_1,path_2,label, got " +
                                     std::to_string(fields.size()) + " fields");
        PairRecord r;
        const long fold = detail::parse_int(fields[0], where + " fold");
        if (fold < 0) throw std::runtime_error(where + ": negative fold index");
        r.fold = static_cast<int>(fold);
        r.path1 = fields[1];
        r.path2 = fields[2];
        if (r.path1.empty() || r.path2.empty()) throw std::runtime_error(where + ": empty image path");
        if (fields[3] == "same")
            r.same = true;
        else if (fields[3] == "different")
            r.same = false;
        else
            throw std::runtime_error(where + ": unknown label \"" + fields[3] +
                                     "\" (expected same|different)");
        records.push_back(std::move(r));
    }
    detail::check_contiguous_folds(records, "pairs file");
    return records;
}

/// Adapter for the common published pairs layout: a `<sets> <pairs>` header,
/// then per set <pairs> same-person lines `name i j` followed by <pairs>
/// different-person lines `name1 i name2 j`. Paths resolve against the
/// corpus root as name/name_%04d.pgm; the set index becomes the fold.
inline std::vector<PairRecord> parse_lfw_pairs(const std::string& text) {
    auto image_path = [](const std::string& name, long idx) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04ld", idx);
        return name + "/" + name + "_" + buf + ".pgm";
    };
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto next_tokens = [&](const char* what) {
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = detail::trim(line);
            if (t.empty()) continue;
            std::vector<std::string> tokens;
            std::istringstream ls(t);
            std::string tok;
            while (ls >> tok) tokens.push_back(tok);
            return tokens;
        }
        throw std::runtime_error(std::string("lfw pairs: unexpected end of file, expected ") + what);
    };

    const auto header = next_tokens("set/pair counts");
    if (header.size() != 2) throw std::runtime_error("lfw pairs line 1: expected \"<sets> <pairs>\" header");
    const long sets = detail::parse_int(header[0], "lfw pairs header sets");
    const long per_type = detail::parse_int(header[1], "lfw pairs header pairs");
    if (sets < 1 || per_type < 1) throw std::runtime_error("lfw pairs header: counts must be >= 1");

    std::vector<PairRecord> records;
    for (long s = 0; s < sets; ++s) {
        for (long i = 0; i < 2 * per_type; ++i) {
            const bool same = i < per_type;
            const auto tok = next_tokens(same ? "same-person line" : "different-person line");
            const std::string where = "lfw pairs line " + std::to_string(line_no);
            PairRecord r;
            r.fold = static_cast<int>(s);
            r.same = same;
            if (same) {
                if (tok.size() != 3) throw std::runtime_error(where + ": expected \"name i j\"");
                r.path1 = image_path(tok[0], detail::parse_int(tok[1], where));
                r.path2 = image_path(tok[0], detail::parse_int(tok[2], where));
            } else {
                if (tok.size() != 4) throw std::runtime_error(where + ": expected \"name1 i name2 j\"");
                r.path1 = image_path(tok[0], detail::parse_int(tok[1], where));
                r.path2 = image_path(tok[2], detail::parse_int(tok[3], where));
            }
            records.push_back(std::move(r));
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::vector<int> resolutions{64, 32, 16, 8};
    int folds = 10;
    std::uint64_t seed = 42;
    int words = 1024;
    int step = 4;
    int region_rows = 3;
    int region_cols = 3;
    int if_size_a = 64;
    int if_size_b = 32;
    int canonical = 64;
    int reference_size = 32;
    int cohort_size = 32;
    int max_train_features = 200000;
    int max_em_iters = 100;
    bool degrade_both = false;
    std::string corpus_root;
    int threads = 1; // execution detail; not echoed into reports

    void validate() const {
        if (folds < 2) throw std::runtime_error("config: folds must be >= 2");
        if (resolutions.empty()) throw std::runtime_error("config: resolutions must be non-empty");
        for (int r : resolutions)
            if (r < 1 || r > canonical)
                throw std::runtime_error("config: resolution " + std::to_string(r) +
                                         " outside [1, canonical " + std::to_string(canonical) + "]");
        if (words < 1) throw std::runtime_error("config: words must be >= 1");
        if (if_size_a <= if_size_b) throw std::runtime_error("config: if_size_a must exceed if_size_b");
        if (if_size_b < kBlockSize || canonical < kBlockSize)
            throw std::runtime_error("config: intermediate sizes must be >= 8");
        if (reference_size < 1 || cohort_size < 1)
            throw std::runtime_error("config: reference_size and cohort_size must be >= 1");
        if (max_train_features < words)
            throw std::runtime_error("config: max_train_features must be >= words");
        if (max_em_iters < 1) throw std::runtime_error("config: max_em_iters must be >= 1");
        signature_config(if_size_a).validate();
        signature_config(if_size_b).validate();
        signature_config(canonical).validate();
    }

    SignatureConfig signature_config(int if_size) const {
        SignatureConfig c;
        c.if_size = if_size;
        c.region_rows = region_rows;
        c.region_cols = region_cols;
        c.step = step;
        return c;
    }
};

/// Parses the flat `key = value` config file (one key per line, '#' comments).
inline ExperimentConfig parse_experiment_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::string where = "config line " + std::to_string(line_no);
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) throw std::runtime_error(where + ": expected key = value");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        auto int_value = [&] { return static_cast<int>(detail::parse_int(value, where + " " + key)); };
        if (key == "resolutions") {
            cfg.resolutions.clear();
            for (const auto& item : detail::split(value, ','))
                cfg.resolutions.push_back(static_cast<int>(detail::parse_int(item, where + " resolutions")));
        } else if (key == "folds") {
            cfg.folds = int_value();
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(detail::parse_int(value, where + " seed"));
        } else if (key == "words") {
            cfg.words = int_value();
        } else if (key == "step") {
            cfg.step = int_value();
        } else if (key == "region_rows") {
            cfg.region_rows = int_value();
        } else if (key == "region_cols") {
            cfg.region_cols = int_value();
        } else if (key == "if_size_a") {
            cfg.if_size_a = int_value();
        } else if (key == "if_size_b") {
            cfg.if_size_b = int_value();
        } else if (key == "canonical") {
            cfg.canonical = int_value();
        } else if (key == "reference_size") {
            cfg.reference_size = int_value();
        } else if (key == "cohort_size") {
            cfg.cohort_size = int_value();
        } else if (key == "max_train_features") {
            cfg.max_train_features = int_value();
        } else if (key == "max_em_iters") {
            cfg.max_em_iters = int_value();
        } else if (key == "degrade_both") {
            if (value == "1" || value == "true")
                cfg.degrade_both = true;
            else if (value == "0" || value == "false")
                cfg.degrade_both = false;
            else
                throw std::runtime_error(where + ": degrade_both expects true|false|1|0");
        } else if (key == "corpus_root") {
            cfg.corpus_root = value;
        } else {
            throw std::runtime_error(where + ": unknown key \"" + key + "\"");
        }
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Corpus access and fold bookkeeping
// ---------------------------------------------------------------------------

/// Loads and caches corpus images by their pair-list path. Preload everything
/// up front; lookups afterwards are const and thread-safe.
class ImageStore {
public:
    explicit ImageStore(std::string root) : root_(std::move(root)) {}

    void preload(const std::vector<std::string>& paths, int threads) {
        std::vector<std::string> missing;
        for (const auto& p : paths)
            if (!cache_.count(p)) missing.push_back(p);
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        std::vector<GrayImage> loaded(missing.size());
        for_chunks(missing.size(), 1, threads, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) loaded[i] = load_pgm_file(resolve(missing[i]));
        });
        for (std::size_t i = 0; i < missing.size(); ++i)
            cache_.emplace(missing[i], std::move(loaded[i]));
    }

    const GrayImage& get(const std::string& path) const {
        auto it = cache_.find(path);
        if (it == cache_.end()) throw std::runtime_error("image not preloaded: " + path);
        return it->second;
    }

    std::filesystem::path resolve(const std::string& path) const {
        return root_.empty() ? std::filesystem::path(path) : std::filesystem::path(root_) / path;
    }

private:
    std::string root_;
    std::map<std::string, GrayImage> cache_;
};

inline std::uint64_t fold_seed(std::uint64_t base, int fold, std::uint32_t purpose) {
    std::uint64_t h = base + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(fold) + 1) +
                      0xBF58476D1CE4E5B9ULL * purpose;
    h ^= h >> 30;
    h *= 0xBF58476D1CE4E5B9ULL;
    h ^= h >> 27;
    h *= 0x94D049BB133111EBULL;
    h ^= h >> 31;
    return h;
}

/// Sorted unique image paths usable for fitting fold `fold`'s models: every
/// path from the other folds, minus any path that also occurs in the test
/// fold (fold hygiene: nothing on the test side may influence training).
inline std::vector<std::string> training_paths(const std::vector<PairRecord>& pairs, int fold) {
    std::set<std::string> test_side, train_side;
    for (const auto& p : pairs) {
        auto& side = p.fold == fold ? test_side : train_side;
        side.insert(p.path1);
        side.insert(p.path2);
    }
    std::vector<std::string> out;
    for (const auto& p : train_side)
        if (!test_side.count(p)) out.push_back(p);
    return out;
}

/// Deterministic seeded draw of k paths from a pool.
inline std::vector<std::string> sample_paths(std::vector<std::string> pool, std::size_t k,
                                             std::uint64_t seed) {
    if (pool.size() < k)
        throw std::runtime_error("not enough training images to sample " + std::to_string(k) +
                                 " (pool has " + std::to_string(pool.size()) + ")");
    std::sort(pool.begin(), pool.end());
    std::mt19937_64 rng(seed);
    detail::shuffle(pool, rng);
    pool.resize(k);
    return pool;
}

namespace detail {

// Pools block features from every image (rescaled to the canonical size and
// then to the working intermediate format), capped by an even stride.
inline std::vector<FeatureVector> pooled_features(const ImageStore& store,
                                                  const std::vector<std::string>& paths, int canonical,
                                                  int if_size, int step, int max_count, int threads) {
    std::vector<std::vector<FeatureVector>> per_image(paths.size());
    for_chunks(paths.size(), 1, threads, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const GrayImage canon = resize_bilinear(store.get(paths[i]), canonical, canonical);
            const auto feats = extract_features(resize_bilinear(canon, if_size, if_size), step);
            per_image[i].reserve(feats.size());
            for (const auto& pf : feats) per_image[i].push_back(pf.feature);
        }
    });
    std::vector<FeatureVector> pooled;
    for (const auto& v : per_image) pooled.insert(pooled.end(), v.begin(), v.end());
    if (max_count > 0 && pooled.size() > static_cast<std::size_t>(max_count)) {
        std::vector<FeatureVector> capped(static_cast<std::size_t>(max_count));
        for (std::size_t i = 0; i < capped.size(); ++i)
            capped[i] = pooled[i * pooled.size() / capped.size()];
        pooled = std::move(capped);
    }
    return pooled;
}

// Key for cached per-fold signatures: image path plus how the image enters
// the protocol (0 = rescaled to canonical, r > 0 = degraded to resolution r).
using SigKey = std::pair<std::string, int>;

struct SignatureBank {
    std::map<SigKey, std::size_t> index;
    std::vector<FaceSignature> sigs;
    std::vector<double> cohort_sums;

    const FaceSignature& at(const std::string& path, int variant) const {
        return sigs[index.at({path, variant})];
    }
    double cohort_sum(const std::string& path, int variant) const {
        return cohort_sums[index.at({path, variant})];
    }
};

inline SignatureBank build_bank(const ImageStore& store, const std::set<SigKey>& keys,
                                const VisualDictionary& dict, const SignatureConfig& cfg,
                                int canonical, const CohortSet* cohorts, int threads) {
    SignatureBank bank;
    std::vector<SigKey> ordered(keys.begin(), keys.end());
    bank.sigs.resize(ordered.size());
    for_chunks(ordered.size(), 1, threads, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const auto& [path, variant] = ordered[i];
            const GrayImage& src = store.get(path);
            const GrayImage prepared = variant == 0 ? resize_bilinear(src, canonical, canonical)
                                                    : degrade(src, variant, canonical);
            bank.sigs[i] = build_signature(prepared, dict, cfg);
        }
    });
    if (cohorts) {
        bank.cohort_sums.resize(ordered.size());
        for_chunks(ordered.size(), 1, threads, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i)
                bank.cohort_sums[i] = cohort_distance_sum(bank.sigs[i], *cohorts);
        });
    }
    for (std::size_t i = 0; i < ordered.size(); ++i) bank.index.emplace(ordered[i], i);
    return bank;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ConfusionRow {
    double a_pct = 0.0;
    double b_pct = 0.0;
};

struct Report {
    ExperimentConfig config;
    std::map<int, ConfusionRow> detector_confusion;
    // system name ("system_a" | "system_b" | "dynamic") -> resolution -> mean accuracy in [0,1]
    std::map<std::string, std::map<int, double>> accuracy;
    std::map<std::string, double> average;
    std::map<std::string, std::vector<double>> thresholds; // per fold
    std::map<std::string, std::map<int, std::vector<double>>> per_fold_accuracy;
    int image_count = 0;
    int pair_count = 0;
    std::string pairs_format = "csv";

    void validate() const {
        for (const auto& [res, row] : detector_confusion) {
            if (row.a_pct < 0.0 || row.b_pct < 0.0 || std::abs(row.a_pct + row.b_pct - 100.0) > 1e-9)
                throw std::runtime_error("report: confusion row for resolution " + std::to_string(res) +
                                         " is not a distribution");
        }
        for (const auto& [sys, by_res] : accuracy) {
            double sum = 0.0;
            for (const auto& [res, acc] : by_res) {
                if (!(acc >= 0.0 && acc <= 1.0))
                    throw std::runtime_error("report: accuracy " + std::to_string(acc) + " for " + sys +
                                             " at resolution " + std::to_string(res) + " outside [0,1]");
                sum += acc;
            }
            const auto avg_it = average.find(sys);
            if (avg_it == average.end()) throw std::runtime_error("report: missing average for " + sys);
            if (std::abs(avg_it->second - sum / static_cast<double>(by_res.size())) > 1e-12)
                throw std::runtime_error("report: average for " + sys +
                                         " does not equal the mean of its rows");
        }
    }
};

namespace detail {

inline std::string json_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}

// Canonical number format: at most 10 significant digits, shortest form.
inline std::string json_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// Minimal canonical JSON emitter. Callers must add keys in sorted order;
// identical reports serialize to identical bytes.
class JsonWriter {
public:
    void begin_object() { open('{'); }
    void end_object() { close('}'); }
    void begin_array() { open('['); }
    void end_array() { close(']'); }
    void key(std::string_view k) {
        comma();
        out_ += '"';
        out_ += json_escape(k);
        out_ += "\":";
        pending_value_ = true;
    }
    void value(const std::string& s) {
        comma();
        out_ += '"';
        out_ += json_escape(s);
        out_ += '"';
    }
    void value(double v) {
        comma();
        out_ += json_number(v);
    }
    void value(int v) {
        comma();
        out_ += std::to_string(v);
    }
    void value(std::uint64_t v) {
        comma();
        out_ += std::to_string(v);
    }
    void value(bool v) {
        comma();
        out_ += v ? "true" : "false";
    }
    std::string take() { return std::move(out_); }

private:
    void open(char c) {
        comma();
        out_ += c;
        fresh_ = true;
    }
    void close(char c) {
        out_ += c;
        fresh_ = false;
    }
    void comma() {
        if (pending_value_) {
            pending_value_ = false;
            return;
        }
        if (!fresh_ && !out_.empty()) out_ += ',';
        fresh_ = false;
    }
    std::string out_;
    bool fresh_ = true;
    bool pending_value_ = false;
};

} // namespace detail

/// Serializes a report as canonical JSON: sorted keys, numbers with at most
/// 10 significant digits, byte-stable for identical reports.
inline std::string write_report(const Report& report) {
    report.validate();
    detail::JsonWriter w;
    w.begin_object();

    w.key("accuracy");
    w.begin_object();
    for (const auto& [sys, by_res] : report.accuracy) {
        w.key(sys);
        w.begin_object();
        std::vector<std::pair<std::string, double>> rows;
        for (const auto& [res, acc] : by_res) rows.emplace_back(std::to_string(res), acc);
        rows.emplace_back("average", report.average.at(sys));
        std::sort(rows.begin(), rows.end());
        for (const auto& [k, v] : rows) {
            w.key(k);
            w.value(v);
        }
        w.end_object();
    }
    w.end_object();

    w.key("config");
    w.begin_object();
    const auto& c = report.config;
    w.key("canonical"); w.value(c.canonical);
    w.key("cohort_size"); w.value(c.cohort_size);
    w.key("corpus_root"); w.value(c.corpus_root);
    w.key("degrade_both"); w.value(c.degrade_both);
    w.key("folds"); w.value(c.folds);
    w.key("if_size_a"); w.value(c.if_size_a);
    w.key("if_size_b"); w.value(c.if_size_b);
    w.key("max_em_iters"); w.value(c.max_em_iters);
    w.key("max_train_features"); w.value(c.max_train_features);
    w.key("reference_size"); w.value(c.reference_size);
    w.key("region_cols"); w.value(c.region_cols);
    w.key("region_rows"); w.value(c.region_rows);
    w.key("resolutions");
    w.begin_array();
    for (int r : c.resolutions) w.value(r);
    w.end_array();
    w.key("seed"); w.value(static_cast<std::uint64_t>(c.seed));
    w.key("step"); w.value(c.step);
    w.key("words"); w.value(c.words);
    w.end_object();

    w.key("detector_confusion");
    w.begin_object();
    {
        std::vector<std::pair<std::string, ConfusionRow>> rows;
        for (const auto& [res, row] : report.detector_confusion)
            rows.emplace_back(std::to_string(res), row);
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [k, row] : rows) {
            w.key(k);
            w.begin_object();
            w.key("a_pct");
            w.value(row.a_pct);
            w.key("b_pct");
            w.value(row.b_pct);
            w.end_object();
        }
    }
    w.end_object();

    w.key("provenance");
    w.begin_object();
    w.key("cohort_selection");
    w.value(std::string("seeded draw from training-fold images; persons disjoint from test pairs"));
    w.key("cohort_size_note");
    w.value(std::string("cohort and reference set sizes are configuration choices, not dataset-derived"));
    w.key("image_count");
    w.value(report.image_count);
    w.key("pair_count");
    w.value(report.pair_count);
    w.key("pairs_format");
    w.value(report.pairs_format);
    w.key("per_fold_accuracy");
    w.begin_object();
    for (const auto& [sys, by_res] : report.per_fold_accuracy) {
        w.key(sys);
        w.begin_object();
        std::vector<std::pair<std::string, const std::vector<double>*>> rows;
        for (const auto& [res, folds] : by_res) rows.emplace_back(std::to_string(res), &folds);
        std::sort(rows.begin(), rows.end());
        for (const auto& [k, folds] : rows) {
            w.key(k);
            w.begin_array();
            for (double v : *folds) w.value(v);
            w.end_array();
        }
        w.end_object();
    }
    w.end_object();
    w.key("reference_selection");
    w.value(std::string("seeded draw from training-fold images"));
    w.key("tool");
    w.value("mrh " + std::string(kToolVersion));
    w.end_object();

    w.key("thresholds");
    w.begin_object();
    for (const auto& [sys, per_fold] : report.thresholds) {
        w.key(sys);
        w.begin_array();
        for (double t : per_fold) w.value(t);
        w.end_array();
    }
    w.end_object();

    w.end_object();
    std::string out = w.take();
    out += '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace detail {

inline void check_fold_count(const ExperimentConfig& cfg, const std::vector<PairRecord>& pairs) {
    int max_fold = 0;
    for (const auto& p : pairs) max_fold = std::max(max_fold, p.fold);
    if (max_fold + 1 != cfg.folds)
        throw std::runtime_error("pairs file has " + std::to_string(max_fold + 1) +
                                 " folds but config expects " + std::to_string(cfg.folds));
}

inline std::vector<std::string> all_paths(const std::vector<PairRecord>& pairs) {
    std::set<std::string> s;
    for (const auto& p : pairs) {
        s.insert(p.path1);
        s.insert(p.path2);
    }
    return {s.begin(), s.end()};
}

inline TrainConfig train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    TrainConfig tc;
    tc.components = cfg.words;
    tc.seed = seed;
    tc.max_em_iters = cfg.max_em_iters;
    tc.threads = cfg.threads;
    return tc;
}

} // namespace detail

/// Per-fold detector evaluation: build reference sets from training-fold
/// images, then classify every test-fold second image at every configured
/// resolution. Returns per-resolution percentages averaged over folds.
inline std::map<int, ConfusionRow> run_detector_experiment(const ExperimentConfig& cfg,
                                                           const std::vector<PairRecord>& pairs,
                                                           const ImageStore& preloaded_store) {
    cfg.validate();
    detail::check_fold_count(cfg, pairs);
    const SignatureConfig det_cfg = cfg.signature_config(cfg.canonical);

    std::map<int, double> a_pct_sum;
    for (int fold = 0; fold < cfg.folds; ++fold) {
        const auto train_pool = training_paths(pairs, fold);
        const auto feats = detail::pooled_features(preloaded_store, train_pool, cfg.canonical,
                                                   cfg.canonical, cfg.step, cfg.max_train_features,
                                                   cfg.threads);
        const VisualDictionary dict =
            train_dictionary(feats, detail::train_config(cfg, fold_seed(cfg.seed, fold, 0xD1C7)));

        const auto ref_paths = sample_paths(train_pool, cfg.reference_size, fold_seed(cfg.seed, fold, 0x4EF5));
        std::vector<GrayImage> ref_images;
        ref_images.reserve(ref_paths.size());
        for (const auto& p : ref_paths) ref_images.push_back(preloaded_store.get(p));
        const ReferenceSets refs = build_reference_sets(ref_images, dict, det_cfg);

        std::vector<const PairRecord*> test_pairs;
        for (const auto& p : pairs)
            if (p.fold == fold) test_pairs.push_back(&p);

        for (int r : cfg.resolutions) {
            std::vector<int> labels(test_pairs.size(), 0);
            for_chunks(test_pairs.size(), 1, cfg.threads, [&](std::size_t, std::size_t b, std::size_t e) {
                for (std::size_t i = b; i < e; ++i) {
                    const GrayImage probe = degrade(preloaded_store.get(test_pairs[i]->path2), r, cfg.canonical);
                    labels[i] = classify(refs, probe, dict) == ResolutionLabel::A ? 1 : 0;
                }
            });
            int count_a = 0;
            for (int l : labels) count_a += l;
            a_pct_sum[r] += 100.0 * count_a / static_cast<double>(test_pairs.size());
        }
    }

    std::map<int, ConfusionRow> confusion;
    for (int r : cfg.resolutions) {
        ConfusionRow row;
        row.a_pct = a_pct_sum[r] / cfg.folds;
        row.b_pct = 100.0 - row.a_pct;
        confusion[r] = row;
    }
    return confusion;
}

inline std::map<int, ConfusionRow> run_detector_experiment(const ExperimentConfig& cfg,
                                                           const std::vector<PairRecord>& pairs) {
    ImageStore store(cfg.corpus_root);
    store.preload(detail::all_paths(pairs), cfg.threads);
    return run_detector_experiment(cfg, pairs, store);
}

/// Leave-one-fold-out verification protocol: per fold, train both systems'
/// dictionaries, cohorts, and thresholds on the training folds, then score
/// every test pair at every resolution under System A, System B, and the
/// detector-routed dynamic system.
inline Report run_verification_experiment(const ExperimentConfig& cfg,
                                          const std::vector<PairRecord>& pairs,
                                          const ImageStore& preloaded_store) {
    cfg.validate();
    detail::check_fold_count(cfg, pairs);

    const SignatureConfig cfg_a = cfg.signature_config(cfg.if_size_a);
    const SignatureConfig cfg_b = cfg.signature_config(cfg.if_size_b);
    const SignatureConfig cfg_det = cfg.signature_config(cfg.canonical);
    const std::vector<std::string> systems{"system_a", "system_b", "dynamic"};

    // per_fold[sys][res][fold]
    std::map<std::string, std::map<int, std::vector<double>>> per_fold;
    std::map<std::string, std::vector<double>> thresholds;

    for (int fold = 0; fold < cfg.folds; ++fold) {
        const auto train_pool = training_paths(pairs, fold);
        const std::set<std::string> train_pool_set(train_pool.begin(), train_pool.end());

        std::vector<const PairRecord*> train_pairs, test_pairs;
        for (const auto& p : pairs) {
            if (p.fold == fold)
                test_pairs.push_back(&p);
            else if (train_pool_set.count(p.path1) && train_pool_set.count(p.path2))
                train_pairs.push_back(&p);
        }
        if (test_pairs.empty()) throw std::runtime_error("fold " + std::to_string(fold) + " has no test pairs");
        if (train_pairs.empty())
            throw std::runtime_error("fold " + std::to_string(fold) + " has no usable training pairs");

        // models
        const auto feats_a = detail::pooled_features(preloaded_store, train_pool, cfg.canonical,
                                                     cfg.if_size_a, cfg.step, cfg.max_train_features,
                                                     cfg.threads);
        const VisualDictionary dict_a =
            train_dictionary(feats_a, detail::train_config(cfg, fold_seed(cfg.seed, fold, 0xA)));
        const auto feats_b = detail::pooled_features(preloaded_store, train_pool, cfg.canonical,
                                                     cfg.if_size_b, cfg.step, cfg.max_train_features,
                                                     cfg.threads);
        const VisualDictionary dict_b =
            train_dictionary(feats_b, detail::train_config(cfg, fold_seed(cfg.seed, fold, 0xB)));
        // the detector shares System A's dictionary when their geometry coincides
        const bool shared_det_dict = cfg.if_size_a == cfg.canonical;
        const VisualDictionary dict_det =
            shared_det_dict
                ? dict_a
                : train_dictionary(detail::pooled_features(preloaded_store, train_pool, cfg.canonical,
                                                           cfg.canonical, cfg.step,
                                                           cfg.max_train_features, cfg.threads),
                                   detail::train_config(cfg, fold_seed(cfg.seed, fold, 0xDE7)));

        const auto cohort_paths = sample_paths(train_pool, cfg.cohort_size, fold_seed(cfg.seed, fold, 0xC0));
        const auto ref_paths = sample_paths(train_pool, cfg.reference_size, fold_seed(cfg.seed, fold, 0x5E7));
        std::vector<GrayImage> ref_images;
        ref_images.reserve(ref_paths.size());
        for (const auto& p : ref_paths) ref_images.push_back(preloaded_store.get(p));
        const ReferenceSets refs = build_reference_sets(ref_images, dict_det, cfg_det);

        // signature banks over every (path, variant) this fold touches
        const int gallery_variant = 0;
        std::set<detail::SigKey> keys, det_keys;
        auto add_pair_keys = [&](const PairRecord& p, std::set<detail::SigKey>& into) {
            for (int r : cfg.resolutions) {
                into.emplace(p.path1, cfg.degrade_both ? r : gallery_variant);
                into.emplace(p.path2, r);
            }
        };
        for (const auto* p : train_pairs) add_pair_keys(*p, keys);
        for (const auto* p : test_pairs) add_pair_keys(*p, keys);
        for (const auto& p : cohort_paths) keys.emplace(p, gallery_variant);
        for (const auto* p : test_pairs) add_pair_keys(*p, det_keys);

        detail::SignatureBank bank_a =
            detail::build_bank(preloaded_store, keys, dict_a, cfg_a, cfg.canonical, nullptr, cfg.threads);
        detail::SignatureBank bank_b =
            detail::build_bank(preloaded_store, keys, dict_b, cfg_b, cfg.canonical, nullptr, cfg.threads);
        const detail::SignatureBank bank_det = detail::build_bank(preloaded_store, det_keys, dict_det,
                                                                  cfg_det, cfg.canonical, nullptr,
                                                                  cfg.threads);

        auto cohort_set = [&](const detail::SignatureBank& bank) {
            CohortSet cs;
            cs.cohorts.reserve(cohort_paths.size());
            for (const auto& p : cohort_paths) cs.cohorts.push_back(bank.at(p, gallery_variant));
            return cs;
        };
        const CohortSet cohorts_a = cohort_set(bank_a);
        const CohortSet cohorts_b = cohort_set(bank_b);

        auto fill_cohort_sums = [&](detail::SignatureBank& bank, const CohortSet& cohorts) {
            bank.cohort_sums.resize(bank.sigs.size());
            for_chunks(bank.sigs.size(), 1, cfg.threads, [&](std::size_t, std::size_t b, std::size_t e) {
                for (std::size_t i = b; i < e; ++i)
                    bank.cohort_sums[i] = cohort_distance_sum(bank.sigs[i], cohorts);
            });
        };
        fill_cohort_sums(bank_a, cohorts_a);
        fill_cohort_sums(bank_b, cohorts_b);

        auto pair_score = [&](const detail::SignatureBank& bank, const PairRecord& p, int r) {
            const int v1 = cfg.degrade_both ? r : gallery_variant;
            const FaceSignature& s1 = bank.at(p.path1, v1);
            const FaceSignature& s2 = bank.at(p.path2, r);
            return d_norm_from_sums(d_raw(s1, s2), bank.cohort_sum(p.path1, v1),
                                    bank.cohort_sum(p.path2, r), cohort_paths.size());
        };

        // thresholds from the training folds, pooled over all resolutions
        auto calibrate = [&](const detail::SignatureBank& bank) {
            std::vector<std::pair<double, bool>> scores;
            scores.reserve(train_pairs.size() * cfg.resolutions.size());
            for (const auto* p : train_pairs)
                for (int r : cfg.resolutions) scores.emplace_back(pair_score(bank, *p, r), p->same);
            return calibrate_threshold(std::move(scores));
        };
        const double threshold_a = calibrate(bank_a);
        const double threshold_b = calibrate(bank_b);
        thresholds["system_a"].push_back(threshold_a);
        thresholds["system_b"].push_back(threshold_b);

        // test-fold evaluation
        for (int r : cfg.resolutions) {
            int correct_a = 0, correct_b = 0, correct_dyn = 0;
            for (const auto* p : test_pairs) {
                const bool same_a = pair_score(bank_a, *p, r) < threshold_a;
                const bool same_b = pair_score(bank_b, *p, r) < threshold_b;
                const int v1 = cfg.degrade_both ? r : gallery_variant;
                const ResolutionLabel l1 = classify_signature(refs, bank_det.at(p->path1, v1)).label;
                const ResolutionLabel l2 = classify_signature(refs, bank_det.at(p->path2, r)).label;
                const bool same_dyn = route(l1, l2) == ResolutionLabel::A ? same_a : same_b;
                correct_a += same_a == p->same;
                correct_b += same_b == p->same;
                correct_dyn += same_dyn == p->same;
            }
            const double n = static_cast<double>(test_pairs.size());
            per_fold["system_a"][r].push_back(correct_a / n);
            per_fold["system_b"][r].push_back(correct_b / n);
            per_fold["dynamic"][r].push_back(correct_dyn / n);
        }
    }

    Report report;
    report.config = cfg;
    report.per_fold_accuracy = per_fold;
    report.thresholds = thresholds;
    report.pair_count = static_cast<int>(pairs.size());
    report.image_count = static_cast<int>(detail::all_paths(pairs).size());
    for (const auto& sys : systems) {
        double total = 0.0;
        for (int r : cfg.resolutions) {
            const auto& folds = per_fold.at(sys).at(r);
            double s = 0.0;
            for (double v : folds) s += v;
            const double mean = s / static_cast<double>(folds.size());
            report.accuracy[sys][r] = mean;
            total += mean;
        }
        report.average[sys] = total / static_cast<double>(report.accuracy[sys].size());
    }
    report.validate();
    return report;
}

inline Report run_verification_experiment(const ExperimentConfig& cfg,
                                          const std::vector<PairRecord>& pairs) {
    ImageStore store(cfg.corpus_root);
    store.preload(detail::all_paths(pairs), cfg.threads);
    return run_verification_experiment(cfg, pairs, store);
}

} // namespace mrh

#endif
