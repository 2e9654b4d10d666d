// Command-line frontend for the multi-region-histogram face verification
// pipeline: image degradation, dictionary training, signature extraction,
// pair comparison, resolution detection, and the full evaluation protocol.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrh/detector.hpp"
#include "mrh/eval.hpp"
#include "mrh/gmm.hpp"
#include "mrh/image.hpp"
#include "mrh/matcher.hpp"
#include "mrh/signature.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::vector<std::string> read_manifest(const std::string& path) {
    const std::string text = mrh::read_text_file(path);
    std::vector<std::string> entries;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::string t = mrh::detail::trim(line);
        if (!t.empty()) entries.push_back(std::move(t));
    }
    return entries;
}

// Reference-set manifest: "[A]" and "[B]" sections, each listing signature
// file paths.
struct RefManifest {
    std::vector<std::string> a;
    std::vector<std::string> b;
};

RefManifest read_ref_manifest(const std::string& path) {
    const std::string text = mrh::read_text_file(path);
    RefManifest m;
    std::vector<std::string>* section = nullptr;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = mrh::detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t == "[A]") {
            section = &m.a;
        } else if (t == "[B]") {
            section = &m.b;
        } else if (t[0] == '[') {
            throw std::invalid_argument(path + " line " + std::to_string(line_no) +
                                        ": unknown section " + t);
        } else {
            if (!section)
                throw std::invalid_argument(path + " line " + std::to_string(line_no) +
                                            ": path before any [A]/[B] section");
            section->push_back(std::move(t));
        }
    }
    if (m.a.empty() || m.b.empty())
        throw std::invalid_argument(path + ": manifest must list signatures under both [A] and [B]");
    return m;
}

mrh::SignatureConfig make_sig_config(int if_size, const std::string& regions, int step) {
    mrh::SignatureConfig cfg;
    cfg.if_size = if_size;
    cfg.step = step;
    const auto x = regions.find('x');
    if (x == std::string::npos)
        throw std::invalid_argument("--regions expects RxC, e.g. 3x3, got \"" + regions + "\"");
    try {
        cfg.region_rows = std::stoi(regions.substr(0, x));
        cfg.region_cols = std::stoi(regions.substr(x + 1));
    } catch (const std::exception&) {
        throw std::invalid_argument("--regions expects RxC, e.g. 3x3, got \"" + regions + "\"");
    }
    cfg.validate();
    return cfg;
}

void check_signature_binding(const mrh::FaceSignature& sig, const mrh::SignatureConfig& cfg,
                             const mrh::VisualDictionary& dict, const std::string& what) {
    if (sig.config_id != cfg.hash_with(dict.id()))
        throw std::runtime_error(what + ": signature was built under a different dictionary or geometry");
}

int cmd_degrade(const std::string& in, const std::string& out, int res, int canonical) {
    const mrh::GrayImage img = mrh::load_pgm_file(in);
    mrh::save_pgm_file(mrh::degrade(img, res, canonical), out);
    return kExitOk;
}

int cmd_train_dict(const std::string& manifest, const std::string& out, int words, int if_size,
                   int step, std::uint64_t seed, int threads) {
    const auto paths = read_manifest(manifest);
    if (paths.empty()) throw std::invalid_argument(manifest + ": image manifest is empty");
    std::vector<mrh::FeatureVector> features;
    for (const auto& p : paths) {
        const mrh::GrayImage img = mrh::load_pgm_file(p);
        const auto feats =
            mrh::extract_features(mrh::resize_bilinear(img, if_size, if_size), step);
        for (const auto& pf : feats) features.push_back(pf.feature);
    }
    mrh::TrainConfig cfg;
    cfg.components = words;
    cfg.seed = seed;
    cfg.threads = threads;
    mrh::save_dict_file(mrh::train_dictionary(features, cfg), out);
    return kExitOk;
}

int cmd_signature(const std::string& dict_path, const std::string& image, const std::string& out,
                  const std::string& regions, int step, int if_size) {
    const mrh::VisualDictionary dict = mrh::load_dict_file(dict_path);
    const mrh::SignatureConfig cfg = make_sig_config(if_size, regions, step);
    const mrh::GrayImage img = mrh::load_pgm_file(image);
    mrh::save_signature_file(mrh::build_signature(img, dict, cfg), out);
    return kExitOk;
}

int cmd_compare(const std::string& dict_path, const std::string& cohorts_path, const std::string& a,
                const std::string& b, const std::string& regions, int step, int if_size) {
    const auto cohort_files = read_manifest(cohorts_path);
    if (cohort_files.empty()) throw std::invalid_argument(cohorts_path + ": cohort manifest is empty");
    const mrh::VisualDictionary dict = mrh::load_dict_file(dict_path);
    const mrh::SignatureConfig cfg = make_sig_config(if_size, regions, step);

    mrh::CohortSet cohorts;
    for (const auto& p : cohort_files) {
        cohorts.cohorts.push_back(mrh::load_signature_file(p));
        check_signature_binding(cohorts.cohorts.back(), cfg, dict, p);
    }
    const mrh::FaceSignature sa = mrh::build_signature(mrh::load_pgm_file(a), dict, cfg);
    const mrh::FaceSignature sb = mrh::build_signature(mrh::load_pgm_file(b), dict, cfg);
    std::printf("d_raw=%.10g\n", mrh::d_raw(sa, sb));
    std::printf("d_norm=%.10g\n", mrh::d_norm(sa, sb, cohorts));
    return kExitOk;
}

int cmd_detect(const std::string& dict_path, const std::string& refs_path, const std::string& image,
               const std::string& regions, int step, int if_size) {
    const RefManifest manifest = read_ref_manifest(refs_path);
    const mrh::VisualDictionary dict = mrh::load_dict_file(dict_path);
    const mrh::SignatureConfig cfg = make_sig_config(if_size, regions, step);

    mrh::ReferenceSets refs;
    refs.cfg = cfg;
    for (const auto& p : manifest.a) {
        refs.set_a.push_back(mrh::load_signature_file(p));
        check_signature_binding(refs.set_a.back(), cfg, dict, p);
    }
    for (const auto& p : manifest.b) {
        refs.set_b.push_back(mrh::load_signature_file(p));
        check_signature_binding(refs.set_b.back(), cfg, dict, p);
    }
    const mrh::DetectorScores s = mrh::classify_scores(refs, mrh::load_pgm_file(image), dict);
    std::printf("label=%s d_avg_A=%.10g d_avg_B=%.10g\n", mrh::to_string(s.label), s.d_avg_a,
                s.d_avg_b);
    return kExitOk;
}

int cmd_evaluate(const std::string& config_path, const std::string& pairs_path,
                 const std::string& corpus, const std::string& out, int threads, bool lfw_format) {
    mrh::ExperimentConfig cfg = mrh::parse_experiment_config(mrh::read_text_file(config_path));
    cfg.corpus_root = corpus;
    cfg.threads = threads;
    cfg.validate();

    const std::string pairs_text = mrh::read_text_file(pairs_path);
    std::vector<mrh::PairRecord> pairs =
        lfw_format ? mrh::parse_lfw_pairs(pairs_text) : mrh::parse_pairs(pairs_text);

    mrh::ImageStore store(cfg.corpus_root);
    store.preload(mrh::detail::all_paths(pairs), cfg.threads);

    mrh::Report report = mrh::run_verification_experiment(cfg, pairs, store);
    report.detector_confusion = mrh::run_detector_experiment(cfg, pairs, store);
    report.pairs_format = lfw_format ? "lfw" : "csv";
    mrh::write_file_atomic(out, mrh::write_report(report));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-region histogram face verification with resolution-mismatch detection"};
    app.require_subcommand(1);

    // degrade
    auto* degrade = app.add_subcommand("degrade", "Reduce underlying resolution, keep canonical size");
    std::string deg_in, deg_out;
    int deg_res = 0, deg_canonical = 64;
    degrade->add_option("input", deg_in, "Input PGM image")->required();
    degrade->add_option("output", deg_out, "Output PGM image")->required();
    degrade->add_option("--res", deg_res, "Underlying resolution after degradation")->required();
    degrade->add_option("--canonical", deg_canonical, "Canonical output size")->capture_default_str();

    // train-dict
    auto* train = app.add_subcommand("train-dict", "Train the visual dictionary from a manifest of images");
    std::string tr_manifest, tr_out;
    int tr_words = 1024, tr_if = 64, tr_step = 4, tr_threads = 1;
    std::uint64_t tr_seed = 0;
    train->add_option("manifest", tr_manifest, "Text file, one image path per line")->required();
    train->add_option("output", tr_out, "Output dictionary file")->required();
    train->add_option("--words", tr_words, "Number of visual words")->capture_default_str();
    train->add_option("--if-size", tr_if, "Intermediate format size")->capture_default_str();
    train->add_option("--step", tr_step, "Block step in pixels")->capture_default_str();
    train->add_option("--seed", tr_seed, "Training seed")->capture_default_str();
    train->add_option("--threads", tr_threads, "Worker threads (output is thread-count independent)")
        ->capture_default_str();

    // signature
    auto* sig = app.add_subcommand("signature", "Build a face signature file");
    std::string sg_dict, sg_image, sg_out, sg_regions = "3x3";
    int sg_step = 4, sg_if = 64;
    sig->add_option("dict", sg_dict, "Dictionary file")->required();
    sig->add_option("image", sg_image, "Input PGM image")->required();
    sig->add_option("output", sg_out, "Output signature file")->required();
    sig->add_option("--regions", sg_regions, "Region grid RxC")->capture_default_str();
    sig->add_option("--step", sg_step, "Block step in pixels")->capture_default_str();
    sig->add_option("--if-size", sg_if, "Intermediate format size")->capture_default_str();

    // compare
    auto* cmp = app.add_subcommand("compare", "Raw and cohort-normalized distance between two faces");
    std::string cp_dict, cp_cohorts, cp_a, cp_b, cp_regions = "3x3";
    int cp_step = 4, cp_if = 64;
    cmp->add_option("dict", cp_dict, "Dictionary file")->required();
    cmp->add_option("cohorts", cp_cohorts, "Manifest of cohort signature files")->required();
    cmp->add_option("a", cp_a, "First PGM image")->required();
    cmp->add_option("b", cp_b, "Second PGM image")->required();
    cmp->add_option("--regions", cp_regions, "Region grid RxC")->capture_default_str();
    cmp->add_option("--step", cp_step, "Block step in pixels")->capture_default_str();
    cmp->add_option("--if-size", cp_if, "Intermediate format size")->capture_default_str();

    // detect
    auto* det = app.add_subcommand("detect", "Classify a face's underlying resolution as A or B");
    std::string dt_dict, dt_refs, dt_image, dt_regions = "3x3";
    int dt_step = 4, dt_if = 64;
    det->add_option("dict", dt_dict, "Dictionary file")->required();
    det->add_option("refs", dt_refs, "Reference-set manifest with [A] and [B] sections")->required();
    det->add_option("image", dt_image, "Probe PGM image")->required();
    det->add_option("--regions", dt_regions, "Region grid RxC")->capture_default_str();
    det->add_option("--step", dt_step, "Block step in pixels")->capture_default_str();
    det->add_option("--if-size", dt_if, "Canonical detector size")->capture_default_str();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Run the fold-based detector and verification experiments");
    std::string ev_config, ev_pairs, ev_corpus, ev_out;
    int ev_threads = 1;
    bool ev_lfw = false;
    ev->add_option("config", ev_config, "Experiment config file (key = value lines)")->required();
    ev->add_option("pairs", ev_pairs, "Pair list file")->required();
    ev->add_option("corpus", ev_corpus, "Corpus root directory")->required();
    ev->add_option("output", ev_out, "Output report JSON")->required();
    ev->add_option("--threads", ev_threads, "Worker threads (output is thread-count independent)")
        ->capture_default_str();
    ev->add_flag("--lfw", ev_lfw, "Parse the pairs file in the published pairs.txt layout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (degrade->parsed()) return cmd_degrade(deg_in, deg_out, deg_res, deg_canonical);
        if (train->parsed())
            return cmd_train_dict(tr_manifest, tr_out, tr_words, tr_if, tr_step, tr_seed, tr_threads);
        if (sig->parsed()) return cmd_signature(sg_dict, sg_image, sg_out, sg_regions, sg_step, sg_if);
        if (cmp->parsed())
            return cmd_compare(cp_dict, cp_cohorts, cp_a, cp_b, cp_regions, cp_step, cp_if);
        if (det->parsed()) return cmd_detect(dt_dict, dt_refs, dt_image, dt_regions, dt_step, dt_if);
        if (ev->parsed()) return cmd_evaluate(ev_config, ev_pairs, ev_corpus, ev_out, ev_threads, ev_lfw);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
