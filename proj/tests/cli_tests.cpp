// End-to-end checks of the command-line surface: exit codes, output
// formats, atomic writes, and byte-level determinism. Run as
//   mrh_cli_tests <path-to-mrh-binary>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <sys/wait.h>

#include "mrh/eval.hpp"
#include "mrh/gmm.hpp"
#include "mrh/image.hpp"
#include "mrh/signature.hpp"
#include "support/synthetic_corpus.hpp"

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

#define CHECK_MSG(cond, msg)                                                              \
    do {                                                                                  \
        if (!(cond)) {                                                                    \
            ++g_failures;                                                                 \
            std::cerr << "FAIL " << __FILE__ << ":" << __LINE__ << ": " << msg << "\n";   \
        }                                                                                 \
    } while (0)

std::string g_cli;
fs::path g_work;

int run(const std::string& args, const fs::path& stdout_file = {}) {
    std::string cmd = g_cli + " " + args;
    if (!stdout_file.empty()) cmd += " > " + stdout_file.string();
    cmd += " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return -1;
}

std::string slurp(const fs::path& p) { return mrh::read_text_file(p); }

void write_text(const fs::path& p, const std::string& text) { mrh::write_file_atomic(p, text); }

fs::path make_manifest(const fs::path& file, const std::vector<std::string>& entries) {
    std::string text;
    for (const auto& e : entries) text += e + "\n";
    write_text(file, text);
    return file;
}

void test_degrade() {
    const fs::path in = g_work / "face.pgm";
    const fs::path out = g_work / "face_r16.pgm";
    mrh::save_pgm_file(testsupport::render_face(testsupport::random_identity(1), 2), in);

    CHECK_MSG(run("degrade " + in.string() + " " + out.string() + " --res 16") == 0, "degrade exit 0");
    const mrh::GrayImage img = mrh::load_pgm_file(out);
    CHECK_MSG(img.width == 64 && img.height == 64, "degraded image is canonical size");

    const fs::path out2 = g_work / "never.pgm";
    CHECK_MSG(run("degrade " + in.string() + " " + out2.string() + " --res 128") == 1,
              "res above canonical is a usage error");
    CHECK_MSG(!fs::exists(out2), "no output written on failure");
    CHECK_MSG(run("degrade " + (g_work / "missing.pgm").string() + " " + out2.string() + " --res 16") == 2,
              "missing input is a data error");

    const fs::path ascii = g_work / "ascii.pgm";
    write_text(ascii, "P2\n2 2\n255\n0 1 2 3\n");
    CHECK_MSG(run("degrade " + ascii.string() + " " + out2.string() + " --res 16") == 2,
              "non-P5 input is a data error");
    CHECK_MSG(run("degrade --help") == 0, "help exits 0");
    CHECK_MSG(run("degrade " + in.string()) == 1, "missing arguments is a usage error");
}

void test_train_and_signature() {
    std::vector<std::string> images;
    for (int i = 0; i < 8; ++i) {
        const fs::path p = g_work / ("train_" + std::to_string(i) + ".pgm");
        mrh::save_pgm_file(testsupport::render_face(testsupport::random_identity(100 + i), i), p);
        images.push_back(p.string());
    }
    const fs::path manifest = make_manifest(g_work / "images.txt", images);
    const fs::path dict_path = g_work / "dict.bin";

    CHECK_MSG(run("train-dict " + manifest.string() + " " + dict_path.string() + " --words 8 --seed 5") == 0,
              "train-dict exit 0");
    const mrh::VisualDictionary dict = mrh::load_dict_file(dict_path);
    CHECK_MSG(dict.components() == 8, "dictionary has requested word count");

    const fs::path dict2 = g_work / "dict2.bin";
    run("train-dict " + manifest.string() + " " + dict2.string() + " --words 8 --seed 5");
    CHECK_MSG(slurp(dict_path) == slurp(dict2), "train-dict is byte deterministic");

    const fs::path empty = make_manifest(g_work / "empty.txt", {});
    CHECK_MSG(run("train-dict " + empty.string() + " " + dict2.string() + " --words 8") == 1,
              "empty manifest is a usage error");
    CHECK_MSG(run("train-dict " + manifest.string() + " " + dict2.string() + " --words 100000") == 2,
              "too many words for the data is a data error");

    const fs::path sig_path = g_work / "face.sig";
    CHECK_MSG(run("signature " + dict_path.string() + " " + images[0] + " " + sig_path.string()) == 0,
              "signature exit 0");
    const mrh::FaceSignature sig = mrh::load_signature_file(sig_path);
    CHECK_MSG(sig.regions == 9, "default signature has 9 regions");

    const fs::path sig2 = g_work / "face2.sig";
    run("signature " + dict_path.string() + " " + images[0] + " " + sig2.string());
    CHECK_MSG(slurp(sig_path) == slurp(sig2), "signature is byte deterministic");

    const fs::path broken = g_work / "broken.bin";
    std::string bad = slurp(dict_path);
    bad[0] = 'X';
    write_text(broken, bad);
    CHECK_MSG(run("signature " + broken.string() + " " + images[0] + " " + sig2.string()) == 2,
              "corrupt dictionary is a data error");
}

void test_compare_and_detect() {
    const fs::path dict_path = g_work / "dict.bin";
    const mrh::VisualDictionary dict = mrh::load_dict_file(dict_path);
    mrh::SignatureConfig cfg;
    cfg.dict_id = dict.id();

    // cohort signatures from extra identities
    std::vector<std::string> cohort_sigs;
    for (int i = 0; i < 4; ++i) {
        const auto img = testsupport::render_face(testsupport::random_identity(200 + i), i);
        const fs::path p = g_work / ("cohort_" + std::to_string(i) + ".sig");
        mrh::save_signature_file(mrh::build_signature(img, dict, cfg), p);
        cohort_sigs.push_back(p.string());
    }
    const fs::path cohorts = make_manifest(g_work / "cohorts.txt", cohort_sigs);

    const std::string face = (g_work / "train_0.pgm").string();
    const fs::path out = g_work / "compare.txt";
    CHECK_MSG(run("compare " + dict_path.string() + " " + cohorts.string() + " " + face + " " + face,
                  out) == 0,
              "compare exit 0");
    CHECK_MSG(slurp(out) == "d_raw=0\nd_norm=0\n", "self comparison prints zero distances");

    const fs::path no_cohorts = make_manifest(g_work / "no_cohorts.txt", {});
    CHECK_MSG(run("compare " + dict_path.string() + " " + no_cohorts.string() + " " + face + " " + face) == 1,
              "empty cohort manifest is a usage error");

    // reference sets: A from sharp images, B from degraded ones
    std::string refs_text = "[A]\n";
    for (int i = 0; i < 3; ++i) {
        const auto img = testsupport::render_face(testsupport::random_identity(300 + i), i);
        const fs::path p = g_work / ("ref_a_" + std::to_string(i) + ".sig");
        mrh::save_signature_file(mrh::build_signature(img, dict, cfg), p);
        refs_text += p.string() + "\n";
    }
    refs_text += "[B]\n";
    for (int i = 0; i < 3; ++i) {
        const auto img = testsupport::render_face(testsupport::random_identity(300 + i), i);
        const fs::path p = g_work / ("ref_b_" + std::to_string(i) + ".sig");
        mrh::save_signature_file(mrh::build_signature(mrh::degrade(img, 16, 64), dict, cfg), p);
        refs_text += p.string() + "\n";
    }
    const fs::path refs = g_work / "refs.txt";
    write_text(refs, refs_text);

    const fs::path probe = g_work / "probe.pgm";
    mrh::save_pgm_file(mrh::degrade(testsupport::render_face(testsupport::random_identity(400), 1), 8, 64),
                       probe);
    CHECK_MSG(run("detect " + dict_path.string() + " " + refs.string() + " " + probe.string(), out) == 0,
              "detect exit 0");
    const std::string detect_out = slurp(out);
    CHECK_MSG(detect_out.rfind("label=", 0) == 0, "detect prints label first");
    CHECK_MSG(detect_out.find(" d_avg_A=") != std::string::npos &&
                  detect_out.find(" d_avg_B=") != std::string::npos,
              "detect prints both averages");
    CHECK_MSG(detect_out.rfind("label=B", 0) == 0, "heavily degraded probe detects as B");

    const fs::path bad_refs = g_work / "bad_refs.txt";
    write_text(bad_refs, "no_section.sig\n");
    CHECK_MSG(run("detect " + dict_path.string() + " " + bad_refs.string() + " " + probe.string()) == 1,
              "malformed refs manifest is a usage error");
}

void test_evaluate() {
    const fs::path corpus_dir = g_work / "corpus";
    const auto corpus = testsupport::write_synthetic_corpus(corpus_dir, 8, 3, 99);
    const fs::path pairs = g_work / "pairs.csv";
    write_text(pairs, testsupport::make_pairs_csv(corpus, 2, 6, 6, 3));
    const fs::path config = g_work / "eval.cfg";
    write_text(config,
               "resolutions = 64, 8\n"
               "folds = 2\n"
               "seed = 19\n"
               "words = 4\n"
               "reference_size = 4\n"
               "cohort_size = 4\n"
               "max_em_iters = 15\n");

    const fs::path report1 = g_work / "report1.json";
    const fs::path report2 = g_work / "report2.json";
    const std::string base =
        "evaluate " + config.string() + " " + pairs.string() + " " + corpus_dir.string() + " ";
    CHECK_MSG(run(base + report1.string()) == 0, "evaluate exit 0");
    CHECK_MSG(run(base + report2.string() + " --threads 3") == 0, "evaluate with threads exit 0");
    CHECK_MSG(slurp(report1) == slurp(report2), "evaluate report is thread-count independent");
    CHECK_MSG(slurp(report1).find("\"detector_confusion\"") != std::string::npos,
              "report carries the detector table");

    const fs::path bad_pairs = g_work / "bad_pairs.csv";
    write_text(bad_pairs, "0,a.pgm,b.pgm,same\n3,c.pgm,d.pgm,different\n");
    const fs::path never = g_work / "never.json";
    CHECK_MSG(run("evaluate " + config.string() + " " + bad_pairs.string() + " " + corpus_dir.string() +
                  " " + never.string()) == 2,
              "non-contiguous folds is a data error");
    CHECK_MSG(!fs::exists(never), "no report written on failure");
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: mrh_cli_tests <mrh binary>\n";
        return 2;
    }
    g_cli = argv[1];
    testsupport::TempDir work("cli");
    g_work = work.path();

    test_degrade();
    test_train_and_signature();
    test_compare_and_detect();
    test_evaluate();

    if (g_failures == 0) {
        std::cout << "cli tests passed\n";
        return 0;
    }
    std::cout << g_failures << " cli test failures\n";
    return 1;
}
