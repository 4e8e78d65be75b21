// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "fixtures.hpp"
#include "marlin/cli.hpp"

using namespace marlin;
namespace fs = std::filesystem;

namespace {

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Config file for the tiny pipeline over a given corpus.
fs::path write_tiny_config(const fs::path& dir, const fs::path& manifest, const fs::path& out_dir,
                           int epochs) {
    nlohmann::ordered_json j;
    j["base_lr"] = 0.05;
    j["batch_size"] = 4;
    j["epochs"] = epochs;
    j["lambda_w"] = 0.1;
    j["mask_ratio"] = 0.9;
    j["mask_strategy"] = "fasking";
    j["seed"] = 7;
    j["clip"] = {{"channels", 3}, {"frames", 4}, {"height", 16}, {"width", 16}, {"temporal_stride", 2}};
    j["model"] = {{"variant", "tiny"}, {"cube_t", 2}, {"cube_h", 4}, {"cube_w", 4}};
    j["manifest"] = fs::relative(manifest, dir).generic_string();
    j["out_dir"] = fs::relative(out_dir, dir).generic_string();
    const auto path = dir / "config.json";
    std::ofstream os(path, std::ios::trunc);
    os << j.dump(2);
    return path;
}

}  // namespace

TEST_CASE("cmd_synth: writes count clips, a manifest, and a report") {
    const auto dir = fixtures::fresh_dir("cli_synth");
    cli::SynthOptions opt;
    opt.count = 10;
    opt.spec = {3, 8, 16, 16, 2};
    opt.out_dir = dir;
    opt.seed = 4;
    const auto report = cli::cmd_synth(opt);

    int files = 0;
    for (const auto& e : fs::directory_iterator(dir / "clips"))
        if (e.path().extension() == ".mclip") ++files;
    REQUIRE(files == 10);
    const auto manifest = load_manifest(dir / "manifest.jsonl");
    REQUIRE(manifest.entries.size() == 10);
    REQUIRE(fs::exists(dir / "report.json"));
    REQUIRE(report.metrics.at("clips_written") == 10);
}

TEST_CASE("cmd_synth: same seed reproduces the corpus byte for byte") {
    const auto d1 = fixtures::fresh_dir("cli_synth_a");
    const auto d2 = fixtures::fresh_dir("cli_synth_b");
    cli::SynthOptions opt;
    opt.count = 4;
    opt.spec = {3, 8, 16, 16, 2};
    opt.seed = 99;
    opt.out_dir = d1;
    cli::cmd_synth(opt);
    opt.out_dir = d2;
    cli::cmd_synth(opt);
    for (int i = 0; i < 4; ++i) {
        char name[48];
        std::snprintf(name, sizeof(name), "clip_%05d.mclip", i);
        REQUIRE(read_bytes(d1 / "clips" / name) == read_bytes(d2 / "clips" / name));
    }
}

TEST_CASE("cmd_synth: labeled mode emits labels matching the generator flags") {
    const auto dir = fixtures::fresh_dir("cli_synth_labeled");
    cli::SynthOptions opt;
    opt.count = 6;
    opt.spec = {3, 8, 16, 16, 2};
    opt.labeled = true;
    opt.out_dir = dir;
    cli::cmd_synth(opt);
    const auto manifest = load_manifest(dir / "manifest.jsonl");
    REQUIRE(manifest.task.has_value());
    REQUIRE(manifest.task->kind == "multiclass");
    for (int i = 0; i < 6; ++i) REQUIRE((*manifest.entries[static_cast<std::size_t>(i)].label)[0] == (i % 2 ? 1.0 : 0.0));
}

TEST_CASE("cmd_mask: reference geometry plan has n = 1411 at r = 0.9") {
    const auto dir = fixtures::fresh_dir("cli_mask");
    // paper-shaped clip: 3x16x224x224
    const auto clip = synth_face_clip(1, ClipSpec{3, 16, 224, 224, 2}, {});
    const auto clip_path = dir / "big.mclip";
    write_clip(clip, clip_path);

    cli::MaskOptions opt;
    opt.clip_path = clip_path;
    opt.out_dir = dir;
    opt.strategy = MaskStrategy::fasking;
    opt.ratio = 0.9;
    opt.seed = 2;
    opt.preview = true;
    const auto report = cli::cmd_mask(opt);
    REQUIRE(report.metrics.at("k") == 1568);
    REQUIRE(report.metrics.at("n") == 1411);

    // plan JSON re-parses to the identical bitset
    std::ifstream is(dir / "plan.json");
    nlohmann::json pj;
    is >> pj;
    const auto plan = mask_plan_from_json(pj);
    REQUIRE(plan.n == 1411);
    REQUIRE(plan.k() == 1568);

    // preview: unmasked cubes bitwise equal to the source, masked cubes zero
    const auto preview = load_clip(dir / "preview.mclip");
    const auto grid = TokenGridSpec::for_clip(3, 16, 224, 224, 2, 16, 16);
    const auto src_tokens = patchify<float>(clip, grid);
    const auto prev_tokens = patchify<float>(preview, grid);
    for (int i = 0; i < plan.k(); ++i)
        for (int j = 0; j < src_tokens.values.cols(); ++j) {
            if (plan.masked[static_cast<std::size_t>(i)]) {
                REQUIRE(prev_tokens.values(i, j) == 0.0f);
            } else {
                REQUIRE(prev_tokens.values(i, j) == src_tokens.values(i, j));
            }
        }
}

TEST_CASE("cmd_pretrain + cmd_probe + cmd_eval: tiny pipeline runs end to end") {
    const auto dir = fixtures::fresh_dir("cli_pipeline");

    // corpora
    cli::SynthOptions synth;
    synth.spec = {3, 8, 16, 16, 2};
    synth.count = 16;
    synth.labeled = true;
    synth.seed = 5;
    synth.out_dir = dir / "train";
    cli::cmd_synth(synth);
    synth.seed = 6;
    synth.out_dir = dir / "test";
    cli::cmd_synth(synth);
    synth.labeled = false;
    synth.seed = 7;
    synth.count = 8;
    synth.out_dir = dir / "pretrain_data";
    cli::cmd_synth(synth);

    const auto config_path = write_tiny_config(dir, dir / "pretrain_data" / "manifest.jsonl",
                                               dir / "run", 2);
    const auto cfg = cli::load_project_config(config_path);
    const auto pre_report = cli::cmd_pretrain(cfg);
    REQUIRE(fs::exists(dir / "run" / "final" / "manifest.json"));
    REQUIRE(fs::exists(dir / "run" / "train_log.csv"));
    REQUIRE(pre_report.metrics.at("steps") == 4);

    cli::FeaturesOptions feats;
    feats.checkpoint_dir = dir / "run" / "final";
    feats.manifest_path = dir / "test" / "manifest.jsonl";
    feats.out_dir = dir / "features";
    feats.clip = {3, 4, 16, 16, 2};
    const auto feat_report = cli::cmd_features(feats);
    REQUIRE(feat_report.metrics.at("clips") == 16);
    REQUIRE(fs::exists(dir / "features" / "features_index.jsonl"));

    cli::ProbeOptions probe;
    probe.checkpoint_dir = dir / "run" / "final";
    probe.train_manifest = dir / "train" / "manifest.jsonl";
    probe.test_manifest = dir / "test" / "manifest.jsonl";
    probe.mode = AdaptMode::linear_probe;
    probe.fraction = 0.5;
    probe.train.epochs = 2;
    probe.train.batch_size = 4;
    probe.train.base_lr = 0.3;
    probe.clip = {3, 4, 16, 16, 2};
    probe.out_dir = dir / "probe";
    const auto probe_report = cli::cmd_probe(probe);
    REQUIRE(probe_report.metrics.at("effective_train_size") == 8);  // 0.5 of 16
    REQUIRE(fs::exists(dir / "probe" / "head" / "manifest.json"));
    REQUIRE(probe_report.metrics.contains("accuracy"));

    cli::EvalOptions ev;
    ev.checkpoint_dir = dir / "run" / "final";
    ev.head_dir = dir / "probe" / "head";
    ev.test_manifest = dir / "test" / "manifest.jsonl";
    ev.clip = {3, 4, 16, 16, 2};
    ev.out_dir = dir / "eval";
    const auto eval_report = cli::cmd_eval(ev);
    REQUIRE(eval_report.metrics.at("accuracy") == probe_report.metrics.at("accuracy"));
}

TEST_CASE("report: config hash is content-addressed and order-insensitive") {
    nlohmann::ordered_json a;
    a["x"] = 1;
    a["y"] = 2;
    nlohmann::ordered_json b;
    b["y"] = 2;
    b["x"] = 1;
    REQUIRE(config_hash(a) == config_hash(b));
    nlohmann::ordered_json c = a;
    c["x"] = 3;
    REQUIRE(config_hash(a) != config_hash(c));
}

TEST_CASE("project config: missing file and bad json map to error kinds") {
    try {
        cli::load_project_config("/nonexistent/config.json");
        FAIL("expected io error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::io);
    }
    const auto dir = fixtures::fresh_dir("cli_badcfg");
    const auto path = dir / "bad.json";
    std::ofstream(path) << "{not json";
    try {
        cli::load_project_config(path);
        FAIL("expected format error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::format);
    }
}
