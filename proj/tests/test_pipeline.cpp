// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace teleview;
namespace fs = std::filesystem;

namespace {

Json smallRig(int size) {
    return {{"width", size}, {"height", size}};
}

Json planeConfig(int size, const fs::path &out) {
    return {{"rig", smallRig(size)},
            {"scene", {{"preset", "plane"}, {"seed", 7}, {"depth", 1.25}, {"half_u", 0.3}, {"half_v", 0.3}}},
            {"output_dir", out.string()}};
}

Json mannequinConfig(int size, const fs::path &out) {
    return {{"rig", smallRig(size)},
            {"scene", {{"preset", "mannequin"}, {"seed", 4}}},
            {"noise_sigma", 0.01},
            {"seed", 9},
            {"blend", {{"occlusion_threshold", 0.03}}},
            {"novel", {{"mode", "eyes"}}},
            {"output_dir", out.string()}};
}

std::string configErrorOf(const Json &j) {
    try {
        parsePipelineConfig(j, ".");
    } catch (const ConfigError &e) {
        return e.what();
    }
    return {};
}

std::string slurp(const fs::path &p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void writeText(const fs::path &p, const std::string &text) {
    std::ofstream os(p);
    os << text;
}

struct CliRun {
    int code = -1;
    std::string output;
};

CliRun runCli(const std::string &args, const fs::path &dir) {
    const fs::path log = dir / "cli.log";
    const std::string cmd = std::string("\"") + TELEVIEW_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = slurp(log);
    return r;
}

bool haveCli() {
    return std::string(TELEVIEW_CLI).size() > 0;
}

} // namespace

TEST(Pipeline, PlaneAtReferenceCameraIsNearlyExact) {
    const fs::path dir = teleview::testing::scratchDir("pipeline_plane");
    const PipelineConfig cfg = parsePipelineConfig(planeConfig(128, dir / "out"));
    const SynthesisResult res = synthesize(cfg);
    ASSERT_TRUE(res.truth.has_value());
    EXPECT_GE(psnr(res.final_image, res.truth->image), 35.0);
}

TEST(Pipeline, ArtifactsAreByteIdenticalAcrossRunsAndThreadCounts) {
    const fs::path dir = teleview::testing::scratchDir("pipeline_determinism");
    const int saved = threadCount();
    std::vector<Json> manifests;
    std::vector<fs::path> outs;
    for (int threads : {1, 1, 4}) {
        const fs::path out = dir / ("run" + std::to_string(manifests.size()));
        Json j = mannequinConfig(96, out);
        j["threads"] = threads;
        const RunArtifacts art = runSynthesize(parsePipelineConfig(j));
        manifests.push_back(art.manifest);
        outs.push_back(out);
    }
    setThreadCount(saved);
    for (std::size_t k = 1; k < manifests.size(); ++k) {
        EXPECT_EQ(manifests[k]["config_hash"], manifests[0]["config_hash"]);
        EXPECT_EQ(manifests[k]["outputs"], manifests[0]["outputs"]);
        EXPECT_EQ(manifests[k]["metrics"].dump(), manifests[0]["metrics"].dump());
        for (const auto &[name, hash] : manifests[0]["outputs"].items()) {
            EXPECT_EQ(slurp(outs[k] / name), slurp(outs[0] / name)) << name;
        }
    }
}

TEST(Pipeline, ManifestHashesMatchWrittenFiles) {
    const fs::path dir = teleview::testing::scratchDir("pipeline_manifest");
    const PipelineConfig cfg = parsePipelineConfig(mannequinConfig(64, dir / "out"));
    const RunArtifacts art = runSynthesize(cfg);
    ASSERT_TRUE(fs::exists(art.manifest_path));
    const Json on_disk = loadJsonFile(art.manifest_path);
    EXPECT_EQ(on_disk["config_hash"], hex64(fnv1a(cfg.canonical.dump())));
    EXPECT_EQ(on_disk["config"], cfg.canonical);
    ASSERT_TRUE(on_disk["outputs"].contains("final.png"));
    ASSERT_TRUE(on_disk["outputs"].contains("features/alpha.pfm"));
    for (const auto &[name, hash] : on_disk["outputs"].items()) {
        EXPECT_EQ(hash.get<std::string>(), hex64(hashFile(cfg.output_dir / name))) << name;
    }
    EXPECT_TRUE(on_disk["metrics"].contains("psnr_final"));
    EXPECT_TRUE(on_disk["timings_ms"].contains("total"));
}

TEST(Pipeline, ConfigHashIgnoresPathsAndThreads) {
    Json a = mannequinConfig(64, "/tmp/a");
    Json b = mannequinConfig(64, "/tmp/b");
    b["threads"] = 3;
    b["cache_dir"] = "/tmp/cache";
    EXPECT_EQ(parsePipelineConfig(a).canonical, parsePipelineConfig(b).canonical);
    b["seed"] = 10;
    EXPECT_NE(parsePipelineConfig(a).canonical, parsePipelineConfig(b).canonical);
}

TEST(PipelineConfig, DefaultsFollowTheRig) {
    const PipelineConfig cfg = parsePipelineConfig(planeConfig(200, "out"));
    EXPECT_DOUBLE_EQ(cfg.matcher.max_disparity, 100.0);
    EXPECT_EQ(cfg.novel.mode, NovelMode::Cam0);
    EXPECT_EQ(cfg.novel.eye_options.width, 200);
    EXPECT_EQ(resolveNovelCamera(cfg).width(), 200);
}

TEST(PipelineConfig, ErrorsNameTheOffendingKey) {
    Json j = planeConfig(64, "out");
    j["frobnicate"] = 1;
    EXPECT_NE(configErrorOf(j).find("frobnicate"), std::string::npos);

    j = planeConfig(64, "out");
    j["rig"] = "does/not/exist.json";
    EXPECT_NE(configErrorOf(j).find("does/not/exist.json"), std::string::npos);

    j = planeConfig(64, "out");
    j.erase("rig");
    EXPECT_NE(configErrorOf(j).find("rig"), std::string::npos);

    j = planeConfig(64, "out");
    j["captures"] = "somewhere";
    EXPECT_NE(configErrorOf(j).find("scene"), std::string::npos);

    j = planeConfig(64, "out");
    j["png_bit_depth"] = 12;
    EXPECT_NE(configErrorOf(j).find("png_bit_depth"), std::string::npos);

    j = planeConfig(64, "out");
    j["novel"] = {{"mode", "sideways"}};
    EXPECT_NE(configErrorOf(j).find("novel.mode"), std::string::npos);

    j = planeConfig(64, "out");
    j["splat"] = {{"silhouette_alpha", 0.0}};
    EXPECT_NE(configErrorOf(j).find("splat"), std::string::npos);
}

TEST(PipelineConfig, ShippedConfigsLoad) {
    const fs::path root = TELEVIEW_SOURCE_DIR;
    const PipelineConfig cfg = loadPipelineConfig(root / "configs" / "synthesize_mannequin.json");
    EXPECT_EQ(cfg.rig.camera(0).width(), 512);
    EXPECT_EQ(cfg.novel.mode, NovelMode::Eyes);
    ASSERT_TRUE(cfg.scene.has_value());
    const LatencyBudget b = parseLatencyBudget(loadJsonFile(root / "configs" / "budget_published.json"), "budget");
    const LatencyBudget p = publishedLatencyBudget();
    ASSERT_EQ(b.stages.size(), p.stages.size());
    for (std::size_t i = 0; i < b.stages.size(); ++i) {
        EXPECT_EQ(b.stages[i].name, p.stages[i].name);
        EXPECT_EQ(b.stages[i].ms, p.stages[i].ms);
    }
    EXPECT_EQ(b.declared_total_ms, p.declared_total_ms);
}

TEST(CompleteDepth, FillsHolesInsideMaskOnly) {
    DepthMap d(12, 10);
    Mask m(12, 10);
    for (int y = 2; y < 8; ++y) {
        for (int x = 2; x < 10; ++x) {
            m.set(x, y, true);
            if ((x + y) % 3 != 0) d.set(x, y, 1.5f);
        }
    }
    d.set(0, 0, 9.0f); // outside the mask: dropped
    const DepthMap out = completeDepth(d, m, 1);
    for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 12; ++x) {
            EXPECT_EQ(out.valid(x, y), m(x, y));
            if (m(x, y)) {
                EXPECT_FLOAT_EQ(out(x, y), 1.5f);
            }
        }
    }
}

TEST(CompleteDepth, MedianRemovesIsolatedSpike) {
    DepthMap d(9, 9);
    Mask m(9, 9);
    for (int y = 0; y < 9; ++y) {
        for (int x = 0; x < 9; ++x) {
            m.set(x, y, true);
            d.set(x, y, 2.0f);
        }
    }
    d.set(4, 4, 0.5f);
    EXPECT_FLOAT_EQ(completeDepth(d, m, 1)(4, 4), 2.0f);
    EXPECT_FLOAT_EQ(completeDepth(d, m, 0)(4, 4), 0.5f);
    EXPECT_EQ(completeDepth(DepthMap(9, 9), m, 1).validCount(), 0u);
}

TEST(DilateMask, GrowsByChessboardRadius) {
    Mask m(7, 7);
    m.set(3, 3, true);
    const Mask d = dilateMask(m, 2);
    for (int y = 0; y < 7; ++y) {
        for (int x = 0; x < 7; ++x) {
            EXPECT_EQ(d(x, y), std::abs(x - 3) <= 2 && std::abs(y - 3) <= 2);
        }
    }
    EXPECT_EQ(dilateMask(m, 0), m);
}

TEST(CarveDepth, DropsPointsOnAnotherViewsBackground) {
    const RigSpec rig = makeRig(RigOptions{.width = 96, .height = 96});
    const SceneSpec scene = makePlaneScene(1.25, 7, 0.2, 0.2);
    std::array<GroundTruthView, 4> gt;
    for (int i = 0; i < 4; ++i) {
        gt[static_cast<std::size_t>(i)] = renderGroundTruth(scene, rig.camera(i));
    }
    std::vector<SilhouetteView> others;
    for (int i = 1; i < 4; ++i) {
        others.push_back({rig.camera(i), gt[static_cast<std::size_t>(i)].foreground});
    }
    // True depths survive.
    const DepthMap truth = maskDepth(gt[0].depth, gt[0].foreground);
    EXPECT_EQ(carveDepth(truth, rig.camera(0), others, 1).validCount(), truth.validCount());

    // Pulling the plane halfway to the camera moves its points off the other
    // silhouettes near the edges, so some must be carved away.
    DepthMap wrong = truth;
    for (std::size_t i = 0; i < wrong.values().size(); ++i) {
        if (wrong.validAt(i)) wrong.setAt(i, 0.6);
    }
    const DepthMap carved = carveDepth(wrong, rig.camera(0), others, 1);
    EXPECT_LT(carved.validCount(), wrong.validCount() / 2);
    EXPECT_EQ(carveDepth(wrong, rig.camera(0), {}, 1), wrong);
}

TEST(FixtureCache, KeyTracksSceneAndCamera) {
    const RigSpec rig = makeRig(RigOptions{.width = 32, .height = 32});
    const SceneSpec a = makePlaneScene(1.25, 7, 0.3, 0.3);
    const SceneSpec b = makePlaneScene(1.25, 8, 0.3, 0.3);
    EXPECT_EQ(fixtureKey(a, rig.camera(0)), fixtureKey(a, rig.camera(0)));
    EXPECT_NE(fixtureKey(a, rig.camera(0)), fixtureKey(b, rig.camera(0)));
    EXPECT_NE(fixtureKey(a, rig.camera(0)), fixtureKey(a, rig.camera(1)));
    EXPECT_EQ(fixtureKey(a, rig.camera(0)).size(), 16u);
}

TEST(FixtureCache, HitReturnsTheRenderedView) {
    const fs::path dir = teleview::testing::scratchDir("fixture_cache");
    const RigSpec rig = makeRig(RigOptions{.width = 48, .height = 40});
    const SceneSpec scene = makeMannequinScene(2);
    const CameraModel &cam = rig.camera(2);
    const GroundTruthView fresh = renderGroundTruth(scene, cam);
    const GroundTruthView miss = renderCached(scene, cam, dir);
    const fs::path entry = dir / fixtureKey(scene, cam);
    ASSERT_TRUE(fs::exists(entry / "image.pfm"));
    const GroundTruthView hit = renderCached(scene, cam, dir);
    for (const GroundTruthView *v : {&miss, &hit}) {
        EXPECT_EQ(v->image.values(), fresh.image.values());
        EXPECT_EQ(v->depth.values(), fresh.depth.values());
        EXPECT_EQ(v->foreground.count(), fresh.foreground.count());
    }
    writeText(entry / "image.pfm", "garbage");
    const GroundTruthView repaired = renderCached(scene, cam, dir);
    EXPECT_EQ(repaired.image.values(), fresh.image.values());
    EXPECT_NO_THROW(readPfm(entry / "image.pfm"));
}

TEST(Latency, PublishedBreakdownIsFlagged) {
    const LatencyReport rep = latencyReport(publishedLatencyBudget());
    EXPECT_DOUBLE_EQ(rep.computed_total_ms, 154.0);
    ASSERT_TRUE(rep.declared_total_ms.has_value());
    EXPECT_DOUBLE_EQ(*rep.declared_total_ms, 149.0);
    EXPECT_DOUBLE_EQ(*rep.discrepancy_ms, 5.0);
    EXPECT_TRUE(rep.discrepancy_flagged);
    EXPECT_NE(rep.text.find("[FLAG]"), std::string::npos);
    EXPECT_NE(rep.text.find("154.0"), std::string::npos);
    EXPECT_NE(rep.text.find("149.0"), std::string::npos);
    EXPECT_NE(rep.text.find("View synthesis"), std::string::npos);
    EXPECT_EQ(rep.json["stages"].size(), 11u);
    EXPECT_FALSE(rep.within_frame_budget.has_value());
}

TEST(Latency, ConsistentAndEmptyBudgets) {
    LatencyBudget b{{{"a", 1.5}, {"b", 2.5}}, 4.0};
    LatencyReport rep = latencyReport(b, 40.0);
    EXPECT_DOUBLE_EQ(rep.computed_total_ms, 4.0);
    EXPECT_FALSE(rep.discrepancy_flagged);
    EXPECT_EQ(rep.text.find("[FLAG]"), std::string::npos);
    EXPECT_EQ(rep.within_frame_budget, false);
    EXPECT_TRUE(latencyReport(b, 12.0).within_frame_budget.value());

    rep = latencyReport(LatencyBudget{});
    EXPECT_DOUBLE_EQ(rep.computed_total_ms, 0.0);
    EXPECT_FALSE(rep.discrepancy_ms.has_value());

    EXPECT_THROW(latencyReport(LatencyBudget{{{"bad", -1.0}}, std::nullopt}), std::invalid_argument);
    EXPECT_THROW(parseLatencyBudget(Json{{"stages", {{{"name", "x"}, {"ms", -2}}}}}, "budget"), ConfigError);
    EXPECT_THROW(parseLatencyBudget(Json{{"stages", 3}}, "budget"), ConfigError);
}

TEST(Cli, ExitCodes) {
    if (!haveCli()) GTEST_SKIP() << "command-line tool not built";
    const fs::path dir = teleview::testing::scratchDir("cli_codes");

    CliRun r = runCli("latency", dir);
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("[FLAG]"), std::string::npos);

    EXPECT_EQ(runCli("frobnicate", dir).code, 1);
    r = runCli("synthesize --config \"" + (dir / "missing.json").string() + "\"", dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("missing.json"), std::string::npos);

    writeText(dir / "bad.json", planeConfig(32, dir / "out").dump().insert(1, "\"typo\": 1, "));
    r = runCli("synthesize --config \"" + (dir / "bad.json").string() + "\"", dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("typo"), std::string::npos);

    // Mismatched sizes are a stage failure, not a config problem.
    writePng(dir / "a.png", ImageBuffer(24, 24, 3, 0.4f), 8);
    writePng(dir / "b.png", ImageBuffer(25, 24, 3, 0.4f), 8);
    EXPECT_EQ(runCli("evaluate \"" + (dir / "a.png").string() + "\" \"" + (dir / "b.png").string() + "\"", dir).code,
              2);
    r = runCli("evaluate \"" + (dir / "a.png").string() + "\" \"" + (dir / "a.png").string() + "\"", dir);
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("100"), std::string::npos);
}

TEST(Cli, GeneratedCapturesFeedSynthesis) {
    if (!haveCli()) GTEST_SKIP() << "command-line tool not built";
    const fs::path dir = teleview::testing::scratchDir("cli_captures");
    writeText(dir / "gen.json", mannequinConfig(64, dir / "captures").dump(2));
    CliRun r = runCli("gen-scene --config \"" + (dir / "gen.json").string() + "\"", dir);
    ASSERT_EQ(r.code, 0) << r.output;
    for (int i = 0; i < 4; ++i) {
        EXPECT_TRUE(fs::exists(dir / "captures" / ("cam" + std::to_string(i) + ".png")));
        EXPECT_TRUE(fs::exists(dir / "captures" / ("depth" + std::to_string(i) + ".pfm")));
    }
    const Json syn = {{"rig", (dir / "captures" / "rig.json").string()},
                      {"captures", (dir / "captures").string()},
                      {"output_dir", (dir / "synth").string()}};
    writeText(dir / "syn.json", syn.dump(2));
    r = runCli("synthesize --config \"" + (dir / "syn.json").string() + "\" --novel cam0", dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const Json manifest = loadJsonFile(dir / "synth" / "manifest.json");
    EXPECT_TRUE(manifest["metrics"].empty());
    const ImageBuffer final_image = readPng(dir / "synth" / "final.png");
    EXPECT_EQ(final_image.width(), 64);

    r = runCli("stereo --config \"" + (dir / "syn.json").string() + "\" --pair lower --levels 2", dir);
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir / "synth" / "disparity_ref.pfm"));
}
