// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>

using namespace teleview;
using namespace teleview::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char *f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

fs::path cacheDir() {
    static const fs::path dir = [] {
        const fs::path d = scratchDir("acceptance_cache");
        return d;
    }();
    return dir;
}

// ---------------------------------------------------------------------------

Outcome geometryRoundTrips() {
    Stopwatch sw;
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double proj_err = 0.0, disp_err = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const int w = 64 + static_cast<int>(u(rng) * 960), h = 48 + static_cast<int>(u(rng) * 720);
        const double f = w * (0.5 + 1.5 * u(rng));
        const Vec3 t(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
        const CameraModel cam(f, f * (0.9 + 0.2 * u(rng)), w * u(rng), h * u(rng), randomRotation(rng), t, w, h);
        const Vec2 px(-0.25 * w + 1.5 * w * u(rng), -0.25 * h + 1.5 * h * u(rng));
        const double z = 0.1 + 10.0 * u(rng);
        const Vec3 X = unproject(cam, px, z);
        proj_err = std::max(proj_err, (project(cam, X).pixel - px).norm());
        proj_err = std::max(proj_err, std::abs(cam.toCamera(X).z() - z));

        const double baseline = 0.01 + u(rng);
        const StereoPair pair(cam, CameraModel(cam.fx(), cam.fy(), cam.cx(), cam.cy(), cam.rotation(),
                                               cam.translation() + Vec3(baseline, 0, 0), w, h));
        DisparityMap disp(4, 1);
        DepthMap depth(4, 1);
        for (int k = 0; k < 4; ++k) {
            disp.set(k, 0, static_cast<float>(0.5 + 300.0 * u(rng)));
            depth.set(k, 0, static_cast<float>(0.2 + 10.0 * u(rng)));
        }
        const DisparityMap disp_back = depthToDisparity(pair, disparityToDepth(pair, disp));
        const DepthMap depth_back = disparityToDepth(pair, depthToDisparity(pair, depth), 0.0);
        for (int k = 0; k < 4; ++k) {
            disp_err = std::max(disp_err, std::abs(disp_back(k, 0) - disp(k, 0)) / static_cast<double>(disp(k, 0)));
            disp_err = std::max(disp_err, std::abs(depth_back(k, 0) - depth(k, 0)) / static_cast<double>(depth(k, 0)));
        }
    }
    const double s = sw.seconds();
    const bool pass = proj_err <= 1e-6 && disp_err <= 1e-6 && s < 1.0;
    return {pass, fmt("1000 cases, max reprojection error %.2e px, max disparity/depth relative error %.2e, %.3f s",
                      proj_err, disp_err, s)};
}

Outcome rasterizerOracle() {
    Stopwatch sw;
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> size(8, 64), count(1, 1000), dim(1, 8);
    double worst = 0.0;
    const int scenes = 60;
    for (int s = 0; s < scenes; ++s) {
        const int w = size(rng), h = size(rng);
        const CameraModel cam = identityCamera(0.8 * std::max(w, h), w, h, 0.5 * (w - 1), 0.5 * (h - 1));
        const GaussianCloud c = randomCloud(rng, cam, count(rng), dim(rng));
        worst = std::max(worst, maxAbsDiff(rasterizeGaussians(c, cam, w, h), bruteForceComposite(c, cam, w, h)));
    }
    const double t = sw.seconds();
    return {worst <= 1e-5 && t < 30.0,
            fmt("%d scenes up to 64x64 and 1000 Gaussians, max abs channel error %.2e, %.1f s", scenes, worst, t)};
}

Outcome cascadeAblation() {
    Stopwatch sw;
    const RigSpec rig = makeRig(RigOptions{.width = 512, .height = 512});
    const int scenes = 20;
    AblationEpe mean;
    int direction_ok = 0;
    for (int s = 1; s <= scenes; ++s) {
        const AblationScene scene = makeAblationScene(rig, static_cast<std::uint64_t>(s), cacheDir());
        const AblationEpe e = runAblation(rig, scene, false);
        mean.with_init_k3 += e.with_init_k3 / scenes;
        mean.without_init_k3 += e.without_init_k3 / scenes;
        mean.without_init_k16 += e.without_init_k16 / scenes;
        direction_ok += e.with_init_k3 < e.without_init_k3 ? 1 : 0;
    }
    const double t = sw.seconds();
    const bool pass = mean.with_init_k3 < mean.without_init_k3 &&
                      mean.with_init_k3 <= 1.1 * mean.without_init_k16 && t < 300.0;
    return {pass, fmt("%d scenes at 512x512, mean EPE with init k=3 %.3f, without init k=3 %.3f, without init k=16 "
                      "%.3f (init better on %d/%d scenes), %.1f s",
                      scenes, mean.with_init_k3, mean.without_init_k3, mean.without_init_k16, direction_ok, scenes, t)};
}

struct TruthViews {
    RigSpec rig;
    std::vector<SourceView> views;
    std::vector<CameraModel> cams;
};

TruthViews truthViews(const SceneSpec &scene, int size) {
    TruthViews r{makeRig(RigOptions{.width = size, .height = size}), {}, {}};
    for (int i : {0, 2, 3}) {
        const GroundTruthView gt = renderCached(scene, r.rig.camera(i), cacheDir());
        r.views.push_back({r.rig.camera(i), gt.image, gt.depth, gt.foreground});
        r.cams.push_back(r.rig.camera(i));
    }
    return r;
}

CameraModel offsetNovel(int size, double x) {
    const double f = size, c = 0.5 * (size - 1);
    return CameraModel::lookAt(Vec3(x, 0.0, 0.0), Vec3(0, 0, 1.25), Vec3::UnitY(), f, f, c, c, size, size);
}

Outcome occlusionExactness() {
    const BlendConfig cfg;
    std::size_t occluded = 0, leaked = 0;
    int scenes = 0;
    for (double gap : {0.05, 0.1, 0.2, 0.3}) {
        for (std::uint64_t seed : {3u, 11u}) {
            ++scenes;
            const SceneSpec scene = makeTwoLayerScene(1.1, gap, seed);
            const TruthViews r = truthViews(scene, 128);
            const CameraModel novel = offsetNovel(128, seed == 3u ? 0.03 : -0.05);
            const GroundTruthView gt = renderCached(scene, novel, cacheDir());
            const NovelBlend b = blendNovelView(gt.depth, novel, r.views, cfg);
            for (int y = 0; y < 128; ++y) {
                for (int x = 0; x < 128; ++x) {
                    if (!gt.depth.valid(x, y)) continue;
                    const Vec3 world = unproject(novel, Vec2(x, y), gt.depth(x, y));
                    for (std::size_t v = 0; v < r.cams.size(); ++v) {
                        const Vec3 origin = r.cams[v].center();
                        const Hit hit = castRay(scene, origin, (world - origin).normalized());
                        if (hit.t < (world - origin).norm() - 0.005) {
                            ++occluded;
                            leaked += b.weights[v][static_cast<std::size_t>(y) * 128 + x] != 0.0f ? 1 : 0;
                        }
                    }
                }
            }
        }
    }
    return {leaked == 0 && occluded > 0,
            fmt("%d two-layer scenes, gaps 0.05 to 0.3 m, delta %.2f m: %zu occluded view samples, %zu contributed",
                scenes, cfg.occlusion_threshold, occluded, leaked)};
}

Outcome blendFidelity() {
    // Occlusion-free Lambertian plane, blended from ground-truth geometry.
    const SceneSpec plane = makePlaneScene(1.25, 5, 0.35, 0.3);
    const TruthViews r = truthViews(plane, 256);
    const CameraModel novel = offsetNovel(256, 0.04);
    const GroundTruthView gt = renderCached(plane, novel, cacheDir());
    const NovelBlend b = blendNovelView(gt.depth, novel, r.views, BlendConfig{});
    const double blend_psnr = psnr(b.image, matte(gt.image, gt.foreground));

    // Complementarity of refinement on self-occluding mannequins.
    int comp_ok = 0, suite = 0;
    double worst_margin = std::numeric_limits<double>::infinity();
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u, 6u}) {
        ++suite;
        const fs::path out = scratchDir("acceptance_fidelity");
        const Json j = {{"rig", {{"width", 512}, {"height", 512}}},
                        {"scene", {{"preset", "mannequin"}, {"seed", seed}}},
                        {"noise_sigma", 0.01},
                        {"seed", seed},
                        {"blend", {{"occlusion_threshold", 0.03}}},
                        {"novel", {{"mode", "eyes"}}},
                        {"output_dir", out.string()},
                        {"cache_dir", cacheDir().string()}};
        const PipelineConfig cfg = parsePipelineConfig(j);
        const Json m = synthesisMetrics(cfg, synthesize(cfg));
        const double final_psnr = m["psnr_final"].get<double>();
        const double inputs = std::max(m["psnr_blend"].get<double>(), m["psnr_lr_upsampled"].get<double>());
        worst_margin = std::min(worst_margin, final_psnr - inputs);
        comp_ok += final_psnr >= inputs ? 1 : 0;
    }
    const bool pass = blend_psnr >= 30.0 && comp_ok == suite;
    return {pass, fmt("plane blend PSNR %.2f dB; refined output beats both inputs on %d/%d mannequin scenes "
                      "(smallest margin %+.2f dB)",
                      blend_psnr, comp_ok, suite, worst_margin)};
}

Outcome latentDegeneration() {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    std::size_t pixels = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const CameraModel cam = identityCamera(60.0, 40, 32, 20, 16);
        GaussianCloud c = randomCloud(rng, cam, 800, 3);
        for (float &o : c.opacity) o = 1.0f;
        for (float &f : c.features) f = static_cast<float>(u(rng));
        const FeatureImage fi = rasterizeGaussians(c, cam, 40, 32);
        const DecodedView dec = decodeFeatures(fi);
        const ImageBuffer classic = colorSplat(c, cam, 40, 32);
        for (std::size_t i = 0; i < fi.alpha.size(); ++i) {
            if (fi.alpha[i] < 1.0f - 1e-6f) continue;
            ++pixels;
            for (int k = 0; k < 3; ++k) {
                worst = std::max(worst, static_cast<double>(std::abs(dec.rgb.values()[i * 3 + k] -
                                                                     classic.values()[i * 3 + k])));
            }
        }
    }
    return {worst <= 1e-5 && pixels > 1000,
            fmt("RGB features, %zu fully covered pixels, max deviation from color splatting %.2e", pixels, worst)};
}

Outcome determinism() {
    const int saved = threadCount();
    std::vector<Json> outputs;
    for (int threads : {1, 1, 4}) {
        const Json j = {{"rig", {{"width", 160}, {"height", 160}}},
                        {"scene", {{"preset", "mannequin"}, {"seed", 6}}},
                        {"noise_sigma", 0.01},
                        {"seed", 21},
                        {"novel", {{"mode", "eyes"}}},
                        {"threads", threads},
                        {"output_dir", scratchDir("acceptance_det_" + std::to_string(outputs.size())).string()},
                        {"cache_dir", cacheDir().string()}};
        const RunArtifacts art = runSynthesize(parsePipelineConfig(j));
        outputs.push_back(art.manifest["outputs"]);
    }
    setThreadCount(saved);
    const bool same = outputs[1] == outputs[0] && outputs[2] == outputs[0];
    return {same, fmt("3 runs (threads 1, 1, 4), %zu artifacts each, hashes %s", outputs[0].size(),
                      same ? "identical" : "differ")};
}

Outcome latencyAccounting() {
    const LatencyReport rep = latencyReport(publishedLatencyBudget());
    std::cout << rep.text;
    const bool pass = rep.computed_total_ms == 154.0 && rep.declared_total_ms == 149.0 && rep.discrepancy_flagged &&
                      rep.text.find("[FLAG]") != std::string::npos && rep.json["stages"].size() == 11;
    return {pass, fmt("%zu stages, computed %.0f ms, declared %.0f ms, discrepancy %+.0f ms %s",
                      rep.json["stages"].size(), rep.computed_total_ms, rep.declared_total_ms.value_or(-1),
                      rep.discrepancy_ms.value_or(0), rep.discrepancy_flagged ? "flagged" : "not flagged")};
}

Outcome throughput() {
    PipelineConfig cfg = loadPipelineConfig(fs::path(TELEVIEW_SOURCE_DIR) / "configs" / "synthesize_mannequin.json");
    cfg.cache_dir = cacheDir();
    synthesize(cfg); // warm the fixture cache
    double best = std::numeric_limits<double>::infinity();
    for (int run = 0; run < 2; ++run) {
        Stopwatch sw;
        synthesize(cfg);
        best = std::min(best, sw.seconds());
    }
    return {best < 2.0, fmt("%dx%d novel view, %.2f s per frame on %d thread(s)", resolveNovelCamera(cfg).width(),
                            resolveNovelCamera(cfg).height(), best, threadCount())};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"geometry round trips", geometryRoundTrips},
        {"rasterizer oracle equivalence", rasterizerOracle},
        {"cascade initialization ablation", cascadeAblation},
        {"occlusion gate exactness", occlusionExactness},
        {"blending fidelity and refinement complementarity", blendFidelity},
        {"latent path degenerates to color splatting", latentDegeneration},
        {"determinism across runs and thread counts", determinism},
        {"latency accounting", latencyAccounting},
        {"desk-scale throughput", throughput},
    };
    int failures = 0;
    for (const auto &[name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
