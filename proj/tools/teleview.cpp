// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Parameter precedence: built-in defaults, then the
// --config file, then individual flags.

#include "teleview/teleview.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace teleview;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitStage = 2;

struct CommonFlags {
    std::string config;
    std::string rig;
    std::string scene;
    std::string captures;
    std::string out;
    std::string cache_dir;
    std::optional<std::uint64_t> seed;
    std::optional<double> noise;
    std::optional<int> threads;
};

void addCommon(CLI::App *app, CommonFlags &f, bool with_captures) {
    app->add_option("-c,--config", f.config, "JSON config file");
    app->add_option("--rig", f.rig, "rig JSON file (overrides config)");
    app->add_option("--scene", f.scene, "scene JSON file (overrides config)");
    if (with_captures) {
        app->add_option("--captures", f.captures, "directory with cam{i}.png and mask{i}.png");
    }
    app->add_option("-o,--out", f.out, "output directory");
    app->add_option("--cache-dir", f.cache_dir, "ground-truth fixture cache directory");
    app->add_option("--seed", f.seed, "run seed");
    app->add_option("--noise", f.noise, "sensor noise sigma for synthetic inputs");
    app->add_option("-j,--threads", f.threads, "worker threads");
}

/// Loads the config file (if any) and applies flag overrides on the JSON
/// before parsing, so flags win over file values.
Json mergedConfig(const CommonFlags &f, fs::path &base) {
    Json j = Json::object();
    base = fs::current_path();
    if (!f.config.empty()) {
        j = loadJsonFile(f.config);
        if (!j.is_object()) {
            throw ConfigError(f.config + ": expected a JSON object");
        }
        base = fs::path(f.config).parent_path();
        if (base.empty()) {
            base = ".";
        }
    }
    // Flag paths are relative to the working directory, not the config file.
    auto abs = [](const std::string &p) { return fs::absolute(p).string(); };
    if (!f.rig.empty()) j["rig"] = abs(f.rig);
    if (!f.scene.empty()) {
        j["scene"] = abs(f.scene);
        j.erase("captures");
    }
    if (!f.captures.empty()) {
        j["captures"] = abs(f.captures);
        j.erase("scene");
    }
    if (!f.out.empty()) j["output_dir"] = abs(f.out);
    if (!f.cache_dir.empty()) j["cache_dir"] = abs(f.cache_dir);
    if (f.seed) j["seed"] = *f.seed;
    if (f.noise) j["noise_sigma"] = *f.noise;
    if (f.threads) j["threads"] = *f.threads;
    return j;
}

void writeJson(const fs::path &p, const Json &j) {
    fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
    std::ofstream os(p);
    os << std::setw(2) << j << "\n";
    if (!os) {
        throw IoError("cannot write " + p.string());
    }
}

// ---------------------------------------------------------------------------

int runGenScene(const CommonFlags &f, int bit_depth) {
    fs::path base;
    const PipelineConfig cfg = parsePipelineConfig(mergedConfig(f, base), base);
    if (!cfg.scene) {
        throw ConfigError("scene: gen-scene needs a scene, not captures");
    }
    if (cfg.threads > 0) setThreadCount(cfg.threads);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    Json outputs = Json::object();
    try {
        for (int i = 0; i < 4; ++i) {
            const GroundTruthView gt = renderCached(*cfg.scene, cfg.rig.camera(i), cfg.cache_dir);
            ImageBuffer img = gt.image;
            if (cfg.noise_sigma > 0.0) {
                img = addSensorNoise(img, cfg.noise_sigma, cfg.seed * 1000003ULL + static_cast<std::uint64_t>(i));
            }
            const std::string s = std::to_string(i);
            writePng(dir / ("cam" + s + ".png"), img, bit_depth);
            writePng(dir / ("mask" + s + ".png"), maskToImage(gt.foreground), 8, false);
            writeDepthPfm(dir / ("depth" + s + ".pfm"), gt.depth);
            for (const std::string &name : {"cam" + s + ".png", "mask" + s + ".png", "depth" + s + ".pfm"}) {
                outputs[name] = hex64(hashFile(dir / name));
            }
        }
    } catch (const std::exception &e) {
        throw StageError("render", e.what());
    }
    writeJson(dir / "rig.json", toJson(cfg.rig));
    writeJson(dir / "scene.json", toJson(*cfg.scene));
    writeJson(dir / "manifest.json", {{"tool", "teleview"},
                                      {"command", "gen-scene"},
                                      {"config_hash", hex64(fnv1a(cfg.canonical.dump()))},
                                      {"config", cfg.canonical},
                                      {"outputs", outputs}});
    std::cout << "wrote 4 views to " << dir.string() << "\n";
    return kExitOk;
}

struct StereoFlags {
    std::string pair = "cascade";
    std::optional<int> iterations, search_radius, block_radius, levels;
    std::optional<double> max_disparity;
    bool no_init = false;
};

int runStereo(const CommonFlags &f, const StereoFlags &s) {
    fs::path base;
    Json j = mergedConfig(f, base);
    Json &m = j["matcher"];
    if (m.is_null()) m = Json::object();
    if (s.iterations) m["iterations"] = *s.iterations;
    if (s.search_radius) m["search_radius"] = *s.search_radius;
    if (s.block_radius) m["block_radius"] = *s.block_radius;
    if (s.levels) m["pyramid_levels"] = *s.levels;
    if (s.max_disparity) m["max_disparity"] = *s.max_disparity;
    if (s.no_init) {
        if (!j.contains("cascade")) j["cascade"] = Json::object();
        j["cascade"]["use_cascade_init"] = false;
    }
    const PipelineConfig cfg = parsePipelineConfig(j, base);
    if (cfg.threads > 0) setThreadCount(cfg.threads);
    SynthesisInputs in;
    try {
        in = prepareInputs(cfg);
    } catch (const std::exception &e) {
        throw StageError("inputs", e.what());
    }
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    Json metrics = Json::object();
    auto epeOf = [&](const StereoPair &pair, const DisparityMap &pred, int truth_cam) -> Json {
        if (!in.truth) return nullptr;
        try {
            return epeJson(endPointError(pred, truthDisparity(pair, (*in.truth)[static_cast<std::size_t>(truth_cam)])));
        } catch (const std::invalid_argument &) {
            return nullptr;
        }
    };
    try {
        if (s.pair == "upper" || s.pair == "lower") {
            const bool upper = s.pair == "upper";
            const StereoPair pair = upper ? cfg.rig.upperPair() : cfg.rig.lowerPair();
            const std::size_t a = upper ? 0 : 2, b = upper ? 1 : 3;
            const StereoResult r = matchPair(pair, in.images[a], in.images[b], DisparityMap(), DisparityMap(),
                                             cfg.matcher, &in.masks[a], &in.masks[b]);
            writeDisparityPfm(dir / "disparity_ref.pfm", r.reference);
            writeDisparityPfm(dir / "disparity_tgt.pfm", r.target);
            writeDepthPfm(dir / "depth_ref.pfm", disparityToDepth(pair, r.reference, cfg.cascade.min_disparity));
            metrics["epe"] = epeOf(pair, r.reference, static_cast<int>(a));
            metrics["valid_pixels"] = r.reference.validCount();
        } else if (s.pair == "cascade") {
            const CascadeResult r = cascadeEstimate(cfg.rig.upperPair(), cfg.rig.lowerPair(), in.images, in.masks,
                                                    cfg.matcher, cfg.cascade);
            writeDisparityPfm(dir / "disparity_cam0.pfm", r.upper.reference);
            writeDisparityPfm(dir / "disparity_cam2.pfm", r.lower.reference);
            writeDisparityPfm(dir / "disparity_cam3.pfm", r.lower.target);
            writeDepthPfm(dir / "depth_cam0.pfm", r.depth_cam0);
            writeDepthPfm(dir / "depth_cam2.pfm", r.depth_cam2);
            writeDepthPfm(dir / "depth_cam3.pfm", r.depth_cam3);
            metrics["epe_upper"] = epeOf(cfg.rig.upperPair(), r.upper.reference, 0);
            metrics["epe_lower"] = epeOf(cfg.rig.lowerPair(), r.lower.reference, 2);
        } else {
            throw ConfigError("--pair: expected upper, lower or cascade");
        }
    } catch (const ConfigError &) {
        throw;
    } catch (const std::exception &e) {
        throw StageError("stereo", e.what());
    }
    const Json record = {{"tool", "teleview"},
                         {"command", "stereo"},
                         {"pair", s.pair},
                         {"config_hash", hex64(fnv1a(cfg.canonical.dump()))},
                         {"matcher", toJson(cfg.matcher)},
                         {"cascade", toJson(cfg.cascade)},
                         {"metrics", metrics}};
    writeJson(dir / "stereo_metrics.json", record);
    std::cout << std::setw(2) << metrics << "\n";
    return kExitOk;
}

int runSynthesize(const CommonFlags &f, const std::string &novel_mode, const std::string &eye) {
    fs::path base;
    Json j = mergedConfig(f, base);
    if (!novel_mode.empty() || !eye.empty()) {
        if (!j.contains("novel")) j["novel"] = Json::object();
        if (!novel_mode.empty()) j["novel"]["mode"] = novel_mode;
        if (!eye.empty()) j["novel"]["eye"] = eye;
    }
    const PipelineConfig cfg = parsePipelineConfig(j, base);
    const RunArtifacts art = teleview::runSynthesize(cfg);
    std::cout << "manifest: " << art.manifest_path.string() << "\n";
    if (!art.manifest["metrics"].empty()) {
        std::cout << std::setw(2) << art.manifest["metrics"] << "\n";
    }
    return kExitOk;
}

ImageBuffer loadImageAny(const fs::path &p) {
    if (p.extension() == ".pfm") {
        PfmImage img = readPfm(p);
        return ImageBuffer(img.width, img.height, img.channels, std::move(img.values));
    }
    return readPng(p);
}

int runEvaluate(const std::string &pred, const std::string &gt, const std::string &mask, bool disparity,
                const std::string &out) {
    Json result;
    try {
        if (disparity) {
            const EndPointError e = endPointError(readDisparityPfm(pred), readDisparityPfm(gt));
            result = {{"epe", epeJson(e)}};
        } else {
            const ImageBuffer a = loadImageAny(pred), b = loadImageAny(gt);
            result = {{"psnr", psnr(a, b)}, {"ssim", ssim(a, b)}};
            if (!mask.empty()) {
                const ImageBuffer mi = loadImageAny(mask);
                Mask m(mi.width(), mi.height());
                for (std::size_t i = 0; i < m.size(); ++i) {
                    m.setAt(i, mi.values()[i * static_cast<std::size_t>(mi.channels())] > 0.5f);
                }
                result["psnr_masked"] = maskedPsnr(a, b, m);
            }
        }
    } catch (const std::exception &e) {
        throw StageError("evaluate", e.what());
    }
    if (!out.empty()) {
        writeJson(out, result);
    }
    std::cout << std::setw(2) << result << "\n";
    return kExitOk;
}

int runLatency(const std::string &budget_path, double frame_budget, const std::string &measure_config,
               int measure_runs, const std::string &out) {
    LatencyBudget budget = budget_path.empty() ? publishedLatencyBudget()
                                               : parseLatencyBudget(loadJsonFile(budget_path), "");
    std::optional<double> measured;
    if (!measure_config.empty()) {
        const PipelineConfig cfg = loadPipelineConfig(measure_config);
        if (cfg.threads > 0) setThreadCount(cfg.threads);
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < std::max(1, measure_runs); ++i) {
            const SynthesisResult res = synthesize(cfg);
            double ms = 0.0;
            for (const auto &[stage, t] : res.timings_ms) {
                if (stage != "ground_truth" && stage != "inputs") ms += t;
            }
            best = std::min(best, ms);
        }
        measured = best;
    }
    const LatencyReport rep = latencyReport(budget, measured, frame_budget);
    std::cout << rep.text;
    if (!out.empty()) {
        writeJson(out, rep.json);
    }
    return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"teleview: cascaded stereo, latent splatting and occlusion-aware blending"};
    app.require_subcommand(1);

    CommonFlags gen_flags;
    int bit_depth = 16;
    auto *gen = app.add_subcommand("gen-scene", "render the four rig views of a synthetic scene");
    addCommon(gen, gen_flags, false);
    gen->add_option("--bit-depth", bit_depth, "PNG bit depth (8 or 16)")->check(CLI::IsMember({8, 16}));

    CommonFlags stereo_flags;
    StereoFlags sf;
    auto *st = app.add_subcommand("stereo", "estimate disparity for one pair or the full cascade");
    addCommon(st, stereo_flags, true);
    st->add_option("--pair", sf.pair, "upper, lower or cascade")->check(CLI::IsMember({"upper", "lower", "cascade"}));
    st->add_option("--iterations", sf.iterations, "propagation sweeps per level");
    st->add_option("--search-radius", sf.search_radius, "search radius around the initialization");
    st->add_option("--block-radius", sf.block_radius, "NCC window radius");
    st->add_option("--levels", sf.levels, "pyramid levels");
    st->add_option("--max-disparity", sf.max_disparity, "largest disparity searched");
    st->add_flag("--no-init", sf.no_init, "match the lower pair without cascade initialization");

    CommonFlags syn_flags;
    std::string novel_mode, eye;
    auto *syn = app.add_subcommand("synthesize", "run the full novel-view pipeline");
    addCommon(syn, syn_flags, true);
    syn->add_option("--novel", novel_mode, "novel view: cam0, camera or eyes")
        ->check(CLI::IsMember({"cam0", "camera", "eyes"}));
    syn->add_option("--eye", eye, "left or right eye for --novel eyes")->check(CLI::IsMember({"left", "right"}));

    std::string pred, gt, mask, eval_out;
    bool disparity = false;
    auto *ev = app.add_subcommand("evaluate", "compare an image or disparity map with ground truth");
    ev->add_option("pred", pred, "prediction (PNG or PFM)")->required();
    ev->add_option("gt", gt, "ground truth (PNG or PFM)")->required();
    ev->add_option("--mask", mask, "restrict PSNR to this mask image");
    ev->add_flag("--disparity", disparity, "inputs are disparity PFMs; report end-point error");
    ev->add_option("-o,--out", eval_out, "write the metrics JSON here");

    std::string budget_path, measure_config, lat_out;
    double frame_budget = 33.0;
    int measure_runs = 3;
    auto *lat = app.add_subcommand("latency", "latency budget report");
    lat->add_option("--budget", budget_path, "budget JSON (default: published breakdown)");
    lat->add_option("--frame-budget", frame_budget, "per-frame synthesis budget in ms");
    lat->add_option("--measure", measure_config, "time synthesize with this config");
    lat->add_option("--runs", measure_runs, "measurement repetitions (best is reported)");
    lat->add_option("-o,--out", lat_out, "write the report JSON here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) return runGenScene(gen_flags, bit_depth);
        if (*st) return runStereo(stereo_flags, sf);
        if (*syn) return runSynthesize(syn_flags, novel_mode, eye);
        if (*ev) return runEvaluate(pred, gt, mask, disparity, eval_out);
        if (*lat) return runLatency(budget_path, frame_budget, measure_config, measure_runs, lat_out);
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const StageError &e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStage;
    } catch (const std::exception &e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStage;
    }
    return kExitOk;
}
