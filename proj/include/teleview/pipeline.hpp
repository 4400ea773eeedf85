// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "teleview/blend.hpp"
#include "teleview/config.hpp"
#include "teleview/io.hpp"
#include "teleview/splatting.hpp"
#include "teleview/stereo.hpp"
#include "teleview/synthetic.hpp"

#include <chrono>
#include <iomanip>
#include <optional>
#include <sstream>

namespace teleview {

/// A failure inside one named pipeline stage.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string &what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string &stage() const { return stage_; }

  private:
    std::string stage_;
};

// ---------------------------------------------------------------------------
// Ground-truth fixture cache
// ---------------------------------------------------------------------------

inline constexpr const char *kFixtureVersion = "teleview-gt-1";

inline std::string fixtureKey(const SceneSpec &scene, const CameraModel &cam) {
    const std::string text =
        std::string(kFixtureVersion) + "\n" + toJson(scene).dump() + "\n" + toJson(cam).dump();
    return hex64(fnv1a(text));
}

/// Renders `scene` from `cam`, reusing `cache_dir/<key>/` when present. An
/// empty cache_dir disables caching.
inline GroundTruthView renderCached(const SceneSpec &scene, const CameraModel &cam,
                                    const std::filesystem::path &cache_dir) {
    if (cache_dir.empty()) {
        return renderGroundTruth(scene, cam);
    }
    const std::filesystem::path dir = cache_dir / fixtureKey(scene, cam);
    const auto image_p = dir / "image.pfm", depth_p = dir / "depth.pfm", mask_p = dir / "mask.pfm";
    if (std::filesystem::exists(image_p) && std::filesystem::exists(depth_p) &&
        std::filesystem::exists(mask_p)) {
        try {
            PfmImage img = readPfm(image_p);
            PfmImage msk = readPfm(mask_p);
            GroundTruthView gt{ImageBuffer(img.width, img.height, img.channels, std::move(img.values)),
                               readDepthPfm(depth_p), Mask(msk.width, msk.height)};
            for (std::size_t i = 0; i < msk.values.size(); ++i) {
                gt.foreground.setAt(i, msk.values[i] > 0.5f);
            }
            if (gt.image.width() == cam.width() && gt.image.height() == cam.height()) {
                return gt;
            }
        } catch (const std::exception &) {
            // fall through and re-render a damaged entry
        }
    }
    GroundTruthView gt = renderGroundTruth(scene, cam);
    std::filesystem::create_directories(dir);
    const auto tmp = dir / ".partial";
    std::filesystem::create_directories(tmp);
    writePfm(tmp / "image.pfm", gt.image.values(), gt.image.width(), gt.image.height(), 3);
    writeDepthPfm(tmp / "depth.pfm", gt.depth);
    writePfm(tmp / "mask.pfm", maskToImage(gt.foreground).values(), gt.image.width(), gt.image.height(), 1);
    std::filesystem::rename(tmp / "image.pfm", image_p);
    std::filesystem::rename(tmp / "depth.pfm", depth_p);
    std::filesystem::rename(tmp / "mask.pfm", mask_p);
    std::filesystem::remove_all(tmp);
    return gt;
}

// ---------------------------------------------------------------------------
// Depth completion
// ---------------------------------------------------------------------------

struct DepthCompletion {
    bool enabled = true;
    /// Median window radius applied inside the mask after hole filling; 0 skips it.
    int median_radius = 2;
    /// Silhouette carving against the other views' masks; a negative
    /// tolerance disables it.
    int carve_tolerance = 2;
};

/// Densifies a matcher depth map inside `mask`: pixels rejected by the
/// consistency checks are filled by push-pull from valid ones, then a median
/// restricted to the mask suppresses isolated outliers. Pixels outside the
/// mask are invalid in the result.
inline DepthMap completeDepth(const DepthMap &depth, const Mask &mask, int median_radius = 2) {
    const int w = depth.width(), h = depth.height();
    requireSameSize(w, h, mask.width(), mask.height(), "completeDepth");
    Mask known(w, h);
    for (std::size_t i = 0; i < known.size(); ++i) {
        known.setAt(i, depth.validAt(i) && mask.at(i));
    }
    DepthMap out(w, h);
    if (known.count() == 0) {
        return out;
    }
    const std::vector<float> filled = pushPullFill(depth.values(), known, 1);
    parallelFor(0, h, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        std::vector<float> win;
        for (int x = 0; x < w; ++x) {
            if (!mask(x, y)) {
                continue;
            }
            win.clear();
            for (int j = -median_radius; j <= median_radius; ++j) {
                for (int i = -median_radius; i <= median_radius; ++i) {
                    const int sx = x + i, sy = y + j;
                    if (sx >= 0 && sy >= 0 && sx < w && sy < h && mask(sx, sy)) {
                        win.push_back(filled[static_cast<std::size_t>(sy) * w + sx]);
                    }
                }
            }
            const auto mid = win.begin() + static_cast<std::ptrdiff_t>(win.size() / 2);
            std::nth_element(win.begin(), mid, win.end());
            out.set(x, y, *mid);
        }
    });
    return out;
}

/// Foreground mask of a calibrated view, used to test 3D points for
/// silhouette consistency.
struct SilhouetteView {
    CameraModel camera;
    Mask mask;
};

/// Chessboard dilation of `m` by `radius` pixels.
inline Mask dilateMask(const Mask &m, int radius) {
    const int w = m.width(), h = m.height();
    Mask rows(w, h), out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int i = std::max(0, x - radius); i <= std::min(w - 1, x + radius) && !rows(x, y); ++i) {
                if (m(i, y)) rows.set(x, y, true);
            }
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int j = std::max(0, y - radius); j <= std::min(h - 1, y + radius) && !out(x, y); ++j) {
                if (rows(x, j)) out.set(x, y, true);
            }
        }
    }
    return out;
}

/// Invalidates depths whose 3D point lands on the background of another view.
/// Each view's mask is dilated by `tolerance` pixels first; points outside a
/// view's image or behind it give no evidence and are kept.
inline DepthMap carveDepth(const DepthMap &depth, const CameraModel &cam, const std::vector<SilhouetteView> &others,
                           int tolerance = 2) {
    const int w = depth.width(), h = depth.height();
    requireSameSize(w, h, cam.width(), cam.height(), "carveDepth");
    std::vector<Mask> grown;
    grown.reserve(others.size());
    for (const SilhouetteView &v : others) {
        requireSameSize(v.mask.width(), v.mask.height(), v.camera.width(), v.camera.height(), "carveDepth");
        grown.push_back(dilateMask(v.mask, tolerance));
    }
    DepthMap out = depth;
    parallelFor(0, h, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < w; ++x) {
            if (!depth.valid(x, y)) {
                continue;
            }
            const Vec3 world = unproject(cam, Vec2(x, y), depth(x, y));
            for (std::size_t k = 0; k < others.size(); ++k) {
                const Projection p = project(others[k].camera, world);
                if (!p.inFront()) {
                    continue;
                }
                const long u = std::lround(p.pixel.x()), v = std::lround(p.pixel.y());
                if (u < 0 || v < 0 || u >= grown[k].width() || v >= grown[k].height()) {
                    continue;
                }
                if (!grown[k](static_cast<int>(u), static_cast<int>(v))) {
                    out.invalidate(x, y);
                    break;
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class NovelMode { Cam0, Camera, Eyes };

struct NovelViewSpec {
    NovelMode mode = NovelMode::Cam0;
    std::optional<CameraModel> camera;
    EyePose eyes{Vec3(-0.0315, 0.0, 1.25), Vec3(0.0315, 0.0, 1.25)};
    std::optional<EyePose> remote_eyes;
    EyeViewOptions eye_options;
    bool right_eye = false;
};

struct PipelineConfig {
    std::filesystem::path base_dir = "."; ///< relative paths resolve against this
    RigSpec rig;
    std::optional<SceneSpec> scene;
    std::filesystem::path capture_dir; ///< alternative to `scene`: cam{i}.png + mask{i}.png
    MatcherConfig matcher;
    CascadeOptions cascade;
    DepthCompletion completion;
    BlendConfig blend;
    SplatConfig splat;
    ColorCorrection color{1.0, Mat3::Identity()};
    NovelViewSpec novel;
    double noise_sigma = 0.0;
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "out";
    std::filesystem::path cache_dir;
    int png_bit_depth = 8;
    int threads = 0; ///< 0 keeps the current setting
    Json canonical;  ///< resolved config used for hashing and the manifest
};

inline EyePose parseEyes(const Json &j, const std::string &path) {
    ConfigReader r(j, path);
    EyePose e{r.require<Vec3>("left"), r.require<Vec3>("right")};
    r.finish();
    try {
        e.validate();
    } catch (const std::invalid_argument &ex) {
        r.fail("", ex.what());
    }
    return e;
}

/// Parses a pipeline config. Sub-configs "rig" and "scene" may be inline
/// objects or paths to JSON files; paths are resolved against `base_dir`.
inline PipelineConfig parsePipelineConfig(const Json &j, const std::filesystem::path &base_dir = ".") {
    ConfigReader r(j, "");
    PipelineConfig cfg;
    cfg.base_dir = base_dir;
    auto resolve = [&](const std::filesystem::path &p) { return p.is_relative() ? base_dir / p : p; };

    if (!r.has("rig")) {
        r.fail("rig", "required key missing");
    }
    const Json rig_json = resolveJsonRef(r.raw("rig"), base_dir, "rig");
    cfg.rig = parseRig(rig_json, "rig");

    if (r.has("scene") == r.has("captures")) {
        r.fail("scene", "exactly one of 'scene' or 'captures' is required");
    }
    Json scene_json;
    if (r.has("scene")) {
        scene_json = resolveJsonRef(r.raw("scene"), base_dir, "scene");
        cfg.scene = parseScene(scene_json, "scene");
    } else {
        cfg.capture_dir = resolve(r.require<std::string>("captures"));
        if (!std::filesystem::is_directory(cfg.capture_dir)) {
            r.fail("captures", "directory not found: " + cfg.capture_dir.string());
        }
    }
    const int novel_default = cfg.rig.camera(0).width();
    const int matcher_default = novel_default / 2;
    cfg.matcher.max_disparity = matcher_default;
    if (r.has("matcher")) cfg.matcher = parseMatcherConfig(r.raw("matcher"), "matcher", cfg.matcher);
    if (r.has("cascade")) cfg.cascade = parseCascadeOptions(r.raw("cascade"), "cascade", cfg.cascade);
    if (r.has("depth_completion")) {
        ConfigReader c = r.child("depth_completion");
        c.read("enabled", cfg.completion.enabled);
        c.read("median_radius", cfg.completion.median_radius);
        c.read("carve_tolerance", cfg.completion.carve_tolerance);
        c.finish();
        if (cfg.completion.median_radius < 0) c.fail("median_radius", "must be >= 0");
    }
    if (r.has("blend")) cfg.blend = parseBlendConfig(r.raw("blend"), "blend", cfg.blend);
    if (r.has("splat")) cfg.splat = parseSplatConfig(r.raw("splat"), "splat", cfg.splat);
    if (r.has("color_correction")) {
        ConfigReader c = r.child("color_correction");
        double gamma = 1.0;
        Mat3 m = Mat3::Identity();
        c.read("gamma", gamma);
        c.read("matrix", m);
        c.finish();
        try {
            cfg.color = ColorCorrection(gamma, m);
        } catch (const std::invalid_argument &e) {
            c.fail("", e.what());
        }
    }
    if (r.has("novel")) {
        ConfigReader n = r.child("novel");
        std::string mode = "cam0";
        n.read("mode", mode);
        EyeViewOptions &eo = cfg.novel.eye_options;
        eo.width = cfg.rig.camera(0).width();
        eo.height = cfg.rig.camera(0).height();
        n.read("width", eo.width);
        n.read("height", eo.height);
        n.read("focal_factor", eo.focal_factor);
        n.read("user_scale", eo.user_scale);
        n.read("depth_offset", eo.depth_offset);
        std::string eye = "left";
        n.read("eye", eye);
        if (eye != "left" && eye != "right") {
            n.fail("eye", "expected 'left' or 'right'");
        }
        cfg.novel.right_eye = eye == "right";
        if (mode == "cam0") {
            cfg.novel.mode = NovelMode::Cam0;
        } else if (mode == "camera") {
            cfg.novel.mode = NovelMode::Camera;
            cfg.novel.camera = parseCamera(n.raw("camera"), n.keyPath("camera"));
        } else if (mode == "eyes") {
            cfg.novel.mode = NovelMode::Eyes;
        } else {
            n.fail("mode", "expected 'cam0', 'camera' or 'eyes'");
        }
        if (n.has("eyes")) cfg.novel.eyes = parseEyes(n.raw("eyes"), n.keyPath("eyes"));
        if (n.has("remote_eyes")) cfg.novel.remote_eyes = parseEyes(n.raw("remote_eyes"), n.keyPath("remote_eyes"));
        n.finish();
        if (eo.width <= 0 || eo.height <= 0 || !(eo.focal_factor > 0.0) || !(eo.user_scale > 0.0)) {
            n.fail("", "width, height, focal_factor and user_scale must be positive");
        }
    } else {
        cfg.novel.eye_options.width = cfg.rig.camera(0).width();
        cfg.novel.eye_options.height = cfg.rig.camera(0).height();
    }
    r.read("noise_sigma", cfg.noise_sigma);
    r.read("seed", cfg.seed);
    std::string out = cfg.output_dir.string();
    r.read("output_dir", out);
    cfg.output_dir = resolve(out);
    if (r.has("cache_dir")) {
        cfg.cache_dir = resolve(r.require<std::string>("cache_dir"));
    }
    r.read("png_bit_depth", cfg.png_bit_depth);
    r.read("threads", cfg.threads);
    r.finish();
    if (cfg.noise_sigma < 0.0) r.fail("noise_sigma", "must be >= 0");
    if (cfg.png_bit_depth != 8 && cfg.png_bit_depth != 16) r.fail("png_bit_depth", "must be 8 or 16");
    if (cfg.threads < 0) r.fail("threads", "must be >= 0");

    // Everything that influences pixels, with defaults filled in; paths,
    // thread count and cache location are excluded so the hash is portable.
    Json canon = {{"rig", toJson(cfg.rig)},
                  {"matcher", toJson(cfg.matcher)},
                  {"cascade", toJson(cfg.cascade)},
                  {"depth_completion", {{"enabled", cfg.completion.enabled},
                                        {"median_radius", cfg.completion.median_radius},
                                        {"carve_tolerance", cfg.completion.carve_tolerance}}},
                  {"blend", toJson(cfg.blend)},
                  {"splat", toJson(cfg.splat)},
                  {"color_correction", {{"gamma", cfg.color.gamma()}, {"matrix", toJson(cfg.color.matrix())}}},
                  {"noise_sigma", cfg.noise_sigma},
                  {"seed", cfg.seed},
                  {"png_bit_depth", cfg.png_bit_depth}};
    if (cfg.scene) {
        canon["scene"] = toJson(*cfg.scene);
    } else {
        canon["captures"] = cfg.capture_dir.filename().string();
    }
    Json nv = {{"mode", cfg.novel.mode == NovelMode::Cam0     ? "cam0"
                        : cfg.novel.mode == NovelMode::Camera ? "camera"
                                                              : "eyes"}};
    if (cfg.novel.camera) nv["camera"] = toJson(*cfg.novel.camera);
    if (cfg.novel.mode == NovelMode::Eyes) {
        const auto &eo = cfg.novel.eye_options;
        nv["eyes"] = {{"left", toJson(cfg.novel.eyes.left)}, {"right", toJson(cfg.novel.eyes.right)}};
        if (cfg.novel.remote_eyes) {
            nv["remote_eyes"] = {{"left", toJson(cfg.novel.remote_eyes->left)},
                                 {"right", toJson(cfg.novel.remote_eyes->right)}};
        }
        nv["width"] = eo.width;
        nv["height"] = eo.height;
        nv["focal_factor"] = eo.focal_factor;
        nv["user_scale"] = eo.user_scale;
        nv["depth_offset"] = eo.depth_offset;
        nv["eye"] = cfg.novel.right_eye ? "right" : "left";
    }
    canon["novel"] = nv;
    cfg.canonical = std::move(canon);
    return cfg;
}

inline PipelineConfig loadPipelineConfig(const std::filesystem::path &path) {
    const Json j = loadJsonFile(path);
    return parsePipelineConfig(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

/// Camera in capture space from which the synthesized view is rendered.
inline CameraModel resolveNovelCamera(const PipelineConfig &cfg) {
    switch (cfg.novel.mode) {
    case NovelMode::Cam0: return cfg.rig.camera(0);
    case NovelMode::Camera: return *cfg.novel.camera;
    case NovelMode::Eyes: {
        const EyeViews ev = novelViewFromEyes(cfg.rig, cfg.novel.eyes, cfg.novel.eye_options, cfg.novel.remote_eyes);
        return ev.transform.captureCamera(cfg.novel.right_eye ? ev.right : ev.left);
    }
    }
    return cfg.rig.camera(0);
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

struct SynthesisInputs {
    std::array<ImageBuffer, 4> images; ///< color-corrected, matted
    std::array<Mask, 4> masks;
    std::optional<std::array<GroundTruthView, 4>> truth;
};

struct SynthesisResult {
    explicit SynthesisResult(CameraModel cam) : novel(std::move(cam)) {}

    CameraModel novel;
    CascadeResult cascade;
    FeatureImage features;
    DecodedView decoded;
    std::array<DepthMap, 3> source_depth; ///< completed depth of cam0, cam2, cam3
    DepthMap z_fused;
    NovelBlend blend;
    Mask foreground;
    ImageBuffer lr_upsampled;
    ImageBuffer final_image;
    std::optional<GroundTruthView> truth;
    std::vector<std::pair<std::string, double>> timings_ms;
};

namespace pipeline_detail {

template <class F> auto timed(std::vector<std::pair<std::string, double>> &log, const std::string &stage, F &&fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            log.emplace_back(stage, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        } else {
            auto r = fn();
            log.emplace_back(stage, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
            return r;
        }
    } catch (const StageError &) {
        throw;
    } catch (const std::exception &e) {
        throw StageError(stage, e.what());
    }
}

/// Pixels of the full-resolution grid where the bilinearly upsampled splat
/// alpha reaches `threshold`.
inline Mask alphaSilhouette(const FeatureImage &fi, int w, int h, double threshold) {
    Mask out(w, h);
    const double sx = static_cast<double>(fi.width) / w, sy = static_cast<double>(fi.height) / h;
    auto at = [&](int x, int y) {
        x = std::clamp(x, 0, fi.width - 1);
        y = std::clamp(y, 0, fi.height - 1);
        return static_cast<double>(fi.alpha[static_cast<std::size_t>(y) * fi.width + x]);
    };
    for (int y = 0; y < h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const int y0 = static_cast<int>(std::floor(fy));
        const double ty = fy - y0;
        for (int x = 0; x < w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const int x0 = static_cast<int>(std::floor(fx));
            const double tx = fx - x0;
            const double a = (1 - ty) * ((1 - tx) * at(x0, y0) + tx * at(x0 + 1, y0)) +
                             ty * ((1 - tx) * at(x0, y0 + 1) + tx * at(x0 + 1, y0 + 1));
            out.set(x, y, a >= threshold);
        }
    }
    return out;
}

} // namespace pipeline_detail

/// Loads or renders the four source views, applies sensor noise, color
/// correction, and matting.
inline SynthesisInputs prepareInputs(const PipelineConfig &cfg) {
    SynthesisInputs in;
    if (cfg.scene) {
        std::array<GroundTruthView, 4> truth;
        for (int i = 0; i < 4; ++i) {
            truth[static_cast<std::size_t>(i)] = renderCached(*cfg.scene, cfg.rig.camera(i), cfg.cache_dir);
        }
        for (std::size_t i = 0; i < 4; ++i) {
            ImageBuffer img = truth[i].image;
            if (cfg.noise_sigma > 0.0) {
                img = addSensorNoise(img, cfg.noise_sigma, cfg.seed * 1000003ULL + i);
            }
            in.images[i] = matte(applyColorCorrection(cfg.color, img), truth[i].foreground);
            in.masks[i] = truth[i].foreground;
        }
        in.truth = std::move(truth);
    } else {
        for (int i = 0; i < 4; ++i) {
            const auto img_p = cfg.capture_dir / ("cam" + std::to_string(i) + ".png");
            const auto mask_p = cfg.capture_dir / ("mask" + std::to_string(i) + ".png");
            const ImageBuffer img = readPng(img_p);
            const ImageBuffer msk = readPng(mask_p);
            const CameraModel &cam = cfg.rig.camera(i);
            if (img.channels() != 3 || img.width() != cam.width() || img.height() != cam.height() ||
                msk.width() != cam.width() || msk.height() != cam.height()) {
                throw std::invalid_argument("capture " + img_p.string() + " does not match the rig resolution");
            }
            Mask m(msk.width(), msk.height());
            for (std::size_t k = 0; k < m.size(); ++k) {
                m.setAt(k, msk.values()[k * static_cast<std::size_t>(msk.channels())] > 0.5f);
            }
            in.images[static_cast<std::size_t>(i)] = matte(applyColorCorrection(cfg.color, img), m);
            in.masks[static_cast<std::size_t>(i)] = std::move(m);
        }
    }
    return in;
}

/// The full chain: cascade stereo, latent splatting at reduced resolution,
/// decoding, occlusion-aware blending at full resolution, and refinement.
inline SynthesisResult synthesize(const PipelineConfig &cfg) {
    using pipeline_detail::timed;
    std::vector<std::pair<std::string, double>> early;
    SynthesisResult res(timed(early, "novel_view", [&] { return resolveNovelCamera(cfg); }));
    auto &log = res.timings_ms;
    log = std::move(early);
    SynthesisInputs in = timed(log, "inputs", [&] { return prepareInputs(cfg); });
    const int W = res.novel.width(), H = res.novel.height();

    res.cascade = timed(log, "cascade_stereo", [&] {
        return cascadeEstimate(cfg.rig.upperPair(), cfg.rig.lowerPair(), in.images, in.masks,
                               cfg.matcher, cfg.cascade);
    });
    const std::array<int, 3> src_ids{0, 2, 3};
    const std::array<DepthMap, 3> src_depth = timed(log, "depth_completion", [&] {
        const std::array<const DepthMap *, 3> raw{&res.cascade.depth_cam0, &res.cascade.depth_cam2,
                                                  &res.cascade.depth_cam3};
        const int tol = cfg.completion.carve_tolerance;
        std::array<DepthMap, 3> out;
        for (std::size_t k = 0; k < 3; ++k) {
            const int id = src_ids[k];
            const Mask &m = in.masks[static_cast<std::size_t>(id)];
            std::vector<SilhouetteView> others;
            for (int j = 0; j < 4; ++j) {
                if (j != id) others.push_back({cfg.rig.camera(j), in.masks[static_cast<std::size_t>(j)]});
            }
            auto carve = [&](const DepthMap &d) { return tol < 0 ? d : carveDepth(d, cfg.rig.camera(id), others, tol); };
            // Carving before completion keeps gross outliers from seeding the
            // fill; carving after it removes what the fill invented.
            out[k] = cfg.completion.enabled ? carve(completeDepth(carve(*raw[k]), m, cfg.completion.median_radius))
                                            : carve(maskDepth(*raw[k], m));
        }
        return out;
    });

    res.source_depth = src_depth;
    const CameraModel low = res.novel.resized(1.0 / cfg.splat.resolution_factor);
    res.features = timed(log, "splatting", [&] {
        std::vector<EncoderOutput> enc;
        std::vector<DepthMap> depths;
        std::vector<CameraModel> cams;
        std::vector<Mask> masks;
        for (std::size_t k = 0; k < 3; ++k) {
            const auto i = static_cast<std::size_t>(src_ids[k]);
            const CameraModel &cam = cfg.rig.camera(src_ids[k]);
            enc.push_back(encodeSource(in.images[i], src_depth[k], in.masks[i], cam, cfg.splat));
            depths.push_back(src_depth[k]);
            cams.push_back(cam);
            masks.push_back(in.masks[i]);
        }
        const GaussianCloud cloud = liftToGaussians(enc, depths, cams, masks);
        return rasterizeGaussians(cloud, low, low.width(), low.height());
    });
    res.decoded = timed(log, "decode", [&] { return decodeFeatures(res.features, cfg.splat.min_alpha); });

    timed(log, "blend", [&] {
        std::vector<DepthMap> depths(src_depth.begin(), src_depth.end());
        std::vector<CameraModel> cams;
        std::vector<SourceView> views;
        for (std::size_t k = 0; k < 3; ++k) {
            const auto i = static_cast<std::size_t>(src_ids[k]);
            cams.push_back(cfg.rig.camera(src_ids[k]));
            views.push_back(SourceView{cams.back(), in.images[i], src_depth[k], in.masks[i]});
        }
        res.z_fused = fuseDepthToNovel(depths, cams, res.novel, cfg.blend.fuse_splat_radius);
        res.blend = blendNovelView(res.z_fused, res.novel, views, cfg.blend);
    });

    timed(log, "refine", [&] {
        // Only near-opaque splat coverage counts: the soft fringe of edge
        // Gaussians would otherwise smear color past the true silhouette.
        Mask covered = pipeline_detail::alphaSilhouette(res.features, W, H, cfg.splat.silhouette_alpha);
        for (std::size_t i = 0; i < covered.size(); ++i) {
            if (!res.blend.hole.at(i)) {
                covered.setAt(i, true);
            }
        }
        res.foreground = enclosedHull(covered);
        res.lr_upsampled = upsampleBicubic(res.decoded.rgb, W, H);
        res.final_image = refineFuse(res.decoded.rgb, res.blend.image, res.blend.hole, &res.foreground,
                                     cfg.blend.feather_pixels);
    });

    if (cfg.scene) {
        res.truth = timed(log, "ground_truth", [&] {
            GroundTruthView gt = renderCached(*cfg.scene, res.novel, cfg.cache_dir);
            gt.image = matte(applyColorCorrection(cfg.color, gt.image), gt.foreground);
            return gt;
        });
    }
    return res;
}

// ---------------------------------------------------------------------------
// Metrics and manifest
// ---------------------------------------------------------------------------

inline Json epeJson(const EndPointError &e) {
    return {{"epe", e.epe}, {"under_1px", e.under_1px}, {"under_3px", e.under_3px},
            {"under_5px", e.under_5px}, {"pixels", e.pixels}};
}

/// Ground-truth disparity of a pair's reference view, masked to the foreground.
inline DisparityMap truthDisparity(const StereoPair &pair, const GroundTruthView &gt) {
    return depthToDisparity(pair, maskDepth(gt.depth, gt.foreground));
}

inline Json synthesisMetrics(const PipelineConfig &cfg, const SynthesisResult &res) {
    Json m = Json::object();
    if (!res.truth) {
        return m;
    }
    const GroundTruthView &gt = *res.truth;
    ImageBuffer blend_zeroed = res.blend.image; // holes are already zero
    m["psnr_final"] = psnr(res.final_image, gt.image);
    m["psnr_blend"] = psnr(blend_zeroed, gt.image);
    m["psnr_lr_upsampled"] = psnr(matte(res.lr_upsampled, res.foreground), gt.image);
    m["ssim_final"] = ssim(res.final_image, gt.image);
    if (gt.foreground.count() > 0) {
        m["psnr_final_foreground"] = maskedPsnr(res.final_image, gt.image, gt.foreground);
    }
    std::size_t holes = 0, fg = 0;
    for (std::size_t i = 0; i < gt.foreground.size(); ++i) {
        if (gt.foreground.at(i)) {
            ++fg;
            holes += res.blend.hole.at(i) ? 1 : 0;
        }
    }
    m["blend_hole_fraction_in_foreground"] = fg ? static_cast<double>(holes) / fg : 0.0;
    const GroundTruthView c0 = renderCached(*cfg.scene, cfg.rig.camera(0), cfg.cache_dir);
    const GroundTruthView c2 = renderCached(*cfg.scene, cfg.rig.camera(2), cfg.cache_dir);
    try {
        m["epe_upper"] = epeJson(endPointError(res.cascade.upper.reference, truthDisparity(cfg.rig.upperPair(), c0)));
        m["epe_lower"] = epeJson(endPointError(res.cascade.lower.reference, truthDisparity(cfg.rig.lowerPair(), c2)));
    } catch (const std::invalid_argument &) {
        // no overlapping valid disparities: leave the stereo metrics out
    }
    return m;
}

struct RunArtifacts {
    Json manifest;
    std::filesystem::path manifest_path;
};

/// Writes all artifacts and the manifest. Files are listed relative to the
/// output directory with their FNV-1a hashes; wall times are kept under
/// "timings_ms" so the rest of the manifest is reproducible.
inline RunArtifacts writeSynthesisOutputs(const PipelineConfig &cfg, const SynthesisResult &res) {
    namespace fs = std::filesystem;
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    std::vector<std::string> files;
    auto add = [&](const std::string &name) { files.push_back(name); return dir / name; };

    writePng(add("final.png"), res.final_image, cfg.png_bit_depth);
    writePng(add("blend.png"), res.blend.image, cfg.png_bit_depth);
    writePng(add("blend_hole.png"), maskToImage(res.blend.hole), 8, false);
    writePng(add("lowres.png"), res.decoded.rgb, cfg.png_bit_depth);
    writePfm(add("final.pfm"), res.final_image.values(), res.final_image.width(), res.final_image.height(), 3);
    writeDepthPfm(add("depth_cam0.pfm"), res.cascade.depth_cam0);
    writeDepthPfm(add("depth_cam2.pfm"), res.cascade.depth_cam2);
    writeDepthPfm(add("depth_cam3.pfm"), res.cascade.depth_cam3);
    writeDisparityPfm(add("disparity_cam0.pfm"), res.cascade.upper.reference);
    writeDisparityPfm(add("disparity_cam2.pfm"), res.cascade.lower.reference);
    writeDisparityPfm(add("disparity_cam3.pfm"), res.cascade.lower.target);
    writeDepthPfm(add("z_fused.pfm"), res.z_fused);
    const std::array<const char *, 3> names{"cam0", "cam2", "cam3"};
    for (std::size_t v = 0; v < res.blend.weights.size(); ++v) {
        writePfm(add(std::string("weights_") + names[v] + ".pfm"), res.blend.weights[v], res.novel.width(),
                 res.novel.height(), 1);
    }
    writeFeatureStack(dir / "features", res.features);
    for (int c = 0; c <= res.features.dim; ++c) {
        char name[48];
        if (c == res.features.dim) {
            std::snprintf(name, sizeof(name), "features/alpha.pfm");
        } else {
            std::snprintf(name, sizeof(name), "features/feature_%02d.pfm", c);
        }
        files.push_back(name);
    }
    if (res.truth) {
        writePng(add("ground_truth.png"), res.truth->image, cfg.png_bit_depth);
    }

    Json outputs = Json::object();
    for (const std::string &f : files) {
        outputs[f] = hex64(hashFile(dir / f));
    }
    Json timings = Json::object();
    double total = 0.0;
    for (const auto &[stage, ms] : res.timings_ms) {
        timings[stage] = ms;
        total += ms;
    }
    timings["total"] = total;

    Json manifest = {{"tool", "teleview"},
                     {"command", "synthesize"},
                     {"config_hash", hex64(fnv1a(cfg.canonical.dump()))},
                     {"config", cfg.canonical},
                     {"novel_camera", toJson(res.novel)},
                     {"outputs", outputs},
                     {"metrics", synthesisMetrics(cfg, res)},
                     {"timings_ms", timings}};
    const fs::path mpath = dir / "manifest.json";
    std::ofstream os(mpath);
    os << std::setw(2) << manifest << "\n";
    if (!os) {
        throw IoError("cannot write manifest: " + mpath.string());
    }
    return {manifest, mpath};
}

/// Convenience wrapper: synthesize and write, applying the thread setting.
inline RunArtifacts runSynthesize(const PipelineConfig &cfg) {
    if (cfg.threads > 0) {
        setThreadCount(cfg.threads);
    }
    const SynthesisResult res = synthesize(cfg);
    try {
        return writeSynthesisOutputs(cfg, res);
    } catch (const StageError &) {
        throw;
    } catch (const std::exception &e) {
        throw StageError("write_outputs", e.what());
    }
}

// ---------------------------------------------------------------------------
// Latency accounting
// ---------------------------------------------------------------------------

struct LatencyStage {
    std::string name;
    double ms = 0.0;
};

struct LatencyBudget {
    std::vector<LatencyStage> stages;
    std::optional<double> declared_total_ms;

    void validate() const {
        for (const LatencyStage &s : stages) {
            if (!(s.ms >= 0.0) || !std::isfinite(s.ms)) {
                throw std::invalid_argument("LatencyBudget: stage '" + s.name + "' has a negative or non-finite cost");
            }
        }
    }
};

/// Per-component breakdown of the two-terminal prototype as published.
inline LatencyBudget publishedLatencyBudget() {
    return LatencyBudget{{{"Capture", 56},
                          {"Upload to vmem (sender)", 11},
                          {"Debayering", 13},
                          {"Pre-processing", 5},
                          {"Encoding", 5},
                          {"Download to mem", 1},
                          {"RTC transmission", 2},
                          {"Upload to vmem (receiver)", 1},
                          {"Decoding", 5},
                          {"View synthesis", 28},
                          {"Display output", 27}},
                         149.0};
}

inline LatencyBudget parseLatencyBudget(const Json &j, const std::string &path) {
    ConfigReader r(j, path);
    LatencyBudget b;
    const Json &stages = r.raw("stages");
    if (!stages.is_array()) {
        r.fail("stages", "expected an array");
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
        ConfigReader s(stages[i], r.keyPath("stages") + "[" + std::to_string(i) + "]");
        LatencyStage st{s.require<std::string>("name"), s.require<double>("ms")};
        s.finish();
        b.stages.push_back(st);
    }
    if (r.has("declared_total_ms")) {
        b.declared_total_ms = r.require<double>("declared_total_ms");
    }
    r.finish();
    validateAs(b, path.empty() ? "budget" : path);
    return b;
}

struct LatencyReport {
    double computed_total_ms = 0.0;
    std::optional<double> declared_total_ms;
    std::optional<double> discrepancy_ms;
    bool discrepancy_flagged = false;
    double frame_budget_ms = 33.0;
    std::optional<double> measured_ms;
    std::optional<bool> within_frame_budget;
    std::string text;
    Json json;
};

inline LatencyReport latencyReport(const LatencyBudget &budget, std::optional<double> measured_ms = std::nullopt,
                                   double frame_budget_ms = 33.0, double tolerance_ms = 1e-9) {
    budget.validate();
    LatencyReport rep;
    rep.frame_budget_ms = frame_budget_ms;
    rep.measured_ms = measured_ms;
    Json stages = Json::array();
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    std::size_t width = 5;
    for (const LatencyStage &s : budget.stages) {
        width = std::max(width, s.name.size());
    }
    os << std::left << std::setw(static_cast<int>(width)) << "stage" << "  " << std::right << std::setw(8) << "ms"
       << "\n";
    for (const LatencyStage &s : budget.stages) {
        rep.computed_total_ms += s.ms;
        os << std::left << std::setw(static_cast<int>(width)) << s.name << "  " << std::right << std::setw(8) << s.ms
           << "\n";
        stages.push_back({{"name", s.name}, {"ms", s.ms}});
    }
    os << std::left << std::setw(static_cast<int>(width)) << "computed total" << "  " << std::right << std::setw(8)
       << rep.computed_total_ms << "\n";
    rep.json = {{"stages", stages}, {"computed_total_ms", rep.computed_total_ms}};
    if (budget.declared_total_ms) {
        rep.declared_total_ms = budget.declared_total_ms;
        rep.discrepancy_ms = rep.computed_total_ms - *budget.declared_total_ms;
        rep.discrepancy_flagged = std::abs(*rep.discrepancy_ms) > tolerance_ms;
        os << std::left << std::setw(static_cast<int>(width)) << "declared total" << "  " << std::right
           << std::setw(8) << *budget.declared_total_ms << "\n";
        os << std::left << std::setw(static_cast<int>(width)) << "discrepancy" << "  " << std::right << std::setw(8)
           << *rep.discrepancy_ms << (rep.discrepancy_flagged ? "  [FLAG] stages do not sum to declared total" : "")
           << "\n";
        rep.json["declared_total_ms"] = *budget.declared_total_ms;
        rep.json["discrepancy_ms"] = *rep.discrepancy_ms;
        rep.json["discrepancy_flagged"] = rep.discrepancy_flagged;
    }
    rep.json["frame_budget_ms"] = frame_budget_ms;
    if (measured_ms) {
        rep.within_frame_budget = *measured_ms <= frame_budget_ms;
        os << "measured synthesis " << *measured_ms << " ms vs frame budget " << frame_budget_ms << " ms: "
           << (*rep.within_frame_budget ? "within budget" : "OVER budget") << "\n";
        rep.json["measured_ms"] = *measured_ms;
        rep.json["within_frame_budget"] = *rep.within_frame_budget;
    }
    rep.text = os.str();
    return rep;
}

} // namespace teleview
