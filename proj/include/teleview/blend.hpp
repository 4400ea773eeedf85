// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "teleview/geometry.hpp"

#include <array>
#include <cmath>
#include <optional>

namespace teleview {

struct BlendConfig {
    /// Occlusion gate: a sample is visible when |projected z - sampled z| < delta.
    double occlusion_threshold = 0.01;
    /// Appearance consistency radius around the weighted median color.
    double consistency_threshold = 0.15;
    /// Source pixels whose depth gradient exceeds this (m/px) are edge pixels.
    double edge_gradient_threshold = 0.02;
    /// Pixels whose weights sum below this are holes.
    double min_total_weight = 1e-4;
    /// Fused-depth z-buffer splat radius in pixels.
    int fuse_splat_radius = 1;
    /// Width of the blend-to-fill transition in refine_fuse.
    int feather_pixels = 3;

    void validate() const {
        if (!(occlusion_threshold > 0.0) || !(consistency_threshold > 0.0) ||
            !(edge_gradient_threshold > 0.0) || !(min_total_weight > 0.0)) {
            throw std::invalid_argument("BlendConfig: thresholds must be strictly positive");
        }
    }
};

/// One source view as seen by the blender.
struct SourceView {
    CameraModel camera;
    ImageBuffer image; ///< linear RGB
    DepthMap depth;
    Mask mask;
};

/// Per-view sample for one novel pixel.
struct BlendSample {
    bool valid = false;
    Eigen::Vector3f color = Eigen::Vector3f::Zero();
    float sampled_depth = 0.0f; ///< z_i interpolated from the source depth map
    Vec2 uv = Vec2::Zero();     ///< x_i projected into the source view
    double point_depth = 0.0;   ///< x_i.z, camera z of the back-projected point
    Vec3 point_cam = Vec3::Zero();
    float weight = 0.0f;
};

/// Min-z fusion of source depth maps warped into the novel view.
inline DepthMap fuseDepthToNovel(const std::vector<DepthMap> &depths,
                                 const std::vector<CameraModel> &cameras,
                                 const CameraModel &novel, int splat_radius = 1) {
    if (depths.size() != cameras.size()) {
        throw std::invalid_argument("fuseDepthToNovel: depth/camera count mismatch");
    }
    PointSet all;
    std::int64_t offset = 0;
    for (std::size_t v = 0; v < depths.size(); ++v) {
        all.append(depthToPoints(cameras[v], depths[v], offset));
        offset += static_cast<std::int64_t>(depths[v].width()) * depths[v].height();
    }
    return pointsZBuffer(all, novel, splat_radius);
}

namespace blend_detail {

struct Taps {
    std::array<int, 4> x{}, y{};
    std::array<float, 4> w{};
};

inline Taps bilinearTaps(const Vec2 &p, int width, int height) {
    const int x0 = static_cast<int>(std::floor(p.x()));
    const int y0 = static_cast<int>(std::floor(p.y()));
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const float ax = static_cast<float>(p.x() - x0);
    const float ay = static_cast<float>(p.y() - y0);
    Taps t;
    t.x = {x0, x1, x0, x1};
    t.y = {y0, y0, y1, y1};
    t.w = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
    return t;
}

} // namespace blend_detail

/// Back-projects novel pixel (u, v) at depth z_fused into `view` and samples
/// color and depth bilinearly. The sample is invalid when the point falls
/// behind the view or outside its image, or a contributing depth tap is invalid.
inline BlendSample backprojectSample(double z_fused, const CameraModel &novel, int u, int v,
                                     const SourceView &view) {
    BlendSample s;
    if (!(z_fused > 0.0)) {
        return s;
    }
    const Vec3 world = unproject(novel, Vec2(u, v), z_fused);
    const Projection p = project(view.camera, world);
    if (!p.inFront() || !view.camera.contains(p.pixel)) {
        return s;
    }
    s.uv = p.pixel;
    s.point_depth = p.depth;
    s.point_cam = view.camera.toCamera(world);
    const auto taps = blend_detail::bilinearTaps(p.pixel, view.image.width(), view.image.height());
    double z = 0.0;
    for (int k = 0; k < 4; ++k) {
        if (taps.w[static_cast<std::size_t>(k)] <= 0.0f) {
            continue;
        }
        const int tx = taps.x[static_cast<std::size_t>(k)], ty = taps.y[static_cast<std::size_t>(k)];
        if (!view.depth.valid(tx, ty)) {
            return s;
        }
        z += static_cast<double>(taps.w[static_cast<std::size_t>(k)]) * view.depth(tx, ty);
    }
    std::array<float, 3> c{};
    sampleBilinear(view.image, p.pixel, c);
    s.color = Eigen::Vector3f(c[0], c[1], c[2]);
    s.sampled_depth = static_cast<float>(z);
    s.valid = true;
    return s;
}

/// Product of the view mask, the occlusion gate, the clamped cosine between
/// the reversed novel ray and the source normal, and the inverse distance of
/// the point from the source camera. `normal` and `ray` are unit world vectors;
/// the normal faces the source camera.
inline float visibilityWeight(const BlendSample &s, const Vec3 &normal, const Vec3 &ray,
                              bool mask_pass, const BlendConfig &cfg) {
    if (!s.valid || !mask_pass) {
        return 0.0f;
    }
    if (!(std::abs(s.point_depth - s.sampled_depth) < cfg.occlusion_threshold)) {
        return 0.0f;
    }
    const double cosine = std::max(0.0, -ray.dot(normal));
    const double dist = s.point_cam.norm();
    if (cosine <= 0.0 || !(dist > 0.0)) {
        return 0.0f;
    }
    return static_cast<float>(cosine / dist);
}

struct BlendResult {
    ImageBuffer image;
    Mask hole;
};

/// Normalized weighted sum of per-view colors; pixels whose total weight is
/// below `min_total_weight` are holes and stay zero.
inline BlendResult blendViews(const std::vector<std::vector<BlendSample>> &samples, int width,
                              int height, double min_total_weight) {
    BlendResult out{ImageBuffer(width, height, 3), Mask(width, height)};
    const std::size_t n = static_cast<std::size_t>(width) * height;
    for (const auto &view : samples) {
        if (view.size() != n) {
            throw std::invalid_argument("blendViews: sample plane size mismatch");
        }
    }
    parallelFor(0, height, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            double total = 0.0;
            Eigen::Vector3d acc = Eigen::Vector3d::Zero();
            for (const auto &view : samples) {
                const BlendSample &s = view[i];
                if (s.weight > 0.0f) {
                    total += s.weight;
                    acc += static_cast<double>(s.weight) * s.color.cast<double>();
                }
            }
            if (total < min_total_weight) {
                out.hole.setAt(i, true);
                continue;
            }
            const Eigen::Vector3d c = acc / total;
            for (int ch = 0; ch < 3; ++ch) {
                out.image(x, y, ch) = static_cast<float>(c[ch]);
            }
        }
    });
    return out;
}

/// Pixels that are silhouettes or steep depth edges in a source view.
inline Mask edgeMask(const DepthMap &depth, double gradient_threshold) {
    const int w = depth.width(), h = depth.height();
    Mask edge(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!depth.valid(x, y)) {
                continue;
            }
            bool e = false;
            const int xs[2] = {std::max(0, x - 1), std::min(w - 1, x + 1)};
            const int ys[2] = {std::max(0, y - 1), std::min(h - 1, y + 1)};
            if (!depth.valid(xs[0], y) || !depth.valid(xs[1], y) || !depth.valid(x, ys[0]) ||
                !depth.valid(x, ys[1])) {
                e = true;
            } else {
                const double gx = (depth(xs[1], y) - depth(xs[0], y)) / std::max(1, xs[1] - xs[0]);
                const double gy = (depth(x, ys[1]) - depth(x, ys[0])) / std::max(1, ys[1] - ys[0]);
                e = std::abs(gx) > gradient_threshold || std::abs(gy) > gradient_threshold;
            }
            edge.set(x, y, e);
        }
    }
    return edge;
}

/// Per-channel weighted median of the given colors.
inline Eigen::Vector3f weightedMedian(const std::vector<std::pair<Eigen::Vector3f, float>> &items) {
    Eigen::Vector3f out = Eigen::Vector3f::Zero();
    double total = 0.0;
    for (const auto &it : items) {
        total += it.second;
    }
    std::vector<std::pair<float, float>> ch(items.size());
    for (int c = 0; c < 3; ++c) {
        for (std::size_t k = 0; k < items.size(); ++k) {
            ch[k] = {items[k].first[c], items[k].second};
        }
        std::sort(ch.begin(), ch.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
        double run = 0.0;
        for (const auto &[value, weight] : ch) {
            run += weight;
            if (run >= 0.5 * total) {
                out[c] = value;
                break;
            }
        }
    }
    return out;
}

struct NovelBlend {
    ImageBuffer image;
    Mask hole;
    std::vector<std::vector<float>> weights; ///< per view, H x W
    std::vector<std::vector<BlendSample>> samples;
};

/// Full blending pass for a novel view: back-project every fused-depth pixel
/// into each source view, weight each sample, reject samples far from the
/// weighted median color, and normalize.
inline NovelBlend blendNovelView(const DepthMap &z_fused, const CameraModel &novel,
                                 const std::vector<SourceView> &views, const BlendConfig &cfg) {
    cfg.validate();
    const int w = novel.width(), h = novel.height();
    requireSameSize(w, h, z_fused.width(), z_fused.height(), "blendNovelView");
    const std::size_t n = static_cast<std::size_t>(w) * h;

    std::vector<NormalMap> normals;
    std::vector<Mask> edges;
    for (const SourceView &v : views) {
        normals.push_back(normalsFromDepth(v.camera, v.depth));
        edges.push_back(edgeMask(v.depth, cfg.edge_gradient_threshold));
    }

    NovelBlend out;
    out.samples.assign(views.size(), std::vector<BlendSample>(n));
    parallelFor(0, h, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!z_fused.validAt(i)) {
                continue;
            }
            const Vec3 ray = novel.rayDirection(Vec2(x, y));
            for (std::size_t v = 0; v < views.size(); ++v) {
                const SourceView &view = views[v];
                BlendSample s = backprojectSample(z_fused.at(i), novel, x, y, view);
                if (!s.valid) {
                    out.samples[v][i] = s;
                    continue;
                }
                // Input mask, edge mask and normal availability must hold on every
                // contributing tap.
                const auto taps =
                    blend_detail::bilinearTaps(s.uv, view.image.width(), view.image.height());
                bool pass = true;
                Eigen::Vector3d nsum = Eigen::Vector3d::Zero();
                for (int k = 0; k < 4 && pass; ++k) {
                    const auto ks = static_cast<std::size_t>(k);
                    if (taps.w[ks] <= 0.0f) {
                        continue;
                    }
                    const int tx = taps.x[ks], ty = taps.y[ks];
                    pass = view.mask(tx, ty) && !edges[v](tx, ty) &&
                           normals[v].valid(tx, ty);
                    if (pass) {
                        nsum += static_cast<double>(taps.w[ks]) * normals[v](tx, ty).cast<double>();
                    }
                }
                Vec3 normal_world = Vec3::Zero();
                if (pass && nsum.norm() > 0.0) {
                    normal_world = view.camera.rotation().transpose() * nsum.normalized();
                } else {
                    pass = false;
                }
                s.weight = visibilityWeight(s, normal_world, ray, pass, cfg);
                out.samples[v][i] = s;
            }
        }
    });

    // Appearance consistency against the weighted median of the surviving samples.
    parallelFor(0, h, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        std::vector<std::pair<Eigen::Vector3f, float>> items;
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            items.clear();
            for (std::size_t v = 0; v < views.size(); ++v) {
                if (out.samples[v][i].weight > 0.0f) {
                    items.emplace_back(out.samples[v][i].color, out.samples[v][i].weight);
                }
            }
            if (items.size() < 2) {
                continue;
            }
            const Eigen::Vector3f med = weightedMedian(items);
            for (std::size_t v = 0; v < views.size(); ++v) {
                BlendSample &s = out.samples[v][i];
                if (s.weight > 0.0f && (s.color - med).norm() > cfg.consistency_threshold) {
                    s.weight = 0.0f;
                }
            }
        }
    });

    BlendResult br = blendViews(out.samples, w, h, cfg.min_total_weight);
    out.image = std::move(br.image);
    out.hole = std::move(br.hole);
    out.weights.assign(views.size(), std::vector<float>(n, 0.0f));
    for (std::size_t v = 0; v < views.size(); ++v) {
        for (std::size_t i = 0; i < n; ++i) {
            out.weights[v][i] = out.samples[v][i].weight;
        }
    }
    return out;
}

namespace blend_detail {

inline double cubicWeight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) {
        return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    }
    if (t < 2.0) {
        return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    }
    return 0.0;
}

} // namespace blend_detail

/// Keys bicubic (a = -0.5) resampling to width x height with pixel-center
/// alignment and border clamp; results are clamped to [0, 1].
inline ImageBuffer upsampleBicubic(const ImageBuffer &src, int width, int height) {
    ImageBuffer out(width, height, src.channels());
    const double sx = static_cast<double>(src.width()) / width;
    const double sy = static_cast<double>(src.height()) / height;
    parallelFor(0, height, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        const double fy = (y + 0.5) * sy - 0.5;
        const int iy = static_cast<int>(std::floor(fy));
        for (int x = 0; x < width; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const int ix = static_cast<int>(std::floor(fx));
            for (int c = 0; c < src.channels(); ++c) {
                double acc = 0.0;
                for (int j = -1; j <= 2; ++j) {
                    const double wy = blend_detail::cubicWeight(fy - (iy + j));
                    const int py = std::clamp(iy + j, 0, src.height() - 1);
                    for (int i = -1; i <= 2; ++i) {
                        const double wx = blend_detail::cubicWeight(fx - (ix + i));
                        acc += wx * wy * src(std::clamp(ix + i, 0, src.width() - 1), py, c);
                    }
                }
                out(x, y, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
        }
    });
    return out;
}

/// Compositing stand-in for the learned refiner. Inside `foreground`, blend
/// pixels are kept and blend holes take the bicubically upsampled low-res
/// render; valid pixels within `feather` pixels of a hole are cross-faded.
/// Outside the foreground the output is zero. A null foreground means the
/// whole frame.
inline ImageBuffer refineFuse(const ImageBuffer &low_res, const ImageBuffer &blend,
                              const Mask &hole, const Mask *foreground = nullptr, int feather = 3) {
    const int w = blend.width(), h = blend.height();
    requireSameSize(w, h, hole.width(), hole.height(), "refineFuse(hole)");
    if (foreground) {
        requireSameSize(w, h, foreground->width(), foreground->height(), "refineFuse(foreground)");
    }
    auto inside = [&](int x, int y) { return !foreground || (*foreground)(x, y); };
    bool any_hole = false;
    for (int y = 0; y < h && !any_hole; ++y) {
        for (int x = 0; x < w; ++x) {
            if (inside(x, y) && hole(x, y)) {
                any_hole = true;
                break;
            }
        }
    }
    ImageBuffer out(w, h, 3);
    if (!any_hole) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (inside(x, y)) {
                    for (int c = 0; c < 3; ++c) {
                        out(x, y, c) = blend(x, y, c);
                    }
                }
            }
        }
        return out;
    }
    const ImageBuffer up = upsampleBicubic(low_res, w, h);
    parallelFor(0, h, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < w; ++x) {
            if (!inside(x, y)) {
                continue;
            }
            float beta = 0.0f;
            if (!hole(x, y)) {
                double d2 = std::numeric_limits<double>::infinity();
                for (int j = -feather; j <= feather; ++j) {
                    for (int i = -feather; i <= feather; ++i) {
                        const int sx = x + i, sy = y + j;
                        if (sx < 0 || sy < 0 || sx >= w || sy >= h || !hole(sx, sy) ||
                            !inside(sx, sy)) {
                            continue;
                        }
                        d2 = std::min(d2, static_cast<double>(i * i + j * j));
                    }
                }
                const double d = std::sqrt(d2);
                beta = d > feather ? 1.0f : static_cast<float>(d / (feather + 1));
            }
            for (int c = 0; c < 3; ++c) {
                out(x, y, c) = beta == 1.0f ? blend(x, y, c)
                                            : beta * blend(x, y, c) + (1.0f - beta) * up(x, y, c);
            }
        }
    });
    return out;
}

} // namespace teleview
