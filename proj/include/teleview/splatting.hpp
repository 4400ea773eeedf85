// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "teleview/geometry.hpp"

#include <Eigen/LU>

#include <cmath>
#include <numeric>
#include <optional>

namespace teleview {

struct SplatConfig {
    /// Latent feature width; the first three channels always carry RGB.
    int feature_dim = 8;
    /// Gaussian scale in source-pixel footprints: s = kappa * z / f.
    double kappa = 1.0;
    /// Novel view is splatted at 1 / resolution_factor of the final size.
    int resolution_factor = 2;
    /// Alpha at or below this is treated as uncovered when decoding.
    double min_alpha = 0.05;
    /// Upsampled alpha at or above this marks the latent path's silhouette
    /// when deciding which blend holes the refinement may fill.
    double silhouette_alpha = 0.95;

    void validate() const {
        if (feature_dim < 3) {
            throw std::invalid_argument("SplatConfig: feature_dim must be >= 3");
        }
        if (!(kappa > 0.0) || resolution_factor < 1 || !(min_alpha >= 0.0 && min_alpha < 1.0) ||
            !(silhouette_alpha > 0.0 && silhouette_alpha <= 1.0)) {
            throw std::invalid_argument("SplatConfig: invalid kappa/resolution_factor/min_alpha/silhouette_alpha");
        }
    }
};

/// Pixel-aligned maps predicted for one source view.
struct EncoderOutput {
    int width = 0;
    int height = 0;
    int dim = 0;
    std::vector<float> features; ///< H x W x D
    std::vector<float> scales;   ///< H x W x 3, meters
    std::vector<float> opacity;  ///< H x W

    const float *feature(int x, int y) const {
        return features.data() + (static_cast<std::size_t>(y) * width + x) * dim;
    }
};

/// Splat set with identity rotations.
struct GaussianCloud {
    int dim = 0;
    std::vector<Vec3> positions;
    std::vector<float> features; ///< N x D
    std::vector<Eigen::Vector3f> scales;
    std::vector<float> opacity;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
    const float *feature(std::size_t i) const { return features.data() + i * dim; }

    void validate() const {
        const std::size_t n = positions.size();
        if (features.size() != n * static_cast<std::size_t>(dim) || scales.size() != n ||
            opacity.size() != n) {
            throw std::invalid_argument("GaussianCloud: array lengths disagree");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!(opacity[i] >= 0.0f && opacity[i] <= 1.0f)) {
                throw std::invalid_argument("GaussianCloud: opacity outside [0, 1]");
            }
            if (!(scales[i].minCoeff() > 0.0f)) {
                throw std::invalid_argument("GaussianCloud: scales must be positive");
            }
        }
    }
};

/// D-channel splat target with accumulated alpha.
struct FeatureImage {
    int width = 0;
    int height = 0;
    int dim = 0;
    std::vector<float> features; ///< H x W x D, premultiplied by coverage
    std::vector<float> alpha;    ///< H x W

    FeatureImage() = default;
    FeatureImage(int w, int h, int d)
        : width(w), height(h), dim(d),
          features(static_cast<std::size_t>(w) * h * d, 0.0f),
          alpha(static_cast<std::size_t>(w) * h, 0.0f) {}

    float *feature(int x, int y) {
        return features.data() + (static_cast<std::size_t>(y) * width + x) * dim;
    }
    const float *feature(int x, int y) const {
        return features.data() + (static_cast<std::size_t>(y) * width + x) * dim;
    }
    bool operator==(const FeatureImage &) const = default;
};

namespace splat_detail {

inline std::vector<float> boxMean(const std::vector<float> &src, int w, int h, int r) {
    std::vector<float> out(src.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int j = -r; j <= r; ++j) {
                const int sy = std::clamp(y + j, 0, h - 1);
                for (int i = -r; i <= r; ++i) {
                    s += src[static_cast<std::size_t>(sy) * w + std::clamp(x + i, 0, w - 1)];
                }
            }
            out[static_cast<std::size_t>(y) * w + x] =
                static_cast<float>(s / ((2 * r + 1) * (2 * r + 1)));
        }
    }
    return out;
}

/// Chessboard distance from each mask pixel to the nearest unmasked pixel,
/// capped at `cap`; pixels beyond the image border count as masked.
inline std::vector<int> maskDistance(const Mask &mask, int cap) {
    const int w = mask.width(), h = mask.height();
    std::vector<int> out(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask(x, y)) {
                continue;
            }
            int d = cap;
            for (int r = 1; r < cap && d == cap; ++r) {
                for (int j = -r; j <= r && d == cap; ++j) {
                    for (int i = -r; i <= r; ++i) {
                        if (std::max(std::abs(i), std::abs(j)) != r) {
                            continue;
                        }
                        const int sx = x + i, sy = y + j;
                        if (sx >= 0 && sy >= 0 && sx < w && sy < h && !mask(sx, sy)) {
                            d = r;
                            break;
                        }
                    }
                }
            }
            out[static_cast<std::size_t>(y) * w + x] = d;
        }
    }
    return out;
}

} // namespace splat_detail

/// Deterministic stand-in for the learned source encoder. Channels: 0-2 RGB,
/// 3 normalized depth, 4-5 luminance gradients, 6-7 local luminance means
/// (3x3, 5x5); further channels continue with wider box means. Scales are
/// isotropic kappa * z / fx; opacity ramps from 0 outside the mask to 1 over a
/// 2-pixel band inside it.
inline EncoderOutput encodeSource(const ImageBuffer &img, const DepthMap &depth, const Mask &mask,
                                  const CameraModel &cam, const SplatConfig &cfg = {}) {
    cfg.validate();
    const int w = img.width(), h = img.height();
    requireSameSize(w, h, depth.width(), depth.height(), "encodeSource(depth)");
    requireSameSize(w, h, mask.width(), mask.height(), "encodeSource(mask)");
    requireSameSize(w, h, cam.width(), cam.height(), "encodeSource(camera)");
    if (img.channels() != 3) {
        throw std::invalid_argument("encodeSource: expected an RGB image");
    }
    const int dim = cfg.feature_dim;
    EncoderOutput out;
    out.width = w;
    out.height = h;
    out.dim = dim;
    out.features.assign(static_cast<std::size_t>(w) * h * dim, 0.0f);
    out.scales.assign(static_cast<std::size_t>(w) * h * 3, 0.0f);
    out.opacity.assign(static_cast<std::size_t>(w) * h, 0.0f);

    const std::vector<float> lum = luminance(img).values();
    float zmin = std::numeric_limits<float>::max(), zmax = 0.0f;
    for (std::size_t i = 0; i < lum.size(); ++i) {
        if (mask.at(i) && depth.validAt(i)) {
            zmin = std::min(zmin, depth.at(i));
            zmax = std::max(zmax, depth.at(i));
        }
    }
    const float zrange = zmax > zmin ? zmax - zmin : 0.0f;

    std::vector<std::vector<float>> extra;
    for (int c = 6; c < dim; ++c) {
        extra.push_back(splat_detail::boxMean(lum, w, h, c - 5));
    }
    const std::vector<int> dist = splat_detail::maskDistance(mask, 3);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            float *f = out.features.data() + i * dim;
            for (int c = 0; c < 3; ++c) {
                f[c] = img(x, y, c);
            }
            if (dim > 3) {
                f[3] = (depth.validAt(i) && zrange > 0.0f) ? (depth.at(i) - zmin) / zrange : 0.0f;
            }
            if (dim > 5) {
                const auto l = [&](int xx, int yy) {
                    return lum[static_cast<std::size_t>(std::clamp(yy, 0, h - 1)) * w +
                               std::clamp(xx, 0, w - 1)];
                };
                f[4] = 0.5f * (l(x + 1, y) - l(x - 1, y));
                f[5] = 0.5f * (l(x, y + 1) - l(x, y - 1));
            } else if (dim > 4) {
                f[4] = 0.0f;
            }
            for (int c = 6; c < dim; ++c) {
                f[c] = extra[static_cast<std::size_t>(c - 6)][i];
            }
            const double z = depth.validAt(i) ? depth.at(i) : 0.0;
            const float s = static_cast<float>(cfg.kappa * z / cam.fx());
            for (int c = 0; c < 3; ++c) {
                out.scales[i * 3 + c] = s;
            }
            out.opacity[i] = mask.at(i) ? std::min(1.0f, dist[i] / 3.0f) : 0.0f;
        }
    }
    return out;
}

/// One Gaussian per masked pixel with valid depth and nonzero opacity, over
/// all given source views.
inline GaussianCloud liftToGaussians(const std::vector<EncoderOutput> &outputs,
                                     const std::vector<DepthMap> &depths,
                                     const std::vector<CameraModel> &cameras,
                                     const std::vector<Mask> &masks) {
    if (outputs.size() != depths.size() || outputs.size() != cameras.size() ||
        outputs.size() != masks.size()) {
        throw std::invalid_argument("liftToGaussians: per-view inputs disagree in count");
    }
    GaussianCloud cloud;
    cloud.dim = outputs.empty() ? 0 : outputs.front().dim;
    for (std::size_t v = 0; v < outputs.size(); ++v) {
        const EncoderOutput &enc = outputs[v];
        if (enc.dim != cloud.dim) {
            throw std::invalid_argument("liftToGaussians: feature widths disagree");
        }
        requireSameSize(enc.width, enc.height, depths[v].width(), depths[v].height(),
                        "liftToGaussians");
        for (int y = 0; y < enc.height; ++y) {
            for (int x = 0; x < enc.width; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * enc.width + x;
                if (!masks[v].at(i) || !depths[v].validAt(i) || !(enc.opacity[i] > 0.0f)) {
                    continue;
                }
                cloud.positions.push_back(unproject(cameras[v], Vec2(x, y), depths[v].at(i)));
                cloud.features.insert(cloud.features.end(), enc.feature(x, y),
                                      enc.feature(x, y) + enc.dim);
                cloud.scales.emplace_back(enc.scales[i * 3], enc.scales[i * 3 + 1],
                                          enc.scales[i * 3 + 2]);
                cloud.opacity.push_back(enc.opacity[i]);
            }
        }
    }
    return cloud;
}

/// Screen-space footprint of one Gaussian.
struct ProjectedGaussian {
    std::uint32_t index = 0;
    double depth = 0.0;
    Vec2 mean = Vec2::Zero();
    Mat2 conic = Mat2::Identity(); ///< inverse 2D covariance
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1; ///< inclusive pixel bounds of the 3-sigma box
};

struct RasterSettings {
    double near_plane = 0.01;
    double covariance_floor = 0.3; ///< px^2 added to the 2D covariance diagonal
    double max_alpha = 0.99;
    double cutoff_sigma = 3.0;
    int tile_size = 16;
};

/// EWA projection of a Gaussian with covariance diag(s^2) (identity rotation).
inline std::optional<ProjectedGaussian> projectGaussian(const GaussianCloud &cloud, std::size_t i,
                                                        const CameraModel &cam, int width,
                                                        int height, const RasterSettings &rs) {
    const Vec3 p = cam.toCamera(cloud.positions[i]);
    if (!(p.z() > rs.near_plane)) {
        return std::nullopt;
    }
    const Eigen::Vector3d s2 = cloud.scales[i].cast<double>().cwiseAbs2();
    const Mat3 &r = cam.rotation();
    const Mat3 cov3 = r * s2.asDiagonal() * r.transpose();
    Eigen::Matrix<double, 2, 3> j;
    const double iz = 1.0 / p.z();
    j << cam.fx() * iz, 0.0, -cam.fx() * p.x() * iz * iz, 0.0, cam.fy() * iz,
        -cam.fy() * p.y() * iz * iz;
    Mat2 cov2 = j * cov3 * j.transpose();
    cov2(0, 0) += rs.covariance_floor;
    cov2(1, 1) += rs.covariance_floor;
    const double det = cov2.determinant();
    if (!(det > 0.0)) {
        return std::nullopt;
    }
    ProjectedGaussian g;
    g.index = static_cast<std::uint32_t>(i);
    g.depth = p.z();
    g.mean = Vec2(cam.fx() * p.x() * iz + cam.cx(), cam.fy() * p.y() * iz + cam.cy());
    g.conic = cov2.inverse();
    const double mid = 0.5 * (cov2(0, 0) + cov2(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double radius = rs.cutoff_sigma * std::sqrt(lambda_max);
    g.x0 = std::max(0, static_cast<int>(std::ceil(g.mean.x() - radius)));
    g.x1 = std::min(width - 1, static_cast<int>(std::floor(g.mean.x() + radius)));
    g.y0 = std::max(0, static_cast<int>(std::ceil(g.mean.y() - radius)));
    g.y1 = std::min(height - 1, static_cast<int>(std::floor(g.mean.y() + radius)));
    if (g.x0 > g.x1 || g.y0 > g.y1) {
        return std::nullopt;
    }
    return g;
}

/// Forward 3DGS compositing of a feature cloud into `cam`: front-to-back by
/// camera depth (stable by point index), alpha_i = min(opacity * G(delta),
/// 0.99), Gaussians ignored beyond Mahalanobis distance 3. Work is binned into
/// 16x16 tiles; each tile composites its list in the global depth order.
inline FeatureImage rasterizeGaussians(const GaussianCloud &cloud, const CameraModel &cam,
                                       int width, int height, const RasterSettings &rs = {}) {
    cloud.validate();
    FeatureImage out(width, height, cloud.dim);
    if (cloud.empty()) {
        return out;
    }
    std::vector<ProjectedGaussian> proj;
    proj.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (auto g = projectGaussian(cloud, i, cam, width, height, rs)) {
            proj.push_back(*g);
        }
    }
    std::stable_sort(proj.begin(), proj.end(), [](const ProjectedGaussian &a,
                                                  const ProjectedGaussian &b) {
        return a.depth < b.depth;
    });

    const int ts = rs.tile_size;
    const int tiles_x = (width + ts - 1) / ts;
    const int tiles_y = (height + ts - 1) / ts;
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::uint32_t k = 0; k < proj.size(); ++k) {
        const ProjectedGaussian &g = proj[k];
        for (int ty = g.y0 / ts; ty <= g.y1 / ts; ++ty) {
            for (int tx = g.x0 / ts; tx <= g.x1 / ts; ++tx) {
                bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(k);
            }
        }
    }

    const double cutoff2 = rs.cutoff_sigma * rs.cutoff_sigma;
    const int dim = cloud.dim;
    parallelFor(0, static_cast<std::int64_t>(bins.size()), [&](std::int64_t t) {
        const int tx = static_cast<int>(t % tiles_x);
        const int ty = static_cast<int>(t / tiles_x);
        const auto &list = bins[static_cast<std::size_t>(t)];
        std::vector<double> acc(static_cast<std::size_t>(dim));
        for (int y = ty * ts; y < std::min(height, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(width, (tx + 1) * ts); ++x) {
                std::fill(acc.begin(), acc.end(), 0.0);
                double transmittance = 1.0;
                double alpha_sum = 0.0;
                for (std::uint32_t k : list) {
                    const ProjectedGaussian &g = proj[k];
                    if (x < g.x0 || x > g.x1 || y < g.y0 || y > g.y1) {
                        continue;
                    }
                    const Vec2 d(x - g.mean.x(), y - g.mean.y());
                    const double power = d.dot(g.conic * d);
                    if (power > cutoff2) {
                        continue;
                    }
                    const double a = std::min(
                        rs.max_alpha, static_cast<double>(cloud.opacity[g.index]) * std::exp(-0.5 * power));
                    const double wgt = a * transmittance;
                    const float *f = cloud.feature(g.index);
                    for (int c = 0; c < dim; ++c) {
                        acc[static_cast<std::size_t>(c)] += wgt * f[c];
                    }
                    alpha_sum += wgt;
                    transmittance *= 1.0 - a;
                }
                float *dst = out.feature(x, y);
                for (int c = 0; c < dim; ++c) {
                    dst[c] = static_cast<float>(acc[static_cast<std::size_t>(c)]);
                }
                out.alpha[static_cast<std::size_t>(y) * width + x] =
                    static_cast<float>(std::min(1.0, alpha_sum));
            }
        }
    });
    return out;
}

/// Fills pixels where `known` is unset from a pull/push pyramid. Known pixels
/// keep their exact values; every filled value is a convex combination of
/// known values. With no known pixel the output is all zero.
inline std::vector<float> pushPullFill(const std::vector<float> &values, const Mask &known, int dim) {
    struct Lvl {
        int w, h;
        std::vector<float> v; ///< normalized values
        std::vector<float> wt;
    };
    std::vector<Lvl> pyr;
    {
        Lvl base{known.width(), known.height(), values, std::vector<float>(known.size(), 0.0f)};
        for (std::size_t i = 0; i < known.size(); ++i) {
            base.wt[i] = known.at(i) ? 1.0f : 0.0f;
            if (!known.at(i)) {
                std::fill_n(base.v.begin() + static_cast<std::ptrdiff_t>(i * dim), dim, 0.0f);
            }
        }
        pyr.push_back(std::move(base));
    }
    while (pyr.back().w > 1 || pyr.back().h > 1) {
        const Lvl &p = pyr.back();
        Lvl n{(p.w + 1) / 2, (p.h + 1) / 2, {}, {}};
        n.v.assign(static_cast<std::size_t>(n.w) * n.h * dim, 0.0f);
        n.wt.assign(static_cast<std::size_t>(n.w) * n.h, 0.0f);
        for (int y = 0; y < n.h; ++y) {
            for (int x = 0; x < n.w; ++x) {
                double wsum = 0.0;
                std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
                for (int j = 0; j < 2; ++j) {
                    for (int i = 0; i < 2; ++i) {
                        const int sx = 2 * x + i, sy = 2 * y + j;
                        if (sx >= p.w || sy >= p.h) {
                            continue;
                        }
                        const std::size_t si = static_cast<std::size_t>(sy) * p.w + sx;
                        const double wv = p.wt[si];
                        wsum += wv;
                        for (int c = 0; c < dim; ++c) {
                            acc[static_cast<std::size_t>(c)] += wv * p.v[si * dim + c];
                        }
                    }
                }
                const std::size_t ni = static_cast<std::size_t>(y) * n.w + x;
                if (wsum > 0.0) {
                    for (int c = 0; c < dim; ++c) {
                        n.v[ni * dim + c] = static_cast<float>(acc[static_cast<std::size_t>(c)] / wsum);
                    }
                }
                n.wt[ni] = static_cast<float>(std::min(1.0, wsum));
            }
        }
        pyr.push_back(std::move(n));
    }
    for (int l = static_cast<int>(pyr.size()) - 2; l >= 0; --l) {
        Lvl &cur = pyr[static_cast<std::size_t>(l)];
        const Lvl &up = pyr[static_cast<std::size_t>(l) + 1];
        for (int y = 0; y < cur.h; ++y) {
            for (int x = 0; x < cur.w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * cur.w + x;
                const float wv = cur.wt[i];
                if (wv >= 1.0f) {
                    continue;
                }
                // Bilinear lookup in the parent level, clamped to its extent.
                const double px = std::clamp((x + 0.5) / 2.0 - 0.5, 0.0, up.w - 1.0);
                const double py = std::clamp((y + 0.5) / 2.0 - 0.5, 0.0, up.h - 1.0);
                const int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
                const int x1 = std::min(x0 + 1, up.w - 1), y1 = std::min(y0 + 1, up.h - 1);
                const double ax = px - x0, ay = py - y0;
                for (int c = 0; c < dim; ++c) {
                    const auto at = [&](int xx, int yy) {
                        return static_cast<double>(up.v[(static_cast<std::size_t>(yy) * up.w + xx) * dim + c]);
                    };
                    const double fill = (at(x0, y0) * (1 - ax) + at(x1, y0) * ax) * (1 - ay) +
                                        (at(x0, y1) * (1 - ax) + at(x1, y1) * ax) * ay;
                    float &dst = cur.v[i * dim + c];
                    dst = static_cast<float>(wv * dst + (1.0 - wv) * fill);
                }
                cur.wt[i] = 1.0f;
            }
        }
    }
    return std::move(pyr.front().v);
}

/// Region enclosed by `covered`: covered pixels plus uncovered pixels that are
/// not 4-connected to the image border through uncovered pixels.
inline Mask enclosedHull(const Mask &covered) {
    const int w = covered.width(), h = covered.height();
    Mask outside(w, h);
    std::vector<int> stack;
    auto seed = [&](int x, int y) {
        if (!covered(x, y) && !outside(x, y)) {
            outside.set(x, y, true);
            stack.push_back(y * w + x);
        }
    };
    for (int x = 0; x < w; ++x) {
        seed(x, 0);
        seed(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        seed(0, y);
        seed(w - 1, y);
    }
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        const int x = i % w, y = i / w;
        if (x > 0) seed(x - 1, y);
        if (x + 1 < w) seed(x + 1, y);
        if (y > 0) seed(x, y - 1);
        if (y + 1 < h) seed(x, y + 1);
    }
    Mask hull(w, h);
    for (std::size_t i = 0; i < hull.size(); ++i) {
        hull.setAt(i, !outside.at(i));
    }
    return hull;
}

struct DecodedView {
    ImageBuffer rgb;      ///< low-resolution color, defined everywhere
    ImageBuffer refined;  ///< D-channel alpha-normalized, inpainted features
    Mask coverage;        ///< alpha > min_alpha
    Mask foreground;      ///< coverage plus enclosed holes
};

/// Stand-in for the learned feature decoder: alpha-normalize covered pixels and
/// inpaint the rest by push-pull. RGB is channels 0-2 of the refined map.
inline DecodedView decodeFeatures(const FeatureImage &fi, double min_alpha = 0.05) {
    const int w = fi.width, h = fi.height, dim = fi.dim;
    Mask covered(w, h);
    std::vector<float> norm(fi.features.size(), 0.0f);
    for (std::size_t i = 0; i < fi.alpha.size(); ++i) {
        const float a = fi.alpha[i];
        if (a > min_alpha) {
            covered.setAt(i, true);
            for (int c = 0; c < dim; ++c) {
                norm[i * dim + c] = a == 1.0f ? fi.features[i * dim + c] : fi.features[i * dim + c] / a;
            }
        }
    }
    std::vector<float> filled = pushPullFill(norm, covered, dim);
    DecodedView out;
    out.rgb = ImageBuffer(w, h, 3);
    for (std::size_t i = 0; i < fi.alpha.size(); ++i) {
        for (int c = 0; c < std::min(3, dim); ++c) {
            out.rgb.values()[i * 3 + c] = filled[i * dim + c];
        }
    }
    out.refined = ImageBuffer(w, h, dim, std::move(filled));
    out.foreground = enclosedHull(covered);
    out.coverage = std::move(covered);
    return out;
}

} // namespace teleview
