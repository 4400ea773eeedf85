// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

// Helpers shared by the unit tests and the acceptance runner. Oracles here are
// written from the textbook definitions and deliberately avoid the library's
// own projection, binning and compositing code paths.

#pragma once

#include "teleview/teleview.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

namespace teleview::testing {

inline std::filesystem::path scratchDir(const std::string &name) {
#ifdef TELEVIEW_TEST_TMP
    std::filesystem::path root = TELEVIEW_TEST_TMP;
#else
    std::filesystem::path root = std::filesystem::temp_directory_path() / "teleview_tests";
#endif
    const auto dir = root / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline Mat3 randomRotation(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q.toRotationMatrix();
}

inline CameraModel identityCamera(double f, int w, int h, double cx, double cy) {
    return CameraModel(f, f, cx, cy, Mat3::Identity(), Vec3::Zero(), w, h);
}

// ---------------------------------------------------------------------------
// Gaussian splatting oracles
// ---------------------------------------------------------------------------

inline GaussianCloud randomCloud(std::mt19937_64 &rng, const CameraModel &cam, int count, int dim) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GaussianCloud c;
    c.dim = dim;
    for (int i = 0; i < count; ++i) {
        const double z = 0.5 + 3.0 * u(rng);
        const Vec2 px(-8.0 + (cam.width() + 16.0) * u(rng), -8.0 + (cam.height() + 16.0) * u(rng));
        c.positions.push_back(unproject(cam, px, z));
        for (int k = 0; k < dim; ++k) {
            c.features.push_back(static_cast<float>(2.0 * u(rng) - 1.0));
        }
        const double s = z / cam.fx() * (0.3 + 3.0 * u(rng));
        c.scales.emplace_back(static_cast<float>(s * (0.5 + u(rng))), static_cast<float>(s * (0.5 + u(rng))),
                              static_cast<float>(s * (0.5 + u(rng))));
        c.opacity.push_back(static_cast<float>(u(rng)));
    }
    return c;
}

/// Per-pixel compositor over the whole cloud: global depth order, no tiles,
/// no bounding boxes. Only the 3-sigma Mahalanobis cutoff, the 0.99 alpha
/// clamp, the 0.3 px^2 floor and the 0.01 near plane are shared conventions.
inline FeatureImage bruteForceComposite(const GaussianCloud &c, const CameraModel &cam, int w, int h) {
    struct Splat {
        std::size_t idx;
        double z;
        double mx, my;
        double ia, ib, ic; // inverse covariance [[ia, ib], [ib, ic]]
    };
    std::vector<Splat> splats;
    const Mat3 R = cam.rotation();
    for (std::size_t i = 0; i < c.size(); ++i) {
        const Vec3 p = R * c.positions[i] + cam.translation();
        if (p.z() <= 0.01) {
            continue;
        }
        // Sigma_cam = R diag(s^2) R^T, entry by entry.
        double S[3][3] = {};
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                for (int k = 0; k < 3; ++k) {
                    const double s = c.scales[i][k];
                    S[a][b] += R(a, k) * s * s * R(b, k);
                }
            }
        }
        const double fx = cam.fx(), fy = cam.fy(), x = p.x(), y = p.y(), z = p.z();
        const double J[2][3] = {{fx / z, 0.0, -fx * x / (z * z)}, {0.0, fy / z, -fy * y / (z * z)}};
        double C[2][2] = {};
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                for (int k = 0; k < 3; ++k) {
                    for (int l = 0; l < 3; ++l) {
                        C[a][b] += J[a][k] * S[k][l] * J[b][l];
                    }
                }
            }
        }
        C[0][0] += 0.3;
        C[1][1] += 0.3;
        const double det = C[0][0] * C[1][1] - C[0][1] * C[1][0];
        splats.push_back({i, z, fx * x / z + cam.cx(), fy * y / z + cam.cy(), C[1][1] / det,
                          -0.5 * (C[0][1] + C[1][0]) / det, C[0][0] / det});
    }
    std::stable_sort(splats.begin(), splats.end(), [](const Splat &a, const Splat &b) { return a.z < b.z; });
    FeatureImage out(w, h, c.dim);
    for (int py = 0; py < h; ++py) {
        for (int px = 0; px < w; ++px) {
            std::vector<double> acc(static_cast<std::size_t>(c.dim), 0.0);
            double T = 1.0, A = 0.0;
            for (const Splat &s : splats) {
                const double dx = px - s.mx, dy = py - s.my;
                const double m2 = s.ia * dx * dx + 2.0 * s.ib * dx * dy + s.ic * dy * dy;
                if (m2 > 9.0) {
                    continue;
                }
                const double a = std::min(0.99, c.opacity[s.idx] * std::exp(-0.5 * m2));
                for (int k = 0; k < c.dim; ++k) {
                    acc[static_cast<std::size_t>(k)] += c.features[s.idx * c.dim + k] * a * T;
                }
                A += a * T;
                T *= 1.0 - a;
            }
            for (int k = 0; k < c.dim; ++k) {
                out.features[(static_cast<std::size_t>(py) * w + px) * c.dim + k] =
                    static_cast<float>(acc[static_cast<std::size_t>(k)]);
            }
            out.alpha[static_cast<std::size_t>(py) * w + px] = static_cast<float>(std::min(1.0, A));
        }
    }
    return out;
}

inline double maxAbsDiff(const FeatureImage &a, const FeatureImage &b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.features.size(); ++i) {
        m = std::max(m, static_cast<double>(std::abs(a.features[i] - b.features[i])));
    }
    for (std::size_t i = 0; i < a.alpha.size(); ++i) {
        m = std::max(m, static_cast<double>(std::abs(a.alpha[i] - b.alpha[i])));
    }
    return m;
}

/// Classic color splatting: RGB accumulated front to back, no normalization.
inline ImageBuffer colorSplat(const GaussianCloud &rgb_cloud, const CameraModel &cam, int w, int h) {
    const FeatureImage f = bruteForceComposite(rgb_cloud, cam, w, h);
    ImageBuffer img(w, h, 3);
    for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
        for (int c = 0; c < 3; ++c) {
            img.values()[i * 3 + c] = f.features[i * 3 + c];
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Stereo ablation suite
// ---------------------------------------------------------------------------

struct AblationScene {
    std::array<ImageBuffer, 4> images;
    std::array<Mask, 4> masks;
    DisparityMap truth_lower; ///< cam2 reference disparity
    DisparityMap truth_lower_target;
};

inline constexpr double kAblationNoise = 0.01;

/// Mannequin scene rendered through the rig with sensor noise and matting.
inline AblationScene makeAblationScene(const RigSpec &rig, std::uint64_t seed,
                                       const std::filesystem::path &cache_dir = {}) {
    const SceneSpec scene = makeMannequinScene(seed);
    AblationScene s;
    std::array<GroundTruthView, 4> gt;
    for (int i = 0; i < 4; ++i) {
        const auto k = static_cast<std::size_t>(i);
        gt[k] = renderCached(scene, rig.camera(i), cache_dir);
        s.masks[k] = gt[k].foreground;
        s.images[k] = matte(addSensorNoise(gt[k].image, kAblationNoise, 100 * seed + k), s.masks[k]);
    }
    s.truth_lower = truthDisparity(rig.lowerPair(), gt[2]);
    s.truth_lower_target = truthDisparity(rig.lowerPair(), gt[3]);
    return s;
}

inline MatcherConfig ablationMatcher(const RigSpec &rig, int iterations) {
    MatcherConfig m;
    m.max_disparity = rig.camera(0).width() / 2.0;
    m.pyramid_levels = rig.camera(0).width() >= 512 ? 4 : 3;
    m.iterations = iterations;
    return m;
}

struct AblationEpe {
    double with_init_k3 = 0.0;
    double without_init_k3 = 0.0;
    double without_init_k16 = 0.0;
    double truth_init_k3 = 0.0;
};

inline AblationEpe runAblation(const RigSpec &rig, const AblationScene &s, bool with_truth_init) {
    AblationEpe r;
    CascadeOptions on, off;
    off.use_cascade_init = false;
    const MatcherConfig k3 = ablationMatcher(rig, 3), k16 = ablationMatcher(rig, 16);
    auto lowerEpe = [&](const MatcherConfig &cfg, const CascadeOptions &opt) {
        const CascadeResult c = cascadeEstimate(rig.upperPair(), rig.lowerPair(), s.images, s.masks, cfg, opt);
        return endPointError(c.lower.reference, s.truth_lower).epe;
    };
    r.with_init_k3 = lowerEpe(k3, on);
    r.without_init_k3 = lowerEpe(k3, off);
    r.without_init_k16 = lowerEpe(k16, off);
    if (with_truth_init) {
        const StereoResult t = matchPair(rig.lowerPair(), s.images[2], s.images[3], s.truth_lower,
                                         s.truth_lower_target, k3, &s.masks[2], &s.masks[3]);
        r.truth_init_k3 = endPointError(t.reference, s.truth_lower).epe;
    }
    return r;
}

} // namespace teleview::testing
