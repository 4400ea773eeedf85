// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "teleview/geometry.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <variant>

namespace teleview {

// ---------------------------------------------------------------------------
// Scene description
// ---------------------------------------------------------------------------

enum class Pattern { Constant, Checker, Stripes, Noise };

/// Solid (3D) procedural albedo: mixes two colors by a pattern evaluated at the
/// world-space hit point, so no surface parametrization is needed.
struct Material {
    Pattern pattern = Pattern::Noise;
    Eigen::Vector3f color_a{0.8f, 0.8f, 0.8f};
    Eigen::Vector3f color_b{0.2f, 0.2f, 0.2f};
    /// Feature size of the pattern in meters.
    double scale = 0.02;
    std::uint64_t seed = 1;
    /// Blinn-Phong term; zero keeps the surface Lambertian.
    float specular = 0.0f;
    float shininess = 32.0f;
};

struct PlanePrimitive {
    Vec3 center = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    Vec3 u_axis = Vec3::UnitX();
    double half_u = 0.5;
    double half_v = 0.5;
};

struct SpherePrimitive {
    Vec3 center = Vec3::Zero();
    double radius = 0.1;
};

struct BoxPrimitive {
    Vec3 center = Vec3::Zero();
    /// Columns are the box axes in world space.
    Mat3 axes = Mat3::Identity();
    Vec3 half_extent = Vec3::Constant(0.1);
};

struct MeshPrimitive {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
};

using Shape = std::variant<PlanePrimitive, SpherePrimitive, BoxPrimitive, MeshPrimitive>;

struct SceneObject {
    Shape shape;
    Material material;
    bool foreground = true;
};

struct Lighting {
    float ambient = 0.35f;
    Vec3 direction = Vec3(0.3, -0.4, -1.0).normalized(); ///< direction light travels
    float intensity = 0.65f;
};

struct SceneSpec {
    std::vector<SceneObject> objects;
    Lighting lighting;
};

// ---------------------------------------------------------------------------
// Procedural textures
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double latticeValue(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ static_cast<std::uint64_t>(x));
    h = mix64(h ^ static_cast<std::uint64_t>(y));
    h = mix64(h ^ static_cast<std::uint64_t>(z));
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

inline double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

inline double valueNoise(const Vec3 &p, std::uint64_t seed) {
    const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
    const auto ix = static_cast<std::int64_t>(fx);
    const auto iy = static_cast<std::int64_t>(fy);
    const auto iz = static_cast<std::int64_t>(fz);
    const double tx = smooth(p.x() - fx), ty = smooth(p.y() - fy), tz = smooth(p.z() - fz);
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
                acc += w * latticeValue(ix + dx, iy + dy, iz + dz, seed);
            }
        }
    }
    return acc;
}

} // namespace detail

/// Albedo of a material at a world point.
inline Eigen::Vector3f evaluateAlbedo(const Material &m, const Vec3 &p) {
    double t = 0.0;
    const Vec3 q = p / m.scale;
    switch (m.pattern) {
    case Pattern::Constant:
        t = 0.0;
        break;
    case Pattern::Checker: {
        const auto s = static_cast<std::int64_t>(std::floor(q.x()) + std::floor(q.y()) +
                                                 std::floor(q.z()));
        t = (s & 1) ? 1.0 : 0.0;
        break;
    }
    case Pattern::Stripes:
        // Periodic weave along x with fine noise detail on top.
        t = 0.35 + 0.3 * std::sin(2.0 * std::numbers::pi * q.x()) +
            0.35 * (detail::valueNoise(q * 4.0, m.seed) - 0.5);
        break;
    case Pattern::Noise:
        t = 0.55 * detail::valueNoise(q, m.seed) + 0.3 * detail::valueNoise(q * 2.0, m.seed + 17) +
            0.15 * detail::valueNoise(q * 4.0, m.seed + 31);
        break;
    }
    const float tf = static_cast<float>(t);
    return m.color_a * (1.0f - tf) + m.color_b * tf;
}

// ---------------------------------------------------------------------------
// Ray casting
// ---------------------------------------------------------------------------

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal = Vec3::UnitZ();
    int object = -1;
};

namespace detail {

inline bool intersect(const PlanePrimitive &s, const Vec3 &o, const Vec3 &d, Hit &hit) {
    const double denom = d.dot(s.normal);
    if (std::abs(denom) < 1e-12) {
        return false;
    }
    const double t = (s.center - o).dot(s.normal) / denom;
    if (!(t > 1e-9) || t >= hit.t) {
        return false;
    }
    const Vec3 local = o + t * d - s.center;
    const Vec3 v_axis = s.normal.cross(s.u_axis);
    if (std::abs(local.dot(s.u_axis)) > s.half_u || std::abs(local.dot(v_axis)) > s.half_v) {
        return false;
    }
    hit.t = t;
    hit.normal = s.normal;
    return true;
}

inline bool intersect(const SpherePrimitive &s, const Vec3 &o, const Vec3 &d, Hit &hit) {
    // d is unit length.
    const Vec3 oc = o - s.center;
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) {
        return false;
    }
    const double sq = std::sqrt(disc);
    // Numerically stable root pair.
    const double q = (b > 0.0) ? -(b + sq) : -(b - sq);
    double t0 = q;
    double t1 = (q != 0.0) ? c / q : q;
    if (t0 > t1) {
        std::swap(t0, t1);
    }
    const double t = (t0 > 1e-9) ? t0 : t1;
    if (!(t > 1e-9) || t >= hit.t) {
        return false;
    }
    hit.t = t;
    hit.normal = (o + t * d - s.center).normalized();
    return true;
}

inline bool intersect(const BoxPrimitive &s, const Vec3 &o, const Vec3 &d, Hit &hit) {
    const Vec3 lo = s.axes.transpose() * (o - s.center);
    const Vec3 ld = s.axes.transpose() * d;
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    int axis_min = -1, axis_max = -1;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(ld[a]) < 1e-15) {
            if (std::abs(lo[a]) > s.half_extent[a]) {
                return false;
            }
            continue;
        }
        double t0 = (-s.half_extent[a] - lo[a]) / ld[a];
        double t1 = (s.half_extent[a] - lo[a]) / ld[a];
        if (t0 > t1) {
            std::swap(t0, t1);
        }
        if (t0 > tmin) {
            tmin = t0;
            axis_min = a;
        }
        if (t1 < tmax) {
            tmax = t1;
            axis_max = a;
        }
        if (tmin > tmax) {
            return false;
        }
    }
    double t = tmin;
    int axis = axis_min;
    if (!(t > 1e-9)) {
        t = tmax;
        axis = axis_max;
    }
    if (!(t > 1e-9) || t >= hit.t || axis < 0) {
        return false;
    }
    Vec3 n_local = Vec3::Zero();
    n_local[axis] = (lo[axis] + t * ld[axis]) > 0.0 ? 1.0 : -1.0;
    hit.t = t;
    hit.normal = s.axes * n_local;
    return true;
}

inline bool intersect(const MeshPrimitive &s, const Vec3 &o, const Vec3 &d, Hit &hit) {
    bool any = false;
    for (const auto &tri : s.triangles) {
        const Vec3 &a = s.vertices[static_cast<std::size_t>(tri[0])];
        const Vec3 e1 = s.vertices[static_cast<std::size_t>(tri[1])] - a;
        const Vec3 e2 = s.vertices[static_cast<std::size_t>(tri[2])] - a;
        const Vec3 pv = d.cross(e2);
        const double det = e1.dot(pv);
        if (std::abs(det) < 1e-15) {
            continue;
        }
        const double inv = 1.0 / det;
        const Vec3 tv = o - a;
        const double u = tv.dot(pv) * inv;
        if (u < 0.0 || u > 1.0) {
            continue;
        }
        const Vec3 qv = tv.cross(e1);
        const double v = d.dot(qv) * inv;
        if (v < 0.0 || u + v > 1.0) {
            continue;
        }
        const double t = e2.dot(qv) * inv;
        if (t > 1e-9 && t < hit.t) {
            hit.t = t;
            hit.normal = e1.cross(e2).normalized();
            any = true;
        }
    }
    return any;
}

} // namespace detail

/// Closest intersection of a unit-direction ray with the scene.
inline Hit castRay(const SceneSpec &scene, const Vec3 &origin, const Vec3 &dir) {
    Hit hit;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const bool found = std::visit(
            [&](const auto &shape) { return detail::intersect(shape, origin, dir, hit); },
            scene.objects[i].shape);
        if (found) {
            hit.object = static_cast<int>(i);
        }
    }
    return hit;
}

struct GroundTruthView {
    ImageBuffer image;
    DepthMap depth;
    Mask foreground;
};

/// Analytic ray-cast render: linear-light Lambertian (plus optional specular)
/// shading with exact per-pixel camera depth and foreground labels.
inline GroundTruthView renderGroundTruth(const SceneSpec &scene, const CameraModel &cam) {
    const int w = cam.width();
    const int h = cam.height();
    GroundTruthView out{ImageBuffer(w, h, 3), DepthMap(w, h), Mask(w, h)};
    const Vec3 origin = cam.center();
    const Vec3 view_axis = cam.rotation().row(2).transpose();
    const Vec3 to_light = -scene.lighting.direction.normalized();
    parallelFor(0, h, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < w; ++x) {
            const Vec3 dir = cam.rayDirection(Vec2(x, y));
            const Hit hit = castRay(scene, origin, dir);
            if (hit.object < 0) {
                continue;
            }
            const SceneObject &obj = scene.objects[static_cast<std::size_t>(hit.object)];
            const Vec3 p = origin + hit.t * dir;
            Vec3 n = hit.normal;
            if (n.dot(dir) > 0.0) {
                n = -n;
            }
            const Eigen::Vector3f albedo = evaluateAlbedo(obj.material, p);
            const float diffuse =
                scene.lighting.ambient +
                scene.lighting.intensity * static_cast<float>(std::max(0.0, n.dot(to_light)));
            Eigen::Vector3f c = albedo * diffuse;
            if (obj.material.specular > 0.0f) {
                const Vec3 half = (to_light - dir).normalized();
                const float s = static_cast<float>(
                    std::pow(std::max(0.0, n.dot(half)), obj.material.shininess));
                c += Eigen::Vector3f::Constant(obj.material.specular * s *
                                               scene.lighting.intensity);
            }
            for (int ch = 0; ch < 3; ++ch) {
                out.image(x, y, ch) = std::clamp(c[ch], 0.0f, 1.0f);
            }
            out.depth.set(x, y, hit.t * dir.dot(view_axis));
            out.foreground.set(x, y, obj.foreground);
        }
    });
    return out;
}

/// Zeroes color outside the mask, the matted form the pipeline consumes.
inline ImageBuffer matte(const ImageBuffer &img, const Mask &mask) {
    ImageBuffer out = img;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (!mask(x, y)) {
                for (int c = 0; c < img.channels(); ++c) {
                    out(x, y, c) = 0.0f;
                }
            }
        }
    }
    return out;
}

/// Adds seeded zero-mean Gaussian sensor noise (Box-Muller on a counter hash)
/// and clamps to [0, 1].
inline ImageBuffer addSensorNoise(const ImageBuffer &img, double sigma, std::uint64_t seed) {
    ImageBuffer out = img;
    if (sigma <= 0.0) {
        return out;
    }
    auto &v = out.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::uint64_t h = detail::mix64(detail::mix64(seed) ^ i);
        const double u1 = (static_cast<double>(h >> 40) + 0.5) / 16777216.0;
        const double u2 = static_cast<double>((h >> 16) & 0xFFFFFF) / 16777216.0;
        const double g = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        v[i] = std::clamp(static_cast<float>(v[i] + sigma * g), 0.0f, 1.0f);
    }
    return out;
}

/// Keeps depth only where the mask is set.
inline DepthMap maskDepth(const DepthMap &depth, const Mask &mask) {
    DepthMap out(depth.width(), depth.height());
    for (std::size_t i = 0; i < depth.values().size(); ++i) {
        if (mask.at(i) && depth.validAt(i)) {
            out.setAt(i, depth.at(i));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rig and viewer geometry
// ---------------------------------------------------------------------------

struct DisplaySpec {
    Vec3 center = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ(); ///< points toward the local user
    double width_m = 0.598;      ///< 27-inch 16:9 panel
    double height_m = 0.336;
};

/// Four-camera capture rig: cam0/cam1 form the narrow upper pair, cam2/cam3
/// the wide lower pair. In each pair the first camera is the stereo reference.
struct RigSpec {
    std::vector<CameraModel> cameras;
    DisplaySpec display;

    const CameraModel &camera(int i) const { return cameras.at(static_cast<std::size_t>(i)); }
    StereoPair upperPair() const { return StereoPair(camera(0), camera(1)); }
    StereoPair lowerPair() const { return StereoPair(camera(2), camera(3)); }

    void validate() const {
        if (cameras.size() != 4) {
            throw std::invalid_argument("RigSpec: exactly four cameras required");
        }
        const double upper = upperPair().baseline();
        const double lower = lowerPair().baseline();
        if (!(upper < lower)) {
            throw std::invalid_argument("RigSpec: upper baseline must be narrower than lower");
        }
    }
};

struct RigOptions {
    int width = 512;
    int height = 512;
    /// Focal length as a multiple of the image width.
    double focal_factor = 1.0;
    double upper_baseline = 0.12;
    double lower_baseline = 0.5;
    double upper_height = 0.2;
    double lower_height = -0.2;
    Vec3 look_target = Vec3(0.0, 0.0, 1.25);
};

/// Builds a rectified rig around a display at the world origin facing +z; each
/// pair shares a rotation aimed at the working volume.
inline RigSpec makeRig(const RigOptions &opt = {}) {
    const double f = opt.focal_factor * opt.width;
    const double cx = 0.5 * (opt.width - 1);
    const double cy = 0.5 * (opt.height - 1);
    const Vec3 up = Vec3::UnitY();
    auto pair = [&](double height, double baseline) {
        const Vec3 mid(0.0, height, 0.0);
        const CameraModel aim =
            CameraModel::lookAt(mid, opt.look_target, up, f, f, cx, cy, opt.width, opt.height);
        const Vec3 x_axis = aim.rotation().row(0).transpose();
        const CameraModel ref = CameraModel::fromCenter(f, f, cx, cy, aim.rotation(),
                                                        mid + 0.5 * baseline * x_axis, opt.width,
                                                        opt.height);
        const CameraModel tgt = CameraModel::fromCenter(f, f, cx, cy, aim.rotation(),
                                                        mid - 0.5 * baseline * x_axis, opt.width,
                                                        opt.height);
        return std::pair{ref, tgt};
    };
    auto [c0, c1] = pair(opt.upper_height, opt.upper_baseline);
    auto [c2, c3] = pair(opt.lower_height, opt.lower_baseline);
    RigSpec rig{{c0, c1, c2, c3}, DisplaySpec{}};
    rig.validate();
    return rig;
}

struct EyePose {
    Vec3 left;
    Vec3 right;

    Vec3 midpoint() const { return 0.5 * (left + right); }

    void validate() const {
        const double iod = (left - right).norm();
        if (iod < 0.04 || iod > 0.09) {
            throw std::invalid_argument("EyePose: interocular distance outside [0.04, 0.09] m");
        }
    }
};

/// Similarity placing the remote user in front of the local display: a 180
/// degree turn about the vertical axis through the eye-to-display midpoint,
/// then a uniform scale about the (turned) remote eye midpoint, then an offset
/// along the display normal.
struct UserTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 pivot = Vec3::Zero();
    double scale = 1.0;
    Vec3 scale_center = Vec3::Zero();
    Vec3 offset = Vec3::Zero();

    Vec3 apply(const Vec3 &p) const {
        const Vec3 turned = pivot + rotation * (p - pivot);
        return scale_center + scale * (turned - scale_center) + offset;
    }

    /// Capture-space camera that sees the untransformed scene exactly as `cam`
    /// sees the transformed one. Depths shrink by 1/scale; pixels are unchanged.
    CameraModel captureCamera(const CameraModel &cam) const {
        // apply(p) = scale * rotation * p + b
        const Vec3 b = apply(Vec3::Zero());
        const Mat3 r = cam.rotation() * rotation;
        const Vec3 t = (cam.rotation() * b + cam.translation()) / scale;
        return CameraModel(cam.fx(), cam.fy(), cam.cx(), cam.cy(), r, t, cam.width(), cam.height());
    }
};

struct EyeViews {
    CameraModel left;
    CameraModel right;
    UserTransform transform;
};

struct EyeViewOptions {
    int width = 512;
    int height = 512;
    double focal_factor = 1.0;
    double user_scale = 0.5;
    double depth_offset = 0.0;
    Vec3 up = Vec3::UnitY();
};

/// Per-eye cameras aimed at the display center plus the remote-user placement.
/// `remote_eyes` defaults to the local eye pose (symmetric setups).
inline EyeViews novelViewFromEyes(const RigSpec &rig, const EyePose &eyes,
                                  const EyeViewOptions &opt = {},
                                  std::optional<EyePose> remote_eyes = std::nullopt) {
    eyes.validate();
    const DisplaySpec &disp = rig.display;
    const Vec3 n = disp.normal.normalized();
    for (const Vec3 &e : {eyes.left, eyes.right}) {
        if (!((e - disp.center).dot(n) > 0.0)) {
            throw std::invalid_argument("novelViewFromEyes: eyes must be in front of the display");
        }
    }
    const double f = opt.focal_factor * opt.width;
    const double cx = 0.5 * (opt.width - 1);
    const double cy = 0.5 * (opt.height - 1);
    auto eye_cam = [&](const Vec3 &e) {
        return CameraModel::lookAt(e, disp.center, opt.up, f, f, cx, cy, opt.width, opt.height);
    };

    const EyePose remote = remote_eyes.value_or(eyes);
    const Vec3 remote_mid = remote.midpoint();
    UserTransform tf;
    tf.pivot = 0.5 * (remote_mid + disp.center);
    tf.rotation = Eigen::AngleAxisd(std::numbers::pi, opt.up.normalized()).toRotationMatrix();
    tf.scale = opt.user_scale;
    tf.scale_center = tf.pivot + tf.rotation * (remote_mid - tf.pivot);
    tf.offset = opt.depth_offset * n;
    return EyeViews{eye_cam(eyes.left), eye_cam(eyes.right), tf};
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// PSNR over all channels of [0,1] images, capped at 100 dB.
inline double psnr(const ImageBuffer &a, const ImageBuffer &b) {
    requireSameSize(a.width(), a.height(), b.width(), b.height(), "psnr");
    if (a.channels() != b.channels()) {
        throw std::invalid_argument("psnr: channel mismatch");
    }
    double se = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        const double d = static_cast<double>(a.values()[i]) - b.values()[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.values().size());
    if (mse < 1e-10) {
        return 100.0;
    }
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

/// PSNR restricted to pixels where `mask` is set.
inline double maskedPsnr(const ImageBuffer &a, const ImageBuffer &b, const Mask &mask) {
    requireSameSize(a.width(), a.height(), b.width(), b.height(), "maskedPsnr");
    requireSameSize(a.width(), a.height(), mask.width(), mask.height(), "maskedPsnr");
    double se = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            if (!mask(x, y)) {
                continue;
            }
            for (int c = 0; c < a.channels(); ++c) {
                const double d = static_cast<double>(a(x, y, c)) - b(x, y, c);
                se += d * d;
                ++n;
            }
        }
    }
    if (n == 0) {
        throw std::invalid_argument("maskedPsnr: empty mask");
    }
    const double mse = se / static_cast<double>(n);
    return mse < 1e-10 ? 100.0 : std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// data range 1, population statistics, averaged over windows fully inside the
/// image and over channels.
inline double ssim(const ImageBuffer &a, const ImageBuffer &b) {
    requireSameSize(a.width(), a.height(), b.width(), b.height(), "ssim");
    if (a.channels() != b.channels()) {
        throw std::invalid_argument("ssim: channel mismatch");
    }
    constexpr int kRadius = 5;
    constexpr double kSigma = 1.5;
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    if (a.width() < 2 * kRadius + 1 || a.height() < 2 * kRadius + 1) {
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    }
    std::array<double, 2 * kRadius + 1> g{};
    double gsum = 0.0;
    for (int i = -kRadius; i <= kRadius; ++i) {
        g[static_cast<std::size_t>(i + kRadius)] = std::exp(-(i * i) / (2.0 * kSigma * kSigma));
        gsum += g[static_cast<std::size_t>(i + kRadius)];
    }
    for (double &v : g) {
        v /= gsum;
    }
    const int w = a.width();
    const int h = a.height();
    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < a.channels(); ++c) {
        // Separable filtering of x, y, x^2, y^2, xy: horizontal pass then vertical.
        const int ow = w - 2 * kRadius;
        std::array<std::vector<double>, 5> horiz;
        for (auto &v : horiz) {
            v.assign(static_cast<std::size_t>(ow) * h, 0.0);
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < ow; ++x) {
                std::array<double, 5> acc{};
                for (int k = 0; k <= 2 * kRadius; ++k) {
                    const double va = a(x + k, y, c);
                    const double vb = b(x + k, y, c);
                    const double wk = g[static_cast<std::size_t>(k)];
                    acc[0] += wk * va;
                    acc[1] += wk * vb;
                    acc[2] += wk * va * va;
                    acc[3] += wk * vb * vb;
                    acc[4] += wk * va * vb;
                }
                for (int q = 0; q < 5; ++q) {
                    horiz[static_cast<std::size_t>(q)][static_cast<std::size_t>(y) * ow + x] =
                        acc[static_cast<std::size_t>(q)];
                }
            }
        }
        for (int y = 0; y + 2 * kRadius < h; ++y) {
            for (int x = 0; x < ow; ++x) {
                std::array<double, 5> acc{};
                for (int k = 0; k <= 2 * kRadius; ++k) {
                    const double wk = g[static_cast<std::size_t>(k)];
                    for (int q = 0; q < 5; ++q) {
                        acc[static_cast<std::size_t>(q)] +=
                            wk * horiz[static_cast<std::size_t>(q)]
                                      [static_cast<std::size_t>(y + k) * ow + x];
                    }
                }
                const double mu_a = acc[0], mu_b = acc[1];
                const double var_a = acc[2] - mu_a * mu_a;
                const double var_b = acc[3] - mu_b * mu_b;
                const double cov = acc[4] - mu_a * mu_b;
                const double s = ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
                                 ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
                total += s;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Scene generators
// ---------------------------------------------------------------------------

inline Material noiseMaterial(std::uint64_t seed, double scale = 0.015) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.05f, 0.95f);
    Material m;
    m.pattern = Pattern::Noise;
    m.color_a = Eigen::Vector3f(u(rng), u(rng), u(rng));
    m.color_b = Eigen::Vector3f(u(rng), u(rng), u(rng));
    if ((m.color_a - m.color_b).norm() < 0.5f) {
        m.color_b = Eigen::Vector3f::Ones() - m.color_a;
    }
    m.scale = scale;
    m.seed = seed;
    return m;
}

inline PlanePrimitive frontoParallelPlane(double z, double half_u, double half_v,
                                          const Vec3 &center_xy = Vec3::Zero()) {
    PlanePrimitive p;
    p.center = Vec3(center_xy.x(), center_xy.y(), z);
    p.normal = -Vec3::UnitZ();
    p.u_axis = Vec3::UnitX();
    p.half_u = half_u;
    p.half_v = half_v;
    return p;
}

/// Single textured foreground rectangle facing the display at distance z.
inline SceneSpec makePlaneScene(double z = 1.25, std::uint64_t seed = 7, double half_u = 0.3,
                                double half_v = 0.3) {
    SceneSpec s;
    s.objects.push_back({frontoParallelPlane(z, half_u, half_v), noiseMaterial(seed), true});
    return s;
}

inline SceneSpec makeSphereScene(const Vec3 &center = Vec3(0.0, 0.0, 1.25), double radius = 0.2,
                                 std::uint64_t seed = 3) {
    SceneSpec s;
    s.objects.push_back({SpherePrimitive{center, radius}, noiseMaterial(seed), true});
    return s;
}

/// Occluder plane at `z_front` in front of a larger back plane `gap` meters behind.
inline SceneSpec makeTwoLayerScene(double z_front = 1.15, double gap = 0.15,
                                   std::uint64_t seed = 11) {
    SceneSpec s;
    s.objects.push_back(
        {frontoParallelPlane(z_front, 0.08, 0.12, Vec3(0.02, 0.0, 0.0)), noiseMaterial(seed), true});
    s.objects.push_back(
        {frontoParallelPlane(z_front + gap, 0.35, 0.3), noiseMaterial(seed + 1), true});
    return s;
}

inline BoxPrimitive orientedBox(const Vec3 &center, const Vec3 &half, double yaw, double roll) {
    BoxPrimitive b;
    b.center = center;
    b.axes = (Eigen::AngleAxisd(yaw, Vec3::UnitY()) * Eigen::AngleAxisd(roll, Vec3::UnitZ()))
                 .toRotationMatrix();
    b.half_extent = half;
    return b;
}

struct MannequinOptions {
    bool background = true;
    bool striped_shirt = true;
    bool specular_head = false;
};

/// Seated upper-body stand-in: torso, head, neck, and a forearm raised in front
/// of the chest so that part of the torso is self-occluded. Pose and textures
/// vary with the seed inside the working volume (1.25 m +- 0.15 m depth,
/// +-0.4 m lateral).
inline SceneSpec makeMannequinScene(std::uint64_t seed, const MannequinOptions &opt = {}) {
    std::mt19937_64 rng(seed * 7919 + 13);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SceneSpec s;
    const double dx = 0.12 * u(rng);
    const double dz = 0.06 * u(rng);
    const double yaw = 0.25 * u(rng);
    const Vec3 torso_c(dx, -0.12, 1.32 + dz);

    Material shirt = noiseMaterial(seed * 3 + 1, 0.04);
    if (opt.striped_shirt) {
        shirt.pattern = Pattern::Stripes;
        shirt.scale = 0.06 + 0.02 * (0.5 + 0.5 * u(rng));
    }
    s.objects.push_back(
        {orientedBox(torso_c, Vec3(0.2, 0.22, 0.1), yaw, 0.0), shirt, true});

    Material skin = noiseMaterial(seed * 3 + 2, 0.04);
    skin.color_a = Eigen::Vector3f(0.85f, 0.62f, 0.5f);
    skin.color_b = Eigen::Vector3f(0.45f, 0.28f, 0.2f);
    if (opt.specular_head) {
        skin.specular = 0.8f;
        skin.shininess = 40.0f;
    }
    const Vec3 head_c(dx + 0.03 * u(rng), 0.2, 1.3 + dz + 0.03 * u(rng));
    s.objects.push_back({SpherePrimitive{head_c, 0.095}, skin, true});
    s.objects.push_back({orientedBox(Vec3(head_c.x(), 0.1, head_c.z()), Vec3(0.04, 0.04, 0.04),
                                     yaw, 0.0),
                         skin, true});

    Material sleeve = noiseMaterial(seed * 3 + 3, 0.04);
    const double arm_roll = 0.35 * u(rng);
    const Vec3 arm_c(dx + 0.05 * u(rng), -0.15 + 0.06 * u(rng), 1.15 + dz + 0.03 * u(rng));
    s.objects.push_back(
        {orientedBox(arm_c, Vec3(0.16, 0.035, 0.04), yaw * 0.5, arm_roll), sleeve, true});
    const Vec3 hand_c =
        arm_c + Eigen::AngleAxisd(arm_roll, Vec3::UnitZ()).toRotationMatrix() * Vec3(0.18, 0, 0);
    s.objects.push_back({SpherePrimitive{hand_c, 0.045}, skin, true});

    if (opt.background) {
        PlanePrimitive wall = frontoParallelPlane(2.2, 1.5, 1.5);
        Material wm = noiseMaterial(seed * 3 + 4, 0.05);
        s.objects.push_back({wall, wm, false});
    }
    s.lighting.direction = Vec3(0.3 * u(rng), -0.5, -1.0).normalized();
    return s;
}

} // namespace teleview
