// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "teleview/common.hpp"

#include <cmath>
#include <limits>
#include <span>

namespace teleview {

/// Pinhole camera. Pixel coordinates address pixel centers: pixel (i, j) sits at
/// coordinate (i, j), so the principal point is expressed in the same units.
/// The pose maps world to camera: X_cam = R * X_world + t.
class CameraModel {
  public:
    CameraModel(double fx, double fy, double cx, double cy, const Mat3 &rotation,
                const Vec3 &translation, int width, int height)
        : fx_(fx), fy_(fy), cx_(cx), cy_(cy), rotation_(rotation), translation_(translation),
          width_(width), height_(height) {
        if (!(fx > 0.0) || !(fy > 0.0)) {
            throw std::invalid_argument("CameraModel: focal lengths must be positive");
        }
        if (width <= 0 || height <= 0) {
            throw std::invalid_argument("CameraModel: image size must be positive");
        }
        if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height)) {
            throw std::invalid_argument("CameraModel: principal point outside image bounds");
        }
        const Mat3 gram = rotation * rotation.transpose();
        if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
            std::abs(rotation.determinant() - 1.0) > 1e-9) {
            throw std::invalid_argument("CameraModel: rotation is not a proper orthonormal matrix");
        }
        if (!translation.allFinite()) {
            throw std::invalid_argument("CameraModel: non-finite translation");
        }
    }

    /// Camera placed at `center` with world-to-camera rotation `rotation`.
    static CameraModel fromCenter(double fx, double fy, double cx, double cy, const Mat3 &rotation,
                                  const Vec3 &center, int width, int height) {
        return CameraModel(fx, fy, cx, cy, rotation, -rotation * center, width, height);
    }

    /// Camera at `eye` looking at `target`; image y points along -up.
    static CameraModel lookAt(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double fx,
                              double fy, double cx, double cy, int width, int height) {
        const Vec3 z = (target - eye).normalized();
        const Vec3 x = z.cross(up).normalized();
        const Vec3 y = z.cross(x);
        Mat3 r;
        r.row(0) = x.transpose();
        r.row(1) = y.transpose();
        r.row(2) = z.transpose();
        return fromCenter(fx, fy, cx, cy, r, eye, width, height);
    }

    double fx() const { return fx_; }
    double fy() const { return fy_; }
    double cx() const { return cx_; }
    double cy() const { return cy_; }
    const Mat3 &rotation() const { return rotation_; }
    const Vec3 &translation() const { return translation_; }
    int width() const { return width_; }
    int height() const { return height_; }

    Vec3 center() const { return -rotation_.transpose() * translation_; }
    Vec3 toCamera(const Vec3 &world) const { return rotation_ * world + translation_; }
    Vec3 toWorld(const Vec3 &cam) const { return rotation_.transpose() * (cam - translation_); }

    /// Unit world-space direction of the ray through a pixel.
    Vec3 rayDirection(const Vec2 &pixel) const {
        const Vec3 d((pixel.x() - cx_) / fx_, (pixel.y() - cy_) / fy_, 1.0);
        return (rotation_.transpose() * d).normalized();
    }

    bool contains(const Vec2 &pixel) const {
        return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() <= width_ - 1 &&
               pixel.y() <= height_ - 1;
    }

    /// Same pose, image resampled by `factor` (0.5 halves the resolution).
    CameraModel resized(double factor) const {
        const int w = std::max(1, static_cast<int>(std::lround(width_ * factor)));
        const int h = std::max(1, static_cast<int>(std::lround(height_ * factor)));
        const double sx = static_cast<double>(w) / width_;
        const double sy = static_cast<double>(h) / height_;
        return CameraModel(fx_ * sx, fy_ * sy, (cx_ + 0.5) * sx - 0.5, (cy_ + 0.5) * sy - 0.5,
                           rotation_, translation_, w, h);
    }

  private:
    double fx_, fy_, cx_, cy_;
    Mat3 rotation_;
    Vec3 translation_;
    int width_, height_;
};

struct Projection {
    Vec2 pixel = Vec2::Zero();
    /// Camera-space z; non-positive means the point is behind the camera.
    double depth = 0.0;

    bool inFront() const { return depth > 0.0; }
};

inline Projection project(const CameraModel &cam, const Vec3 &world) {
    const Vec3 p = cam.toCamera(world);
    Projection out;
    out.depth = p.z();
    if (p.z() == 0.0) {
        out.pixel = Vec2(std::numeric_limits<double>::quiet_NaN(),
                         std::numeric_limits<double>::quiet_NaN());
        return out;
    }
    out.pixel = Vec2(cam.fx() * p.x() / p.z() + cam.cx(), cam.fy() * p.y() / p.z() + cam.cy());
    return out;
}

inline Vec3 unprojectToCamera(const CameraModel &cam, const Vec2 &pixel, double depth) {
    if (!(depth > 0.0)) {
        throw std::invalid_argument("unproject: depth must be positive");
    }
    return Vec3((pixel.x() - cam.cx()) * depth / cam.fx(), (pixel.y() - cam.cy()) * depth / cam.fy(),
                depth);
}

inline Vec3 unproject(const CameraModel &cam, const Vec2 &pixel, double depth) {
    return cam.toWorld(unprojectToCamera(cam, pixel, depth));
}

/// W x H x C float image, row-major with interleaved channels.
class ImageBuffer {
  public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels, float fill = 0.0f)
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(Mask::checkedArea(width, height) * checkChannels(channels)),
                fill) {
        if (!std::isfinite(fill)) {
            throw std::invalid_argument("ImageBuffer: non-finite fill value");
        }
    }
    ImageBuffer(int width, int height, int channels, std::vector<float> values)
        : width_(width), height_(height), channels_(channels), data_(std::move(values)) {
        if (data_.size() !=
            static_cast<std::size_t>(Mask::checkedArea(width, height) * checkChannels(channels))) {
            throw std::invalid_argument("ImageBuffer: value count does not match W*H*C");
        }
        for (float v : data_) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("ImageBuffer: non-finite value");
            }
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }

    float operator()(int x, int y, int c) const { return data_[index(x, y, c)]; }
    float &operator()(int x, int y, int c) { return data_[index(x, y, c)]; }

    std::span<const float> pixel(int x, int y) const {
        return {data_.data() + index(x, y, 0), static_cast<std::size_t>(channels_)};
    }
    std::span<float> pixel(int x, int y) {
        return {data_.data() + index(x, y, 0), static_cast<std::size_t>(channels_)};
    }

    const std::vector<float> &values() const { return data_; }
    std::vector<float> &values() { return data_; }

    bool operator==(const ImageBuffer &o) const = default;

  private:
    static std::int64_t checkChannels(int c) {
        if (c <= 0) {
            throw std::invalid_argument("ImageBuffer: channel count must be positive");
        }
        return c;
    }
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(c);
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

/// Per-pixel camera-space depth in meters. Zero encodes an invalid pixel and the
/// validity mask is kept in lockstep with it.
class DepthMap {
  public:
    DepthMap() = default;
    DepthMap(int width, int height)
        : width_(width), height_(height),
          depth_(static_cast<std::size_t>(Mask::checkedArea(width, height)), 0.0f),
          valid_(width, height) {}

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return depth_.empty(); }

    float operator()(int x, int y) const { return depth_[index(x, y)]; }
    bool valid(int x, int y) const { return valid_(x, y); }
    float at(std::size_t i) const { return depth_[i]; }
    bool validAt(std::size_t i) const { return valid_.at(i); }

    /// Non-positive or non-finite values invalidate the pixel.
    void set(int x, int y, double z) { setAt(index(x, y), z); }
    void setAt(std::size_t i, double z) {
        const float zf = static_cast<float>(z);
        if (std::isfinite(zf) && zf > 0.0f) {
            depth_[i] = zf;
            valid_.setAt(i, true);
        } else {
            depth_[i] = 0.0f;
            valid_.setAt(i, false);
        }
    }
    void invalidate(int x, int y) { setAt(index(x, y), 0.0); }

    const Mask &mask() const { return valid_; }
    const std::vector<float> &values() const { return depth_; }
    std::size_t validCount() const { return valid_.count(); }

    bool operator==(const DepthMap &o) const = default;

  private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<float> depth_;
    Mask valid_;
};

/// Per-pixel disparity in pixels; invalid pixels hold kInvalid.
class DisparityMap {
  public:
    static constexpr float kInvalid = -1.0f;

    DisparityMap() = default;
    DisparityMap(int width, int height)
        : width_(width), height_(height),
          disp_(static_cast<std::size_t>(Mask::checkedArea(width, height)), kInvalid),
          valid_(width, height) {}

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return disp_.empty(); }

    float operator()(int x, int y) const { return disp_[index(x, y)]; }
    bool valid(int x, int y) const { return valid_(x, y); }
    float at(std::size_t i) const { return disp_[i]; }
    bool validAt(std::size_t i) const { return valid_.at(i); }

    /// Negative or non-finite values invalidate the pixel.
    void set(int x, int y, double d) { setAt(index(x, y), d); }
    void setAt(std::size_t i, double d) {
        const float df = static_cast<float>(d);
        if (std::isfinite(df) && df >= 0.0f) {
            disp_[i] = df;
            valid_.setAt(i, true);
        } else {
            disp_[i] = kInvalid;
            valid_.setAt(i, false);
        }
    }
    void invalidate(int x, int y) { setAt(index(x, y), -1.0); }

    const Mask &mask() const { return valid_; }
    const std::vector<float> &values() const { return disp_; }
    std::size_t validCount() const { return valid_.count(); }

    bool operator==(const DisparityMap &o) const = default;

  private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<float> disp_;
    Mask valid_;
};

/// Rectified pair. The reference pixel (u, v) matches (u + d, v) in the target
/// with d >= 0, which places the target camera at -baseline along the shared
/// camera x-axis.
class StereoPair {
  public:
    StereoPair(CameraModel reference, CameraModel target)
        : reference_(std::move(reference)), target_(std::move(target)) {
        const Vec3 dt = target_.translation() - reference_.translation();
        baseline_ = dt.x();
        if (!(baseline_ > 0.0)) {
            throw std::invalid_argument(
                "StereoPair: target must sit at positive baseline along -x of the reference");
        }
        verify();
    }

    const CameraModel &reference() const { return reference_; }
    const CameraModel &target() const { return target_; }
    double baseline() const { return baseline_; }
    double focal() const { return reference_.fx(); }

    /// Epipolar lines of a rectified pair are horizontal: identical rotation and
    /// intrinsics, offset only along the camera x-axis.
    static bool isRectified(const CameraModel &a, const CameraModel &b, double tol = 1e-6) {
        const Vec3 dt = b.translation() - a.translation();
        return (a.rotation() - b.rotation()).cwiseAbs().maxCoeff() <= tol &&
               std::abs(a.fx() - b.fx()) <= tol && std::abs(a.fy() - b.fy()) <= tol &&
               std::abs(a.cx() - b.cx()) <= tol && std::abs(a.cy() - b.cy()) <= tol &&
               std::abs(dt.y()) <= tol && std::abs(dt.z()) <= tol && a.width() == b.width() &&
               a.height() == b.height();
    }

  private:
    void verify() const {
        if (!isRectified(reference_, target_)) {
            throw std::invalid_argument("StereoPair: cameras are not rectified");
        }
    }

    CameraModel reference_;
    CameraModel target_;
    double baseline_ = 0.0;
};

/// Disparity at or below `min_disparity` pixels has no finite depth and is marked invalid.
inline DepthMap disparityToDepth(const StereoPair &pair, const DisparityMap &disp,
                                 double min_disparity = 0.1) {
    DepthMap out(disp.width(), disp.height());
    const double fb = pair.focal() * pair.baseline();
    const std::size_t n = disp.values().size();
    for (std::size_t i = 0; i < n; ++i) {
        if (disp.validAt(i) && disp.at(i) > min_disparity) {
            out.setAt(i, fb / static_cast<double>(disp.at(i)));
        }
    }
    return out;
}

inline DisparityMap depthToDisparity(const StereoPair &pair, const DepthMap &depth,
                                     double min_depth = 0.0) {
    DisparityMap out(depth.width(), depth.height());
    const double fb = pair.focal() * pair.baseline();
    const std::size_t n = depth.values().size();
    for (std::size_t i = 0; i < n; ++i) {
        if (depth.validAt(i) && depth.at(i) > min_depth) {
            out.setAt(i, fb / static_cast<double>(depth.at(i)));
        }
    }
    return out;
}

struct PointSet {
    std::vector<Vec3> positions;
    /// Globally unique origin of each point; breaks exact depth ties in z-buffers.
    std::vector<std::int64_t> source_index;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }

    void append(const PointSet &other) {
        positions.insert(positions.end(), other.positions.begin(), other.positions.end());
        source_index.insert(source_index.end(), other.source_index.begin(),
                            other.source_index.end());
    }
};

/// One world point per valid pixel; source indices are offset by `index_offset`.
inline PointSet depthToPoints(const CameraModel &cam, const DepthMap &depth,
                              std::int64_t index_offset = 0) {
    PointSet out;
    out.positions.reserve(depth.validCount());
    out.source_index.reserve(depth.validCount());
    for (int y = 0; y < depth.height(); ++y) {
        for (int x = 0; x < depth.width(); ++x) {
            if (!depth.valid(x, y)) {
                continue;
            }
            out.positions.push_back(unproject(cam, Vec2(x, y), depth(x, y)));
            out.source_index.push_back(index_offset +
                                       static_cast<std::int64_t>(y) * depth.width() + x);
        }
    }
    return out;
}

/// Nearest-pixel z-buffer of a point set in `target`. Each point covers the
/// (2r+1)^2 block around its rounded pixel; the smallest camera z wins, ties go
/// to the lowest source index, so the result is independent of point order.
inline DepthMap pointsZBuffer(const PointSet &points, const CameraModel &target,
                              int splat_radius = 1) {
    const int w = target.width();
    const int h = target.height();
    std::vector<double> best(static_cast<std::size_t>(w) * h,
                             std::numeric_limits<double>::infinity());
    std::vector<std::int64_t> owner(best.size(), std::numeric_limits<std::int64_t>::max());
    for (std::size_t k = 0; k < points.size(); ++k) {
        const Projection p = project(target, points.positions[k]);
        if (!p.inFront()) {
            continue;
        }
        const double px = std::round(p.pixel.x());
        const double py = std::round(p.pixel.y());
        if (px < -splat_radius || py < -splat_radius || px > w - 1 + splat_radius ||
            py > h - 1 + splat_radius) {
            continue;
        }
        const int cx = static_cast<int>(px);
        const int cy = static_cast<int>(py);
        const std::int64_t idx = points.source_index[k];
        for (int y = std::max(0, cy - splat_radius); y <= std::min(h - 1, cy + splat_radius); ++y) {
            for (int x = std::max(0, cx - splat_radius); x <= std::min(w - 1, cx + splat_radius);
                 ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                if (p.depth < best[i] || (p.depth == best[i] && idx < owner[i])) {
                    best[i] = p.depth;
                    owner[i] = idx;
                }
            }
        }
    }
    DepthMap out(w, h);
    for (std::size_t i = 0; i < best.size(); ++i) {
        if (std::isfinite(best[i])) {
            out.setAt(i, best[i]);
        }
    }
    return out;
}

/// Per-pixel unit normals in the camera frame.
struct NormalMap {
    int width = 0;
    int height = 0;
    std::vector<Eigen::Vector3f> normals;
    Mask valid;

    const Eigen::Vector3f &operator()(int x, int y) const {
        return normals[static_cast<std::size_t>(y) * width + x];
    }
};

/// Central-difference normals oriented toward the camera. Pixels whose four
/// neighbors are not all valid get no normal.
inline NormalMap normalsFromDepth(const CameraModel &cam, const DepthMap &depth) {
    NormalMap out;
    out.width = depth.width();
    out.height = depth.height();
    out.normals.assign(static_cast<std::size_t>(out.width) * out.height,
                       Eigen::Vector3f::Zero());
    out.valid = Mask(out.width, out.height);
    auto point = [&](int x, int y) { return unprojectToCamera(cam, Vec2(x, y), depth(x, y)); };
    parallelFor(1, std::max(1, out.height - 1), [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 1; x < out.width - 1; ++x) {
            if (!depth.valid(x, y) || !depth.valid(x - 1, y) || !depth.valid(x + 1, y) ||
                !depth.valid(x, y - 1) || !depth.valid(x, y + 1)) {
                continue;
            }
            const Vec3 tx = point(x + 1, y) - point(x - 1, y);
            const Vec3 ty = point(x, y + 1) - point(x, y - 1);
            Vec3 n = tx.cross(ty);
            const double len = n.norm();
            if (!(len > 0.0)) {
                continue;
            }
            n /= len;
            if (n.dot(point(x, y)) > 0.0) {
                n = -n;
            }
            const std::size_t i = static_cast<std::size_t>(y) * out.width + x;
            out.normals[i] = n.cast<float>();
            out.valid.setAt(i, true);
        }
    });
    return out;
}

/// Gamma linearization followed by a 3x3 color matrix.
class ColorCorrection {
  public:
    ColorCorrection() = default;
    ColorCorrection(double gamma, const Mat3 &matrix) : gamma_(gamma), matrix_(matrix) {
        if (!(gamma > 0.0) || !std::isfinite(gamma)) {
            throw std::invalid_argument("ColorCorrection: gamma must be positive");
        }
        if (!(std::abs(matrix.determinant()) > 1e-12)) {
            throw std::invalid_argument("ColorCorrection: color matrix is singular");
        }
    }

    double gamma() const { return gamma_; }
    const Mat3 &matrix() const { return matrix_; }

  private:
    double gamma_ = 1.0;
    Mat3 matrix_ = Mat3::Identity();
};

inline ImageBuffer applyColorCorrection(const ColorCorrection &cc, const ImageBuffer &img) {
    if (img.channels() != 3) {
        throw std::invalid_argument("applyColorCorrection: expected a 3-channel image");
    }
    ImageBuffer out(img.width(), img.height(), 3);
    const Eigen::Matrix3f m = cc.matrix().cast<float>();
    const float g = static_cast<float>(cc.gamma());
    const auto &src = img.values();
    auto &dst = out.values();
    for (std::size_t i = 0; i + 2 < src.size(); i += 3) {
        const Eigen::Vector3f lin(std::pow(src[i], g), std::pow(src[i + 1], g),
                                  std::pow(src[i + 2], g));
        const Eigen::Vector3f v = m * lin;
        for (int c = 0; c < 3; ++c) {
            dst[i + c] = std::clamp(v[c], 0.0f, 1.0f);
        }
    }
    return out;
}

/// Rec. 709 luminance of a 3-channel image; single-channel images pass through.
inline ImageBuffer luminance(const ImageBuffer &img) {
    if (img.channels() == 1) {
        return img;
    }
    if (img.channels() < 3) {
        throw std::invalid_argument("luminance: expected 1 or >=3 channels");
    }
    ImageBuffer out(img.width(), img.height(), 1);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            out(x, y, 0) = 0.2126f * img(x, y, 0) + 0.7152f * img(x, y, 1) + 0.0722f * img(x, y, 2);
        }
    }
    return out;
}

/// Bilinear lookup with border clamp. Caller guarantees the coordinate lies in
/// [0, W-1] x [0, H-1].
inline void sampleBilinear(const ImageBuffer &img, const Vec2 &p, std::span<float> out) {
    const double fx = std::clamp(p.x(), 0.0, static_cast<double>(img.width() - 1));
    const double fy = std::clamp(p.y(), 0.0, static_cast<double>(img.height() - 1));
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const int x1 = std::min(x0 + 1, img.width() - 1);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const float ax = static_cast<float>(fx - x0);
    const float ay = static_cast<float>(fy - y0);
    for (int c = 0; c < img.channels(); ++c) {
        const float top = img(x0, y0, c) * (1.0f - ax) + img(x1, y0, c) * ax;
        const float bot = img(x0, y1, c) * (1.0f - ax) + img(x1, y1, c) * ax;
        out[static_cast<std::size_t>(c)] = top * (1.0f - ay) + bot * ay;
    }
}

} // namespace teleview
