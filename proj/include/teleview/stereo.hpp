// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "teleview/geometry.hpp"

#include <array>
#include <cmath>
#include <optional>

namespace teleview {

struct MatcherConfig {
    /// Largest disparity searched, in full-resolution pixels.
    double max_disparity = 256.0;
    /// NCC window is (2 * block_radius + 1)^2.
    int block_radius = 2;
    int pyramid_levels = 3;
    /// Propagation sweeps per pyramid level.
    int iterations = 3;
    /// Half-width of the search window around a prior, in pixels of the level.
    int search_radius = 2;
    /// Left-right consistency tolerance in pixels.
    double lr_threshold = 1.0;
    /// Matches scoring below this NCC are rejected.
    double min_ncc = 0.5;
    /// Windows with intensity standard deviation below this carry no signal.
    double min_texture = 1e-3;

    void validate() const {
        if (!(max_disparity > 0.0)) {
            throw std::invalid_argument("MatcherConfig: max_disparity must be positive");
        }
        if (search_radius < 0 || search_radius > max_disparity) {
            throw std::invalid_argument("MatcherConfig: search_radius must lie in [0, max_disparity]");
        }
        if (iterations < 1) {
            throw std::invalid_argument("MatcherConfig: iterations must be >= 1");
        }
        if (block_radius < 1 || pyramid_levels < 1) {
            throw std::invalid_argument("MatcherConfig: block_radius and pyramid_levels must be >= 1");
        }
        if (!(lr_threshold > 0.0)) {
            throw std::invalid_argument("MatcherConfig: lr_threshold must be positive");
        }
    }
};

struct StereoResult {
    DisparityMap reference;
    DisparityMap target;
    /// NCC score of the reference match clamped to [0, 1]; 0 where invalid.
    std::vector<float> confidence;
    std::vector<float> target_confidence;
    int iterations = 0;
};

namespace stereo_detail {

/// Single-channel float plane with a replicated border so that block windows
/// never need clamping.
struct PaddedPlane {
    int width = 0;
    int height = 0;
    int pad = 0;
    int stride = 0;
    std::vector<float> data;

    PaddedPlane() = default;
    PaddedPlane(const std::vector<float> &src, int w, int h, int p)
        : width(w), height(h), pad(p), stride(w + 2 * p),
          data(static_cast<std::size_t>(w + 2 * p) * (h + 2 * p)) {
        for (int y = -p; y < h + p; ++y) {
            const int sy = std::clamp(y, 0, h - 1);
            for (int x = -p; x < w + p; ++x) {
                const int sx = std::clamp(x, 0, w - 1);
                data[static_cast<std::size_t>(y + p) * stride + (x + p)] =
                    src[static_cast<std::size_t>(sy) * w + sx];
            }
        }
    }

    const float *row(int y) const { return data.data() + static_cast<std::size_t>(y + pad) * stride + pad; }
};

struct Level {
    int width = 0;
    int height = 0;
    std::vector<float> self;
    std::vector<float> other;
    std::vector<std::uint8_t> mask;
};

inline std::vector<float> downsample(const std::vector<float> &src, int w, int h, int &ow, int &oh) {
    ow = std::max(1, w / 2);
    oh = std::max(1, h / 2);
    std::vector<float> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const int x0 = std::min(2 * x, w - 1), x1 = std::min(2 * x + 1, w - 1);
            const int y0 = std::min(2 * y, h - 1), y1 = std::min(2 * y + 1, h - 1);
            out[static_cast<std::size_t>(y) * ow + x] =
                0.25f * (src[static_cast<std::size_t>(y0) * w + x0] +
                         src[static_cast<std::size_t>(y0) * w + x1] +
                         src[static_cast<std::size_t>(y1) * w + x0] +
                         src[static_cast<std::size_t>(y1) * w + x1]);
        }
    }
    return out;
}

inline std::vector<std::uint8_t> downsampleMask(const std::vector<std::uint8_t> &src, int w, int h,
                                                int ow, int oh) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(ow) * oh, 0);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            std::uint8_t v = 0;
            for (int j = 0; j < 2; ++j) {
                for (int i = 0; i < 2; ++i) {
                    const int sx = std::min(2 * x + i, w - 1), sy = std::min(2 * y + j, h - 1);
                    v |= src[static_cast<std::size_t>(sy) * w + sx];
                }
            }
            out[static_cast<std::size_t>(y) * ow + x] = v;
        }
    }
    return out;
}

/// Mean of the valid initial disparities inside each 2^level block, scaled to
/// the level; -1 where none.
inline std::vector<float> initAtLevel(const DisparityMap &init, int level, int lw, int lh) {
    std::vector<float> out(static_cast<std::size_t>(lw) * lh, -1.0f);
    if (init.empty()) {
        return out;
    }
    const int f = 1 << level;
    for (int y = 0; y < lh; ++y) {
        for (int x = 0; x < lw; ++x) {
            double sum = 0.0;
            int n = 0;
            for (int j = 0; j < f; ++j) {
                for (int i = 0; i < f; ++i) {
                    const int sx = x * f + i, sy = y * f + j;
                    if (sx < init.width() && sy < init.height() && init.valid(sx, sy)) {
                        sum += init(sx, sy);
                        ++n;
                    }
                }
            }
            if (n > 0) {
                out[static_cast<std::size_t>(y) * lw + x] = static_cast<float>(sum / n / f);
            }
        }
    }
    return out;
}

/// Zero-mean NCC block matcher for one direction at one pyramid level. A pixel x
/// of the self image is compared against x + sign * d in the other image.
class LevelMatcher {
  public:
    LevelMatcher(const Level &level, int sign, int max_disp, const MatcherConfig &cfg)
        : level_(level), sign_(sign), max_disp_(max_disp), radius_(cfg.block_radius),
          min_texture_(static_cast<float>(cfg.min_texture)),
          self_(level.self, level.width, level.height, cfg.block_radius),
          other_(level.other, level.width, level.height, cfg.block_radius) {
        stats(self_, self_mean_, self_inv_std_);
        stats(other_, other_mean_, other_inv_std_);
    }

    static constexpr float kNoMatch = -2.0f;

    int width() const { return level_.width; }
    int height() const { return level_.height; }
    int maxDisparity() const { return max_disp_; }
    bool active(int x, int y) const {
        const std::size_t i = idx(x, y);
        return level_.mask[i] != 0 && self_inv_std_[i] > 0.0f;
    }

    float score(int x, int y, int d) const {
        if (d < 0 || d > max_disp_) {
            return kNoMatch;
        }
        const int xo = x + sign_ * d;
        if (xo < 0 || xo >= level_.width) {
            return kNoMatch;
        }
        const std::size_t is = idx(x, y);
        const std::size_t io = idx(xo, y);
        const float inv_o = other_inv_std_[io];
        if (self_inv_std_[is] == 0.0f || inv_o == 0.0f) {
            return kNoMatch;
        }
        float acc = 0.0f;
        for (int j = -radius_; j <= radius_; ++j) {
            const float *a = self_.row(y + j) + x;
            const float *b = other_.row(y + j) + xo;
            for (int i = -radius_; i <= radius_; ++i) {
                acc += a[i] * b[i];
            }
        }
        const float n = static_cast<float>((2 * radius_ + 1) * (2 * radius_ + 1));
        return (acc / n - self_mean_[is] * other_mean_[io]) * self_inv_std_[is] * inv_o;
    }

  private:
    std::size_t idx(int x, int y) const {
        return static_cast<std::size_t>(y) * level_.width + x;
    }

    void stats(const PaddedPlane &p, std::vector<float> &mean, std::vector<float> &inv_std) const {
        const int w = level_.width, h = level_.height;
        mean.assign(static_cast<std::size_t>(w) * h, 0.0f);
        inv_std.assign(mean.size(), 0.0f);
        const double n = (2.0 * radius_ + 1) * (2.0 * radius_ + 1);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0.0, s2 = 0.0;
                for (int j = -radius_; j <= radius_; ++j) {
                    const float *r = p.row(y + j) + x;
                    for (int i = -radius_; i <= radius_; ++i) {
                        s += r[i];
                        s2 += static_cast<double>(r[i]) * r[i];
                    }
                }
                const double m = s / n;
                const double var = std::max(0.0, s2 / n - m * m);
                const double sd = std::sqrt(var);
                mean[idx(x, y)] = static_cast<float>(m);
                inv_std[idx(x, y)] = sd >= min_texture_ ? static_cast<float>(1.0 / sd) : 0.0f;
            }
        }
    }

    const Level &level_;
    int sign_;
    int max_disp_;
    int radius_;
    float min_texture_;
    PaddedPlane self_;
    PaddedPlane other_;
    std::vector<float> self_mean_, self_inv_std_, other_mean_, other_inv_std_;
};

struct LevelSolution {
    std::vector<int> disp;     ///< integer disparity, -1 if none
    std::vector<float> score;  ///< NCC at disp
    std::vector<float> subpix; ///< refined disparity, -1 if none
};

inline void tryCandidate(const LevelMatcher &m, int x, int y, int cand, int &best, float &best_score) {
    if (cand == best || cand < 0) {
        return;
    }
    const float s = m.score(x, y, cand);
    if (s == LevelMatcher::kNoMatch) {
        return;
    }
    if (s > best_score || (s == best_score && cand < best)) {
        best = cand;
        best_score = s;
    }
}

/// Search around priors, then propagate along rows and columns, then refine to
/// sub-pixel with a parabola through the neighboring integer scores.
inline LevelSolution solveLevel(const LevelMatcher &m, const std::vector<float> &prior,
                                const std::vector<float> &fallback, int search_radius,
                                int iterations) {
    const int w = m.width(), h = m.height();
    LevelSolution sol;
    sol.disp.assign(static_cast<std::size_t>(w) * h, -1);
    sol.score.assign(sol.disp.size(), LevelMatcher::kNoMatch);
    sol.subpix.assign(sol.disp.size(), -1.0f);

    parallelFor(0, h, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < w; ++x) {
            if (!m.active(x, y)) {
                continue;
            }
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            float p = prior[i] >= 0.0f ? prior[i] : fallback[i];
            int lo = 0, hi = m.maxDisparity();
            if (p >= 0.0f) {
                const int c = static_cast<int>(std::lround(p));
                lo = std::max(0, c - search_radius);
                hi = std::min(m.maxDisparity(), c + search_radius);
            }
            int best = -1;
            float best_score = LevelMatcher::kNoMatch;
            for (int d = lo; d <= hi; ++d) {
                const float s = m.score(x, y, d);
                if (s != LevelMatcher::kNoMatch && s > best_score) {
                    best = d;
                    best_score = s;
                }
            }
            sol.disp[i] = best;
            sol.score[i] = best_score;
        }
    });

    auto visit = [&](int x, int y, int nx, int ny) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!m.active(x, y)) {
            return;
        }
        int best = sol.disp[i];
        float best_score = sol.score[i];
        tryCandidate(m, x, y, sol.disp[static_cast<std::size_t>(ny) * w + nx], best, best_score);
        if (best >= 0) {
            tryCandidate(m, x, y, best - 1, best, best_score);
            tryCandidate(m, x, y, best + 1, best, best_score);
        }
        sol.disp[i] = best;
        sol.score[i] = best_score;
    };

    for (int it = 0; it < iterations; ++it) {
        parallelFor(0, h, [&](std::int64_t yy) {
            const int y = static_cast<int>(yy);
            for (int x = 1; x < w; ++x) {
                visit(x, y, x - 1, y);
            }
            for (int x = w - 2; x >= 0; --x) {
                visit(x, y, x + 1, y);
            }
        });
        parallelFor(0, w, [&](std::int64_t xx) {
            const int x = static_cast<int>(xx);
            for (int y = 1; y < h; ++y) {
                visit(x, y, x, y - 1);
            }
            for (int y = h - 2; y >= 0; --y) {
                visit(x, y, x, y + 1);
            }
        });
    }

    parallelFor(0, h, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const int d = sol.disp[i];
            if (d < 0) {
                continue;
            }
            float offset = 0.0f;
            const float c0 = sol.score[i];
            const float cm = m.score(x, y, d - 1);
            const float cp = m.score(x, y, d + 1);
            if (cm != LevelMatcher::kNoMatch && cp != LevelMatcher::kNoMatch) {
                const float denom = cm - 2.0f * c0 + cp;
                if (denom < 0.0f) {
                    offset = std::clamp(0.5f * (cm - cp) / denom, -0.5f, 0.5f);
                }
            }
            sol.subpix[i] = std::clamp(static_cast<float>(d) + offset, 0.0f,
                                       static_cast<float>(m.maxDisparity()));
        }
    });
    return sol;
}

struct DirectionalResult {
    std::vector<float> disp;  ///< full resolution, -1 if none
    std::vector<float> score;
};

/// Coarse-to-fine match of `self` against `other` in one direction.
inline DirectionalResult matchDirection(const std::vector<float> &self,
                                        const std::vector<float> &other,
                                        const std::vector<std::uint8_t> &mask, int w, int h,
                                        int sign, const DisparityMap &init,
                                        const MatcherConfig &cfg) {
    std::vector<Level> levels;
    levels.push_back(Level{w, h, self, other, mask});
    for (int l = 1; l < cfg.pyramid_levels; ++l) {
        const Level &prev = levels.back();
        if (prev.width < 16 || prev.height < 16) {
            break;
        }
        Level next;
        next.self = downsample(prev.self, prev.width, prev.height, next.width, next.height);
        next.other = downsample(prev.other, prev.width, prev.height, next.width, next.height);
        next.mask = downsampleMask(prev.mask, prev.width, prev.height, next.width, next.height);
        levels.push_back(std::move(next));
    }

    std::vector<float> coarse; // subpix disparities of the previous (coarser) level
    int coarse_w = 0, coarse_h = 0;
    LevelSolution sol;
    for (int l = static_cast<int>(levels.size()) - 1; l >= 0; --l) {
        const Level &lev = levels[static_cast<std::size_t>(l)];
        const int max_d = static_cast<int>(std::ceil(cfg.max_disparity / (1 << l)));
        const LevelMatcher matcher(lev, sign, max_d, cfg);
        const std::vector<float> ext = initAtLevel(init, l, lev.width, lev.height);
        std::vector<float> prior(static_cast<std::size_t>(lev.width) * lev.height, -1.0f);
        if (!coarse.empty()) {
            for (int y = 0; y < lev.height; ++y) {
                for (int x = 0; x < lev.width; ++x) {
                    const int cx = std::min(x / 2, coarse_w - 1), cy = std::min(y / 2, coarse_h - 1);
                    const float c = coarse[static_cast<std::size_t>(cy) * coarse_w + cx];
                    if (c >= 0.0f) {
                        prior[static_cast<std::size_t>(y) * lev.width + x] = 2.0f * c;
                    }
                }
            }
        } else {
            prior = ext;
        }
        sol = solveLevel(matcher, prior, ext, cfg.search_radius, cfg.iterations);
        coarse = sol.subpix;
        coarse_w = lev.width;
        coarse_h = lev.height;
    }
    return DirectionalResult{std::move(sol.subpix), std::move(sol.score)};
}

inline std::vector<float> grayPlane(const ImageBuffer &img) {
    const ImageBuffer g = luminance(img);
    return g.values();
}

} // namespace stereo_detail

/// Fills invalid pixels with the nearest valid disparity within `radius`
/// pixels (Euclidean; ties resolved in scan order). Pixels outside `domain`,
/// when given, stay invalid.
inline DisparityMap fillInitHoles(const DisparityMap &init, int radius = 8,
                                  const Mask *domain = nullptr) {
    DisparityMap out = init;
    const int w = init.width(), h = init.height();
    parallelFor(0, h, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < w; ++x) {
            if (init.valid(x, y) || (domain && !(*domain)(x, y))) {
                continue;
            }
            int best_d2 = radius * radius + 1;
            float best = -1.0f;
            for (int j = -radius; j <= radius; ++j) {
                const int sy = y + j;
                if (sy < 0 || sy >= h) {
                    continue;
                }
                for (int i = -radius; i <= radius; ++i) {
                    const int sx = x + i;
                    const int d2 = i * i + j * j;
                    if (sx < 0 || sx >= w || d2 >= best_d2 || !init.valid(sx, sy)) {
                        continue;
                    }
                    best_d2 = d2;
                    best = init(sx, sy);
                }
            }
            if (best >= 0.0f) {
                out.set(x, y, best);
            }
        }
    });
    return out;
}

/// Both-direction disparity for a rectified pair. Empty initial maps mean zero
/// initialization (full-range search at the coarsest level). When `mask` is
/// given only reference pixels inside it are matched; `target_mask` likewise.
inline StereoResult matchPair(const StereoPair &pair, const ImageBuffer &img_ref,
                              const ImageBuffer &img_tgt, const DisparityMap &init_ref,
                              const DisparityMap &init_tgt, const MatcherConfig &cfg,
                              const Mask *mask = nullptr, const Mask *target_mask = nullptr) {
    cfg.validate();
    const int w = pair.reference().width(), h = pair.reference().height();
    requireSameSize(w, h, img_ref.width(), img_ref.height(), "matchPair(reference image)");
    requireSameSize(w, h, img_tgt.width(), img_tgt.height(), "matchPair(target image)");
    if (!init_ref.empty()) {
        requireSameSize(w, h, init_ref.width(), init_ref.height(), "matchPair(reference init)");
    }
    if (!init_tgt.empty()) {
        requireSameSize(w, h, init_tgt.width(), init_tgt.height(), "matchPair(target init)");
    }
    auto mask_plane = [&](const Mask *m) {
        std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h, 1);
        if (m) {
            requireSameSize(w, h, m->width(), m->height(), "matchPair(mask)");
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = m->at(i) ? 1 : 0;
            }
        }
        return out;
    };

    const std::vector<float> gref = stereo_detail::grayPlane(img_ref);
    const std::vector<float> gtgt = stereo_detail::grayPlane(img_tgt);
    const auto fwd = stereo_detail::matchDirection(gref, gtgt, mask_plane(mask), w, h, +1,
                                                   init_ref, cfg);
    const auto bwd = stereo_detail::matchDirection(gtgt, gref, mask_plane(target_mask), w, h, -1,
                                                   init_tgt, cfg);

    StereoResult res;
    res.reference = DisparityMap(w, h);
    res.target = DisparityMap(w, h);
    res.confidence.assign(static_cast<std::size_t>(w) * h, 0.0f);
    res.target_confidence.assign(res.confidence.size(), 0.0f);
    res.iterations = cfg.iterations;
    const float max_d = static_cast<float>(cfg.max_disparity);

    auto consistent = [&](const std::vector<float> &a, const std::vector<float> &b, int x, int y,
                          int sign) {
        const float d = a[static_cast<std::size_t>(y) * w + x];
        const int xo = static_cast<int>(std::lround(x + sign * d));
        if (xo < 0 || xo >= w) {
            return false;
        }
        const float e = b[static_cast<std::size_t>(y) * w + xo];
        return e >= 0.0f && std::abs(d - e) <= cfg.lr_threshold;
    };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (fwd.disp[i] >= 0.0f && fwd.score[i] >= cfg.min_ncc &&
                consistent(fwd.disp, bwd.disp, x, y, +1)) {
                res.reference.setAt(i, std::min(fwd.disp[i], max_d));
                res.confidence[i] = std::clamp(fwd.score[i], 0.0f, 1.0f);
            }
            if (bwd.disp[i] >= 0.0f && bwd.score[i] >= cfg.min_ncc &&
                consistent(bwd.disp, fwd.disp, x, y, -1)) {
                res.target.setAt(i, std::min(bwd.disp[i], max_d));
                res.target_confidence[i] = std::clamp(bwd.score[i], 0.0f, 1.0f);
            }
        }
    }
    // A clamped score of exactly 0 would break the confidence/validity pairing.
    for (std::size_t i = 0; i < res.confidence.size(); ++i) {
        if (res.confidence[i] <= 0.0f) {
            res.reference.setAt(i, -1.0);
            res.confidence[i] = 0.0f;
        }
        if (res.target_confidence[i] <= 0.0f) {
            res.target.setAt(i, -1.0);
            res.target_confidence[i] = 0.0f;
        }
    }
    return res;
}

struct EndPointError {
    double epe = 0.0;
    double under_1px = 0.0;
    double under_3px = 0.0;
    double under_5px = 0.0;
    std::size_t pixels = 0;
};

/// Mean absolute disparity error over pixels valid in both maps.
inline EndPointError endPointError(const DisparityMap &pred, const DisparityMap &gt) {
    requireSameSize(pred.width(), pred.height(), gt.width(), gt.height(), "endPointError");
    EndPointError r;
    double sum = 0.0;
    std::size_t n1 = 0, n3 = 0, n5 = 0;
    for (std::size_t i = 0; i < pred.values().size(); ++i) {
        if (!pred.validAt(i) || !gt.validAt(i)) {
            continue;
        }
        const double e = std::abs(static_cast<double>(pred.at(i)) - gt.at(i));
        sum += e;
        n1 += e < 1.0;
        n3 += e < 3.0;
        n5 += e < 5.0;
        ++r.pixels;
    }
    if (r.pixels == 0) {
        throw std::invalid_argument("endPointError: no overlapping valid pixels");
    }
    const double n = static_cast<double>(r.pixels);
    r.epe = sum / n;
    r.under_1px = static_cast<double>(n1) / n;
    r.under_3px = static_cast<double>(n3) / n;
    r.under_5px = static_cast<double>(n5) / n;
    return r;
}

struct CascadeOptions {
    /// Seed the lower pair with depth warped from cam0. Disabling it gives the
    /// plain wide-baseline estimate used as the ablation baseline.
    bool use_cascade_init = true;
    int zbuffer_radius = 1;
    int hole_fill_radius = 8;
    /// Disparities at or below this have no finite depth.
    double min_disparity = 0.1;
};

struct CascadeResult {
    DepthMap depth_cam0;
    DepthMap depth_cam2;
    DepthMap depth_cam3;
    StereoResult upper;
    StereoResult lower;
    DisparityMap init_cam2;
    DisparityMap init_cam3;
};

/// Narrow-to-wide cascade: match the upper pair from zero, lift cam0's depth
/// to points, z-buffer them into cam2/cam3 to initialize the lower pair, then
/// match the lower pair around that initialization. `images` and `masks` are
/// ordered cam0..cam3. The upper pair searches the disparity range that covers
/// the same depth interval as cfg.max_disparity does for the lower pair.
inline CascadeResult cascadeEstimate(const StereoPair &upper, const StereoPair &lower,
                                     const std::array<ImageBuffer, 4> &images,
                                     const std::array<Mask, 4> &masks, const MatcherConfig &cfg,
                                     const CascadeOptions &opt = {}) {
    if (!(upper.baseline() < lower.baseline())) {
        throw std::invalid_argument("cascadeEstimate: upper baseline must be narrower than lower");
    }
    MatcherConfig upper_cfg = cfg;
    upper_cfg.max_disparity =
        std::ceil(cfg.max_disparity * upper.baseline() / lower.baseline());
    upper_cfg.search_radius = std::min<int>(cfg.search_radius,
                                            static_cast<int>(upper_cfg.max_disparity));

    CascadeResult out;
    out.upper = matchPair(upper, images[0], images[1], DisparityMap(), DisparityMap(), upper_cfg,
                          &masks[0], &masks[1]);
    out.depth_cam0 = disparityToDepth(upper, out.upper.reference, opt.min_disparity);

    if (opt.use_cascade_init) {
        const PointSet cloud = depthToPoints(upper.reference(), out.depth_cam0);
        const DepthMap z2 = pointsZBuffer(cloud, lower.reference(), opt.zbuffer_radius);
        const DepthMap z3 = pointsZBuffer(cloud, lower.target(), opt.zbuffer_radius);
        out.init_cam2 = fillInitHoles(depthToDisparity(lower, z2), opt.hole_fill_radius, &masks[2]);
        out.init_cam3 = fillInitHoles(depthToDisparity(lower, z3), opt.hole_fill_radius, &masks[3]);
    }
    out.lower = matchPair(lower, images[2], images[3], out.init_cam2, out.init_cam3, cfg,
                          &masks[2], &masks[3]);
    out.depth_cam2 = disparityToDepth(lower, out.lower.reference, opt.min_disparity);
    out.depth_cam3 = disparityToDepth(lower, out.lower.target, opt.min_disparity);
    return out;
}

} // namespace teleview
