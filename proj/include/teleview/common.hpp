// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace teleview {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

namespace detail {
inline std::atomic<int> &threadCountSetting() {
    static std::atomic<int> count{1};
    return count;
}
} // namespace detail

/// Number of worker threads used by the row/tile-parallel kernels. Every kernel
/// writes disjoint outputs per index, so results do not depend on this value.
inline int threadCount() { return detail::threadCountSetting().load(); }

inline void setThreadCount(int n) { detail::threadCountSetting().store(std::max(1, n)); }

/// Runs fn(i) for i in [begin, end). Indices are dealt out round-robin in
/// fixed-size blocks; fn must only write state owned by index i.
template <typename Fn>
void parallelFor(std::int64_t begin, std::int64_t end, Fn &&fn) {
    const std::int64_t n = end - begin;
    if (n <= 0) {
        return;
    }
    const int threads = static_cast<int>(std::min<std::int64_t>(threadCount(), n));
    if (threads <= 1) {
        for (std::int64_t i = begin; i < end; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::int64_t> next{begin};
    constexpr std::int64_t kBlock = 4;
    auto worker = [&]() {
        for (;;) {
            const std::int64_t start = next.fetch_add(kBlock);
            if (start >= end) {
                return;
            }
            const std::int64_t stop = std::min(end, start + kBlock);
            for (std::int64_t i = start; i < stop; ++i) {
                fn(i);
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads - 1));
    for (int t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto &th : pool) {
        th.join();
    }
}

/// Binary per-pixel mask, row-major.
class Mask {
  public:
    Mask() = default;
    Mask(int width, int height, bool value = false)
        : width_(width), height_(height),
          bits_(static_cast<std::size_t>(checkedArea(width, height)), value ? 1 : 0) {}

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return bits_.empty(); }
    std::size_t size() const { return bits_.size(); }

    bool operator()(int x, int y) const { return bits_[index(x, y)] != 0; }
    void set(int x, int y, bool v) { bits_[index(x, y)] = v ? 1 : 0; }

    bool at(std::size_t i) const { return bits_[i] != 0; }
    void setAt(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

    std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
    }

    bool operator==(const Mask &o) const = default;

    static std::int64_t checkedArea(int width, int height) {
        if (width < 0 || height < 0) {
            throw std::invalid_argument("negative image dimensions");
        }
        return static_cast<std::int64_t>(width) * height;
    }

  private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

inline void requireSameSize(int w0, int h0, int w1, int h1, const char *what) {
    if (w0 != w1 || h0 != h1) {
        throw std::invalid_argument(std::string(what) + ": size mismatch (" + std::to_string(w0) +
                                    "x" + std::to_string(h0) + " vs " + std::to_string(w1) + "x" +
                                    std::to_string(h1) + ")");
    }
}

} // namespace teleview
