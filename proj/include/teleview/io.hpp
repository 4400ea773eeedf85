// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "teleview/geometry.hpp"
#include "teleview/splatting.hpp"

#include <png.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace teleview {

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// PFM
// ---------------------------------------------------------------------------

/// Writes a 1- or 3-channel float image. Rows are stored bottom to top and
/// the scale field is -1 (little endian).
inline void writePfm(const std::filesystem::path &path, const std::vector<float> &values, int width,
                     int height, int channels) {
    if (channels != 1 && channels != 3) {
        throw std::invalid_argument("writePfm: channels must be 1 or 3");
    }
    if (values.size() != static_cast<std::size_t>(width) * height * channels) {
        throw std::invalid_argument("writePfm: value count does not match dimensions");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot open for writing: " + path.string());
    }
    os << (channels == 3 ? "PF" : "Pf") << "\n" << width << " " << height << "\n-1.0\n";
    const std::size_t row = static_cast<std::size_t>(width) * channels;
    std::vector<unsigned char> bytes(row * sizeof(float));
    for (int y = height - 1; y >= 0; --y) {
        const float *src = values.data() + static_cast<std::size_t>(y) * row;
        for (std::size_t k = 0; k < row; ++k) {
            auto bits = std::bit_cast<std::uint32_t>(src[k]);
            if constexpr (std::endian::native == std::endian::big) {
                bits = __builtin_bswap32(bits);
            }
            std::memcpy(bytes.data() + k * 4, &bits, 4);
        }
        os.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    if (!os) {
        throw IoError("write failed: " + path.string());
    }
}

struct PfmImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> values; ///< top-to-bottom row-major
};

inline PfmImage readPfm(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open for reading: " + path.string());
    }
    std::string magic;
    PfmImage img;
    double scale = 0.0;
    is >> magic >> img.width >> img.height >> scale;
    if (!is || (magic != "PF" && magic != "Pf") || img.width <= 0 || img.height <= 0 || scale == 0.0) {
        throw IoError("malformed PFM header: " + path.string());
    }
    is.get(); // single whitespace byte after the scale
    img.channels = magic == "PF" ? 3 : 1;
    const bool little = scale < 0.0;
    const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
    img.values.resize(row * img.height);
    std::vector<unsigned char> bytes(row * 4);
    for (int y = img.height - 1; y >= 0; --y) {
        is.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!is) {
            throw IoError("truncated PFM data: " + path.string());
        }
        for (std::size_t k = 0; k < row; ++k) {
            std::uint32_t bits;
            std::memcpy(&bits, bytes.data() + k * 4, 4);
            if (little != (std::endian::native == std::endian::little)) {
                bits = __builtin_bswap32(bits);
            }
            img.values[static_cast<std::size_t>(y) * row + k] = std::bit_cast<float>(bits);
        }
    }
    return img;
}

inline void writeDepthPfm(const std::filesystem::path &path, const DepthMap &depth) {
    writePfm(path, depth.values(), depth.width(), depth.height(), 1);
}

inline DepthMap readDepthPfm(const std::filesystem::path &path) {
    const PfmImage p = readPfm(path);
    if (p.channels != 1) {
        throw IoError("depth PFM must have one channel: " + path.string());
    }
    DepthMap d(p.width, p.height);
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        d.setAt(i, std::isfinite(p.values[i]) ? p.values[i] : 0.0f);
    }
    return d;
}

inline void writeDisparityPfm(const std::filesystem::path &path, const DisparityMap &disp) {
    writePfm(path, disp.values(), disp.width(), disp.height(), 1);
}

inline DisparityMap readDisparityPfm(const std::filesystem::path &path) {
    const PfmImage p = readPfm(path);
    if (p.channels != 1) {
        throw IoError("disparity PFM must have one channel: " + path.string());
    }
    DisparityMap d(p.width, p.height);
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        d.setAt(i, std::isfinite(p.values[i]) ? p.values[i] : DisparityMap::kInvalid);
    }
    return d;
}

/// One single-channel PFM per feature channel (feature_00.pfm ...) plus alpha.pfm.
inline void writeFeatureStack(const std::filesystem::path &dir, const FeatureImage &fi) {
    std::filesystem::create_directories(dir);
    const std::size_t n = static_cast<std::size_t>(fi.width) * fi.height;
    std::vector<float> plane(n);
    for (int c = 0; c < fi.dim; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            plane[i] = fi.features[i * static_cast<std::size_t>(fi.dim) + static_cast<std::size_t>(c)];
        }
        char name[32];
        std::snprintf(name, sizeof(name), "feature_%02d.pfm", c);
        writePfm(dir / name, plane, fi.width, fi.height, 1);
    }
    writePfm(dir / "alpha.pfm", fi.alpha, fi.width, fi.height, 1);
}

inline FeatureImage readFeatureStack(const std::filesystem::path &dir) {
    const PfmImage alpha = readPfm(dir / "alpha.pfm");
    int dim = 0;
    while (true) {
        char name[32];
        std::snprintf(name, sizeof(name), "feature_%02d.pfm", dim);
        if (!std::filesystem::exists(dir / name)) {
            break;
        }
        ++dim;
    }
    FeatureImage fi(alpha.width, alpha.height, dim);
    fi.alpha = alpha.values;
    const std::size_t n = static_cast<std::size_t>(fi.width) * fi.height;
    for (int c = 0; c < dim; ++c) {
        char name[32];
        std::snprintf(name, sizeof(name), "feature_%02d.pfm", c);
        const PfmImage p = readPfm(dir / name);
        if (p.width != fi.width || p.height != fi.height || p.channels != 1) {
            throw IoError("feature plane size mismatch: " + (dir / name).string());
        }
        for (std::size_t i = 0; i < n; ++i) {
            fi.features[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)] = p.values[i];
        }
    }
    return fi;
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

/// Encoding gamma written to the gAMA chunk; samples are stored as
/// linear^(1/kPngGamma).
inline constexpr double kPngGamma = 2.2;

namespace io_detail {

struct PngWriteGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE *fp = nullptr;
    ~PngWriteGuard() {
        if (png) {
            png_destroy_write_struct(&png, info ? &info : nullptr);
        }
        if (fp) {
            std::fclose(fp);
        }
    }
};

struct PngReadGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE *fp = nullptr;
    ~PngReadGuard() {
        if (png) {
            png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        }
        if (fp) {
            std::fclose(fp);
        }
    }
};

[[noreturn]] inline void pngError(png_structp, png_const_charp msg) { throw IoError(msg); }
inline void pngWarning(png_structp, png_const_charp) {}

} // namespace io_detail

/// Writes a 1- or 3-channel linear image as gamma-encoded PNG. When `encode`
/// is false the values are quantized as-is (masks, weight maps).
inline void writePng(const std::filesystem::path &path, const ImageBuffer &img, int bit_depth = 8,
                     bool encode = true) {
    if (bit_depth != 8 && bit_depth != 16) {
        throw std::invalid_argument("writePng: bit depth must be 8 or 16");
    }
    if (img.channels() != 1 && img.channels() != 3) {
        throw std::invalid_argument("writePng: channels must be 1 or 3");
    }
    io_detail::PngWriteGuard g;
    g.fp = std::fopen(path.string().c_str(), "wb");
    if (!g.fp) {
        throw IoError("cannot open for writing: " + path.string());
    }
    g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, io_detail::pngError,
                                    io_detail::pngWarning);
    g.info = png_create_info_struct(g.png);
    if (!g.png || !g.info) {
        throw IoError("libpng initialization failed");
    }
    png_init_io(g.png, g.fp);
    png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
                 bit_depth, img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_gAMA(g.png, g.info, encode ? 1.0 / kPngGamma : 1.0);
    // No timestamps or text chunks: output bytes depend on pixel data only.
    png_write_info(g.png, g.info);
    if (bit_depth == 16) {
        png_set_swap(g.png); // we fill native little-endian words
    }
    const int bpc = bit_depth / 8;
    const double maxv = bit_depth == 8 ? 255.0 : 65535.0;
    const std::size_t row_samples = static_cast<std::size_t>(img.width()) * img.channels();
    std::vector<unsigned char> row(row_samples * bpc);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                double v = std::clamp(static_cast<double>(img(x, y, c)), 0.0, 1.0);
                if (encode) {
                    v = std::pow(v, 1.0 / kPngGamma);
                }
                const auto q = static_cast<std::uint16_t>(std::lround(v * maxv));
                const std::size_t k = static_cast<std::size_t>(x) * img.channels() + c;
                if (bpc == 1) {
                    row[k] = static_cast<unsigned char>(q);
                } else {
                    std::memcpy(row.data() + 2 * k, &q, 2);
                }
            }
        }
        png_write_row(g.png, row.data());
    }
    png_write_end(g.png, nullptr);
}

/// Reads an 8/16-bit gray or RGB PNG back to linear floats using the file's
/// gAMA value when present, else the sRGB-like default.
inline ImageBuffer readPng(const std::filesystem::path &path) {
    io_detail::PngReadGuard g;
    g.fp = std::fopen(path.string().c_str(), "rb");
    if (!g.fp) {
        throw IoError("cannot open for reading: " + path.string());
    }
    g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, io_detail::pngError,
                                   io_detail::pngWarning);
    g.info = png_create_info_struct(g.png);
    if (!g.png || !g.info) {
        throw IoError("libpng initialization failed");
    }
    png_init_io(g.png, g.fp);
    png_read_info(g.png, g.info);
    const int bit_depth = png_get_bit_depth(g.png, g.info);
    const int color = png_get_color_type(g.png, g.info);
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(g.png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
        png_set_expand_gray_1_2_4_to_8(g.png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(g.png);
    }
    if (bit_depth == 16) {
        png_set_swap(g.png);
    }
    double file_gamma = 1.0 / kPngGamma;
    png_get_gAMA(g.png, g.info, &file_gamma);
    png_read_update_info(g.png, g.info);
    const int w = static_cast<int>(png_get_image_width(g.png, g.info));
    const int h = static_cast<int>(png_get_image_height(g.png, g.info));
    const int ch = png_get_channels(g.png, g.info);
    const int depth = png_get_bit_depth(g.png, g.info);
    std::vector<unsigned char> row(png_get_rowbytes(g.png, g.info));
    const double maxv = depth == 16 ? 65535.0 : 255.0;
    const double decode = 1.0 / file_gamma;
    ImageBuffer img(w, h, ch);
    for (int y = 0; y < h; ++y) {
        png_read_row(g.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) {
                const std::size_t k = static_cast<std::size_t>(x) * ch + c;
                double q;
                if (depth == 16) {
                    std::uint16_t v;
                    std::memcpy(&v, row.data() + 2 * k, 2);
                    q = v;
                } else {
                    q = row[k];
                }
                img(x, y, c) = static_cast<float>(std::pow(q / maxv, decode));
            }
        }
    }
    return img;
}

inline ImageBuffer maskToImage(const Mask &m) {
    ImageBuffer img(m.width(), m.height(), 1);
    for (std::size_t i = 0; i < m.size(); ++i) {
        img.values()[i] = m.at(i) ? 1.0f : 0.0f;
    }
    return img;
}

} // namespace teleview
