#pragma once

// Image I/O: 8-bit PNG files via libpng, binary PGM (P5) / PPM (P6) both as
// files and as in-memory byte strings for the wire protocol. Round trips
// quantize to value/255.

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mcot/core.hpp"

namespace mcot {

inline unsigned char quantize8(double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// --- PGM / PPM ---------------------------------------------------------------

// P5 for 1-channel data, P6 for 3-channel. Masks are written as {0,255}.
inline std::string pnm_encode(const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw ValidationError("pnm_encode: only 1- or 3-channel images");
    }
    std::string out = img.channels == 1 ? "P5" : "P6";
    out += "\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.data.size());
    for (double v : img.data) out.push_back(static_cast<char>(quantize8(v)));
    return out;
}

inline std::string pgm_encode(const Mask& m) {
    std::string out = "P5\n" + std::to_string(m.width) + " " + std::to_string(m.height) + "\n255\n";
    out.reserve(out.size() + m.data.size());
    for (double v : m.data) out.push_back(static_cast<char>(v != 0.0 ? 255 : 0));
    return out;
}

namespace detail {
inline int pnm_read_int(std::istringstream& in) {
    // skip whitespace and '#' comments
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            in.get();
        } else {
            break;
        }
    }
    int v = 0;
    if (!(in >> v)) throw ParseError("pnm: malformed header");
    return v;
}
}  // namespace detail

inline Image pnm_decode(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw ParseError("pnm: expected P5 or P6 magic");
    }
    const int channels = bytes[1] == '5' ? 1 : 3;
    std::istringstream in(bytes.substr(2));
    const int w = detail::pnm_read_int(in);
    const int h = detail::pnm_read_int(in);
    const int maxval = detail::pnm_read_int(in);
    if (maxval != 255) throw ParseError("pnm: only maxval 255 supported");
    in.get();  // single whitespace after maxval
    const std::size_t header = 2 + static_cast<std::size_t>(in.tellg());
    const std::size_t need = static_cast<std::size_t>(h) * w * channels;
    if (bytes.size() < header + need) throw ParseError("pnm: truncated pixel data");
    Image img(h, w, channels);
    for (std::size_t i = 0; i < need; ++i) {
        img.data[i] = static_cast<unsigned char>(bytes[header + i]) / 255.0;
    }
    return img;
}

// Any strictly positive sample counts as foreground when reading masks back.
inline Mask pgm_decode_mask(const std::string& bytes) {
    const Image img = pnm_decode(bytes);
    if (img.channels != 1) throw ParseError("pgm mask: expected single channel");
    Mask m(img.height, img.width);
    for (std::size_t i = 0; i < img.data.size(); ++i) m.data[i] = img.data[i] > 0.0 ? 1.0 : 0.0;
    return m;
}

inline void write_pgm(const std::string& path, const Mask& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("write_pgm: cannot open " + path);
    const std::string bytes = pgm_encode(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void write_pnm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("write_pnm: cannot open " + path);
    const std::string bytes = pnm_encode(img);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("read: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Mask read_pgm_mask(const std::string& path) { return pgm_decode_mask(read_file_bytes(path)); }

// --- PNG ---------------------------------------------------------------------

inline void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw ValidationError("write_png: only 1- or 3-channel images");
    }
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw ValidationError("write_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw ValidationError("write_png: libpng failure for " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                row[static_cast<std::size_t>(x) * img.channels + c] = quantize8(img.at(y, x, c));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

// Reads any 8/16-bit gray/palette/RGB(A) PNG, normalized to 8-bit RGB or gray.
inline Image read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw ValidationError("read_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw ParseError("read_png: libpng failure for " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw ParseError("read_png: unsupported channel count");
    }
    Image img(static_cast<int>(h), static_cast<int>(w), channels);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * channels);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                img.at(static_cast<int>(y), static_cast<int>(x), c) =
                    row[static_cast<std::size_t>(x) * channels + c] / 255.0;
            }
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

// Masks persist as PGM; images accept .png or .pgm/.ppm by extension.
inline Image read_image(const std::string& path) {
    if (path.size() >= 4) {
        const std::string ext = path.substr(path.size() - 4);
        if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return pnm_decode(read_file_bytes(path));
    }
    return read_png(path);
}

}  // namespace mcot
