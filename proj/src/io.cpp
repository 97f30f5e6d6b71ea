#include "alprobe/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <vector>

namespace alp {

namespace {

std::mutex warning_mutex;
WarningSink warning_sink;

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path &path, const std::string &bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

// Reads one whitespace-delimited header token starting at pos.
bool header_token(const std::string &s, size_t &pos, std::string &token) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) pos++;
    size_t start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) pos++;
    token = s.substr(start, pos - start);
    return !token.empty();
}

uint8_t to_byte(double v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void write_png(const std::filesystem::path &path, int width, int height, int color_type,
               const std::vector<uint8_t> &rows) {
    FILE *fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw Error(ErrorCode::IoError, "png encoder failed for " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const size_t stride = rows.size() / height;
    for (int y = 0; y < height; y++) png_write_row(png, const_cast<png_bytep>(rows.data() + y * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

} // namespace

void set_warning_sink(WarningSink sink) {
    std::lock_guard lock(warning_mutex);
    warning_sink = std::move(sink);
}

void warn(const std::string &message) {
    std::lock_guard lock(warning_mutex);
    if (warning_sink)
        warning_sink(message);
    else
        std::cerr << "warning: " << message << "\n";
}

HdrImage decode_pfm(const std::string &bytes, const std::string &origin) {
    size_t pos = 0;
    std::string magic, ws, hs, ss;
    if (!header_token(bytes, pos, magic) || (magic != "PF" && magic != "Pf"))
        throw Error(ErrorCode::MalformedHeader, origin + ": missing PF/Pf magic");
    if (!header_token(bytes, pos, ws) || !header_token(bytes, pos, hs) || !header_token(bytes, pos, ss))
        throw Error(ErrorCode::MalformedHeader, origin + ": incomplete header");
    int width = 0, height = 0;
    double scale = 0.0;
    try {
        size_t a, b, c;
        width = std::stoi(ws, &a);
        height = std::stoi(hs, &b);
        scale = std::stod(ss, &c);
        if (a != ws.size() || b != hs.size() || c != ss.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception &) {
        throw Error(ErrorCode::MalformedHeader, origin + ": non-numeric header field");
    }
    if (width < 1 || height < 1 || scale == 0.0 || !std::isfinite(scale))
        throw Error(ErrorCode::MalformedHeader, origin + ": invalid dimensions or scale");
    // Exactly one whitespace byte separates the header from the payload.
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw Error(ErrorCode::MalformedHeader, origin + ": header not terminated");
    pos++;

    const int channels = magic == "PF" ? 3 : 1;
    const size_t count = static_cast<size_t>(width) * height * channels;
    if (bytes.size() - pos < count * 4)
        throw Error(ErrorCode::TruncatedPayload, origin + ": expected " + std::to_string(count * 4) +
                                                     " payload bytes, found " + std::to_string(bytes.size() - pos));
    const bool little = scale < 0.0;
    const bool swap = little != (std::endian::native == std::endian::little);
    HdrImage img(width, height);
    size_t negatives = 0;
    for (int row = 0; row < height; row++) {
        int y = height - 1 - row;
        for (int x = 0; x < width; x++) {
            double px[3];
            for (int c = 0; c < channels; c++) {
                uint32_t u;
                std::memcpy(&u, bytes.data() + pos, 4);
                pos += 4;
                if (swap) u = __builtin_bswap32(u);
                px[c] = std::bit_cast<float>(u);
            }
            if (channels == 1) px[1] = px[2] = px[0];
            for (double &v : px) {
                if (!std::isfinite(v)) throw Error(ErrorCode::MalformedHeader, origin + ": non-finite pixel value");
                if (v < 0.0) {
                    negatives++;
                    v = 0.0;
                }
            }
            img.set(x, y, {px[0], px[1], px[2]});
        }
    }
    if (negatives > 0) warn("NegativeChannel: " + origin + ": clamped " + std::to_string(negatives) + " negative channel(s) to 0");
    return img;
}

std::string encode_pfm(const HdrImage &img) {
    std::string out = "PF\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n-1.0\n";
    const size_t header = out.size();
    out.resize(header + img.pixel_count() * 12);
    size_t pos = header;
    for (int row = 0; row < img.height(); row++) {
        int y = img.height() - 1 - row;
        for (int x = 0; x < img.width(); x++) {
            Rgb c = img.at(x, y);
            for (int k = 0; k < 3; k++) {
                uint32_t u = std::bit_cast<uint32_t>(static_cast<float>(c[k]));
                if constexpr (std::endian::native != std::endian::little) u = __builtin_bswap32(u);
                std::memcpy(out.data() + pos, &u, 4);
                pos += 4;
            }
        }
    }
    return out;
}

HdrImage load_hdr(const std::filesystem::path &path) { return decode_pfm(read_file(path), path.string()); }

void save_hdr(const HdrImage &img, const std::filesystem::path &path) { write_file(path, encode_pfm(img)); }

MaskImage load_mask(const std::filesystem::path &path) {
    FILE *fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        std::fclose(fp);
        throw Error(ErrorCode::MalformedHeader, path.string() + ": not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw Error(ErrorCode::IoError, "png decoder init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw Error(ErrorCode::TruncatedPayload, path.string() + ": corrupt PNG data");
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    auto fail = [&](ErrorCode code, const std::string &msg) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw Error(code, path.string() + ": " + msg);
    };
    if (depth != 8) fail(ErrorCode::UnsupportedBitDepth, "mask must be 8-bit, got " + std::to_string(depth) + "-bit");
    if (color != PNG_COLOR_TYPE_GRAY) fail(ErrorCode::UnsupportedColorType, "mask must be single-channel grayscale");
    std::vector<uint8_t> row(png_get_rowbytes(png, info));
    MaskImage m(width, height);
    for (int y = 0; y < height; y++) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < width; x++) m.set(x, y, row[x] / 255.0);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return m;
}

void save_mask(const MaskImage &mask, const std::filesystem::path &path) {
    save_png_gray(mask.values(), mask.width(), mask.height(), path);
}

Rgb reinhard(const Rgb &c, double exposure) {
    Rgb r;
    for (int k = 0; k < 3; k++) {
        double x = std::max(0.0, c[k] * exposure);
        r[k] = std::pow(x / (1.0 + x), 1.0 / 2.2);
    }
    return r;
}

void save_png_rgb(const HdrImage &img, const std::filesystem::path &path, double exposure) {
    std::vector<uint8_t> rows(img.pixel_count() * 3);
    for (int y = 0; y < img.height(); y++)
        for (int x = 0; x < img.width(); x++) {
            Rgb c = reinhard(img.at(x, y), exposure);
            for (int k = 0; k < 3; k++) rows[(static_cast<size_t>(y) * img.width() + x) * 3 + k] = to_byte(c[k]);
        }
    write_png(path, img.width(), img.height(), PNG_COLOR_TYPE_RGB, rows);
}

void save_png_gray(const std::vector<double> &values, int width, int height, const std::filesystem::path &path) {
    if (values.size() != static_cast<size_t>(width) * height)
        throw Error(ErrorCode::DimensionMismatch, "gray image size mismatch");
    std::vector<uint8_t> rows(values.size());
    for (size_t i = 0; i < values.size(); i++) rows[i] = to_byte(values[i]);
    write_png(path, width, height, PNG_COLOR_TYPE_GRAY, rows);
}

} // namespace alp
