#pragma once

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "scoregen/common.hpp"
#include "scoregen/image.hpp"

namespace scoregen {

// Files store plain luminance (255 = white). Polarity conversion to the
// ink-positive in-memory convention is the caller's job (see normalize /
// ink_positive) so that raw pixel data survives a round trip unchanged.

inline Image load_gray_png(const std::string& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        raise(Errc::UnreadableSource, "cannot read PNG " + path + ": " + png.message);
    png.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&png);
        raise(Errc::UnreadableSource, "cannot decode PNG " + path + ": " + png.message);
    }
    Image img(static_cast<int>(png.height), static_cast<int>(png.width));
    for (std::size_t i = 0; i < buf.size(); ++i) img.pix[i] = buf[i] / 255.0;
    return img;
}

inline void save_gray_png(const std::string& path, const Image& img) {
    require(!img.empty(), Errc::EmptyImage, "saving empty image to " + path);
    std::vector<png_byte> buf(img.pix.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        double v = std::clamp(img.pix[i], 0.0, 1.0);
        buf[i] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.w);
    png.height = static_cast<png_uint_32>(img.h);
    png.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr))
        raise(Errc::IoError, "cannot write PNG " + path + ": " + png.message);
}

inline Image load_gray_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::UnreadableSource, "cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") raise(Errc::UnreadableSource, "not a P5 PGM: " + path);
    auto next_int = [&in, &path]() {
        // skip whitespace and # comments
        for (;;) {
            int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        long v = -1;
        in >> v;
        if (v < 0) raise(Errc::UnreadableSource, "bad PGM header in " + path);
        return v;
    };
    long w = next_int(), h = next_int(), maxv = next_int();
    if (w <= 0 || h <= 0 || maxv <= 0 || maxv > 255)
        raise(Errc::UnreadableSource, "unsupported PGM in " + path);
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) raise(Errc::UnreadableSource, "truncated PGM " + path);
    Image img(static_cast<int>(h), static_cast<int>(w));
    for (std::size_t i = 0; i < buf.size(); ++i) img.pix[i] = buf[i] / double(maxv);
    return img;
}

inline void save_gray_pgm(const std::string& path, const Image& img) {
    require(!img.empty(), Errc::EmptyImage, "saving empty image to " + path);
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::IoError, "cannot open " + path + " for writing");
    out << "P5\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> buf(img.pix.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        double v = std::clamp(img.pix[i], 0.0, 1.0);
        buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline bool has_image_extension(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".pgm";
}

inline Image load_gray(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm") return load_gray_pgm(path);
    return load_gray_png(path);
}

inline void save_gray(const std::string& path, const Image& img) {
    auto ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm")
        save_gray_pgm(path, img);
    else
        save_gray_png(path, img);
}

// Sorted listing keeps every directory-driven stage deterministic.
inline std::vector<std::string> list_image_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir) || !fs::is_directory(dir))
        raise(Errc::UnreadableSource, "not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && has_image_extension(e.path())) out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace scoregen
