#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "scoregen/common.hpp"

namespace scoregen {

// Grayscale raster. Values live in [0,1] with ink-positive polarity
// (ink = high) everywhere inside the pipeline; conversion to and from
// dark-ink-on-light-paper happens only at file I/O boundaries.
struct Image {
    int h = 0;
    int w = 0;
    std::vector<double> pix;

    Image() = default;
    Image(int height, int width, double fill = 0.0)
        : h(height), w(width), pix(static_cast<std::size_t>(height) * width, fill) {}

    double& at(int r, int c) { return pix[static_cast<std::size_t>(r) * w + c]; }
    double at(int r, int c) const { return pix[static_cast<std::size_t>(r) * w + c]; }

    bool empty() const { return pix.empty(); }
    long numel() const { return static_cast<long>(pix.size()); }

    bool operator==(const Image& o) const { return h == o.h && w == o.w && pix == o.pix; }
};

struct InkBox {
    int top = 0, left = 0, bottom = -1, right = -1;  // inclusive; empty when bottom < top
    bool empty() const { return bottom < top || right < left; }
    int height() const { return empty() ? 0 : bottom - top + 1; }
    int width() const { return empty() ? 0 : right - left + 1; }
};

inline InkBox ink_bounding_box(const Image& img, double threshold = 1e-9) {
    InkBox b{img.h, img.w, -1, -1};
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c)
            if (img.at(r, c) > threshold) {
                b.top = std::min(b.top, r);
                b.left = std::min(b.left, c);
                b.bottom = std::max(b.bottom, r);
                b.right = std::max(b.right, c);
            }
    return b;
}

inline double image_min(const Image& img) {
    double m = img.pix.empty() ? 0.0 : img.pix[0];
    for (double p : img.pix) m = std::min(m, p);
    return m;
}

inline double image_max(const Image& img) {
    double m = img.pix.empty() ? 0.0 : img.pix[0];
    for (double p : img.pix) m = std::max(m, p);
    return m;
}

inline double image_mean(const Image& img) {
    if (img.pix.empty()) return 0.0;
    double s = 0.0;
    for (double p : img.pix) s += p;
    return s / static_cast<double>(img.pix.size());
}

// Bilinear resample to the exact target size (no aspect handling here).
inline Image resize_bilinear(const Image& src, int out_h, int out_w) {
    require(src.h > 0 && src.w > 0, Errc::EmptyImage, "resize of empty image");
    if (out_h == src.h && out_w == src.w) return src;
    Image dst(out_h, out_w);
    const double sy = static_cast<double>(src.h) / out_h;
    const double sx = static_cast<double>(src.w) / out_w;
    for (int r = 0; r < out_h; ++r) {
        double fy = (r + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y1 = std::min(y0 + 1, src.h - 1);
        y0 = std::clamp(y0, 0, src.h - 1);
        for (int c = 0; c < out_w; ++c) {
            double fx = (c + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x1 = std::min(x0 + 1, src.w - 1);
            x0 = std::clamp(x0, 0, src.w - 1);
            double top = src.at(y0, x0) * (1 - wx) + src.at(y0, x1) * wx;
            double bot = src.at(y1, x0) * (1 - wx) + src.at(y1, x1) * wx;
            dst.at(r, c) = top * (1 - wy) + bot * wy;
        }
    }
    return dst;
}

inline Image flip_horizontal(const Image& src) {
    Image dst(src.h, src.w);
    for (int r = 0; r < src.h; ++r)
        for (int c = 0; c < src.w; ++c) dst.at(r, c) = src.at(r, src.w - 1 - c);
    return dst;
}

inline Image flip_vertical(const Image& src) {
    Image dst(src.h, src.w);
    for (int r = 0; r < src.h; ++r)
        for (int c = 0; c < src.w; ++c) dst.at(r, c) = src.at(src.h - 1 - r, c);
    return dst;
}

// Rotation about the canvas center, bilinear interpolation, background fill 0.
// degrees == 0 is an exact identity.
inline Image rotate_about_center(const Image& src, double degrees) {
    if (degrees == 0.0) return src;
    Image dst(src.h, src.w, 0.0);
    const double rad = degrees * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (src.h - 1) / 2.0, cx = (src.w - 1) / 2.0;
    for (int r = 0; r < src.h; ++r) {
        for (int c = 0; c < src.w; ++c) {
            // inverse map: sample source at the un-rotated position
            double dy = r - cy, dx = c - cx;
            double sy = cs * dy + sn * dx + cy;
            double sx = -sn * dy + cs * dx + cx;
            int y0 = static_cast<int>(std::floor(sy));
            int x0 = static_cast<int>(std::floor(sx));
            double wy = sy - y0, wx = sx - x0;
            double acc = 0.0;
            for (int dyi = 0; dyi <= 1; ++dyi) {
                for (int dxi = 0; dxi <= 1; ++dxi) {
                    int yy = y0 + dyi, xx = x0 + dxi;
                    if (yy < 0 || yy >= src.h || xx < 0 || xx >= src.w) continue;
                    double wgt = (dyi ? wy : 1 - wy) * (dxi ? wx : 1 - wx);
                    acc += wgt * src.at(yy, xx);
                }
            }
            dst.at(r, c) = acc;
        }
    }
    return dst;
}

// Repeats src until it covers out_h x out_w.
inline Image tile_to(const Image& src, int out_h, int out_w) {
    require(src.h > 0 && src.w > 0, Errc::EmptyImage, "tile of empty image");
    Image dst(out_h, out_w);
    for (int r = 0; r < out_h; ++r)
        for (int c = 0; c < out_w; ++c) dst.at(r, c) = src.at(r % src.h, c % src.w);
    return dst;
}

}  // namespace scoregen
