#include <algorithm>
#include <cmath>

#include "hfw/data.hpp"

namespace hfw {

FloatImage to_float(const GrayImage& g) {
    FloatImage f;
    f.width = g.width;
    f.height = g.height;
    f.px.resize(g.pixels.size());
    for (size_t i = 0; i < g.pixels.size(); ++i) f.px[i] = static_cast<float>(g.pixels[i]) / 255.0f;
    return f;
}

FloatImage resize_bilinear(const FloatImage& img, int64_t out_w, int64_t out_h) {
    if (img.width == out_w && img.height == out_h) return img;
    FloatImage out;
    out.width = out_w;
    out.height = out_h;
    out.px.resize(static_cast<size_t>(out_w * out_h));
    const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
    const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
    for (int64_t y = 0; y < out_h; ++y) {
        const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fy)), 0, img.height - 1);
        const int64_t y1 = std::min<int64_t>(y0 + 1, img.height - 1);
        const double wy = std::clamp(fy - static_cast<double>(y0), 0.0, 1.0);
        for (int64_t x = 0; x < out_w; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fx)), 0, img.width - 1);
            const int64_t x1 = std::min<int64_t>(x0 + 1, img.width - 1);
            const double wx = std::clamp(fx - static_cast<double>(x0), 0.0, 1.0);
            const double v00 = img.px[static_cast<size_t>(y0 * img.width + x0)];
            const double v01 = img.px[static_cast<size_t>(y0 * img.width + x1)];
            const double v10 = img.px[static_cast<size_t>(y1 * img.width + x0)];
            const double v11 = img.px[static_cast<size_t>(y1 * img.width + x1)];
            const double v = v00 * (1 - wy) * (1 - wx) + v01 * (1 - wy) * wx + v10 * wy * (1 - wx) + v11 * wy * wx;
            out.px[static_cast<size_t>(y * out_w + x)] = static_cast<float>(v);
        }
    }
    return out;
}

FloatImage pad_constant(const FloatImage& img, int64_t pad, float fill) {
    if (pad == 0) return img;
    FloatImage out;
    out.width = img.width + 2 * pad;
    out.height = img.height + 2 * pad;
    out.px.assign(static_cast<size_t>(out.width * out.height), fill);
    for (int64_t y = 0; y < img.height; ++y)
        std::copy(img.px.begin() + y * img.width, img.px.begin() + (y + 1) * img.width,
                  out.px.begin() + (y + pad) * out.width + pad);
    return out;
}

FloatImage crop(const FloatImage& img, int64_t x0, int64_t y0, int64_t w, int64_t h) {
    if (x0 < 0 || y0 < 0 || x0 + w > img.width || y0 + h > img.height)
        throw ArgumentError("crop: window out of bounds");
    FloatImage out;
    out.width = w;
    out.height = h;
    out.px.resize(static_cast<size_t>(w * h));
    for (int64_t y = 0; y < h; ++y)
        std::copy(img.px.begin() + (y0 + y) * img.width + x0, img.px.begin() + (y0 + y) * img.width + x0 + w,
                  out.px.begin() + y * w);
    return out;
}

FloatImage hflip(const FloatImage& img) {
    FloatImage out = img;
    for (int64_t y = 0; y < img.height; ++y)
        std::reverse(out.px.begin() + y * img.width, out.px.begin() + (y + 1) * img.width);
    return out;
}

FloatImage rotate_bilinear(const FloatImage& img, double degrees, float fill) {
    FloatImage out;
    out.width = img.width;
    out.height = img.height;
    out.px.assign(img.px.size(), fill);
    const double rad = degrees * 3.14159265358979323846 / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
    const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
    for (int64_t y = 0; y < img.height; ++y) {
        for (int64_t x = 0; x < img.width; ++x) {
            // inverse map: rotate the output pixel back into source coords
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double sxf = c * dx + s * dy + cx;
            const double syf = -s * dx + c * dy + cy;
            if (sxf < -1.0 || syf < -1.0 || sxf > static_cast<double>(img.width) ||
                syf > static_cast<double>(img.height))
                continue;
            const int64_t x0 = static_cast<int64_t>(std::floor(sxf));
            const int64_t y0 = static_cast<int64_t>(std::floor(syf));
            const double wx = sxf - static_cast<double>(x0);
            const double wy = syf - static_cast<double>(y0);
            auto sample = [&](int64_t yy, int64_t xx) -> double {
                if (xx < 0 || yy < 0 || xx >= img.width || yy >= img.height) return fill;
                return img.px[static_cast<size_t>(yy * img.width + xx)];
            };
            const double v = sample(y0, x0) * (1 - wy) * (1 - wx) + sample(y0, x0 + 1) * (1 - wy) * wx +
                             sample(y0 + 1, x0) * wy * (1 - wx) + sample(y0 + 1, x0 + 1) * wy * wx;
            out.px[static_cast<size_t>(y * img.width + x)] = static_cast<float>(v);
        }
    }
    return out;
}

std::vector<float> preprocess_image(const GrayImage& img, const PreprocessConfig& cfg, bool train_mode, Rng& rng) {
    cfg.validate();
    FloatImage f = resize_bilinear(to_float(img), cfg.target, cfg.target);
    if (train_mode && cfg.augment) {
        if (cfg.crop_pad > 0) {
            f = pad_constant(f, cfg.crop_pad, 1.0f);
            const int64_t x0 = static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(2 * cfg.crop_pad + 1)));
            const int64_t y0 = static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(2 * cfg.crop_pad + 1)));
            f = crop(f, x0, y0, cfg.target, cfg.target);
        }
        if (cfg.hflip_p > 0 && rng.uniform01() < cfg.hflip_p) f = hflip(f);
        if (cfg.rotation_deg > 0) f = rotate_bilinear(f, rng.uniform(-cfg.rotation_deg, cfg.rotation_deg), 1.0f);
    }
    std::vector<float> out(static_cast<size_t>(3 * cfg.target * cfg.target));
    const size_t plane = static_cast<size_t>(cfg.target * cfg.target);
    for (size_t c = 0; c < 3; ++c) {
        const float m = static_cast<float>(cfg.mean[c]);
        const float inv_s = static_cast<float>(1.0 / cfg.stddev[c]);
        for (size_t i = 0; i < plane; ++i) out[c * plane + i] = (f.px[i] - m) * inv_s;
    }
    return out;
}

}  // namespace hfw
