#include <algorithm>
#include <cmath>

#include "hfw/data.hpp"

namespace hfw {

namespace {

struct Point {
    double x, y;
};

// Quadratic bezier stroke with a thickness, in unit coordinates.
struct Stroke {
    Point p0, p1, p2;
    double thickness;
};

Point bezier_at(const Stroke& s, double t) {
    const double u = 1.0 - t;
    return {u * u * s.p0.x + 2 * u * t * s.p1.x + t * t * s.p2.x,
            u * u * s.p0.y + 2 * u * t * s.p1.y + t * t * s.p2.y};
}

void stamp(std::vector<float>& canvas, int64_t extent, double cx, double cy, double radius) {
    const int64_t lo_x = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cx - radius - 1)));
    const int64_t hi_x = std::min<int64_t>(extent - 1, static_cast<int64_t>(std::ceil(cx + radius + 1)));
    const int64_t lo_y = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cy - radius - 1)));
    const int64_t hi_y = std::min<int64_t>(extent - 1, static_cast<int64_t>(std::ceil(cy + radius + 1)));
    for (int64_t y = lo_y; y <= hi_y; ++y)
        for (int64_t x = lo_x; x <= hi_x; ++x) {
            const double d = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy);
            // 1 inside the stroke, soft 1px edge, 0 outside; canvas keeps the max ink
            const double ink = std::clamp(radius - d + 0.5, 0.0, 1.0);
            float& px = canvas[static_cast<size_t>(y * extent + x)];
            px = std::max(px, static_cast<float>(ink));
        }
}

GrayImage rasterize(const std::vector<Stroke>& strokes, int64_t extent) {
    std::vector<float> ink(static_cast<size_t>(extent * extent), 0.0f);
    for (const auto& s : strokes) {
        const int64_t steps = 4 * extent;
        for (int64_t i = 0; i <= steps; ++i) {
            const Point p = bezier_at(s, static_cast<double>(i) / static_cast<double>(steps));
            stamp(ink, extent, p.x * static_cast<double>(extent - 1), p.y * static_cast<double>(extent - 1),
                  s.thickness * static_cast<double>(extent));
        }
    }
    GrayImage img;
    img.width = static_cast<int32_t>(extent);
    img.height = static_cast<int32_t>(extent);
    img.pixels.resize(ink.size());
    for (size_t i = 0; i < ink.size(); ++i)
        img.pixels[i] = static_cast<uint8_t>(std::lround(255.0 * (1.0 - std::clamp<double>(ink[i], 0.0, 1.0))));
    return img;
}

}  // namespace

CharacterDataset synth_glyphs(int64_t n_classes, int64_t per_class, int64_t extent, uint64_t seed) {
    if (n_classes < 2) throw ArgumentError("synth_glyphs: need at least 2 classes");
    if (per_class < 1 || extent < 8) throw ArgumentError("synth_glyphs: per_class >= 1 and extent >= 8 required");
    CharacterDataset ds;
    ds.classes.reserve(static_cast<size_t>(n_classes));
    for (int64_t c = 0; c < n_classes; ++c) {
        Rng crng(derive_seed(seed, "glyph_class", static_cast<uint64_t>(c)));
        const int64_t n_strokes = 2 + static_cast<int64_t>(crng.bounded(3));
        std::vector<Stroke> proto;
        for (int64_t s = 0; s < n_strokes; ++s) {
            Stroke st;
            st.p0 = {crng.uniform(0.15, 0.85), crng.uniform(0.15, 0.85)};
            st.p1 = {crng.uniform(0.10, 0.90), crng.uniform(0.10, 0.90)};
            st.p2 = {crng.uniform(0.15, 0.85), crng.uniform(0.15, 0.85)};
            st.thickness = crng.uniform(0.045, 0.070);
            proto.push_back(st);
        }
        CharClass cls;
        cls.name = "glyph" + std::to_string(c);
        for (int64_t i = 0; i < per_class; ++i) {
            Rng srng(derive_seed(seed, "glyph_sample", static_cast<uint64_t>(c), static_cast<uint64_t>(i)));
            const double ox = srng.normal(0.0, 0.012);
            const double oy = srng.normal(0.0, 0.012);
            std::vector<Stroke> jittered = proto;
            for (auto& st : jittered) {
                for (Point* p : {&st.p0, &st.p1, &st.p2}) {
                    p->x = std::clamp(p->x + srng.normal(0.0, 0.02) + ox, 0.02, 0.98);
                    p->y = std::clamp(p->y + srng.normal(0.0, 0.02) + oy, 0.02, 0.98);
                }
            }
            cls.images.push_back(rasterize(jittered, extent));
        }
        ds.classes.push_back(std::move(cls));
    }
    return ds;
}

}  // namespace hfw
