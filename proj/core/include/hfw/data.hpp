#pragma once

// Character data: Omniglot ingestion, a packed binary cache, a procedural
// glyph generator for offline desk-scale runs, and the preprocessing pipeline
// (resize, augment, channel replication, normalization).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hfw/fewshot.hpp"
#include "hfw/rng.hpp"
#include "hfw/tensor.hpp"

namespace hfw {

struct GrayImage {
    int32_t width = 0, height = 0;
    std::vector<uint8_t> pixels;  // row-major; 255 = white background, 0 = ink
};

struct CharClass {
    std::string name;
    std::vector<GrayImage> images;
};

struct CharacterDataset {
    std::vector<CharClass> classes;
    std::vector<std::string> warnings;  // skipped/corrupt inputs

    int64_t total_images() const {
        int64_t n = 0;
        for (const auto& c : classes) n += static_cast<int64_t>(c.images.size());
        return n;
    }
    std::vector<int64_t> class_sizes() const {
        std::vector<int64_t> s;
        s.reserve(classes.size());
        for (const auto& c : classes) s.push_back(static_cast<int64_t>(c.images.size()));
        return s;
    }
    std::vector<int64_t> class_ids() const {
        std::vector<int64_t> ids(classes.size());
        for (size_t i = 0; i < classes.size(); ++i) ids[i] = static_cast<int64_t>(i);
        return ids;
    }
};

struct PreprocessConfig {
    int64_t target = 84;
    int64_t crop_pad = 8;
    double hflip_p = 0.5;
    double rotation_deg = 15.0;
    bool augment = true;  // master switch for the train-time path
    std::array<double, 3> mean{0.485, 0.456, 0.406};
    std::array<double, 3> stddev{0.229, 0.224, 0.225};

    void validate() const {
        if (target <= 0) throw ConfigError("preprocess: target extent must be positive");
        if (rotation_deg < 0) throw ConfigError("preprocess: rotation_deg must be >= 0");
        if (crop_pad < 0) throw ConfigError("preprocess: crop_pad must be >= 0");
        if (hflip_p < 0 || hflip_p > 1) throw ConfigError("preprocess: hflip_p must be in [0, 1]");
        for (double s : stddev)
            if (s <= 0) throw ConfigError("preprocess: stddev must be positive");
    }

    // White background after per-channel normalization; used as pad fill.
    std::vector<double> normalized_background() const {
        std::vector<double> bg(3);
        for (size_t c = 0; c < 3; ++c) bg[c] = (1.0 - mean[c]) / stddev[c];
        return bg;
    }
};

// ---- float image pipeline (values in [0, 1], white = 1) ----

struct FloatImage {
    int64_t width = 0, height = 0;
    std::vector<float> px;
};

FloatImage to_float(const GrayImage& g);
FloatImage resize_bilinear(const FloatImage& img, int64_t out_w, int64_t out_h);
FloatImage pad_constant(const FloatImage& img, int64_t pad, float fill);
FloatImage crop(const FloatImage& img, int64_t x0, int64_t y0, int64_t w, int64_t h);
FloatImage hflip(const FloatImage& img);
FloatImage rotate_bilinear(const FloatImage& img, double degrees, float fill);

// Full pipeline to a [3 * target * target] channel-major buffer.
// Train mode: resize -> pad crop_pad (white) -> random crop back -> hflip ->
// rotate (bilinear, white fill) -> replicate -> normalize.
// Eval mode: resize -> replicate -> normalize; fully deterministic.
std::vector<float> preprocess_image(const GrayImage& img, const PreprocessConfig& cfg, bool train_mode, Rng& rng);

template <typename T>
Tensor<T> preprocess(const GrayImage& img, const PreprocessConfig& cfg, bool train_mode, Rng& rng) {
    std::vector<float> buf = preprocess_image(img, cfg, train_mode, rng);
    std::vector<T> data(buf.begin(), buf.end());
    return Tensor<T>::from({3, cfg.target, cfg.target}, std::move(data));
}

// Batch of episode items -> [B, 3, target, target]. Each image gets its own
// augmentation stream derived from (aug_seed, position).
template <typename T>
Tensor<T> make_batch(const CharacterDataset& ds, const std::vector<Episode::Item>& items,
                     const PreprocessConfig& cfg, bool train_mode, uint64_t aug_seed) {
    const int64_t b = static_cast<int64_t>(items.size());
    const int64_t plane = 3 * cfg.target * cfg.target;
    std::vector<T> data(static_cast<size_t>(b * plane));
    for (int64_t i = 0; i < b; ++i) {
        const auto& it = items[static_cast<size_t>(i)];
        const auto& img = ds.classes[static_cast<size_t>(it.class_id)].images[static_cast<size_t>(it.image_index)];
        Rng rng(derive_seed(aug_seed, "img", static_cast<uint64_t>(i)));
        std::vector<float> buf = preprocess_image(img, cfg, train_mode, rng);
        std::copy(buf.begin(), buf.end(), data.begin() + i * plane);
    }
    return Tensor<T>::from({b, 3, cfg.target, cfg.target}, std::move(data));
}

// ---- sources ----

// Procedural stroke glyphs: per-class random bezier strokes plus per-sample
// jitter. Deterministic under seed; classes are structurally distinct.
CharacterDataset synth_glyphs(int64_t n_classes, int64_t per_class, int64_t extent, uint64_t seed);

// <root>/images_background/<alphabet>/<character>/*.png and
// <root>/images_evaluation/... ; one class per (alphabet, character).
CharacterDataset load_omniglot(const std::string& root);

// PNG helpers (grayscale). Used by ingestion and test fixtures.
GrayImage read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, const GrayImage& img);

// Packed binary cache (versioned header + raw 8-bit images + CRC).
void write_pack(const std::string& path, const CharacterDataset& ds);
CharacterDataset read_pack(const std::string& path);

}  // namespace hfw
