#include <png.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "hfw/data.hpp"
#include "hfw/io_util.hpp"

namespace fs = std::filesystem;

namespace hfw {

namespace {

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

constexpr char kPackMagic[8] = {'H', 'F', 'W', 'P', 'A', 'C', 'K', '\x01'};
constexpr uint32_t kPackVersion = 1;

}  // namespace

GrayImage read_png_gray(const std::string& path) {
    PngReadCloser c;
    c.fp = std::fopen(path.c_str(), "rb");
    if (!c.fp) throw DataError("cannot open PNG '" + path + "'");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, c.fp) != 8 || png_sig_cmp(sig, 0, 8))
        throw DataError("'" + path + "' is not a PNG file");
    c.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!c.png) throw DataError("libpng init failed");
    c.info = png_create_info_struct(c.png);
    if (!c.info) throw DataError("libpng info init failed");
    if (setjmp(png_jmpbuf(c.png))) throw DataError("corrupt PNG '" + path + "'");
    png_init_io(c.png, c.fp);
    png_set_sig_bytes(c.png, 8);
    png_read_info(c.png, c.info);

    // fold everything down to 8-bit grayscale
    const png_byte color_type = png_get_color_type(c.png, c.info);
    const png_byte depth = png_get_bit_depth(c.png, c.info);
    if (depth == 16) png_set_strip_16(c.png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(c.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(c.png);
    if (color_type == PNG_COLOR_TYPE_PALETTE || (color_type & PNG_COLOR_MASK_COLOR))
        png_set_rgb_to_gray(c.png, 1, -1, -1);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(c.png);
    png_read_update_info(c.png, c.info);

    GrayImage img;
    img.width = static_cast<int32_t>(png_get_image_width(c.png, c.info));
    img.height = static_cast<int32_t>(png_get_image_height(c.png, c.info));
    if (png_get_rowbytes(c.png, c.info) != static_cast<size_t>(img.width))
        throw DataError("unsupported PNG layout in '" + path + "'");
    img.pixels.resize(static_cast<size_t>(img.width) * static_cast<size_t>(img.height));
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int32_t y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] = img.pixels.data() + static_cast<size_t>(y) * static_cast<size_t>(img.width);
    png_read_image(c.png, rows.data());
    png_read_end(c.png, nullptr);
    return img;
}

void write_png_gray(const std::string& path, const GrayImage& img) {
    PngWriteCloser c;
    c.fp = std::fopen(path.c_str(), "wb");
    if (!c.fp) throw DataError("cannot open '" + path + "' for writing");
    c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!c.png) throw DataError("libpng init failed");
    c.info = png_create_info_struct(c.png);
    if (!c.info) throw DataError("libpng info init failed");
    if (setjmp(png_jmpbuf(c.png))) throw DataError("PNG write failed for '" + path + "'");
    png_init_io(c.png, c.fp);
    png_set_IHDR(c.png, c.info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(c.png, c.info);
    for (int32_t y = 0; y < img.height; ++y)
        png_write_row(c.png, const_cast<png_bytep>(img.pixels.data() +
                                                   static_cast<size_t>(y) * static_cast<size_t>(img.width)));
    png_write_end(c.png, nullptr);
}

CharacterDataset load_omniglot(const std::string& root) {
    const fs::path base(root);
    const fs::path bg = base / "images_background";
    const fs::path ev = base / "images_evaluation";
    if (!fs::is_directory(bg) || !fs::is_directory(ev))
        throw DataError(
            "Omniglot not found under '" + root +
            "'. Expected images_background/ and images_evaluation/ directory trees "
            "(extract images_background.zip and images_evaluation.zip from "
            "https://github.com/brendenlake/omniglot).");
    CharacterDataset ds;
    for (const fs::path& split : {bg, ev}) {
        std::vector<fs::path> alphabets;
        for (const auto& e : fs::directory_iterator(split))
            if (e.is_directory()) alphabets.push_back(e.path());
        std::sort(alphabets.begin(), alphabets.end());
        for (const auto& alphabet : alphabets) {
            std::vector<fs::path> chars;
            for (const auto& e : fs::directory_iterator(alphabet))
                if (e.is_directory()) chars.push_back(e.path());
            std::sort(chars.begin(), chars.end());
            for (const auto& ch : chars) {
                CharClass cls;
                cls.name = split.filename().string() + "/" + alphabet.filename().string() + "/" +
                           ch.filename().string();
                std::vector<fs::path> pngs;
                for (const auto& e : fs::directory_iterator(ch))
                    if (e.is_regular_file() && e.path().extension() == ".png") pngs.push_back(e.path());
                std::sort(pngs.begin(), pngs.end());
                for (const auto& p : pngs) {
                    try {
                        cls.images.push_back(read_png_gray(p.string()));
                    } catch (const DataError& err) {
                        ds.warnings.push_back(std::string("skipped ") + p.string() + ": " + err.what());
                    }
                }
                if (!cls.images.empty()) ds.classes.push_back(std::move(cls));
            }
        }
    }
    if (ds.classes.empty()) throw DataError("no character classes found under '" + root + "'");
    return ds;
}

void write_pack(const std::string& path, const CharacterDataset& ds) {
    std::vector<uint8_t> body;
    io::put_u32(body, static_cast<uint32_t>(ds.classes.size()));
    for (const auto& cls : ds.classes) {
        io::put_str(body, cls.name);
        io::put_u32(body, static_cast<uint32_t>(cls.images.size()));
        for (const auto& img : cls.images) {
            io::put_u16(body, static_cast<uint16_t>(img.width));
            io::put_u16(body, static_cast<uint16_t>(img.height));
            body.insert(body.end(), img.pixels.begin(), img.pixels.end());
        }
    }
    std::vector<uint8_t> out;
    out.insert(out.end(), kPackMagic, kPackMagic + 8);
    io::put_u32(out, kPackVersion);
    io::put_u32(out, crc32(body));
    out.insert(out.end(), body.begin(), body.end());
    io::write_file(path, out);
}

CharacterDataset read_pack(const std::string& path) {
    std::vector<uint8_t> buf = io::read_file(path);
    io::Reader r{buf, 0};
    auto magic = r.bytes(8);
    if (!std::equal(magic.begin(), magic.end(), kPackMagic))
        throw FormatError("'" + path + "' is not a dataset pack (bad magic at offset 0)");
    const uint32_t version = r.u32();
    if (version != kPackVersion)
        throw FormatError("pack version " + std::to_string(version) + " unsupported (want " +
                          std::to_string(kPackVersion) + ")");
    const uint32_t want_crc = r.u32();
    const uint32_t got_crc = crc32(std::span<const uint8_t>(buf).subspan(r.pos));
    if (want_crc != got_crc)
        throw FormatError("pack checksum mismatch in '" + path + "' (payload begins at offset " +
                          std::to_string(r.pos) + ")");
    CharacterDataset ds;
    const uint32_t n_classes = r.u32();
    ds.classes.reserve(n_classes);
    for (uint32_t c = 0; c < n_classes; ++c) {
        CharClass cls;
        cls.name = r.str();
        const uint32_t n_images = r.u32();
        cls.images.reserve(n_images);
        for (uint32_t i = 0; i < n_images; ++i) {
            GrayImage img;
            img.width = r.u16();
            img.height = r.u16();
            auto px = r.bytes(static_cast<size_t>(img.width) * static_cast<size_t>(img.height));
            img.pixels.assign(px.begin(), px.end());
            cls.images.push_back(std::move(img));
        }
        ds.classes.push_back(std::move(cls));
    }
    if (!r.done()) throw FormatError("trailing bytes in '" + path + "' at offset " + std::to_string(r.pos));
    return ds;
}

}  // namespace hfw
