#include "regrasp/image.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <png.h>
#include <zlib.h>

#include <json.hpp>

namespace regrasp::img {

using json = nlohmann::json;

// ---- RasterImage ---------------------------------------------------------------

RasterImage RasterImage::solid(int height, int width, double r, double g, double b) {
    RasterImage out;
    out.height = height;
    out.width = width;
    out.rgb.resize(static_cast<std::size_t>(height) * width * 3);
    for (std::size_t i = 0; i < out.rgb.size(); i += 3) {
        out.rgb[i] = r;
        out.rgb[i + 1] = g;
        out.rgb[i + 2] = b;
    }
    return out;
}

void RasterImage::validate() const {
    if (height <= 0 || width <= 0) throw std::invalid_argument("RasterImage: non-positive dimensions");
    if (rgb.size() != static_cast<std::size_t>(height) * width * 3) {
        throw std::invalid_argument("RasterImage: buffer size mismatch");
    }
    for (double v : rgb) {
        if (!std::isfinite(v)) throw std::invalid_argument("RasterImage: non-finite pixel");
    }
}

// ---- Mask ------------------------------------------------------------------------

Mask Mask::zeros(int height, int width) {
    Mask m;
    m.height = height;
    m.width = width;
    m.values.assign(static_cast<std::size_t>(height) * width, 0);
    return m;
}

std::size_t Mask::count() const {
    std::size_t n = 0;
    for (std::uint8_t v : values) n += v;
    return n;
}

void Mask::validate() const {
    if (height <= 0 || width <= 0) throw std::invalid_argument("Mask: non-positive dimensions");
    if (values.size() != static_cast<std::size_t>(height) * width) {
        throw std::invalid_argument("Mask: buffer size mismatch");
    }
    for (std::uint8_t v : values) {
        if (v != 0 && v != 1) throw std::invalid_argument("Mask: values must be 0 or 1");
    }
}

// ---- FaceTexture --------------------------------------------------------------------

FaceTexture FaceTexture::solid(std::size_t face_count, double r, double g, double b) {
    FaceTexture t;
    t.face_count = face_count;
    t.values.resize(face_count * kPerFace);
    for (std::size_t i = 0; i < t.values.size(); i += 3) {
        t.values[i] = r;
        t.values[i + 1] = g;
        t.values[i + 2] = b;
    }
    return t;
}

void FaceTexture::clamp01() {
    for (double& v : values) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

void FaceTexture::validate() const {
    if (values.size() != face_count * kPerFace) {
        throw std::invalid_argument("FaceTexture: buffer size mismatch");
    }
    for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("FaceTexture: value outside [0,1]");
    }
}

// ---- PNG I/O ----------------------------------------------------------------------------

namespace {

std::uint8_t quantize(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

struct PngWriteCtx {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteCtx() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngReadCtx {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadCtx() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

void write_png_bytes(const std::string& path, int height, int width, int channels,
                     const std::vector<std::uint8_t>& bytes) {
    PngWriteCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw std::runtime_error("write_png: cannot open " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("write_png: init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("write_png: info init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("write_png: failure writing " + path);
    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r) {
        rows[static_cast<std::size_t>(r)] =
            const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(r) * width * channels);
    }
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
}

void read_png_bytes(const std::string& path, int& height, int& width, int& channels,
                    std::vector<std::uint8_t>& bytes) {
    PngReadCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw std::runtime_error("read_png: cannot open " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("read_png: init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("read_png: info init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("read_png: failure reading " + path);
    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);

    png_set_expand(ctx.png);
    png_set_strip_16(ctx.png);
    png_set_strip_alpha(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    channels = static_cast<int>(png_get_channels(ctx.png, ctx.info));
    if (channels != 1 && channels != 3) {
        throw std::runtime_error("read_png: unsupported channel count in " + path);
    }
    bytes.resize(static_cast<std::size_t>(height) * width * channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r) {
        rows[static_cast<std::size_t>(r)] = bytes.data() + static_cast<std::size_t>(r) * width * channels;
    }
    png_read_image(ctx.png, rows.data());
}

}  // namespace

void write_png(const std::string& path, const RasterImage& image) {
    image.validate();
    std::vector<std::uint8_t> bytes(image.rgb.size());
    for (std::size_t i = 0; i < image.rgb.size(); ++i) bytes[i] = quantize(image.rgb[i]);
    write_png_bytes(path, image.height, image.width, 3, bytes);
}

RasterImage read_png(const std::string& path) {
    int h = 0, w = 0, c = 0;
    std::vector<std::uint8_t> bytes;
    read_png_bytes(path, h, w, c, bytes);
    RasterImage out;
    out.height = h;
    out.width = w;
    out.rgb.resize(static_cast<std::size_t>(h) * w * 3);
    for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) {
        for (int ch = 0; ch < 3; ++ch) {
            const std::uint8_t b = c == 3 ? bytes[p * 3 + static_cast<std::size_t>(ch)] : bytes[p];
            out.rgb[p * 3 + static_cast<std::size_t>(ch)] = static_cast<double>(b) / 255.0;
        }
    }
    return out;
}

void write_png(const std::string& path, const Mask& mask) {
    mask.validate();
    std::vector<std::uint8_t> bytes(mask.values.size());
    for (std::size_t i = 0; i < mask.values.size(); ++i) bytes[i] = mask.values[i] ? 255 : 0;
    write_png_bytes(path, mask.height, mask.width, 1, bytes);
}

Mask read_png_mask(const std::string& path) {
    int h = 0, w = 0, c = 0;
    std::vector<std::uint8_t> bytes;
    read_png_bytes(path, h, w, c, bytes);
    Mask out = Mask::zeros(h, w);
    for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) {
        const std::uint8_t b = c == 3 ? bytes[p * 3] : bytes[p];
        out.values[p] = b >= 128 ? 1 : 0;
    }
    return out;
}

// ---- texture container -----------------------------------------------------------------

namespace {
constexpr char kTextureMagic[8] = {'R', 'G', 'T', 'X', '0', '0', '0', '1'};
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(size)));
}

std::uint32_t crc32_of_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("crc32_of_file: cannot open " + path);
    std::uint32_t crc = static_cast<std::uint32_t>(::crc32(0L, nullptr, 0));
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        crc = static_cast<std::uint32_t>(::crc32(crc, reinterpret_cast<const Bytef*>(buf),
                                                 static_cast<uInt>(in.gcount())));
    }
    return crc;
}

void save_texture(const std::string& path, const FaceTexture& texture) {
    texture.validate();
    const std::size_t payload_bytes = texture.values.size() * sizeof(double);
    std::uint32_t crc = crc32_of(reinterpret_cast<const std::uint8_t*>(texture.values.data()),
                                 payload_bytes);
    json header;
    header["version"] = 1;
    header["face_count"] = texture.face_count;
    header["shape"] = {texture.face_count, 2, 2, 2, 3};
    header["dtype"] = "f64le";
    header["crc32"] = crc;
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_texture: cannot open " + path);
    out.write(kTextureMagic, sizeof(kTextureMagic));
    const std::uint64_t len = header_str.size();
    std::uint8_t len_le[8];
    for (int i = 0; i < 8; ++i) len_le[i] = static_cast<std::uint8_t>((len >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(len_le), 8);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(reinterpret_cast<const char*>(texture.values.data()),
              static_cast<std::streamsize>(payload_bytes));
    if (!out) throw std::runtime_error("save_texture: write failed for " + path);
}

FaceTexture load_texture(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_texture: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kTextureMagic, 8) != 0) {
        throw std::runtime_error("load_texture: bad magic in " + path);
    }
    std::uint8_t len_le[8];
    in.read(reinterpret_cast<char*>(len_le), 8);
    if (!in) throw std::runtime_error("load_texture: truncated header in " + path);
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(len_le[i]) << (8 * i);
    std::string header_str(len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("load_texture: truncated header in " + path);
    json header = json::parse(header_str);
    FaceTexture t;
    t.face_count = header.at("face_count").get<std::size_t>();
    t.values.resize(t.face_count * FaceTexture::kPerFace);
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_texture: truncated payload in " + path);
    const std::uint32_t crc = crc32_of(reinterpret_cast<const std::uint8_t*>(t.values.data()),
                                       t.values.size() * sizeof(double));
    if (crc != header.at("crc32").get<std::uint32_t>()) {
        throw std::runtime_error("load_texture: checksum mismatch in " + path);
    }
    t.validate();
    return t;
}

}  // namespace regrasp::img
