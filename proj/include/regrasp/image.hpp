#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace regrasp::img {

/// RGB image with values in [0,1]; rows stored top to bottom. The depth
/// buffer, when present, holds +inf on uncovered pixels.
struct RasterImage {
    int height = 0;
    int width = 0;
    std::vector<double> rgb;  // height*width*3
    std::optional<std::vector<double>> depth;

    static RasterImage solid(int height, int width, double r, double g, double b);
    double& at(int row, int col, int ch) { return rgb[(static_cast<std::size_t>(row) * width + col) * 3 + ch]; }
    double at(int row, int col, int ch) const { return rgb[(static_cast<std::size_t>(row) * width + col) * 3 + ch]; }
    void validate() const;
};

/// Binary foreground mask; 1 = foreground, 0 = background.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;  // height*width, strictly 0/1

    static Mask zeros(int height, int width);
    std::uint8_t& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
    std::uint8_t at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
    std::size_t count() const;
    void validate() const;
};

/// Per-face texture grid: face_count x T x T x T x 3 with T = 2, values in
/// [0,1], flattened row-major (face, a, b, c, channel).
struct FaceTexture {
    static constexpr int kGrid = 2;
    static constexpr std::size_t kPerFace = kGrid * kGrid * kGrid * 3;

    std::size_t face_count = 0;
    std::vector<double> values;  // face_count * kPerFace

    static FaceTexture solid(std::size_t face_count, double r, double g, double b);
    double at(std::size_t face, int a, int b, int c, int ch) const {
        return values[face * kPerFace +
                      static_cast<std::size_t>(((a * kGrid + b) * kGrid + c) * 3 + ch)];
    }
    void clamp01();
    void validate() const;
};

// PNG (8-bit) I/O. Images quantize to round(v*255); masks map 1 -> 255.
void write_png(const std::string& path, const RasterImage& image);
RasterImage read_png(const std::string& path);
void write_png(const std::string& path, const Mask& mask);
Mask read_png_mask(const std::string& path);

// Texture container: magic + length-prefixed JSON header + float64-LE
// payload with a CRC32 recorded in the header.
void save_texture(const std::string& path, const FaceTexture& texture);
FaceTexture load_texture(const std::string& path);

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size);
std::uint32_t crc32_of_file(const std::string& path);

}  // namespace regrasp::img
