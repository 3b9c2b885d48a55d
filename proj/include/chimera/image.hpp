#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace chimera {

// Planar float image, values nominally in [0,1], layout (channel, row, col).
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int c, int h, int w, float fill = 0.0f);

    float& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }

    bool same_geometry(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    bool operator==(const Image&) const = default;
};

// 8-bit PNG. Gray / gray+alpha load as 1 channel, RGB / RGBA as 3; alpha is dropped.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

// Round to the 8-bit grid exactly as write_png/read_png would.
Image quantize8(const Image& img);

Image to_luma(const Image& img);
Image to_rgb(const Image& img);

// Area-weighted resampling (box filter); exact for integer down-factors.
Image resize(const Image& img, int height, int width);

// Converts channel count and resamples so img matches the requested geometry.
Image conform(const Image& img, int channels, int height, int width);

// Frames laid out left to right on a white background.
Image contact_sheet(const std::vector<Image>& frames, int gap = 1);

}  // namespace chimera
