#include "chimera/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "chimera/error.hpp"

namespace chimera {

Image::Image(int c, int h, int w, float fill)
    : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w, fill) {}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(float v) {
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    require(fp != nullptr, ErrorKind::Io, "cannot open image '" + path.string() + "'");

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        fail(ErrorKind::Io, "not a PNG file: '" + path.string() + "'");
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, ErrorKind::Io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(ErrorKind::Io, "png_create_info_struct failed");
    }

    Image img;
    std::vector<png_bytep> rows;
    std::vector<png_byte> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Io, "corrupt PNG file: '" + path.string() + "'");
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int file_channels = png_get_channels(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);

    buffer.resize(rowbytes * static_cast<std::size_t>(height));
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const int channels = file_channels >= 3 ? 3 : 1;
    img = Image(channels, height, width);
    for (int y = 0; y < height; ++y) {
        const png_byte* row = rows[static_cast<std::size_t>(y)];
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                img.at(c, y, x) = static_cast<float>(row[x * file_channels + c]) / 255.0f;
            }
        }
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    require(img.channels == 1 || img.channels == 3, ErrorKind::InvalidArgument,
            "write_png: unsupported channel count " + std::to_string(img.channels));
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    require(fp != nullptr, ErrorKind::Io, "cannot open '" + path.string() + "' for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, ErrorKind::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorKind::Io, "png_create_info_struct failed");
    }

    std::vector<png_byte> buffer(static_cast<std::size_t>(img.width) * img.height * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                buffer[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] = to_byte(img.at(c, y, x));
            }
        }
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        rows[static_cast<std::size_t>(y)] = buffer.data() + static_cast<std::size_t>(y) * img.width * img.channels;
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "PNG encoding failed for '" + path.string() + "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image quantize8(const Image& img) {
    Image out = img;
    for (auto& v : out.pixels) v = static_cast<float>(to_byte(v)) / 255.0f;
    return out;
}

Image to_luma(const Image& img) {
    if (img.channels == 1) return img;
    require(img.channels == 3, ErrorKind::InvalidArgument, "to_luma: expected 1 or 3 channels");
    Image out(1, img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            out.at(0, y, x) = 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
        }
    }
    return out;
}

Image to_rgb(const Image& img) {
    if (img.channels == 3) return img;
    require(img.channels == 1, ErrorKind::InvalidArgument, "to_rgb: expected 1 or 3 channels");
    Image out(3, img.height, img.width);
    for (int c = 0; c < 3; ++c) {
        std::copy(img.pixels.begin(), img.pixels.end(),
                  out.pixels.begin() + static_cast<std::ptrdiff_t>(c) * img.height * img.width);
    }
    return out;
}

Image resize(const Image& img, int height, int width) {
    require(height > 0 && width > 0, ErrorKind::InvalidArgument, "resize: target size must be positive");
    require(img.height > 0 && img.width > 0, ErrorKind::InvalidArgument, "resize: empty source image");
    if (img.height == height && img.width == width) return img;

    // Each target pixel averages the source area it covers.
    const double sy = static_cast<double>(img.height) / height;
    const double sx = static_cast<double>(img.width) / width;
    Image out(img.channels, height, width);
    for (int y = 0; y < height; ++y) {
        const double y0 = y * sy, y1 = (y + 1) * sy;
        for (int x = 0; x < width; ++x) {
            const double x0 = x * sx, x1 = (x + 1) * sx;
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0, area = 0.0;
                for (int iy = static_cast<int>(y0); iy < std::min(img.height, static_cast<int>(std::ceil(y1))); ++iy) {
                    const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
                    if (wy <= 0) continue;
                    for (int ix = static_cast<int>(x0); ix < std::min(img.width, static_cast<int>(std::ceil(x1))); ++ix) {
                        const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
                        if (wx <= 0) continue;
                        acc += wy * wx * img.at(c, iy, ix);
                        area += wy * wx;
                    }
                }
                out.at(c, y, x) = static_cast<float>(acc / area);
            }
        }
    }
    return out;
}

Image conform(const Image& img, int channels, int height, int width) {
    Image out = img;
    if (out.channels != channels) {
        out = channels == 1 ? to_luma(out) : to_rgb(out);
    }
    return resize(out, height, width);
}

Image contact_sheet(const std::vector<Image>& frames, int gap) {
    require(!frames.empty(), ErrorKind::InvalidArgument, "contact_sheet: no frames");
    const Image& first = frames.front();
    for (const auto& f : frames) {
        require(f.same_geometry(first), ErrorKind::Shape, "contact_sheet: frames differ in geometry");
    }
    const int n = static_cast<int>(frames.size());
    Image sheet(first.channels, first.height, n * first.width + (n - 1) * gap, 1.0f);
    for (int i = 0; i < n; ++i) {
        const int x_off = i * (first.width + gap);
        for (int c = 0; c < first.channels; ++c) {
            for (int y = 0; y < first.height; ++y) {
                for (int x = 0; x < first.width; ++x) {
                    sheet.at(c, y, x_off + x) = frames[static_cast<std::size_t>(i)].at(c, y, x);
                }
            }
        }
    }
    return sheet;
}

}  // namespace chimera
