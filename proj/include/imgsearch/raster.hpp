#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace imgsearch {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major 8-bit RGB image.
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, Rgb fill = {});
    RasterImage(int width, int height, std::vector<std::uint8_t> pixels);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return width_ == 0 || height_ == 0; }

    std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
    std::span<std::uint8_t> pixels() noexcept { return pixels_; }

    Rgb at(int x, int y) const noexcept {
        const auto* p = &pixels_[offset(x, y)];
        return {p[0], p[1], p[2]};
    }
    void set(int x, int y, Rgb c) noexcept {
        auto* p = &pixels_[offset(x, y)];
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }
    const std::uint8_t* row(int y) const noexcept { return &pixels_[offset(0, y)]; }
    std::uint8_t* row(int y) noexcept { return &pixels_[offset(0, y)]; }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    std::size_t offset(int x, int y) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// Bilinear resampling with pixel-centre alignment (x_src = (x + 0.5)·sx − 0.5,
/// edge-clamped). Same-size resize returns the input unchanged.
RasterImage resize_bilinear(const RasterImage& img, int width, int height);

/// Copy of the rectangle [left, left+width) × [top, top+height).
/// Throws InvalidArgument if the rectangle leaves the image.
RasterImage crop(const RasterImage& img, int left, int top, int width, int height);

/// Nearest-neighbour integer upscale (each pixel duplicated factor×factor).
RasterImage upscale_nearest(const RasterImage& img, int factor);

// Codecs. Decoders throw DecodeError on anything they cannot fully decode.
RasterImage decode_image(std::span<const std::uint8_t> bytes);
RasterImage decode_jpeg(std::span<const std::uint8_t> bytes);
RasterImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_jpeg(const RasterImage& img, int quality = 90);

}  // namespace imgsearch
