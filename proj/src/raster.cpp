#include "imgsearch/raster.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "imgsearch/error.hpp"

namespace imgsearch {

RasterImage::RasterImage(int width, int height, Rgb fill)
    : width_(width), height_(height) {
    if (width < 0 || height < 0) throw InvalidArgument("negative raster dimensions");
    pixels_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
        pixels_[i] = fill.r;
        pixels_[i + 1] = fill.g;
        pixels_[i + 2] = fill.b;
    }
}

RasterImage::RasterImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < 0 || height < 0) throw InvalidArgument("negative raster dimensions");
    if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
        throw InvalidArgument("pixel buffer length must equal width*height*3");
    }
}

namespace {

struct AxisMap {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

AxisMap axis_map(int src, int dst) {
    AxisMap m;
    m.lo.resize(dst);
    m.hi.resize(dst);
    m.frac.resize(dst);
    const double s = static_cast<double>(src) / static_cast<double>(dst);
    for (int i = 0; i < dst; ++i) {
        double x = (i + 0.5) * s - 0.5;
        x = std::clamp(x, 0.0, static_cast<double>(src - 1));
        const int x0 = static_cast<int>(std::floor(x));
        const int x1 = std::min(x0 + 1, src - 1);
        m.lo[i] = x0;
        m.hi[i] = x1;
        m.frac[i] = x - x0;
    }
    return m;
}

inline std::uint8_t to_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

RasterImage resize_bilinear(const RasterImage& img, int width, int height) {
    if (width < 1 || height < 1) throw InvalidArgument("resize target must be at least 1x1");
    if (img.empty()) throw InvalidArgument("cannot resize an empty image");
    if (width == img.width() && height == img.height()) return img;

    const AxisMap mx = axis_map(img.width(), width);
    const AxisMap my = axis_map(img.height(), height);
    RasterImage out(width, height);
    for (int y = 0; y < height; ++y) {
        const std::uint8_t* r0 = img.row(my.lo[y]);
        const std::uint8_t* r1 = img.row(my.hi[y]);
        const double fy = my.frac[y];
        std::uint8_t* dst = out.row(y);
        for (int x = 0; x < width; ++x) {
            const int a = mx.lo[x] * 3;
            const int b = mx.hi[x] * 3;
            const double fx = mx.frac[x];
            for (int c = 0; c < 3; ++c) {
                const double top = r0[a + c] + (r0[b + c] - r0[a + c]) * fx;
                const double bot = r1[a + c] + (r1[b + c] - r1[a + c]) * fx;
                dst[x * 3 + c] = to_u8(top + (bot - top) * fy);
            }
        }
    }
    return out;
}

RasterImage crop(const RasterImage& img, int left, int top, int width, int height) {
    if (left < 0 || top < 0 || width < 1 || height < 1 || left + width > img.width() ||
        top + height > img.height()) {
        throw InvalidArgument("crop rectangle outside image");
    }
    RasterImage out(width, height);
    for (int y = 0; y < height; ++y) {
        std::copy_n(img.row(top + y) + left * 3, width * 3, out.row(y));
    }
    return out;
}

RasterImage upscale_nearest(const RasterImage& img, int factor) {
    if (factor < 1) throw InvalidArgument("upscale factor must be >= 1");
    RasterImage out(img.width() * factor, img.height() * factor);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) out.set(x, y, img.at(x / factor, y / factor));
    }
    return out;
}

// ---------------------------------------------------------------- JPEG

namespace {

struct JpegErrorManager {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr cinfo, int level) {
    // Count warnings (level -1) without printing; corrupt data shows up here.
    if (level < 0) cinfo->err->num_warnings++;
}

}  // namespace

RasterImage decode_jpeg(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw DecodeError("empty JPEG payload");
    jpeg_decompress_struct cinfo{};
    JpegErrorManager jerr{};
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    jerr.pub.emit_message = jpeg_silent;

    // Declared before setjmp so longjmp does not skip their construction.
    std::vector<std::uint8_t> pixels;
    int width = 0;
    int height = 0;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DecodeError(std::string("JPEG decode failed: ") + jerr.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    width = static_cast<int>(cinfo.output_width);
    height = static_cast<int>(cinfo.output_height);
    pixels.resize(static_cast<std::size_t>(width) * height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    const long warnings = jerr.pub.num_warnings;
    jpeg_destroy_decompress(&cinfo);
    if (warnings > 0) throw DecodeError("JPEG payload is corrupt or truncated");
    return RasterImage(width, height, std::move(pixels));
}

std::vector<std::uint8_t> encode_jpeg(const RasterImage& img, int quality) {
    if (img.empty()) throw InvalidArgument("cannot encode an empty image");
    jpeg_compress_struct cinfo{};
    JpegErrorManager jerr{};
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    jerr.pub.emit_message = jpeg_silent;

    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::free(buffer);
        throw Error(std::string("JPEG encode failed: ") + jerr.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = static_cast<JDIMENSION>(img.width());
    cinfo.image_height = static_cast<JDIMENSION>(img.height());
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* row = const_cast<JSAMPROW>(img.row(static_cast<int>(cinfo.next_scanline)));
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    std::vector<std::uint8_t> out(buffer, buffer + size);
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    return out;
}

// ---------------------------------------------------------------- PNG

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw DecodeError(std::string("PNG decode failed: ") + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw DecodeError("PNG decode failed: " + msg);
    }
    const int w = static_cast<int>(image.width);
    const int h = static_cast<int>(image.height);
    png_image_free(&image);
    return RasterImage(w, h, std::move(pixels));
}

RasterImage decode_image(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t png_sig[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (bytes.size() >= 8 && std::equal(bytes.begin(), bytes.begin() + 8, png_sig)) {
        return decode_png(bytes);
    }
    if (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8) return decode_jpeg(bytes);
    throw DecodeError("unrecognised image format (expected JPEG or PNG)");
}

}  // namespace imgsearch
