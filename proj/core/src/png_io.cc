#include "png_io.h"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "samflow/types.h"

namespace samflow::png {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr file(std::fopen(path.c_str(), mode));
  if (!file) {
    throw Error(ErrorKind::kIo, "cannot open " + path.string());
  }
  return file;
}

void silent_warning(png_structp, png_const_charp) {}

struct ReadHandles {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~ReadHandles() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct WriteHandles {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~WriteHandles() { png_destroy_write_struct(&png, &info); }
};

}  // namespace

Raster read(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 ||
      png_sig_cmp(signature, 0, 8) != 0) {
    throw Error(ErrorKind::kFormat, path.string() + ": not a PNG file");
  }

  ReadHandles h;
  h.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                 silent_warning);
  if (h.png == nullptr) throw Error(ErrorKind::kIo, "png_create_read_struct");
  h.info = png_create_info_struct(h.png);
  if (h.info == nullptr) throw Error(ErrorKind::kIo, "png_create_info_struct");

  Raster out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(h.png))) {
    throw Error(ErrorKind::kFormat, path.string() + ": corrupt PNG data");
  }

  png_init_io(h.png, file.get());
  png_set_sig_bytes(h.png, 8);
  png_read_info(h.png, h.info);

  const int color_type = png_get_color_type(h.png, h.info);
  const int depth = png_get_bit_depth(h.png, h.info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(h.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) {
    png_set_expand_gray_1_2_4_to_8(h.png);
  }
  if (png_get_valid(h.png, h.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(h.png);
  if (depth == 16) png_set_swap(h.png);  // native little-endian samples
  png_read_update_info(h.png, h.info);

  out.width = static_cast<int>(png_get_image_width(h.png, h.info));
  out.height = static_cast<int>(png_get_image_height(h.png, h.info));
  out.channels = png_get_channels(h.png, h.info);
  out.bit_depth = png_get_bit_depth(h.png, h.info);

  const std::size_t row_bytes = png_get_rowbytes(h.png, h.info);
  buffer.resize(row_bytes * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) {
    rows[static_cast<std::size_t>(y)] = buffer.data() + row_bytes * y;
  }
  png_read_image(h.png, rows.data());
  png_read_end(h.png, nullptr);

  const std::size_t count = static_cast<std::size_t>(out.width) * out.height *
                            static_cast<std::size_t>(out.channels);
  out.samples.resize(count);
  if (out.bit_depth == 16) {
    for (int y = 0; y < out.height; ++y) {
      const png_byte* row = rows[static_cast<std::size_t>(y)];
      for (int i = 0; i < out.width * out.channels; ++i) {
        out.samples[static_cast<std::size_t>(y) * out.width * out.channels +
                    static_cast<std::size_t>(i)] =
            static_cast<std::uint16_t>(row[2 * i] | (row[2 * i + 1] << 8));
      }
    }
  } else {
    for (int y = 0; y < out.height; ++y) {
      const png_byte* row = rows[static_cast<std::size_t>(y)];
      for (int i = 0; i < out.width * out.channels; ++i) {
        out.samples[static_cast<std::size_t>(y) * out.width * out.channels +
                    static_cast<std::size_t>(i)] = row[i];
      }
    }
  }
  return out;
}

void write(const std::filesystem::path& path, const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) {
    throw Error(ErrorKind::kInvalidArgument, "PNG writer supports 1 or 3 channels");
  }
  if (raster.bit_depth != 8 && raster.bit_depth != 16) {
    throw Error(ErrorKind::kInvalidArgument, "PNG writer supports 8 or 16 bit");
  }
  if (raster.width <= 0 || raster.height <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "PNG dimensions must be positive");
  }
  const std::size_t per_row =
      static_cast<std::size_t>(raster.width) * raster.channels;
  if (raster.samples.size() != per_row * raster.height) {
    throw Error(ErrorKind::kSize, "PNG sample count does not match dimensions");
  }

  // Serialize rows big-endian as the format requires.
  const std::size_t bytes_per_sample = raster.bit_depth / 8;
  std::vector<png_byte> buffer(per_row * bytes_per_sample * raster.height);
  for (std::size_t i = 0; i < raster.samples.size(); ++i) {
    const std::uint16_t s = raster.samples[i];
    if (bytes_per_sample == 2) {
      buffer[2 * i] = static_cast<png_byte>(s >> 8);
      buffer[2 * i + 1] = static_cast<png_byte>(s & 0xff);
    } else {
      buffer[i] = static_cast<png_byte>(s);
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(raster.height));
  for (int y = 0; y < raster.height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        buffer.data() + per_row * bytes_per_sample * y;
  }

  FilePtr file = open_file(path, "wb");
  WriteHandles h;
  h.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                  silent_warning);
  if (h.png == nullptr) throw Error(ErrorKind::kIo, "png_create_write_struct");
  h.info = png_create_info_struct(h.png);
  if (h.info == nullptr) throw Error(ErrorKind::kIo, "png_create_info_struct");
  if (setjmp(png_jmpbuf(h.png))) {
    throw Error(ErrorKind::kIo, "failed writing " + path.string());
  }
  png_init_io(h.png, file.get());
  png_set_IHDR(h.png, h.info, static_cast<png_uint_32>(raster.width),
               static_cast<png_uint_32>(raster.height), raster.bit_depth,
               raster.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(h.png, h.info);
  png_write_image(h.png, rows.data());
  png_write_end(h.png, nullptr);
  if (std::fflush(file.get()) != 0) {
    throw Error(ErrorKind::kIo, "failed flushing " + path.string());
  }
}

}  // namespace samflow::png
