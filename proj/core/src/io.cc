#include "samflow/io.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "png_io.h"

namespace samflow {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xff));
  }
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  return static_cast<std::uint32_t>(bytes[at]) |
         (static_cast<std::uint32_t>(bytes[at + 1]) << 8) |
         (static_cast<std::uint32_t>(bytes[at + 2]) << 16) |
         (static_cast<std::uint32_t>(bytes[at + 3]) << 24);
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_binary_file(path, std::span(reinterpret_cast<const std::uint8_t*>(
                                        text.data()),
                                    text.size()));
}

// --- .flo -------------------------------------------------------------------

std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + flow.u.size() * 8);
  put_u32(out, std::bit_cast<std::uint32_t>(kFloTag));
  put_u32(out, static_cast<std::uint32_t>(flow.width()));
  put_u32(out, static_cast<std::uint32_t>(flow.height()));
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(flow.u(x, y))));
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(flow.v(x, y))));
    }
  }
  return out;
}

FlowField decode_flo(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw Error(ErrorKind::kSize, ".flo file truncated before the tag");
  }
  const float tag = std::bit_cast<float>(get_u32(bytes, 0));
  if (tag != kFloTag) {
    throw Error(ErrorKind::kFormat, ".flo tag mismatch (expected PIEH)");
  }
  if (bytes.size() < 12) {
    throw Error(ErrorKind::kSize, ".flo file truncated in the header");
  }
  const auto width = static_cast<std::int32_t>(get_u32(bytes, 4));
  const auto height = static_cast<std::int32_t>(get_u32(bytes, 8));
  if (width < 0 || height < 0 || width > (1 << 20) || height > (1 << 20)) {
    throw Error(ErrorKind::kFormat, ".flo header has implausible dimensions");
  }
  const std::size_t expected =
      12 + static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 8;
  if (bytes.size() < expected) {
    throw Error(ErrorKind::kSize, ".flo payload truncated: " +
                                      std::to_string(bytes.size()) + " of " +
                                      std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    throw Error(ErrorKind::kFormat, ".flo file has trailing data");
  }
  FlowField flow(width, height);
  std::size_t at = 12;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      flow.u(x, y) = std::bit_cast<float>(get_u32(bytes, at));
      flow.v(x, y) = std::bit_cast<float>(get_u32(bytes, at + 4));
      at += 8;
    }
  }
  return flow;
}

FlowField read_flo(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  try {
    return decode_flo(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  flow.validate();
  write_binary_file(path, encode_flo(flow));
}

// --- KITTI PNG --------------------------------------------------------------

FlowField read_kitti_flow_png(const std::filesystem::path& path) {
  const png::Raster r = png::read(path);
  if (r.bit_depth != 16) {
    throw Error(ErrorKind::kFormat,
                path.string() + ": KITTI flow PNG must be 16-bit, got " +
                    std::to_string(r.bit_depth));
  }
  if (r.channels != 3) {
    throw Error(ErrorKind::kFormat,
                path.string() + ": KITTI flow PNG must have 3 channels");
  }
  FlowField flow(r.width, r.height);
  flow.valid = BoolMap(r.width, r.height, 0);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * r.width + x) * 3;
      flow.u(x, y) = (static_cast<double>(r.samples[i]) - 32768.0) / 64.0;
      flow.v(x, y) = (static_cast<double>(r.samples[i + 1]) - 32768.0) / 64.0;
      flow.valid(x, y) = r.samples[i + 2] > 0 ? 1 : 0;
    }
  }
  return flow;
}

void write_kitti_flow_png(const std::filesystem::path& path,
                          const FlowField& flow) {
  flow.validate();
  png::Raster r;
  r.width = flow.width();
  r.height = flow.height();
  r.channels = 3;
  r.bit_depth = 16;
  r.samples.resize(flow.u.size() * 3);
  auto quantize = [](double d) {
    const double q = std::round(d * 64.0 + 32768.0);
    return static_cast<std::uint16_t>(std::clamp(q, 0.0, 65535.0));
  };
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * r.width + x) * 3;
      r.samples[i] = quantize(flow.u(x, y));
      r.samples[i + 1] = quantize(flow.v(x, y));
      r.samples[i + 2] = flow.is_valid(x, y) ? 1 : 0;
    }
  }
  png::write(path, r);
}

FlowField read_flow(const std::filesystem::path& path) {
  if (path.extension() == ".png") return read_kitti_flow_png(path);
  return read_flo(path);
}

// --- masks ------------------------------------------------------------------

std::vector<std::int64_t> encode_rle(const BoolMap& mask) {
  std::vector<std::int64_t> counts;
  std::uint8_t current = 0;
  std::int64_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      const std::uint8_t bit = mask(x, y) != 0 ? 1 : 0;
      if (bit != current) {
        counts.push_back(run);
        run = 0;
        current = bit;
      }
      ++run;
    }
  }
  counts.push_back(run);
  return counts;
}

BoolMap decode_rle(std::span<const std::int64_t> counts, int width,
                   int height) {
  const std::int64_t total = static_cast<std::int64_t>(width) * height;
  std::int64_t sum = 0;
  for (std::int64_t c : counts) {
    if (c < 0) throw Error(ErrorKind::kFormat, "negative RLE run length");
    sum += c;
    if (sum > total) break;
  }
  if (sum != total) {
    throw Error(ErrorKind::kFormat,
                "RLE counts sum to " + std::to_string(sum) + ", expected " +
                    std::to_string(total));
  }
  BoolMap mask(width, height, 0);
  std::int64_t k = 0;
  std::uint8_t bit = 0;
  for (std::int64_t run : counts) {
    for (std::int64_t i = 0; i < run; ++i, ++k) {
      if (bit != 0) {
        const int x = static_cast<int>(k / height);
        const int y = static_cast<int>(k % height);
        mask(x, y) = 1;
      }
    }
    bit ^= 1;
  }
  return mask;
}

MaskFileRecord to_record(const BinaryMask& mask) {
  MaskFileRecord rec;
  rec.height = mask.bits.height();
  rec.width = mask.bits.width();
  rec.counts = encode_rle(mask.bits);
  rec.area = mask.area;
  rec.bbox = mask.bbox;
  return rec;
}

namespace {

using nlohmann::json;

std::int64_t as_integer(const json& value, const std::string& what) {
  if (value.is_number_integer()) return value.get<std::int64_t>();
  if (value.is_number()) return std::llround(value.get<double>());
  throw Error(ErrorKind::kFormat, what + " must be a number");
}

BinaryMask parse_record(const json& rec, std::size_t index) {
  const std::string where = "mask record " + std::to_string(index);
  if (!rec.is_object()) throw Error(ErrorKind::kFormat, where + " is not an object");
  const json& rle = rec.contains("segmentation") ? rec.at("segmentation") : rec;
  if (!rle.is_object() || !rle.contains("size") || !rle.contains("counts")) {
    throw Error(ErrorKind::kFormat, where + " lacks size/counts");
  }
  const json& size = rle.at("size");
  if (!size.is_array() || size.size() != 2) {
    throw Error(ErrorKind::kFormat, where + ": size must be [height, width]");
  }
  const auto height = static_cast<int>(as_integer(size[0], where + " height"));
  const auto width = static_cast<int>(as_integer(size[1], where + " width"));
  if (height <= 0 || width <= 0) {
    throw Error(ErrorKind::kFormat, where + ": non-positive size");
  }
  const json& counts_json = rle.at("counts");
  if (counts_json.is_string()) {
    throw Error(ErrorKind::kFormat,
                where + ": compressed RLE strings are not supported");
  }
  if (!counts_json.is_array()) {
    throw Error(ErrorKind::kFormat, where + ": counts must be an array");
  }
  std::vector<std::int64_t> counts;
  counts.reserve(counts_json.size());
  for (const json& c : counts_json) counts.push_back(as_integer(c, where + " count"));

  BoolMap bits;
  try {
    bits = decode_rle(counts, width, height);
  } catch (const Error& e) {
    throw Error(e.kind(), where + ": " + e.what());
  }
  BinaryMask mask;
  try {
    mask = make_mask(std::move(bits));
  } catch (const Error&) {
    throw Error(ErrorKind::kConsistency, where + ": empty mask");
  }

  if (rec.contains("area")) {
    const std::int64_t area = as_integer(rec.at("area"), where + " area");
    if (area != mask.area) {
      throw Error(ErrorKind::kConsistency,
                  where + ": area " + std::to_string(area) +
                      " does not match decoded " + std::to_string(mask.area));
    }
  }
  if (rec.contains("bbox")) {
    const json& b = rec.at("bbox");
    if (!b.is_array() || b.size() != 4) {
      throw Error(ErrorKind::kFormat, where + ": bbox must be [x, y, w, h]");
    }
    const BBox box{static_cast<int>(as_integer(b[0], where + " bbox")),
                   static_cast<int>(as_integer(b[1], where + " bbox")),
                   static_cast<int>(as_integer(b[2], where + " bbox")),
                   static_cast<int>(as_integer(b[3], where + " bbox"))};
    if (!(box == mask.bbox)) {
      throw Error(ErrorKind::kConsistency,
                  where + ": bbox does not match the decoded mask");
    }
  }
  return mask;
}

}  // namespace

RawMaskSet parse_masks(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kFormat, std::string("mask JSON: ") + e.what());
  }
  const json* list = &doc;
  if (doc.is_object()) {
    if (doc.contains("masks")) {
      list = &doc.at("masks");
    } else if (doc.contains("annotations")) {
      list = &doc.at("annotations");
    }
  }
  if (!list->is_array()) {
    throw Error(ErrorKind::kFormat, "mask JSON must be a list of records");
  }
  RawMaskSet set;
  for (std::size_t i = 0; i < list->size(); ++i) {
    BinaryMask mask = parse_record((*list)[i], i);
    if (set.size() == 0) {
      set.width = mask.bits.width();
      set.height = mask.bits.height();
    } else if (mask.bits.width() != set.width ||
               mask.bits.height() != set.height) {
      throw Error(ErrorKind::kFormat,
                  "mask record " + std::to_string(i) + " has a different size");
    }
    set.masks.push_back(std::move(mask));
  }
  return set;
}

RawMaskSet read_masks(const std::filesystem::path& path) {
  try {
    return parse_masks(read_text_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string format_masks(const RawMaskSet& masks) {
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const BinaryMask& m : masks.masks) {
    const MaskFileRecord rec = to_record(m);
    nlohmann::ordered_json j;
    j["segmentation"]["size"] = {rec.height, rec.width};
    j["segmentation"]["counts"] = rec.counts;
    j["area"] = rec.area;
    j["bbox"] = {rec.bbox.x, rec.bbox.y, rec.bbox.w, rec.bbox.h};
    list.push_back(std::move(j));
  }
  return list.dump() + "\n";
}

void write_masks(const std::filesystem::path& path, const RawMaskSet& masks) {
  write_text_file(path, format_masks(masks));
}

// --- PNG images ---------------------------------------------------------------

Image read_image_png(const std::filesystem::path& path) {
  const png::Raster r = png::read(path);
  const int out_channels = r.channels <= 2 ? 1 : 3;
  const double scale = r.bit_depth == 16 ? 65535.0 : 255.0;
  Image img(r.width, r.height, out_channels);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      const std::size_t base =
          (static_cast<std::size_t>(y) * r.width + x) * r.channels;
      for (int c = 0; c < out_channels; ++c) {
        img.at(x, y, c) = r.samples[base + c] / scale;
      }
    }
  }
  return img;
}

void write_image_png(const std::filesystem::path& path, const Image& img,
                     int bit_depth) {
  img.validate();
  png::Raster r;
  r.width = img.width();
  r.height = img.height();
  r.channels = img.channels();
  r.bit_depth = bit_depth;
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  r.samples.resize(img.values().size());
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    r.samples[i] = static_cast<std::uint16_t>(std::lround(img.values()[i] * scale));
  }
  png::write(path, r);
}

BoolMap read_mask_png(const std::filesystem::path& path) {
  const png::Raster r = png::read(path);
  BoolMap mask(r.width, r.height, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = r.samples[i * r.channels] != 0 ? 1 : 0;
  }
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const BoolMap& mask) {
  png::Raster r;
  r.width = mask.width();
  r.height = mask.height();
  r.channels = 1;
  r.bit_depth = 8;
  r.samples.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) r.samples[i] = mask[i] ? 255 : 0;
  png::write(path, r);
}

void write_segmentation_png(const std::filesystem::path& path,
                            const Segmentation& seg) {
  if (seg.num_segments > 65536) {
    throw Error(ErrorKind::kInvalidArgument,
                "too many segments for a 16-bit ID PNG");
  }
  png::Raster r;
  r.width = seg.width();
  r.height = seg.height();
  r.channels = 1;
  r.bit_depth = 16;
  r.samples.resize(seg.ids.size());
  for (std::size_t i = 0; i < seg.ids.size(); ++i) {
    r.samples[i] = static_cast<std::uint16_t>(seg.ids[i]);
  }
  png::write(path, r);
}

Segmentation read_segmentation_png(const std::filesystem::path& path) {
  const png::Raster r = png::read(path);
  Segmentation seg;
  seg.ids = Plane<std::int32_t>(r.width, r.height);
  int max_id = -1;
  for (std::size_t i = 0; i < seg.ids.size(); ++i) {
    seg.ids[i] = r.samples[i * r.channels];
    max_id = std::max(max_id, static_cast<int>(seg.ids[i]));
  }
  seg.num_segments = max_id + 1;
  seg.source_mask.assign(static_cast<std::size_t>(seg.num_segments),
                         Segmentation::kBackgroundSource);
  return seg;
}

void write_gray_png(const std::filesystem::path& path,
                    const Plane<double>& normalized) {
  png::Raster r;
  r.width = normalized.width();
  r.height = normalized.height();
  r.channels = 1;
  r.bit_depth = 8;
  r.samples.resize(normalized.size());
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const double v = std::clamp(normalized[i], 0.0, 1.0);
    r.samples[i] = static_cast<std::uint16_t>(std::lround(v * 255.0));
  }
  png::write(path, r);
}

}  // namespace samflow
