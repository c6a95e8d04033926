#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "samflow/masks.h"
#include "samflow/report.h"
#include "samflow/types.h"

namespace samflow {

// --- Middlebury .flo --------------------------------------------------------
// float32 tag 202021.25 ("PIEH"), int32 width, int32 height, then row-major
// interleaved float32 (u, v); everything little-endian.

inline constexpr float kFloTag = 202021.25f;

FlowField read_flo(const std::filesystem::path& path);
void write_flo(const std::filesystem::path& path, const FlowField& flow);
std::vector<std::uint8_t> encode_flo(const FlowField& flow);
FlowField decode_flo(std::span<const std::uint8_t> bytes);

// --- KITTI 16-bit flow PNG --------------------------------------------------
// u = (R - 2^15) / 64, v = (G - 2^15) / 64, valid = B > 0.

FlowField read_kitti_flow_png(const std::filesystem::path& path);
void write_kitti_flow_png(const std::filesystem::path& path,
                          const FlowField& flow);

// Reads .flo or KITTI .png depending on the extension.
FlowField read_flow(const std::filesystem::path& path);

// --- SAM mask records -------------------------------------------------------
// Uncompressed COCO RLE: column-major runs, starting with the zero run.

struct MaskFileRecord {
  int height = 0;
  int width = 0;
  std::vector<std::int64_t> counts;
  std::int64_t area = 0;
  BBox bbox;
};

std::vector<std::int64_t> encode_rle(const BoolMap& mask);
// Throws kFormat when the counts do not sum to width * height.
BoolMap decode_rle(std::span<const std::int64_t> counts, int width,
                   int height);
MaskFileRecord to_record(const BinaryMask& mask);

// Accepts a JSON array of records, or an object with a "masks" or
// "annotations" array. Each record is either flat {size, counts, area, bbox}
// or SAM-style {segmentation: {size, counts}, area, bbox, ...}. area and bbox
// are optional but verified when present (kConsistency on mismatch). Empty
// masks are rejected with kConsistency.
RawMaskSet parse_masks(std::string_view json_text);
RawMaskSet read_masks(const std::filesystem::path& path);
std::string format_masks(const RawMaskSet& masks);
void write_masks(const std::filesystem::path& path, const RawMaskSet& masks);

// --- PNG images and maps ----------------------------------------------------

// 8- or 16-bit gray / gray+alpha / RGB / RGBA; alpha is dropped and values
// normalized to [0, 1].
Image read_image_png(const std::filesystem::path& path);
// Quantizes to `bit_depth` (8 or 16) with round-to-nearest.
void write_image_png(const std::filesystem::path& path, const Image& img,
                     int bit_depth = 8);

// Nonzero first channel -> 1.
BoolMap read_mask_png(const std::filesystem::path& path);
// 8-bit gray, 0 / 255.
void write_mask_png(const std::filesystem::path& path, const BoolMap& mask);

// 16-bit gray segment IDs.
void write_segmentation_png(const std::filesystem::path& path,
                            const Segmentation& seg);
// num_segments = max ID + 1; provenance is unknown (kBackgroundSource).
Segmentation read_segmentation_png(const std::filesystem::path& path);

// 8-bit gray rendering of values already normalized to [0, 1].
void write_gray_png(const std::filesystem::path& path,
                    const Plane<double>& normalized);

// Whole-file helpers.
std::string read_text_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace samflow
