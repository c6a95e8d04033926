#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "samflow/types.h"

namespace samflow {

// One non-empty binary object mask with its cached statistics.
struct BinaryMask {
  BoolMap bits;
  std::int64_t area = 0;
  BBox bbox;
};

// Computes area and tight bbox. Throws kConsistency for an all-zero mask.
BinaryMask make_mask(BoolMap bits);

// Possibly-overlapping class-agnostic object masks of one frame, in file
// order. Pixels may be covered by zero, one or several masks.
struct RawMaskSet {
  int width = 0;
  int height = 0;
  std::vector<BinaryMask> masks;

  std::size_t size() const noexcept { return masks.size(); }
  // Appends a mask; dims must match the set.
  void add(BoolMap bits);
};

// Every pixel covered by one or more masks goes to its smallest-area covering
// mask (equal areas: lower raw index). Uncovered pixels form a background
// segment. Segment IDs are contiguous: masks that won at least one pixel in
// raw-index order, then background last.
Segmentation build_full_segmentation(const RawMaskSet& masks, int width,
                                     int height);

// count[k] = number of other masks sharing at least one pixel with mask k.
std::vector<int> overlap_counts(const RawMaskSet& masks);

struct KeyObjectRules {
  int min_height = 50;
  int max_height = 200;
  int min_width = 50;
  int max_width = 400;
  double min_fill = 0.5;  // mask area / bbox area
  int min_overlaps = 5;
};

struct KeyObject {
  BoolMap mask;       // bbox-sized crop
  Image image_crop;   // bbox-sized crop
  BBox bbox;          // in source-frame pixels
  int overlap_count = 0;
  int source_index = -1;
};

// Dimension gate, then fill-ratio gate, then overlap gate. Survivors are
// sorted by overlap count, descending (stable in raw-index order).
std::vector<KeyObject> select_key_objects(const RawMaskSet& masks,
                                          const Image& img,
                                          const KeyObjectRules& rules = {});

// True where the right or lower 4-neighbour carries a different ID.
BoolMap boundary_map(const Segmentation& seg);

// On-disk key-object cache. Each sample gets its own directory holding
// obj_<k>_rgb.png, obj_<k>_mask.png and index.json (bbox, overlap_count).
// Writes into one directory are serialized across threads.
std::filesystem::path write_key_object_cache(
    const std::filesystem::path& root, const std::string& sample,
    std::span<const KeyObject> objects);

// Loads every object listed in <sample_dir>/index.json.
std::vector<KeyObject> read_key_object_cache(
    const std::filesystem::path& sample_dir);

}  // namespace samflow
