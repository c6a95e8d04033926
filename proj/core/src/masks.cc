#include "samflow/masks.h"

#include <algorithm>
#include <numeric>

#include "samflow/core.h"

namespace samflow {

BinaryMask make_mask(BoolMap bits) {
  int min_x = bits.width(), min_y = bits.height(), max_x = -1, max_y = -1;
  std::int64_t area = 0;
  for (int y = 0; y < bits.height(); ++y) {
    for (int x = 0; x < bits.width(); ++x) {
      if (bits(x, y) == 0) continue;
      bits(x, y) = 1;
      ++area;
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
  }
  if (area == 0) {
    throw Error(ErrorKind::kConsistency, "empty mask");
  }
  BinaryMask mask;
  mask.bits = std::move(bits);
  mask.area = area;
  mask.bbox = {min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
  return mask;
}

void RawMaskSet::add(BoolMap bits) {
  require_same_dims(bits.width(), bits.height(), width, height,
                    "RawMaskSet::add");
  masks.push_back(make_mask(std::move(bits)));
}

Segmentation build_full_segmentation(const RawMaskSet& masks, int width,
                                     int height) {
  if (masks.size() > 0) {
    require_same_dims(masks.width, masks.height, width, height,
                      "build_full_segmentation");
  }
  for (const BinaryMask& m : masks.masks) {
    require_same_dims(m.bits.width(), m.bits.height(), width, height,
                      "build_full_segmentation mask");
  }

  std::vector<int> order(masks.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return masks.masks[a].area < masks.masks[b].area;
  });

  // Raw-mask index per pixel; -1 = uncovered.
  Plane<int> owner(width, height, -1);
  for (int k : order) {
    const BinaryMask& m = masks.masks[k];
    for (int y = m.bbox.y; y < m.bbox.y + m.bbox.h; ++y) {
      for (int x = m.bbox.x; x < m.bbox.x + m.bbox.w; ++x) {
        if (m.bits(x, y) != 0 && owner(x, y) < 0) owner(x, y) = k;
      }
    }
  }

  std::vector<char> used(masks.size(), 0);
  bool any_background = false;
  for (int k : owner.values()) {
    if (k < 0) {
      any_background = true;
    } else {
      used[k] = 1;
    }
  }

  Segmentation seg;
  std::vector<int> id_of(masks.size(), -1);
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (!used[k]) continue;
    id_of[k] = static_cast<int>(seg.source_mask.size());
    seg.source_mask.push_back(static_cast<int>(k));
  }
  int background = -1;
  if (any_background) {
    background = static_cast<int>(seg.source_mask.size());
    seg.background_id = background;
    seg.source_mask.push_back(Segmentation::kBackgroundSource);
  }
  seg.num_segments = static_cast<int>(seg.source_mask.size());
  seg.ids = Plane<std::int32_t>(width, height);
  for (std::size_t i = 0; i < owner.size(); ++i) {
    seg.ids[i] = owner[i] < 0 ? background : id_of[owner[i]];
  }
  return seg;
}

namespace {

std::vector<std::uint64_t> pack_bits(const BoolMap& bits) {
  std::vector<std::uint64_t> words((bits.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] != 0) words[i / 64] |= std::uint64_t{1} << (i % 64);
  }
  return words;
}

bool boxes_intersect(const BBox& a, const BBox& b) {
  return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h &&
         b.y < a.y + a.h;
}

}  // namespace

std::vector<int> overlap_counts(const RawMaskSet& masks) {
  const std::size_t n = masks.size();
  std::vector<std::vector<std::uint64_t>> packed;
  packed.reserve(n);
  for (const BinaryMask& m : masks.masks) packed.push_back(pack_bits(m.bits));

  std::vector<int> counts(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!boxes_intersect(masks.masks[i].bbox, masks.masks[j].bbox)) continue;
      const auto& a = packed[i];
      const auto& b = packed[j];
      bool hit = false;
      for (std::size_t w = 0; w < a.size() && !hit; ++w) hit = (a[w] & b[w]) != 0;
      if (hit) {
        ++counts[i];
        ++counts[j];
      }
    }
  }
  return counts;
}

std::vector<KeyObject> select_key_objects(const RawMaskSet& masks,
                                          const Image& img,
                                          const KeyObjectRules& rules) {
  if (masks.size() > 0) {
    require_same_dims(img.width(), img.height(), masks.width, masks.height,
                      "select_key_objects");
  }
  const std::vector<int> overlaps = overlap_counts(masks);

  std::vector<KeyObject> out;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const BinaryMask& m = masks.masks[k];
    const BBox& b = m.bbox;
    if (b.h < rules.min_height || b.h > rules.max_height ||
        b.w < rules.min_width || b.w > rules.max_width) {
      continue;
    }
    if (static_cast<double>(m.area) <
        rules.min_fill * static_cast<double>(b.w) * b.h) {
      continue;
    }
    if (overlaps[k] < rules.min_overlaps) continue;

    KeyObject obj;
    obj.bbox = b;
    obj.overlap_count = overlaps[k];
    obj.source_index = static_cast<int>(k);
    obj.mask = BoolMap(b.w, b.h);
    obj.image_crop = Image(b.w, b.h, img.channels());
    for (int y = 0; y < b.h; ++y) {
      for (int x = 0; x < b.w; ++x) {
        obj.mask(x, y) = m.bits(b.x + x, b.y + y);
        for (int c = 0; c < img.channels(); ++c) {
          obj.image_crop.at(x, y, c) = img.at(b.x + x, b.y + y, c);
        }
      }
    }
    out.push_back(std::move(obj));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const KeyObject& a, const KeyObject& b) {
                     return a.overlap_count > b.overlap_count;
                   });
  return out;
}

BoolMap boundary_map(const Segmentation& seg) {
  BoolMap out(seg.width(), seg.height(), 0);
  for (int y = 0; y < seg.height(); ++y) {
    for (int x = 0; x < seg.width(); ++x) {
      const std::int32_t id = seg.ids(x, y);
      const bool right = x + 1 < seg.width() && seg.ids(x + 1, y) != id;
      const bool down = y + 1 < seg.height() && seg.ids(x, y + 1) != id;
      out(x, y) = (right || down) ? 1 : 0;
    }
  }
  return out;
}

}  // namespace samflow
