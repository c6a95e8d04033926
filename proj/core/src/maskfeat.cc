#include "samflow/maskfeat.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

#include "samflow/core.h"
#include "samflow/io.h"

namespace samflow {

FeatureMap::FeatureMap(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels <= 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "feature map needs non-negative dims and channels > 0");
  }
  data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                   static_cast<std::size_t>(channels),
               fill);
}

void FeatureMap::validate() const {
  for (float v : data_) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kNonFinite, "feature map has a non-finite value");
    }
  }
}

PointwiseTransform PointwiseTransform::seeded(int in_channels, int out_channels,
                                              std::uint64_t seed) {
  if (in_channels <= 0 || out_channels <= 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "pointwise transform needs positive channel counts");
  }
  PointwiseTransform t;
  t.in_channels = in_channels;
  t.out_channels = out_channels;
  std::mt19937_64 rng(seed);
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_channels));
  std::uniform_real_distribution<float> dist(-bound, bound);
  t.weight.resize(static_cast<std::size_t>(in_channels) * out_channels);
  for (float& w : t.weight) w = dist(rng);
  t.bias.resize(static_cast<std::size_t>(out_channels));
  for (float& b : t.bias) b = dist(rng);
  return t;
}

void PointwiseTransform::validate() const {
  if (in_channels <= 0 || out_channels <= 0 ||
      weight.size() != static_cast<std::size_t>(in_channels) * out_channels ||
      bias.size() != static_cast<std::size_t>(out_channels)) {
    throw Error(ErrorKind::kSize, "pointwise transform parameter sizes");
  }
  for (float w : weight) {
    if (!std::isfinite(w)) {
      throw Error(ErrorKind::kNonFinite, "non-finite transform weight");
    }
  }
  for (float b : bias) {
    if (!std::isfinite(b)) {
      throw Error(ErrorKind::kNonFinite, "non-finite transform bias");
    }
  }
}

FeatureMap PointwiseTransform::apply(const FeatureMap& f) const {
  validate();
  if (f.channels() != in_channels) {
    throw Error(ErrorKind::kDimensionMismatch,
                "pointwise transform expects " + std::to_string(in_channels) +
                    " channels, got " + std::to_string(f.channels()));
  }
  FeatureMap out(f.width(), f.height(), out_channels);
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      for (int o = 0; o < out_channels; ++o) {
        const float* w = &weight[static_cast<std::size_t>(o) * in_channels];
        float acc = bias[o];
        for (int i = 0; i < in_channels; ++i) acc += w[i] * f.at(x, y, i);
        out.at(x, y, o) = acc;
      }
    }
  }
  return out;
}

FeatureMap segment_max_pool(const FeatureMap& f, const Segmentation& seg) {
  require_same_dims(f.width(), f.height(), seg.width(), seg.height(),
                    "segment_max_pool");
  seg.validate();
  const int C = f.channels();
  std::vector<float> maxima(static_cast<std::size_t>(seg.num_segments) * C,
                            -std::numeric_limits<float>::infinity());
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      float* m = &maxima[static_cast<std::size_t>(seg.ids(x, y)) * C];
      for (int c = 0; c < C; ++c) m[c] = std::max(m[c], f.at(x, y, c));
    }
  }
  FeatureMap out(f.width(), f.height(), C);
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      const float* m = &maxima[static_cast<std::size_t>(seg.ids(x, y)) * C];
      for (int c = 0; c < C; ++c) out.at(x, y, c) = m[c];
    }
  }
  return out;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  require_same_dims(a.width(), a.height(), b.width(), b.height(),
                    "concat_channels");
  FeatureMap out(a.width(), a.height(), a.channels() + b.channels());
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      for (int c = 0; c < a.channels(); ++c) out.at(x, y, c) = a.at(x, y, c);
      for (int c = 0; c < b.channels(); ++c) {
        out.at(x, y, a.channels() + c) = b.at(x, y, c);
      }
    }
  }
  return out;
}

namespace {

void relu_inplace(FeatureMap& f) {
  for (float& v : f.data()) v = std::max(v, 0.0f);
}

}  // namespace

FeatureMap mask_feature(const FeatureMap& f, const Segmentation& seg,
                        const PointwiseTransform& t1,
                        const PointwiseTransform& t2,
                        const MaskFeatureConfig& cfg) {
  if (t2.in_channels != 2 * t1.out_channels) {
    throw Error(ErrorKind::kDimensionMismatch,
                "second transform must take twice the first's output channels");
  }
  FeatureMap h = t1.apply(f);
  if (cfg.relu_before_pool) relu_inplace(h);
  const FeatureMap pooled = segment_max_pool(h, seg);
  FeatureMap g = t2.apply(concat_channels(h, pooled));
  relu_inplace(g);
  return g;
}

FeatureMap correlation_volume(const FeatureMap& f1, const FeatureMap& f2w,
                              int radius) {
  if (radius < 0) {
    throw Error(ErrorKind::kInvalidArgument, "correlation radius must be >= 0");
  }
  require_same_dims(f1.width(), f1.height(), f2w.width(), f2w.height(),
                    "correlation_volume");
  if (f1.channels() != f2w.channels()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "correlation inputs have different channel counts");
  }
  const int side = 2 * radius + 1;
  const int C = f1.channels();
  const int W = f1.width(), H = f1.height();
  FeatureMap out(W, H, side * side);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int qx = x + dx, qy = y + dy;
          float dot = 0.0f;
          if (qx >= 0 && qy >= 0 && qx < W && qy < H) {
            for (int c = 0; c < C; ++c) dot += f1.at(x, y, c) * f2w.at(qx, qy, c);
          }
          out.at(x, y, (dy + radius) * side + (dx + radius)) =
              dot / static_cast<float>(C);
        }
      }
    }
  }
  return out;
}

// --- weight files -----------------------------------------------------------

namespace {

using nlohmann::json;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::size_t element_count(const std::vector<std::int64_t>& shape) {
  std::size_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw Error(ErrorKind::kFormat, "negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const TensorMap& tensors) {
  json header = json::object();
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (t.values.size() != element_count(t.shape)) {
      throw Error(ErrorKind::kSize, "tensor '" + name + "' shape/value mismatch");
    }
    const std::size_t bytes = t.values.size() * sizeof(float);
    header[name] = {{"dtype", "F32"},
                    {"shape", t.shape},
                    {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : tensors) {
    for (float v : t.values) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

TensorMap decode_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw Error(ErrorKind::kSize, "weight file truncated");
  const std::uint64_t n = get_u64(bytes);
  if (n > bytes.size() - 8) {
    throw Error(ErrorKind::kSize, "weight header length exceeds file size");
  }
  const auto payload = bytes.subspan(8 + n);
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("weight header: ") + e.what());
  }
  if (!header.is_object()) {
    throw Error(ErrorKind::kFormat, "weight header must be a JSON object");
  }
  TensorMap out;
  try {
    for (const auto& [name, entry] : header.items()) {
      if (name == "__metadata__") continue;
      if (entry.at("dtype").get<std::string>() != "F32") {
        throw Error(ErrorKind::kFormat, "tensor '" + name + "' is not F32");
      }
      Tensor t;
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offs = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
      if (offs.size() != 2 || offs[0] > offs[1] || offs[1] > payload.size()) {
        throw Error(ErrorKind::kSize, "tensor '" + name + "' offsets out of range");
      }
      const std::size_t count = element_count(t.shape);
      if (offs[1] - offs[0] != count * sizeof(float)) {
        throw Error(ErrorKind::kSize, "tensor '" + name + "' byte size mismatch");
      }
      t.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
          bits |= static_cast<std::uint32_t>(payload[offs[0] + 4 * i + b]) << (8 * b);
        }
        t.values[i] = std::bit_cast<float>(bits);
      }
      out.emplace(name, std::move(t));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("weight header: ") + e.what());
  }
  return out;
}

void write_weights(const std::filesystem::path& path, const TensorMap& tensors) {
  write_binary_file(path, encode_weights(tensors));
}

TensorMap read_weights(const std::filesystem::path& path) {
  return decode_weights(read_binary_file(path));
}

void store_transform(TensorMap& tensors, const std::string& prefix,
                     const PointwiseTransform& t) {
  t.validate();
  tensors[prefix + ".weight"] = {{t.out_channels, t.in_channels}, t.weight};
  tensors[prefix + ".bias"] = {{t.out_channels}, t.bias};
}

PointwiseTransform load_transform(const TensorMap& tensors,
                                  const std::string& prefix) {
  const auto w = tensors.find(prefix + ".weight");
  const auto b = tensors.find(prefix + ".bias");
  if (w == tensors.end() || b == tensors.end()) {
    throw Error(ErrorKind::kFormat, "missing tensors for '" + prefix + "'");
  }
  if (w->second.shape.size() != 2 || b->second.shape.size() != 1 ||
      b->second.shape[0] != w->second.shape[0]) {
    throw Error(ErrorKind::kSize, "bad tensor shapes for '" + prefix + "'");
  }
  PointwiseTransform t;
  t.out_channels = static_cast<int>(w->second.shape[0]);
  t.in_channels = static_cast<int>(w->second.shape[1]);
  t.weight = w->second.values;
  t.bias = b->second.values;
  t.validate();
  return t;
}

}  // namespace samflow
