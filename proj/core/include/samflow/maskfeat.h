#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "samflow/types.h"

namespace samflow {

// Channel-interleaved feature map: value(x, y, c).
class FeatureMap {
 public:
  FeatureMap() = default;
  // Throws kInvalidArgument unless channels > 0 and dims are non-negative.
  FeatureMap(int width, int height, int channels, float fill = 0.0f);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }

  float& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  float at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  // Throws kNonFinite on any NaN / inf.
  void validate() const;

  bool operator==(const FeatureMap&) const = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// 1x1 convolution: out = W in + b, W is out_channels x in_channels row-major.
struct PointwiseTransform {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<float> weight;
  std::vector<float> bias;

  // Uniform(-1/sqrt(in), 1/sqrt(in)) weights and biases from mt19937_64.
  static PointwiseTransform seeded(int in_channels, int out_channels,
                                   std::uint64_t seed);

  // Throws kSize / kNonFinite on malformed parameters.
  void validate() const;
  // Throws kDimensionMismatch when f.channels() != in_channels.
  FeatureMap apply(const FeatureMap& f) const;
};

// output(p, c) = max over q in segment seg(p) of f(q, c).
FeatureMap segment_max_pool(const FeatureMap& f, const Segmentation& seg);

// Concatenates along channels: [a | b].
FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);

struct MaskFeatureConfig {
  bool relu_before_pool = true;
};

// h = relu(t1(f)); g_hat = segment_max_pool(h, seg);
// g = relu(t2(concat(h, g_hat))). With relu_before_pool off, h = t1(f).
FeatureMap mask_feature(const FeatureMap& f, const Segmentation& seg,
                        const PointwiseTransform& t1,
                        const PointwiseTransform& t2,
                        const MaskFeatureConfig& cfg = {});

inline constexpr int kCorrelationRadius = 4;

// out(p, (dy + r)(2r + 1) + (dx + r)) = <f1(p), f2w(p + (dx, dy))> / channels
// for dx, dy in [-r, r]; neighbours outside the frame contribute 0.
FeatureMap correlation_volume(const FeatureMap& f1, const FeatureMap& f2w,
                              int radius = kCorrelationRadius);

// --- weight files -----------------------------------------------------------
//
// Layout: u64 little-endian header length N, N bytes of JSON
//   {"<name>": {"dtype": "F32", "shape": [...], "data_offsets": [b, e]}, ...}
// then the little-endian float32 payload; offsets are relative to the
// payload start.

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

using TensorMap = std::map<std::string, Tensor>;

std::vector<std::uint8_t> encode_weights(const TensorMap& tensors);
TensorMap decode_weights(std::span<const std::uint8_t> bytes);
void write_weights(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap read_weights(const std::filesystem::path& path);

// "<prefix>.weight" [out, in] and "<prefix>.bias" [out].
void store_transform(TensorMap& tensors, const std::string& prefix,
                     const PointwiseTransform& t);
PointwiseTransform load_transform(const TensorMap& tensors,
                                  const std::string& prefix);

}  // namespace samflow
