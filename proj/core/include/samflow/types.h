#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace samflow {

enum class ErrorKind {
  kInvalidArgument,
  kDimensionMismatch,
  kFormat,
  kSize,
  kConsistency,
  kDegenerate,
  kSingular,
  kNonFinite,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this type; kind() lets callers
// (and the CLI's structured error output) distinguish the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Dense row-major 2-D grid.
template <typename T>
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(checked_area(width, height)), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  template <typename U>
  bool same_dims(const Plane<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Plane& other) const = default;

 private:
  static long long checked_area(int width, int height) {
    if (width < 0 || height < 0) {
      throw Error(ErrorKind::kInvalidArgument, "negative grid dimensions");
    }
    return static_cast<long long>(width) * height;
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using BoolMap = Plane<std::uint8_t>;

// Sample coordinate in pixel units. x points right, y points down, and pixel
// centers sit on integer coordinates.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Vec2&) const = default;
};

// Interleaved multi-channel image with intensities in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  // Channel mean at a pixel.
  double gray(int x, int y) const;

  // Throws kNonFinite / kInvalidArgument when a value is not finite or
  // falls outside [0, 1].
  void validate() const;

  bool operator==(const Image&) const = default;

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
  std::vector<double> data_;
};

// Dense displacement field. An empty `valid` plane means every pixel is valid.
struct FlowField {
  Plane<double> u;
  Plane<double> v;
  BoolMap valid;

  FlowField() = default;
  FlowField(int width, int height) : u(width, height), v(width, height) {}

  int width() const noexcept { return u.width(); }
  int height() const noexcept { return u.height(); }
  bool empty() const noexcept { return u.empty(); }
  bool has_valid_mask() const noexcept { return !valid.empty(); }
  bool is_valid(int x, int y) const {
    return valid.empty() || valid(x, y) != 0;
  }
  Vec2 at(int x, int y) const { return {u(x, y), v(x, y)}; }
  void set(int x, int y, Vec2 d) {
    u(x, y) = d.x;
    v(x, y) = d.y;
  }

  void validate() const;

  bool operator==(const FlowField&) const = default;
};

// Partition of the pixel grid into segments. Every pixel carries exactly one
// ID in [0, num_segments).
struct Segmentation {
  static constexpr int kBackgroundSource = -1;

  Plane<std::int32_t> ids;
  int num_segments = 0;
  std::optional<int> background_id;
  // Segment ID -> originating raw-mask index, or kBackgroundSource.
  std::vector<int> source_mask;

  int width() const noexcept { return ids.width(); }
  int height() const noexcept { return ids.height(); }

  // Single segment covering a width x height grid.
  static Segmentation uniform(int width, int height);

  // Throws kConsistency when an ID falls outside [0, num_segments).
  void validate() const;
};

// Per-pixel occlusion estimate (true = occluded).
struct OcclusionMap {
  BoolMap occluded;

  int width() const noexcept { return occluded.width(); }
  int height() const noexcept { return occluded.height(); }
  bool operator()(int x, int y) const { return occluded(x, y) != 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (std::uint8_t b : occluded.values()) n += b != 0;
    return n;
  }
};

struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool operator==(const BBox&) const = default;
};

}  // namespace samflow
