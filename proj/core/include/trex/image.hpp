#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trex {

/// Dense row-major 2-D buffer. Value type, cheap to move.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {
    if (height < 0 || width < 0) throw std::invalid_argument("negative image dimension");
  }

  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  T& operator()(int y, int x) noexcept { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const noexcept { return data_[index(y, x)]; }

  T* row(int y) noexcept { return data_.data() + static_cast<std::size_t>(y) * width_; }
  const T* row(int y) const noexcept { return data_.data() + static_cast<std::size_t>(y) * width_; }

  std::span<T> pixels() noexcept { return data_; }
  std::span<const T> pixels() const noexcept { return data_; }

  [[nodiscard]] bool same_shape(const auto& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  bool operator==(const Image&) const = default;

 private:
  [[nodiscard]] std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using GrayImage = Image<std::uint8_t>;
using FloatImage = Image<float>;
using DoubleImage = Image<double>;
using MaskImage = Image<std::uint8_t>;

/// Thrown when two images that must agree in shape do not.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_same_shape(const auto& a, const auto& b, const std::string& what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw StructuralError(what + ": dimension mismatch (" + std::to_string(a.height()) + "x" +
                          std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                          std::to_string(b.width()) + ")");
  }
}

}  // namespace trex
