#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>

#include "mamba/memory.hpp"

namespace mamba {

/// Dense row-major f32 matrix used for weights (rows = fan-in, cols = fan-out).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<float>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Buffer<float> data_;
};

/// An L x D token sequence: L tokens, D channels per token. D >= 1 always;
/// L may be zero.
class FeatureSequence {
 public:
  FeatureSequence() : FeatureSequence(0, 1) {}
  FeatureSequence(std::size_t length, std::size_t channels);

  static FeatureSequence from_rows(std::initializer_list<std::initializer_list<float>> rows);

  std::size_t length() const noexcept { return length_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return length_ == 0; }

  float& operator()(std::size_t t, std::size_t c) noexcept { return data_[t * channels_ + c]; }
  float operator()(std::size_t t, std::size_t c) const noexcept { return data_[t * channels_ + c]; }

  std::span<float> row(std::size_t t) noexcept { return {data_.data() + t * channels_, channels_}; }
  std::span<const float> row(std::size_t t) const noexcept {
    return {data_.data() + t * channels_, channels_};
  }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

  bool operator==(const FeatureSequence&) const = default;

 private:
  std::size_t length_;
  std::size_t channels_;
  Buffer<float> data_;
};

}  // namespace mamba
