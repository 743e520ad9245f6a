#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pcoll/types.hpp"

namespace pcoll {

/// Basic element types a compute op can combine.
enum class ElementType : std::uint8_t { i32, i64, f64 };

/// `bor` is bitwise-or and is defined for integer types only.
enum class ReduceOp : std::uint8_t { sum, max, bor };

std::size_t element_size(ElementType t);

struct Segment {
  ElementType type = ElementType::f64;
  ReduceOp op = ReduceOp::sum;
  std::size_t count = 0;
};

/// Byte layout of a reduction buffer as a sequence of typed segments, each
/// with its own element-wise binary reduction.
class ReductionLayout {
 public:
  ReductionLayout() = default;
  explicit ReductionLayout(std::vector<Segment> segments);

  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t bytes() const { return bytes_; }

  /// dst[i] = dst[i] (op) src[i] for every element. Throws length_mismatch.
  void reduce_into(std::span<std::byte> dst, std::span<const std::byte> src) const;

  void fill_identity(std::span<std::byte> buf) const;
  Bytes identity() const;
  bool is_identity(std::span<const std::byte> buf) const;

 private:
  std::vector<Segment> segments_;
  std::size_t bytes_ = 0;
};

}  // namespace pcoll
