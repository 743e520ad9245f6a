#include "pcoll/reduce.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <string>

namespace pcoll {

namespace {

template <typename T>
T load(const std::byte* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void store(std::byte* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

template <typename T>
T lowest() {
  if constexpr (std::is_floating_point_v<T>) {
    return -std::numeric_limits<T>::infinity();
  } else {
    return std::numeric_limits<T>::min();
  }
}

template <typename T>
void reduce_segment(ReduceOp op, std::byte* dst, const std::byte* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    T a = load<T>(dst + i * sizeof(T));
    T b = load<T>(src + i * sizeof(T));
    T r{};
    switch (op) {
      case ReduceOp::sum:
        if constexpr (std::is_integral_v<T>) {
          using U = std::make_unsigned_t<T>;
          r = static_cast<T>(static_cast<U>(a) + static_cast<U>(b));
        } else {
          r = a + b;
        }
        break;
      case ReduceOp::max:
        r = b > a ? b : a;
        break;
      case ReduceOp::bor:
        if constexpr (std::is_integral_v<T>) r = a | b;
        break;
    }
    store<T>(dst + i * sizeof(T), r);
  }
}

template <typename T>
void fill_segment(ReduceOp op, std::byte* dst, std::size_t n) {
  T v = op == ReduceOp::max ? lowest<T>() : T{};
  for (std::size_t i = 0; i < n; ++i) store<T>(dst + i * sizeof(T), v);
}

}  // namespace

std::size_t element_size(ElementType t) {
  switch (t) {
    case ElementType::i32: return 4;
    case ElementType::i64: return 8;
    case ElementType::f64: return 8;
  }
  return 0;
}

ReductionLayout::ReductionLayout(std::vector<Segment> segments) : segments_(std::move(segments)) {
  for (const auto& s : segments_) {
    if (s.op == ReduceOp::bor && s.type == ElementType::f64) {
      throw Error(ErrorCode::invalid_argument, "bitwise-or is undefined for f64");
    }
    bytes_ += s.count * element_size(s.type);
  }
}

void ReductionLayout::reduce_into(std::span<std::byte> dst, std::span<const std::byte> src) const {
  if (dst.size() != bytes_ || src.size() != bytes_) {
    throw Error(ErrorCode::length_mismatch, "reduction over " + std::to_string(dst.size()) +
                                                " and " + std::to_string(src.size()) +
                                                " bytes, layout has " + std::to_string(bytes_));
  }
  std::size_t off = 0;
  for (const auto& s : segments_) {
    std::byte* d = dst.data() + off;
    const std::byte* r = src.data() + off;
    switch (s.type) {
      case ElementType::i32: reduce_segment<std::int32_t>(s.op, d, r, s.count); break;
      case ElementType::i64: reduce_segment<std::int64_t>(s.op, d, r, s.count); break;
      case ElementType::f64: reduce_segment<double>(s.op, d, r, s.count); break;
    }
    off += s.count * element_size(s.type);
  }
}

void ReductionLayout::fill_identity(std::span<std::byte> buf) const {
  if (buf.size() != bytes_) throw Error(ErrorCode::length_mismatch, "identity fill");
  std::size_t off = 0;
  for (const auto& s : segments_) {
    std::byte* d = buf.data() + off;
    switch (s.type) {
      case ElementType::i32: fill_segment<std::int32_t>(s.op, d, s.count); break;
      case ElementType::i64: fill_segment<std::int64_t>(s.op, d, s.count); break;
      case ElementType::f64: fill_segment<double>(s.op, d, s.count); break;
    }
    off += s.count * element_size(s.type);
  }
}

Bytes ReductionLayout::identity() const {
  Bytes b(bytes_);
  fill_identity(b);
  return b;
}

bool ReductionLayout::is_identity(std::span<const std::byte> buf) const {
  Bytes id = identity();
  return buf.size() == id.size() && std::equal(buf.begin(), buf.end(), id.begin());
}

}  // namespace pcoll
