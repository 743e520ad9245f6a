#include "pcoll/delay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcoll/rng.hpp"

namespace pcoll {

namespace {

SimTime ms_to_us(double ms) { return static_cast<SimTime>(std::llround(ms * 1000.0)); }

}  // namespace

DelayKind parse_delay_kind(const std::string& s) {
  if (s == "none") return DelayKind::none;
  if (s == "constant") return DelayKind::constant;
  if (s == "linear-skew" || s == "linear_skew" || s == "linear") return DelayKind::linear_skew;
  if (s == "random-subset" || s == "random_subset" || s == "random") return DelayKind::random_subset;
  throw Error(ErrorCode::config_invalid, "unknown delay kind '" + s + "'");
}

const char* to_string(DelayKind k) {
  switch (k) {
    case DelayKind::none: return "none";
    case DelayKind::constant: return "constant";
    case DelayKind::linear_skew: return "linear-skew";
    case DelayKind::random_subset: return "random-subset";
  }
  return "none";
}

void DelayModel::validate(int p) const {
  if (!(unit_ms >= 0.0) || !std::isfinite(unit_ms)) {
    throw Error(ErrorCode::config_invalid, "delay unit must be finite and non-negative");
  }
  if (max_ms < 0.0 || !std::isfinite(max_ms)) {
    throw Error(ErrorCode::config_invalid, "delay max must be finite and non-negative");
  }
  if (kind == DelayKind::random_subset && (k < 0 || k > p)) {
    throw Error(ErrorCode::config_invalid, "random-subset k must lie in [0, p]");
  }
  if (rank && (*rank < 0 || *rank >= p)) {
    throw Error(ErrorCode::config_invalid, "delay rank out of range");
  }
}

std::vector<int> delayed_ranks(const DelayModel& model, Generation round, int p) {
  if (model.kind != DelayKind::random_subset) return {};
  // Partial Fisher-Yates over a splitmix64 stream keyed by (seed, round).
  SplitMix64 rng(derive_seed(model.seed, round));
  std::vector<int> ids(static_cast<std::size_t>(p));
  std::iota(ids.begin(), ids.end(), 0);
  const int k = std::clamp(model.k, 0, p);
  for (int i = 0; i < k; ++i) {
    auto j = i + static_cast<int>(bounded(rng(), static_cast<std::uint64_t>(p - i)));
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  }
  ids.resize(static_cast<std::size_t>(k));
  std::sort(ids.begin(), ids.end());
  return ids;
}

SimTime inject_delay(Rank rank, Generation round, const DelayModel& model, int p) {
  switch (model.kind) {
    case DelayKind::none:
      return 0;
    case DelayKind::constant:
      if (model.rank && *model.rank != rank.id) return 0;
      return ms_to_us(model.unit_ms);
    case DelayKind::linear_skew:
      return ms_to_us(static_cast<double>(rank.id + 1) * model.unit_ms);
    case DelayKind::random_subset: {
      auto sel = delayed_ranks(model, round, p);
      if (!std::binary_search(sel.begin(), sel.end(), rank.id)) return 0;
      if (model.max_ms <= model.unit_ms) return ms_to_us(model.unit_ms);
      SplitMix64 rng(derive_seed(derive_seed(model.seed, round), static_cast<std::uint64_t>(rank.id)));
      double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      return ms_to_us(model.unit_ms + u * (model.max_ms - model.unit_ms));
    }
  }
  return 0;
}

}  // namespace pcoll
