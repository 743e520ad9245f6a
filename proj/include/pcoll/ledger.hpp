#pragma once

#include <optional>
#include <vector>

#include "pcoll/types.hpp"

namespace pcoll {

struct GradientRecord {
  int rank = 0;
  Generation generated = 0;
  std::optional<Generation> delivered;
  /// How many snapshots took this gradient; anything but 1 is a bug.
  int deliveries = 0;
  /// Kept only when the run records traces.
  std::vector<double> grad;
};

/// Which round each generated gradient was reduced in.
class DeliveryLedger {
 public:
  std::size_t add(int rank, Generation generated, std::vector<double> grad = {});
  /// Records a delivery; repeated deliveries are counted, not rejected, so
  /// that audits can see them.
  void deliver(std::size_t id, Generation round);

  const std::vector<GradientRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  std::size_t pending() const;
  /// Largest delivered - generated over delivered gradients.
  Generation max_age() const;

 private:
  std::vector<GradientRecord> records_;
};

}  // namespace pcoll
