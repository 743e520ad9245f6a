#include "pcoll/ledger.hpp"

namespace pcoll {

std::size_t DeliveryLedger::add(int rank, Generation generated, std::vector<double> grad) {
  records_.push_back(GradientRecord{rank, generated, std::nullopt, 0, std::move(grad)});
  return records_.size() - 1;
}

void DeliveryLedger::deliver(std::size_t id, Generation round) {
  auto& r = records_.at(id);
  if (!r.delivered) r.delivered = round;
  ++r.deliveries;
}

std::size_t DeliveryLedger::pending() const {
  std::size_t n = 0;
  for (const auto& r : records_) n += r.delivered ? 0 : 1;
  return n;
}

Generation DeliveryLedger::max_age() const {
  Generation m = 0;
  for (const auto& r : records_) {
    if (r.delivered && *r.delivered >= r.generated) m = std::max(m, *r.delivered - r.generated);
  }
  return m;
}

}  // namespace pcoll
