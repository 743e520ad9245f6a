#include "pcoll/transport.hpp"

#include <algorithm>

namespace pcoll {

bool TagPattern::matches(const Message& m) const {
  if (src && *src != m.src) return false;
  if (collective && *collective != m.tag.collective) return false;
  if (round && *round != m.tag.round) return false;
  if (phase && *phase != m.tag.phase) return false;
  if (step && *step != m.tag.step) return false;
  return true;
}

void Mailbox::deposit(Message msg) {
  std::function<void()> notify;
  {
    std::lock_guard lock(mu_);
    if (closed_) throw Error(ErrorCode::transport_closed, "deposit into closed mailbox");
    queue_.push_back(std::move(msg));
    notify = notify_;
  }
  cv_.notify_all();
  if (notify) notify();
}

std::optional<Message> Mailbox::try_match(const TagPattern& pattern) {
  std::lock_guard lock(mu_);
  auto it = std::find_if(queue_.begin(), queue_.end(),
                         [&](const Message& m) { return pattern.matches(m); });
  if (it == queue_.end()) return std::nullopt;
  Message out = std::move(*it);
  queue_.erase(it);
  return out;
}

Message Mailbox::wait_match(const TagPattern& pattern) {
  std::unique_lock lock(mu_);
  for (;;) {
    auto it = std::find_if(queue_.begin(), queue_.end(),
                           [&](const Message& m) { return pattern.matches(m); });
    if (it != queue_.end()) {
      Message out = std::move(*it);
      queue_.erase(it);
      return out;
    }
    if (closed_) throw Error(ErrorCode::transport_closed, "closed while waiting for message");
    cv_.wait(lock);
  }
}

std::vector<Message> Mailbox::take_all() {
  std::lock_guard lock(mu_);
  std::vector<Message> out(std::make_move_iterator(queue_.begin()),
                           std::make_move_iterator(queue_.end()));
  queue_.clear();
  return out;
}

void Mailbox::set_notify(std::function<void()> fn) {
  std::lock_guard lock(mu_);
  notify_ = std::move(fn);
}

void Mailbox::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Mailbox::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::size_t Mailbox::size() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

}  // namespace pcoll
