#include "rmbl/replay.hpp"

#include <stdexcept>

namespace rmbl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : storage_(capacity) {
  if (capacity == 0) {
    throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  }
}

void ReplayBuffer::push(Transition t) {
  storage_[head_] = std::move(t);
  head_ = (head_ + 1) % storage_.size();
  if (count_ < storage_.size()) ++count_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= count_) {
    throw std::out_of_range("ReplayBuffer: index beyond filled region");
  }
  // oldest-first indexing over the ring
  const std::size_t base = count_ == storage_.size() ? head_ : 0;
  return storage_[(base + i) % storage_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, RngStream& rng) const {
  if (count_ == 0) {
    throw std::logic_error("ReplayBuffer: sampling from an empty buffer");
  }
  std::vector<std::size_t> out(batch);
  for (auto& i : out) {
    i = static_cast<std::size_t>(rng.next_u64() % count_);
  }
  return out;
}

TransitionQueue::TransitionQueue(std::size_t max_size) : max_size_(max_size) {}

bool TransitionQueue::push(Transition t) {
  std::unique_lock<std::mutex> lock(mu_);
  cv_push_.wait(lock, [&] { return items_.size() < max_size_ || closed_; });
  if (closed_) return false;
  items_.push_back(std::move(t));
  cv_pop_.notify_one();
  return true;
}

std::optional<Transition> TransitionQueue::pop() {
  std::unique_lock<std::mutex> lock(mu_);
  cv_pop_.wait(lock, [&] { return !items_.empty() || closed_; });
  if (items_.empty()) return std::nullopt;
  Transition t = std::move(items_.front());
  items_.erase(items_.begin());
  cv_push_.notify_one();
  return t;
}

void TransitionQueue::close() {
  std::lock_guard<std::mutex> lock(mu_);
  closed_ = true;
  cv_pop_.notify_all();
  cv_push_.notify_all();
}

bool TransitionQueue::closed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return closed_;
}

}  // namespace rmbl
