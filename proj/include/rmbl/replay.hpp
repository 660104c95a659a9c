#pragma once

#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <vector>

#include "rmbl/rng.hpp"

namespace rmbl {

// Feature-level transition: the latent state pair before and after acting,
// the executed unit action and the scalar reward. Terminal rewards ride in
// `reward`, done = 1 cuts bootstrapping.
struct Transition {
  std::vector<double> state;       // z ++ h
  std::vector<double> next_state;
  double action_unit[2] = {0, 0};
  double reward = 0.0;
  double done = 0.0;
  double r_step = 0.0;
  double r_term = 0.0;
  std::uint32_t episode = 0;
  std::uint32_t step = 0;
};

// Fixed-capacity ring with FIFO eviction and uniform sampling over the filled
// region. Single-writer; sampling is const.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return count_; }
  std::size_t capacity() const { return storage_.size(); }
  const Transition& at(std::size_t i) const;  // 0..size()

  std::vector<std::size_t> sample_indices(std::size_t batch, RngStream& rng) const;

 private:
  std::vector<Transition> storage_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

// Bounded handoff between environment workers and the learner. Transitions
// move whole, so a consumer never observes a partially written record.
class TransitionQueue {
 public:
  explicit TransitionQueue(std::size_t max_size = 1024);

  bool push(Transition t);              // blocks while full; false after close
  std::optional<Transition> pop();      // blocks while empty; nullopt after close+drain
  void close();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_push_, cv_pop_;
  std::vector<Transition> items_;
  std::size_t max_size_;
  bool closed_ = false;
};

// Time-weighted exponential moving average with the conventional window
// smoothing 2/(n+1).
class Ema {
 public:
  explicit Ema(int window) : coef_(2.0 / (window + 1.0)) {}
  void add(double x) {
    value_ = initialized_ ? (1.0 - coef_) * value_ + coef_ * x : x;
    initialized_ = true;
  }
  bool ready() const { return initialized_; }
  double value() const { return value_; }

 private:
  double coef_;
  double value_ = 0.0;
  bool initialized_ = false;
};

}  // namespace rmbl
