#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmbl/sim/world.hpp"

namespace rmbl {

// Frame flag bits.
enum FrameFlag : std::uint8_t {
  kFlagCollision = 1 << 0,
  kFlagOffLane = 1 << 1,
  kFlagTimeout = 1 << 2,
  kFlagDone = 1 << 3,       // episode ended after this action
  kFlagShouldStop = 1 << 4,
  kFlagCompleted = 1 << 5,
  kFlagTruncated = 1 << 6,
  kFlagSentinel = 1 << 7,   // trailing observation record, no action taken
};

// One dataset record: the observation, the expert action, the executed
// (noise-injected) controls and the post-step measurements. Sentinel records
// close each episode so sequence windows always have a next observation.
struct Frame {
  std::uint32_t episode = 0;
  std::uint32_t step = 0;
  std::uint8_t flags = 0;
  double speed = 0.0;
  double d_lat = 0.0, theta_diff = 0.0, v_lon = 0.0, d = 0.0, rc = 0.0;
  double phys[4] = {0, 0, 0, 0};  // raw [v_lon, distance delta, theta_diff, d_lat]
  double r_step = 0.0, r_term = 0.0;
  double expert_wp[2] = {0, 0};   // clean expert waypoint (radius, bearing)
  double controls[3] = {0, 0, 0}; // executed steer/throttle/brake
  std::vector<double> route;          // k_route * 2
  std::vector<std::uint8_t> sensor;   // binary cells
  std::vector<std::uint8_t> target;

  bool sentinel() const { return flags & kFlagSentinel; }
  bool done() const { return flags & kFlagDone; }
  // Continuation label: 0 when the episode truly ended (terminal event or
  // route completed), 1 otherwise (including budget truncation).
  double continuation() const {
    const bool ended = (flags & (kFlagCollision | kFlagOffLane | kFlagTimeout | kFlagCompleted));
    return ended ? 0.0 : 1.0;
  }
};

// Column-free in-memory dataset with shard IO. Shard layout, little-endian:
//   magic "RMBD", u32 version, u32 sensor_channels, u32 bev_channels,
//   u32 height, u32 width, u32 route_points, u64 frame_count, then packed
//   fixed-size records (doubles and u8 grids in declaration order).
class Dataset {
 public:
  explicit Dataset(sim::GridDims dims = {});

  const sim::GridDims& dims() const { return dims_; }
  std::size_t size() const { return frames_.size(); }
  const Frame& frame(std::size_t i) const { return frames_[i]; }
  void append(Frame f);

  sim::Observation observation(std::size_t i) const;

  // True when [start, start+len) are consecutive non-sentinel records of one
  // episode and a next record (possibly the sentinel) exists for each.
  bool window_ok(std::size_t start, int len) const;
  std::vector<std::size_t> window_starts(int len) const;

  void save_shards(const std::string& dir, std::size_t frames_per_shard = 4096) const;
  static Dataset load_dir(const std::string& dir);

 private:
  sim::GridDims dims_;
  std::vector<Frame> frames_;
};

}  // namespace rmbl
