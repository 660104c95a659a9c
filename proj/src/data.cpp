#include "rmbl/data.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace rmbl {

namespace fs = std::filesystem;

namespace {
constexpr char kMagic[4] = {'R', 'M', 'B', 'D'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("dataset: truncated shard");
  return v;
}
}  // namespace

Dataset::Dataset(sim::GridDims dims) : dims_(dims) {}

void Dataset::append(Frame f) {
  if (static_cast<int>(f.sensor.size()) != dims_.sensor_size() ||
      static_cast<int>(f.target.size()) != dims_.bev_size() ||
      static_cast<int>(f.route.size()) != dims_.route_points * 2) {
    throw std::invalid_argument("dataset: frame grids do not match the configured dims");
  }
  frames_.push_back(std::move(f));
}

sim::Observation Dataset::observation(std::size_t i) const {
  const Frame& f = frames_.at(i);
  sim::Observation obs;
  obs.sensor.assign(f.sensor.begin(), f.sensor.end());
  obs.target.assign(f.target.begin(), f.target.end());
  obs.route = f.route;
  obs.speed = f.speed;
  return obs;
}

bool Dataset::window_ok(std::size_t start, int len) const {
  if (start + static_cast<std::size_t>(len) >= frames_.size() + 1) return false;
  for (int k = 0; k < len; ++k) {
    const Frame& f = frames_[start + static_cast<std::size_t>(k)];
    if (f.sentinel()) return false;
    if (f.episode != frames_[start].episode) return false;
    if (f.step != frames_[start].step + static_cast<std::uint32_t>(k)) return false;
  }
  // next record for the last input must exist in the same episode
  const std::size_t next = start + static_cast<std::size_t>(len);
  if (next >= frames_.size()) return false;
  const Frame& nf = frames_[next];
  return nf.episode == frames_[start].episode &&
         nf.step == frames_[start].step + static_cast<std::uint32_t>(len);
}

std::vector<std::size_t> Dataset::window_starts(int len) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(len) < frames_.size(); ++i) {
    if (window_ok(i, len)) out.push_back(i);
  }
  return out;
}

void Dataset::save_shards(const std::string& dir, std::size_t frames_per_shard) const {
  fs::create_directories(dir);
  std::size_t shard = 0;
  for (std::size_t begin = 0; begin < frames_.size() || (frames_.empty() && shard == 0);
       begin += frames_per_shard) {
    const std::size_t end = std::min(frames_.size(), begin + frames_per_shard);
    char name[32];
    std::snprintf(name, sizeof(name), "shard_%04zu.rmbd", shard);
    std::ofstream out(fs::path(dir) / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("dataset: cannot write shard in '" + dir + "'");
    out.write(kMagic, 4);
    write_pod<std::uint32_t>(out, kVersion);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dims_.sensor_channels));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dims_.bev_channels));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dims_.height));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dims_.width));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dims_.route_points));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(end - begin));
    for (std::size_t i = begin; i < end; ++i) {
      const Frame& f = frames_[i];
      write_pod(out, f.episode);
      write_pod(out, f.step);
      write_pod(out, f.flags);
      write_pod(out, f.speed);
      write_pod(out, f.d_lat);
      write_pod(out, f.theta_diff);
      write_pod(out, f.v_lon);
      write_pod(out, f.d);
      write_pod(out, f.rc);
      out.write(reinterpret_cast<const char*>(f.phys), sizeof(f.phys));
      write_pod(out, f.r_step);
      write_pod(out, f.r_term);
      out.write(reinterpret_cast<const char*>(f.expert_wp), sizeof(f.expert_wp));
      out.write(reinterpret_cast<const char*>(f.controls), sizeof(f.controls));
      out.write(reinterpret_cast<const char*>(f.route.data()),
                static_cast<std::streamsize>(f.route.size() * sizeof(double)));
      out.write(reinterpret_cast<const char*>(f.sensor.data()),
                static_cast<std::streamsize>(f.sensor.size()));
      out.write(reinterpret_cast<const char*>(f.target.data()),
                static_cast<std::streamsize>(f.target.size()));
    }
    ++shard;
    if (frames_.empty()) break;
  }
}

Dataset Dataset::load_dir(const std::string& dir) {
  std::vector<fs::path> shards;
  if (!fs::exists(dir)) {
    throw std::runtime_error("dataset: directory '" + dir + "' does not exist");
  }
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".rmbd") shards.push_back(e.path());
  }
  if (shards.empty()) {
    throw std::runtime_error("dataset: no .rmbd shards under '" + dir + "'");
  }
  std::sort(shards.begin(), shards.end());

  Dataset ds;
  bool dims_set = false;
  for (const auto& path : shards) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("dataset: cannot open '" + path.string() + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
      throw std::runtime_error("dataset: bad magic in '" + path.string() + "'");
    }
    if (read_pod<std::uint32_t>(in) != kVersion) {
      throw std::runtime_error("dataset: unsupported shard version");
    }
    sim::GridDims dims;
    dims.sensor_channels = static_cast<int>(read_pod<std::uint32_t>(in));
    dims.bev_channels = static_cast<int>(read_pod<std::uint32_t>(in));
    dims.height = static_cast<int>(read_pod<std::uint32_t>(in));
    dims.width = static_cast<int>(read_pod<std::uint32_t>(in));
    dims.route_points = static_cast<int>(read_pod<std::uint32_t>(in));
    if (!dims_set) {
      ds.dims_ = dims;
      dims_set = true;
    } else if (dims.sensor_size() != ds.dims_.sensor_size() ||
               dims.bev_size() != ds.dims_.bev_size() ||
               dims.route_points != ds.dims_.route_points) {
      throw std::runtime_error("dataset: shard dims differ across files");
    }
    const auto count = read_pod<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < count; ++i) {
      Frame f;
      f.episode = read_pod<std::uint32_t>(in);
      f.step = read_pod<std::uint32_t>(in);
      f.flags = read_pod<std::uint8_t>(in);
      f.speed = read_pod<double>(in);
      f.d_lat = read_pod<double>(in);
      f.theta_diff = read_pod<double>(in);
      f.v_lon = read_pod<double>(in);
      f.d = read_pod<double>(in);
      f.rc = read_pod<double>(in);
      in.read(reinterpret_cast<char*>(f.phys), sizeof(f.phys));
      f.r_step = read_pod<double>(in);
      f.r_term = read_pod<double>(in);
      in.read(reinterpret_cast<char*>(f.expert_wp), sizeof(f.expert_wp));
      in.read(reinterpret_cast<char*>(f.controls), sizeof(f.controls));
      f.route.resize(static_cast<std::size_t>(ds.dims_.route_points) * 2);
      in.read(reinterpret_cast<char*>(f.route.data()),
              static_cast<std::streamsize>(f.route.size() * sizeof(double)));
      f.sensor.resize(static_cast<std::size_t>(ds.dims_.sensor_size()));
      in.read(reinterpret_cast<char*>(f.sensor.data()),
              static_cast<std::streamsize>(f.sensor.size()));
      f.target.resize(static_cast<std::size_t>(ds.dims_.bev_size()));
      in.read(reinterpret_cast<char*>(f.target.data()),
              static_cast<std::streamsize>(f.target.size()));
      if (!in) throw std::runtime_error("dataset: truncated record");
      ds.frames_.push_back(std::move(f));
    }
  }
  return ds;
}

}  // namespace rmbl
