#include "rmbl/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace rmbl {

namespace {
constexpr char kMagic[4] = {'R', 'M', 'B', 'L'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) {
    throw std::runtime_error("checkpoint: truncated file");
  }
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const ParamStore*>>& stores) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  }
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, kVersion);
  std::uint64_t count = 0;
  for (const auto& [prefix, store] : stores) count += store->size();
  write_pod<std::uint64_t>(out, count);
  for (const auto& [prefix, store] : stores) {
    for (const auto& [name, t] : store->items()) {
      const std::string full = prefix + name;
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(full.size()));
      out.write(full.data(), static_cast<std::streamsize>(full.size()));
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
      for (int d : t.shape()) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
      out.write(reinterpret_cast<const char*>(t.values().data()),
                static_cast<std::streamsize>(t.values().size() * sizeof(double)));
    }
  }
  if (!out) {
    throw std::runtime_error("checkpoint: write failed for '" + path + "'");
  }
}

std::map<std::string, CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  }
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version");
  }
  const auto count = read_pod<std::uint64_t>(in);
  std::map<std::string, CheckpointEntry> entries;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = read_pod<std::uint32_t>(in);
    CheckpointEntry e;
    std::uint64_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = read_pod<std::uint32_t>(in);
      e.shape.push_back(static_cast<int>(d));
      numel *= d;
    }
    e.values.resize(numel);
    in.read(reinterpret_cast<char*>(e.values.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!in) {
      throw std::runtime_error("checkpoint: truncated values in '" + path + "'");
    }
    entries.emplace(std::move(name), std::move(e));
  }
  return entries;
}

void load_into(const std::map<std::string, CheckpointEntry>& entries, const std::string& prefix,
               const ParamStore& store) {
  for (const auto& [name, t] : store.items()) {
    const auto it = entries.find(prefix + name);
    if (it == entries.end()) {
      throw std::runtime_error("checkpoint: missing parameter '" + prefix + name + "'");
    }
    if (it->second.shape != t.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + prefix + name + "'");
    }
    t.node()->values = it->second.values;
  }
}

bool checkpoint_has_prefix(const std::map<std::string, CheckpointEntry>& entries,
                           const std::string& prefix) {
  for (const auto& [name, e] : entries) {
    if (name.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

}  // namespace rmbl
