#include "scalpel/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace scalpel {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'L', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::string& what) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw std::runtime_error("checkpoint truncated while reading " + what);
  }
  T value = 0;
  for (size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(buf[i]) << (8 * i);
  return value;
}

}  // namespace

Checkpoint snapshot(std::span<const Parameter> params) {
  Checkpoint ckpt;
  ckpt.reserve(params.size());
  for (const Parameter& p : params) {
    ckpt.push_back({p.path, p.tensor.shape(),
                    std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  return ckpt;
}

void restore(std::span<Parameter> params, const Checkpoint& ckpt) {
  std::unordered_map<std::string, const CheckpointEntry*> by_path;
  for (const auto& e : ckpt) by_path.emplace(e.path, &e);
  if (by_path.size() != params.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(by_path.size()) +
                             " entries, model has " + std::to_string(params.size()) +
                             " parameters");
  }
  for (Parameter& p : params) {
    auto it = by_path.find(p.path);
    if (it == by_path.end()) throw std::runtime_error("checkpoint missing parameter " + p.path);
    if (it->second->shape != p.tensor.shape()) {
      throw std::runtime_error("checkpoint shape " + shape_str(it->second->shape) + " for " +
                               p.path + " does not match model shape " +
                               shape_str(p.tensor.shape()));
    }
    std::copy(it->second->values.begin(), it->second->values.end(), p.tensor.data().begin());
  }
}

void write_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + file.string());
  os.write(kMagic, sizeof(kMagic));
  put_le<uint32_t>(os, kCheckpointVersion);
  put_le<uint32_t>(os, static_cast<uint32_t>(ckpt.size()));
  for (const auto& e : ckpt) {
    put_le<uint32_t>(os, static_cast<uint32_t>(e.path.size()));
    os.write(e.path.data(), static_cast<std::streamsize>(e.path.size()));
    put_le<uint32_t>(os, static_cast<uint32_t>(e.shape.size()));
    for (int64_t d : e.shape) put_le<uint64_t>(os, static_cast<uint64_t>(d));
    for (float v : e.values) put_le<uint32_t>(os, std::bit_cast<uint32_t>(v));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + file.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + file.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(file.string() + " is not a checkpoint file");
  }
  const auto version = get_le<uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<uint32_t>(is, "entry count");
  Checkpoint ckpt(count);
  for (auto& e : ckpt) {
    const auto len = get_le<uint32_t>(is, "path length");
    e.path.resize(len);
    if (!is.read(e.path.data(), len)) throw std::runtime_error("checkpoint truncated in path");
    const auto rank = get_le<uint32_t>(is, "rank of " + e.path);
    for (uint32_t i = 0; i < rank; ++i) {
      e.shape.push_back(static_cast<int64_t>(get_le<uint64_t>(is, "shape of " + e.path)));
    }
    e.values.resize(static_cast<size_t>(shape_numel(e.shape)));
    for (float& v : e.values) v = std::bit_cast<float>(get_le<uint32_t>(is, "values of " + e.path));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& file, std::span<const Parameter> params) {
  write_checkpoint(file, snapshot(params));
}

void load_checkpoint(const std::filesystem::path& file, std::span<Parameter> params) {
  restore(params, read_checkpoint(file));
}

uint64_t checkpoint_hash(const Checkpoint& ckpt) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : ckpt) {
    mix(e.path.data(), e.path.size());
    for (int64_t d : e.shape) mix(&d, sizeof(d));
    mix(e.values.data(), e.values.size() * sizeof(float));
  }
  return h;
}

std::string hash_hex(uint64_t hash) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << hash;
  return os.str();
}

int64_t count_changed(const Checkpoint& before, const Checkpoint& after) {
  if (before.size() != after.size()) throw std::invalid_argument("checkpoint layouts differ");
  int64_t changed = 0;
  for (size_t i = 0; i < before.size(); ++i) {
    const auto& a = before[i].values;
    const auto& b = after[i].values;
    if (before[i].path != after[i].path || a.size() != b.size()) {
      throw std::invalid_argument("checkpoint layouts differ at " + before[i].path);
    }
    for (size_t j = 0; j < a.size(); ++j)
      if (std::bit_cast<uint32_t>(a[j]) != std::bit_cast<uint32_t>(b[j])) ++changed;
  }
  return changed;
}

}  // namespace scalpel
