#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scalpel/optim.hpp"

namespace scalpel {

// Checkpoint file layout, version 1. All integers and floats little-endian.
//
//   magic    8 bytes  "SCLPCKPT"
//   version  u32      1
//   count    u32      number of entries
//   entry*   u32 path length, path bytes (UTF-8),
//            u32 rank, rank x u64 extents,
//            product(extents) x f32 values
//
// Entries appear in model declaration order.

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string path;
  Shape shape;
  std::vector<float> values;

  bool operator==(const CheckpointEntry&) const = default;
};

using Checkpoint = std::vector<CheckpointEntry>;

Checkpoint snapshot(std::span<const Parameter> params);

/// Copies values into parameters by path. Every parameter must be present
/// with a matching shape; extra entries are rejected too.
void restore(std::span<Parameter> params, const Checkpoint& ckpt);

void write_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& file);

void save_checkpoint(const std::filesystem::path& file, std::span<const Parameter> params);
void load_checkpoint(const std::filesystem::path& file, std::span<Parameter> params);

/// FNV-1a over paths, shapes and raw float bits.
uint64_t checkpoint_hash(const Checkpoint& ckpt);
std::string hash_hex(uint64_t hash);

/// Number of scalars whose bit patterns differ between two checkpoints of the
/// same layout.
int64_t count_changed(const Checkpoint& before, const Checkpoint& after);

}  // namespace scalpel
