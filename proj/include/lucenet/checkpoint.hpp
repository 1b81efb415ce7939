#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lucenet/densenet.hpp"

namespace lucenet {

// Checkpoint layout (all integers little-endian):
//
//   "LUCENET1"                      8-byte magic, last byte is the version
//   u32 length, UTF-8 bytes         metadata, one `key=value` per line
//   per parameter, in canonical order:
//     u32 length, UTF-8 name
//     u32 rank, u32 dims[rank]
//     f32 values[product(dims)]
//
// Metadata carries the architecture, the provenance record, the scope and the
// parameter count. Writing is deterministic, so save -> load -> save is
// byte-identical.

inline constexpr char kCheckpointMagic[] = "LUCENET1";
inline constexpr int kCheckpointVersion = 1;

enum class CheckpointScope { full, backbone };

struct CheckpointContents {
  DenseNetConfig config;
  Provenance provenance;
  CheckpointScope scope = CheckpointScope::full;
  std::vector<std::pair<std::string, Tensor>> parameters;
};

std::vector<char> encode_checkpoint(const Model& model,
                                    CheckpointScope scope = CheckpointScope::full);
CheckpointContents decode_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     CheckpointScope scope = CheckpointScope::full);
CheckpointContents read_checkpoint(const std::filesystem::path& path);

/// Full-scope checkpoints only; backbone checkpoints are consumed through
/// `build(config, CheckpointInit{...})`.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace lucenet
