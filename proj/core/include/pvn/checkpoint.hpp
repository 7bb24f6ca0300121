#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pvn/tensor.hpp"

namespace pvn {

/// Checkpoint tensor container, bit-exact on disk:
///   magic "PVN1", u32 LE format version, u32 LE entry count, then per entry
///   u32 LE name length + UTF-8 name, u32 LE rank, u64 LE dims, raw f32 LE data.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

template <class T>
std::vector<CheckpointEntry> entries_from_params(const ParamList<T>& params) {
  std::vector<CheckpointEntry> out;
  out.reserve(params.size());
  for (const auto& np : params) {
    CheckpointEntry e;
    e.name = np.name;
    e.shape = np.tensor->shape;
    e.data.resize(np.tensor->data.size());
    for (std::size_t i = 0; i < e.data.size(); ++i) e.data[i] = static_cast<float>(np.tensor->data[i]);
    out.push_back(std::move(e));
  }
  return out;
}

/// Loads entries into an existing parameter list matched by name; every
/// parameter must be present with the exact shape.
template <class T>
void params_from_entries(const std::vector<CheckpointEntry>& entries, const ParamList<T>& params) {
  for (const auto& np : params) {
    const CheckpointEntry* found = nullptr;
    for (const auto& e : entries)
      if (e.name == np.name) {
        found = &e;
        break;
      }
    if (!found) throw std::runtime_error("checkpoint: missing tensor '" + np.name + "'");
    if (found->shape != np.tensor->shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + np.name + "': file " +
                               shape_str(found->shape) + " vs model " + shape_str(np.tensor->shape));
    for (std::size_t i = 0; i < found->data.size(); ++i)
      np.tensor->data[i] = static_cast<T>(found->data[i]);
  }
}

}  // namespace pvn
