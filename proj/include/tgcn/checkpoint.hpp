#pragma once

// Binary parameter checkpoint:
//   "TGCN" | u32 version | u32 meta_count | (u32 len, key, u32 len, value)...
//   | u32 tensor_count | (u32 len, name, u32 rank, u32 extents..., u64 offset)...
//   | f32 payload
// All integers and floats little-endian. Offsets are in bytes from the start
// of the payload.

#include "tgcn/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace tgcn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

class Checkpoint {
 public:
  std::map<std::string, std::string> meta;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const std::vector<CheckpointEntry>& entries() const { return entries_; }
  bool contains(const std::string& name) const;
  const CheckpointEntry& at(const std::string& name) const;

  template <typename S>
  void put(const std::string& name, const Tensor<S>& t) {
    if (contains(name)) throw ContractError("checkpoint: duplicate tensor '" + name + "'");
    CheckpointEntry e{name, t.shape, std::vector<float>(static_cast<std::size_t>(t.size()))};
    for (Index i = 0; i < t.size(); ++i) e.values[static_cast<std::size_t>(i)] = static_cast<float>(t.data[i]);
    entries_.push_back(std::move(e));
  }

  template <typename S>
  void get(const std::string& name, Tensor<S>& t) const {
    const CheckpointEntry& e = at(name);
    if (e.shape != t.shape)
      throw DimensionError("checkpoint: tensor '" + name + "' has shape " + shape_str(e.shape) +
                           ", model expects " + shape_str(t.shape));
    for (Index i = 0; i < t.size(); ++i) t.data[i] = static_cast<S>(e.values[static_cast<std::size_t>(i)]);
  }

  template <typename S>
  void put_all(const std::vector<std::pair<std::string, Tensor<S>*>>& named) {
    for (const auto& [name, t] : named) put(name, *t);
  }

  template <typename S>
  void get_all(const std::vector<std::pair<std::string, Tensor<S>*>>& named) const {
    for (const auto& [name, t] : named) get(name, *t);
  }

 private:
  std::vector<CheckpointEntry> entries_;
};

}  // namespace tgcn
