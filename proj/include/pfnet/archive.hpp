#pragma once

// Named-tensor container used for checkpoints and backbone weights.
//
// Layout (little endian):
//   8 bytes   magic "PFNTARC\0"
//   u32       format version
//   u64       header length L
//   L bytes   UTF-8 JSON header:
//               {"metadata": {...},
//                "tensors": [{"name": str, "shape": [n, c, h, w],
//                             "offset": element offset}, ...]}
//   payload   IEEE-754 binary64 values of every tensor, concatenated

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pfnet/tensor.hpp"

namespace pfnet {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct TensorArchive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_archive(const std::string& path, const TensorArchive& archive);
/// Throws IoError on a missing file, bad magic, unsupported version, or a
/// truncated payload.
TensorArchive read_archive(const std::string& path);

}  // namespace pfnet
