#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swinc/data.hpp"
#include "swinc/params.hpp"

namespace swinc {

// Binary container, little-endian:
//   "SWNC" | u16 version | u32 count |
//   count x (u16 name_len | name | u8 rank | rank x u32 extent | numel x f32)
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  Tensor tensor;
};

void write_container(const std::string& path, const std::vector<StoredTensor>& entries);
std::vector<StoredTensor> read_container(const std::string& path);

void save_checkpoint(const ParamList& params, const std::string& path);

struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> missing;     // in the model, absent from the file
  std::vector<std::string> unexpected;  // in the file, absent from the model
  std::vector<std::string> mismatched;  // present in both with different shapes
  bool clean() const { return missing.empty() && unexpected.empty() && mismatched.empty(); }
  std::string describe() const;
};

/// Copies stored values into `params`. Strict mode throws StateError naming
/// every missing, unexpected and mismatched entry before touching any
/// tensor; non-strict mode loads what matches and reports the rest.
LoadReport load_checkpoint(const std::string& path, const ParamList& params, bool strict = true);

void save_dataset(const std::vector<SegSample>& samples, const std::string& path);
std::vector<SegSample> load_dataset(const std::string& path);

}  // namespace swinc
