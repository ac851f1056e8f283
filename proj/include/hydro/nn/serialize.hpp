#pragma once

#include <string>
#include <vector>

#include "hydro/nn/tensor.hpp"

namespace hydro::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Binary container for model parameters. Layout (all integers and doubles
// little-endian):
//   magic "HYDT" | u32 version | u32 tensor count
//   per tensor: u32 name length | name bytes | u32 rank | u64 shape[rank]
//               | f64 payload[numel]
// Round-trips are bit-exact; loading a file with an unknown version or a
// truncated payload fails with a descriptive error.
inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& path);

// convenience lookup; throws if absent
const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);
bool has_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace hydro::nn
