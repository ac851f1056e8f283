#include "hydro/nn/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hydro::nn {

namespace {

constexpr char kMagic[4] = {'H', 'Y', 'D', 'T'};

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T value;
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error(std::string("model file truncated while reading ") + what);
  return value;
}

}  // namespace

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, kModelFormatVersion);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) write_pod<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(tensor.data()),
             static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open model file " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path + " is not a model file (bad magic)");
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != kModelFormatVersion)
    throw std::runtime_error("unsupported model format version " + std::to_string(version) +
                             " in " + path + " (expected " +
                             std::to_string(kModelFormatVersion) + ")");
  const auto count = read_pod<std::uint32_t>(is, "tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("model file truncated while reading tensor name");
    const auto rank = read_pod<std::uint32_t>(is, "rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(is, "shape"));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!is)
      throw std::runtime_error("model file truncated in payload of tensor '" + name + "'");
    out.push_back({std::move(name), std::move(t)});
  }
  return out;
}

const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& nt : tensors)
    if (nt.name == name) return nt.tensor;
  throw std::runtime_error("tensor '" + name + "' missing from model file");
}

bool has_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& nt : tensors)
    if (nt.name == name) return true;
  return false;
}

}  // namespace hydro::nn
