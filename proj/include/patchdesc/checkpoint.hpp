#pragma once

// Binary checkpoint:
//   "PDN1" | u32 version (1) | u32 tensor count
//   per tensor: u16 name length | name | u8 rank | u32 extents... | f32 values...
// All integers and floats little-endian; values row-major.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "patchdesc/error.hpp"
#include "patchdesc/image_io.hpp"
#include "patchdesc/model.hpp"

namespace patchdesc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Real>
std::vector<std::uint8_t> encode_checkpoint(const NetworkParams<Real>& params) {
  std::vector<std::uint8_t> b{'P', 'D', 'N', '1'};
  detail::put_u32(b, kCheckpointVersion);
  detail::put_u32(b, 8);
  params.for_each_tensor([&](const char* name, const Tensor<Real>& t) {
    const std::size_t len = std::strlen(name);
    detail::put_u16(b, static_cast<std::uint16_t>(len));
    b.insert(b.end(), name, name + len);
    b.push_back(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.shape()) detail::put_u32(b, static_cast<std::uint32_t>(e));
    for (Real v : t.values()) detail::put_u32(b, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  });
  return b;
}

template <typename Real>
void save_checkpoint(const NetworkParams<Real>& params, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(params));
}

/// Recovers the architecture implied by checkpoint tensor shapes. Floor
/// pooling lets several input sizes share one set of shapes; the 64px patch
/// size wins when it fits, otherwise the smallest fitting size is used.
inline Architecture infer_architecture(const std::vector<Shape>& shapes) {
  auto fail = [](const std::string& what) { return Error(ErrorKind::shape_mismatch, "checkpoint " + what); };
  if (shapes.size() != 8) throw fail("must hold 8 tensors");
  const Shape& k1 = shapes[0];
  const Shape& k2 = shapes[2];
  const Shape& k3 = shapes[4];
  const Shape& w = shapes[6];
  if (k1.size() != 4 || k2.size() != 4 || k3.size() != 4 || w.size() != 2) throw fail("tensor ranks are wrong");
  if (k1[1] != 1 || k2[1] != k1[0] || k3[1] != k2[0]) throw fail("map counts do not chain");
  if (k1[2] != k1[3] || k2[2] != k2[3] || k3[2] != k3[3]) throw fail("kernels must be square");
  Architecture arch{64, k1[0], k1[2], k2[0], k2[2], k3[0], k3[2], w[0]};
  try {
    if (flatten_size(arch) == w[1]) return arch;
  } catch (const Error&) {
  }
  for (std::size_t s = 1; s <= 4096; ++s) {
    arch.input_size = s;
    try {
      if (flatten_size(arch) == w[1]) return arch;
    } catch (const Error&) {
    }
  }
  throw fail("fc width " + std::to_string(w[1]) + " matches no input size");
}

template <typename Real>
NetworkParams<Real> decode_checkpoint(const std::vector<std::uint8_t>& b, const std::string& name,
                                      std::optional<Architecture> expected = std::nullopt) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) {
    return Error(ErrorKind::checkpoint_format, name + " at offset " + std::to_string(pos) + ": " + what);
  };
  auto need = [&](std::size_t n) {
    if (pos + n > b.size()) throw fail("truncated file");
  };
  auto u32 = [&] {
    need(4);
    const std::uint32_t v = detail::le_u32(b, pos);
    pos += 4;
    return v;
  };

  need(4);
  if (std::memcmp(b.data(), "PDN1", 4) != 0) throw fail("bad magic");
  pos = 4;
  const std::size_t version_at = pos;
  if (u32() != kCheckpointVersion) {
    pos = version_at;
    throw fail("unsupported version");
  }
  const std::size_t count_at = pos;
  if (u32() != 8) {
    pos = count_at;
    throw fail("expected 8 tensors");
  }

  static const char* const kNames[] = {"c1.kernels", "c1.bias", "c2.kernels", "c2.bias",
                                       "c3.kernels", "c3.bias", "fc.weights", "fc.bias"};
  std::vector<Tensor<Real>> tensors;
  std::vector<Shape> shapes;
  for (const char* expected_name : kNames) {
    const std::size_t name_at = pos;
    need(2);
    const std::size_t len = detail::le_u16(b, pos);
    pos += 2;
    need(len);
    const std::string tensor_name(b.begin() + static_cast<std::ptrdiff_t>(pos),
                                  b.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
    if (tensor_name != expected_name) {
      pos = name_at;
      throw fail("expected tensor '" + std::string(expected_name) + "', found '" + tensor_name + "'");
    }
    need(1);
    const std::size_t rank = b[pos++];
    if (rank == 0) throw fail("zero rank for " + tensor_name);
    Shape shape;
    for (std::size_t i = 0; i < rank; ++i) {
      const std::uint32_t e = u32();
      if (e == 0) throw fail("zero extent in " + tensor_name);
      shape.push_back(e);
    }
    const std::size_t count = shape_volume(shape);
    need(4 * count);
    Tensor<Real> t(shape);
    for (std::size_t i = 0; i < count; ++i) {
      t[i] = static_cast<Real>(std::bit_cast<float>(detail::le_u32(b, pos)));
      pos += 4;
    }
    shapes.push_back(std::move(shape));
    tensors.push_back(std::move(t));
  }
  if (pos != b.size()) throw fail("trailing bytes after last tensor");

  NetworkParams<Real> p;
  if (expected) {
    // Several input sizes can share one set of tensor shapes (floor pooling),
    // so an expected architecture is checked tensor by tensor.
    std::vector<Shape> want;
    NetworkParams<Real>::zeros(*expected).for_each_tensor(
        [&](const char*, const Tensor<Real>& t) { want.push_back(t.shape()); });
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (shapes[i] != want[i]) {
        throw Error(ErrorKind::shape_mismatch, name + ": tensor " + kNames[i] + " has shape " +
                                                   shape_string(shapes[i]) + ", the " +
                                                   std::to_string(expected->input_size) + "px network expects " +
                                                   shape_string(want[i]));
      }
    }
    p.arch = *expected;
  } else {
    p.arch = infer_architecture(shapes);
  }
  p.c1 = {std::move(tensors[0]), std::move(tensors[1])};
  p.c2 = {std::move(tensors[2]), std::move(tensors[3])};
  p.c3 = {std::move(tensors[4]), std::move(tensors[5])};
  p.fc = {std::move(tensors[6]), std::move(tensors[7])};
  p.validate();
  return p;
}

/// Loads and checks against `expected` (the 64x64 network unless told otherwise).
template <typename Real>
NetworkParams<Real> load_checkpoint(const std::filesystem::path& path,
                                    std::optional<Architecture> expected = Architecture::full()) {
  return decode_checkpoint<Real>(read_file_bytes(path), path.string(), expected);
}

}  // namespace patchdesc
