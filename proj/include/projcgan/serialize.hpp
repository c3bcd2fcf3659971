#ifndef PROJCGAN_SERIALIZE_HPP
#define PROJCGAN_SERIALIZE_HPP

#include <cstdint>
#include <iosfwd>
#include <string>

#include "projcgan/tensor.hpp"

namespace projcgan {

// Little-endian binary primitives. Readers throw IoError on truncation.
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);

/// Length-prefixed (u32) byte string.
void write_string(std::ostream& os, const std::string& s);
std::string read_string(std::istream& is);

/// Tensor payload: rank (u32), extents (u32 each), then the values as
/// little-endian 32-bit floats in row-major order.
void write_tensor_f32(std::ostream& os, const TensorF& t);
TensorF read_tensor_f32(std::istream& is);

}  // namespace projcgan

#endif
