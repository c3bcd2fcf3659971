#include "projcgan/serialize.hpp"

#include <cstring>
#include <istream>
#include <ostream>

#include "projcgan/errors.hpp"

namespace projcgan {

namespace {

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw IoError("write failed");
}

void get_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) throw IoError("unexpected end of stream");
}

// The build targets little-endian hosts; serialize through explicit byte
// packing anyway so the format stays pinned.
template <typename U>
void put_le(std::ostream& os, U v) {
    unsigned char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
    unsigned char b[sizeof(U)];
    get_bytes(is, b, sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
std::uint32_t read_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return get_le<std::uint64_t>(is); }

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    if (!s.empty()) put_bytes(os, s.data(), s.size());
}

std::string read_string(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    if (n > 0) get_bytes(is, s.data(), n);
    return s;
}

void write_tensor_f32(std::ostream& os, const TensorF& t) {
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int a = 0; a < t.rank(); ++a) write_u32(os, static_cast<std::uint32_t>(t.extent(a)));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        std::uint32_t bits;
        const float v = t[i];
        std::memcpy(&bits, &v, 4);
        write_u32(os, bits);
    }
}

TensorF read_tensor_f32(std::istream& is) {
    const std::uint32_t rank = read_u32(is);
    if (rank > 8) throw IoError("implausible tensor rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t a = 0; a < rank; ++a) {
        const std::uint32_t e = read_u32(is);
        if (e == 0 || e > (1u << 28)) throw IoError("implausible tensor extent");
        shape.push_back(static_cast<int>(e));
    }
    TensorF t(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const std::uint32_t bits = read_u32(is);
        float v;
        std::memcpy(&v, &bits, 4);
        t[i] = v;
    }
    return t;
}

}  // namespace projcgan
