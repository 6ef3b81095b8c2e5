#include "rtprobe/tensor_blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "rtprobe/error.hpp"

namespace rtprobe::trace {

namespace {

constexpr std::size_t kHeaderFixed = 4 + 4 + 1 + 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t element_size(DType dtype) {
  switch (dtype) {
    case DType::Float32: return 4;
    case DType::Float16: return 2;
  }
  throw FormatError("unknown dtype code " + std::to_string(static_cast<int>(dtype)));
}

std::uint64_t product(std::span<const std::uint64_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::uint64_t{1},
                         [](std::uint64_t a, std::uint64_t b) { return a * b; });
}

Tensor::Tensor(std::vector<std::uint64_t> d, std::vector<float> v)
    : dims(std::move(d)), values(std::move(v)) {
  if (values.size() != product(dims)) {
    throw DimensionError("tensor value count " + std::to_string(values.size()) +
                         " does not match dims product " + std::to_string(product(dims)));
  }
}

Tensor Tensor::zeros(std::vector<std::uint64_t> d) {
  const auto n = product(d);
  return Tensor(std::move(d), std::vector<float>(n, 0.0f));
}

std::uint64_t Tensor::element_count() const { return dims.empty() ? 0 : product(dims); }

namespace {

std::uint64_t flat_index(const std::vector<std::uint64_t>& dims,
                         std::initializer_list<std::uint64_t> index) {
  if (index.size() != dims.size()) throw DimensionError("tensor index rank mismatch");
  std::uint64_t flat = 0;
  std::size_t k = 0;
  for (auto i : index) {
    if (i >= dims[k]) throw DimensionError("tensor index out of range");
    flat = flat * dims[k] + i;
    ++k;
  }
  return flat;
}

}  // namespace

float& Tensor::at(std::initializer_list<std::uint64_t> index) {
  return values[flat_index(dims, index)];
}

float Tensor::at(std::initializer_list<std::uint64_t> index) const {
  return values[flat_index(dims, index)];
}

std::uint16_t float_to_half(float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
  const std::uint32_t exponent = (bits >> 23) & 0xffu;
  std::uint32_t mantissa = bits & 0x7fffffu;

  if (exponent == 0xffu) {
    if (mantissa == 0) return sign | 0x7c00u;
    return static_cast<std::uint16_t>(sign | 0x7c00u | 0x200u | (mantissa >> 13));
  }

  const int e = static_cast<int>(exponent) - 127 + 15;
  if (e >= 31) return sign | 0x7c00u;

  if (e <= 0) {
    if (e < -10) return sign;
    mantissa |= 0x800000u;
    const int shift = 14 - e;
    std::uint32_t half_mant = mantissa >> shift;
    const std::uint32_t rem = mantissa & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half_mant & 1u))) ++half_mant;
    return static_cast<std::uint16_t>(sign | half_mant);
  }

  std::uint32_t half = static_cast<std::uint32_t>(sign) |
                       (static_cast<std::uint32_t>(e) << 10) | (mantissa >> 13);
  const std::uint32_t rem = mantissa & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
  return static_cast<std::uint16_t>(half);
}

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exponent = (h >> 10) & 0x1fu;
  std::uint32_t mantissa = h & 0x3ffu;

  std::uint32_t bits;
  if (exponent == 0) {
    if (mantissa == 0) {
      bits = sign;
    } else {
      // subnormal: renormalize
      int e = -1;
      do {
        ++e;
        mantissa <<= 1;
      } while ((mantissa & 0x400u) == 0);
      mantissa &= 0x3ffu;
      bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | (mantissa << 13);
    }
  } else if (exponent == 0x1fu) {
    bits = sign | 0x7f800000u | (mantissa << 13);
  } else {
    bits = sign | ((exponent - 15 + 127) << 23) | (mantissa << 13);
  }
  return std::bit_cast<float>(bits);
}

std::vector<std::uint8_t> encode_blob(const Tensor& tensor, DType dtype) {
  if (tensor.dims.size() > 255) throw FormatError("tensor rank exceeds 255");
  if (tensor.values.size() != product(tensor.dims)) {
    throw DimensionError("tensor value count does not match dims");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderFixed + 8 * tensor.dims.size() + element_size(dtype) * tensor.values.size());
  out.insert(out.end(), std::begin(kBlobMagic), std::end(kBlobMagic));
  put_u32(out, kBlobVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u64(out, d);

  if (dtype == DType::Float32) {
    for (float v : tensor.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  } else {
    for (float v : tensor.values) {
      const auto h = float_to_half(v);
      out.push_back(static_cast<std::uint8_t>(h & 0xffu));
      out.push_back(static_cast<std::uint8_t>(h >> 8));
    }
  }
  return out;
}

Tensor decode_blob(std::span<const std::uint8_t> bytes, DType* dtype_out) {
  if (bytes.size() < kHeaderFixed) throw FormatError("truncated blob header");
  if (std::memcmp(bytes.data(), kBlobMagic, 4) != 0) throw FormatError("bad magic");
  const auto version = get_u32(bytes.data() + 4);
  if (version != kBlobVersion) {
    throw FormatError("version unsupported: " + std::to_string(version));
  }
  const auto code = bytes[8];
  if (code > 1) throw FormatError("unknown dtype code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  const std::size_t ndim = bytes[9];
  if (bytes.size() < kHeaderFixed + 8 * ndim) throw FormatError("truncated blob dims");

  std::vector<std::uint64_t> dims(ndim);
  for (std::size_t i = 0; i < ndim; ++i) dims[i] = get_u64(bytes.data() + kHeaderFixed + 8 * i);

  const std::size_t offset = kHeaderFixed + 8 * ndim;
  const std::uint64_t count = product(dims);
  const std::uint64_t payload = bytes.size() - offset;
  if (payload != count * element_size(dtype)) {
    throw FormatError("dims/payload mismatch: dims imply " +
                      std::to_string(count * element_size(dtype)) + " bytes, found " +
                      std::to_string(payload));
  }

  std::vector<float> values(count);
  const std::uint8_t* p = bytes.data() + offset;
  if (dtype == DType::Float32) {
    for (std::uint64_t i = 0; i < count; ++i) {
      values[i] = std::bit_cast<float>(get_u32(p + 4 * i));
    }
  } else {
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto h = static_cast<std::uint16_t>(p[2 * i] | (p[2 * i + 1] << 8));
      values[i] = half_to_float(h);
    }
  }
  if (dtype_out) *dtype_out = dtype;
  return Tensor(std::move(dims), std::move(values));
}

void write_blob(const std::filesystem::path& path, const Tensor& tensor, DType dtype) {
  const auto bytes = encode_blob(tensor, dtype);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("io", "write failed: " + path.string());
}

Tensor read_blob(const std::filesystem::path& path, DType* dtype_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open blob: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_blob(bytes, dtype_out);
}

}  // namespace rtprobe::trace
