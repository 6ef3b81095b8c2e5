#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rtprobe::trace {

// GTRC blob layout (little-endian throughout):
//   magic "GTRC" | u32 version | u8 dtype | u8 ndim | ndim x u64 dims | payload
inline constexpr char kBlobMagic[4] = {'G', 'T', 'R', 'C'};
inline constexpr std::uint32_t kBlobVersion = 1;

enum class DType : std::uint8_t { Float32 = 0, Float16 = 1 };

std::size_t element_size(DType dtype);

/// Dense row-major float tensor. Storage is always float32 in memory; the
/// on-disk dtype is chosen at write time.
struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;

  Tensor() = default;
  Tensor(std::vector<std::uint64_t> d, std::vector<float> v);

  static Tensor zeros(std::vector<std::uint64_t> d);

  bool empty() const { return dims.empty(); }
  std::uint64_t element_count() const;
  std::size_t rank() const { return dims.size(); }

  float& at(std::initializer_list<std::uint64_t> index);
  float at(std::initializer_list<std::uint64_t> index) const;

  bool operator==(const Tensor&) const = default;
};

std::uint64_t product(std::span<const std::uint64_t> dims);

// IEEE-754 binary16 conversion, round-to-nearest-even on narrowing.
std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t bits);

std::vector<std::uint8_t> encode_blob(const Tensor& tensor, DType dtype);
Tensor decode_blob(std::span<const std::uint8_t> bytes, DType* dtype_out = nullptr);

void write_blob(const std::filesystem::path& path, const Tensor& tensor, DType dtype);
Tensor read_blob(const std::filesystem::path& path, DType* dtype_out = nullptr);

}  // namespace rtprobe::trace
