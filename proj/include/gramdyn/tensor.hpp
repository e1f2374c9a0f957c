#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gramdyn {

enum class DType : std::uint8_t { F32 = 0, U8 = 1 };

std::size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);

/// A dense row-major tensor as stored in a VG4T blob.
///
/// Layout on disk (all little-endian): magic "VG4T", u16 version (= 1),
/// u8 dtype (0 = f32, 1 = u8), u8 ndim, ndim x u32 dims, then the payload.
class TensorBlob {
 public:
  TensorBlob() = default;

  static TensorBlob f32(std::vector<std::size_t> dims, std::vector<float> values);
  static TensorBlob u8(std::vector<std::size_t> dims, std::vector<std::uint8_t> values);
  static TensorBlob zeros(DType dtype, std::vector<std::size_t> dims);

  DType dtype() const { return dtype_; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t element_count() const;
  bool empty() const { return dims_.empty(); }

  std::span<const float> as_f32() const;
  std::span<float> as_f32();
  std::span<const std::uint8_t> as_u8() const;
  std::span<std::uint8_t> as_u8();

  bool operator==(const TensorBlob& other) const = default;

 private:
  DType dtype_ = DType::F32;
  std::vector<std::size_t> dims_;
  std::vector<float> f32_;
  std::vector<std::uint8_t> u8_;
};

inline constexpr std::uint16_t kBlobVersion = 1;

/// Throws NotFound, FormatError (magic/version/dtype/truncation) or IoError.
TensorBlob read_blob(const std::filesystem::path& path);

/// Throws IoError.
void write_blob(const TensorBlob& blob, const std::filesystem::path& path);

/// "[2, 99, 64]"
std::string format_dims(const std::vector<std::size_t>& dims);

}  // namespace gramdyn
