#include "gramdyn/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "gramdyn/error.hpp"

namespace gramdyn {

static_assert(std::endian::native == std::endian::little,
              "VG4T I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'V', 'G', '4', 'T'};

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw ValidationError("tensor must have at least one dimension");
  for (auto d : dims) {
    if (d < 1) throw ValidationError("tensor dims must be >= 1, got " + format_dims(dims));
    if (d > 0xffffffffULL) throw ValidationError("tensor dim exceeds u32 range");
  }
}

}  // namespace

std::size_t dtype_size(DType dtype) { return dtype == DType::F32 ? 4 : 1; }

const char* dtype_name(DType dtype) { return dtype == DType::F32 ? "f32" : "u8"; }

std::string format_dims(const std::vector<std::size_t>& dims) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) out << (i ? ", " : "") << dims[i];
  out << ']';
  return out.str();
}

TensorBlob TensorBlob::f32(std::vector<std::size_t> dims, std::vector<float> values) {
  check_dims(dims);
  if (values.size() != product(dims)) {
    throw ValidationError("payload length " + std::to_string(values.size()) +
                          " does not match dims " + format_dims(dims));
  }
  TensorBlob blob;
  blob.dtype_ = DType::F32;
  blob.dims_ = std::move(dims);
  blob.f32_ = std::move(values);
  return blob;
}

TensorBlob TensorBlob::u8(std::vector<std::size_t> dims, std::vector<std::uint8_t> values) {
  check_dims(dims);
  if (values.size() != product(dims)) {
    throw ValidationError("payload length " + std::to_string(values.size()) +
                          " does not match dims " + format_dims(dims));
  }
  TensorBlob blob;
  blob.dtype_ = DType::U8;
  blob.dims_ = std::move(dims);
  blob.u8_ = std::move(values);
  return blob;
}

TensorBlob TensorBlob::zeros(DType dtype, std::vector<std::size_t> dims) {
  const auto n = (check_dims(dims), product(dims));
  return dtype == DType::F32 ? f32(std::move(dims), std::vector<float>(n, 0.0f))
                             : u8(std::move(dims), std::vector<std::uint8_t>(n, 0));
}

std::size_t TensorBlob::element_count() const { return dims_.empty() ? 0 : product(dims_); }

std::span<const float> TensorBlob::as_f32() const {
  if (dtype_ != DType::F32) throw SchemaError("tensor is u8, expected f32");
  return f32_;
}

std::span<float> TensorBlob::as_f32() {
  if (dtype_ != DType::F32) throw SchemaError("tensor is u8, expected f32");
  return f32_;
}

std::span<const std::uint8_t> TensorBlob::as_u8() const {
  if (dtype_ != DType::U8) throw SchemaError("tensor is f32, expected u8");
  return u8_;
}

std::span<std::uint8_t> TensorBlob::as_u8() {
  if (dtype_ != DType::U8) throw SchemaError("tensor is f32, expected u8");
  return u8_;
}

TensorBlob read_blob(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw NotFound("blob not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto file_size = std::filesystem::file_size(path);

  char header[8];
  if (!in.read(header, sizeof header)) throw FormatError(path.string() + ": truncated header");
  if (std::memcmp(header, kMagic, 4) != 0) throw FormatError(path.string() + ": bad magic");
  std::uint16_t version;
  std::memcpy(&version, header + 4, 2);
  if (version != kBlobVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto dtype_code = static_cast<std::uint8_t>(header[6]);
  if (dtype_code > 1) {
    throw FormatError(path.string() + ": unknown dtype " + std::to_string(dtype_code));
  }
  const auto dtype = static_cast<DType>(dtype_code);
  const auto ndim = static_cast<std::uint8_t>(header[7]);
  if (ndim == 0) throw FormatError(path.string() + ": zero-dimensional tensor");

  std::vector<std::uint32_t> raw(ndim);
  if (!in.read(reinterpret_cast<char*>(raw.data()), 4 * ndim)) {
    throw FormatError(path.string() + ": truncated dims");
  }
  std::vector<std::size_t> dims(raw.begin(), raw.end());
  for (auto d : dims) {
    if (d == 0) throw FormatError(path.string() + ": zero-sized dim in " + format_dims(dims));
  }
  const std::size_t count = product(dims);
  const std::size_t payload = count * dtype_size(dtype);
  if (file_size != 8 + 4 * std::size_t{ndim} + payload) {
    throw FormatError(path.string() + ": payload size does not match dims " + format_dims(dims));
  }

  if (dtype == DType::F32) {
    std::vector<float> values(count);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(payload));
    if (!in) throw IoError("short read on " + path.string());
    return TensorBlob::f32(std::move(dims), std::move(values));
  }
  std::vector<std::uint8_t> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(payload));
  if (!in) throw IoError("short read on " + path.string());
  return TensorBlob::u8(std::move(dims), std::move(values));
}

void write_blob(const TensorBlob& blob, const std::filesystem::path& path) {
  if (blob.empty()) throw ValidationError("cannot write an empty tensor");
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());

  out.write(kMagic, 4);
  const std::uint16_t version = kBlobVersion;
  out.write(reinterpret_cast<const char*>(&version), 2);
  const auto dtype = static_cast<std::uint8_t>(blob.dtype());
  const auto ndim = static_cast<std::uint8_t>(blob.dims().size());
  out.put(static_cast<char>(dtype));
  out.put(static_cast<char>(ndim));
  for (auto d : blob.dims()) {
    const auto dim = static_cast<std::uint32_t>(d);
    out.write(reinterpret_cast<const char*>(&dim), 4);
  }
  if (blob.dtype() == DType::F32) {
    const auto values = blob.as_f32();
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    const auto values = blob.as_u8();
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  }
  if (!out) throw IoError("write failed on " + path.string());
}

}  // namespace gramdyn
