#include "blockprune/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace blockprune {

namespace {

constexpr char kMagic[4] = {'T', 'H', 'N', 'S'};

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::span<const std::byte> in, std::size_t& pos) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(std::to_integer<unsigned>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return v;
}

void need(std::span<const std::byte> in, std::size_t pos, std::size_t n, const char* what) {
  if (in.size() < pos + n) {
    throw TensorFileError(TensorErrorCode::Truncated, std::string("tensor file truncated in ") + what);
  }
}

std::size_t element_size(DType t) { return t == DType::F32 ? 4 : 8; }

}  // namespace

std::vector<std::byte> encode_tensor(const Tensor& t) {
  if (t.dims.size() != 2 && t.dims.size() != 3) {
    throw TensorFileError(TensorErrorCode::BadRank, "tensor rank must be 2 or 3");
  }
  std::uint64_t count = 1;
  for (auto d : t.dims) count *= d;
  if (count != t.values.size()) throw DimensionError("tensor dims do not match its value count");

  std::vector<std::byte> out;
  out.reserve(4 + 4 + 4 + 8 * t.dims.size() + 1 + count * element_size(t.dtype));
  for (char ch : kMagic) out.push_back(static_cast<std::byte>(ch));
  put_le<std::uint32_t>(out, kTensorFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_le<std::uint64_t>(out, d);
  out.push_back(static_cast<std::byte>(t.dtype));
  for (double v : t.values) {
    if (t.dtype == DType::F32) {
      // Default rounding mode: round to nearest, ties to even.
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Tensor decode_tensor(std::span<const std::byte> in) {
  std::size_t pos = 0;
  need(in, pos, 4, "magic");
  if (std::memcmp(in.data(), kMagic, 4) != 0) throw TensorFileError(TensorErrorCode::BadMagic, "not a THNS tensor file");
  pos = 4;
  need(in, pos, 8, "header");
  const auto version = get_le<std::uint32_t>(in, pos);
  if (version != kTensorFormatVersion) {
    throw TensorFileError(TensorErrorCode::BadVersion, "unsupported tensor file version " + std::to_string(version));
  }
  const auto rank = get_le<std::uint32_t>(in, pos);
  if (rank != 2 && rank != 3) {
    throw TensorFileError(TensorErrorCode::BadRank, "unsupported tensor rank " + std::to_string(rank));
  }
  Tensor t;
  need(in, pos, 8 * rank + 1, "header");
  std::uint64_t count = 1;
  for (std::uint32_t k = 0; k < rank; ++k) {
    t.dims.push_back(get_le<std::uint64_t>(in, pos));
    count *= t.dims.back();
  }
  const auto code = std::to_integer<std::uint8_t>(in[pos++]);
  if (code > 1) throw TensorFileError(TensorErrorCode::BadDtype, "unknown dtype code " + std::to_string(code));
  t.dtype = static_cast<DType>(code);

  const std::size_t esz = element_size(t.dtype);
  if (count > (in.size() - pos) / esz) throw TensorFileError(TensorErrorCode::Truncated, "tensor payload truncated");
  if (in.size() - pos != count * esz) {
    throw TensorFileError(TensorErrorCode::TrailingBytes, "unexpected bytes after tensor payload");
  }
  t.values.resize(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    double v = t.dtype == DType::F32 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, pos)))
                                     : std::bit_cast<double>(get_le<std::uint64_t>(in, pos));
    if (!std::isfinite(v)) {
      throw TensorFileError(TensorErrorCode::NonFinite, "non-finite value at element " + std::to_string(k));
    }
    t.values[k] = v;
  }
  return t;
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorFileError(TensorErrorCode::Io, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(std::as_bytes(std::span<const char>(raw)));
  } catch (const TensorFileError& e) {
    throw TensorFileError(e.code(), path.string() + ": " + e.what());
  }
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw TensorFileError(TensorErrorCode::Io, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw TensorFileError(TensorErrorCode::Io, "write failed for " + path.string());
}

DenseMatrix load_matrix(const std::filesystem::path& path, DType* dtype) {
  Tensor t = read_tensor(path);
  if (t.dims.size() != 2) throw TensorFileError(TensorErrorCode::BadRank, path.string() + ": expected a rank-2 tensor");
  if (dtype != nullptr) *dtype = t.dtype;
  return DenseMatrix(t.dims[0], t.dims[1], std::move(t.values));
}

void save_matrix(const std::filesystem::path& path, const DenseMatrix& m, DType dtype) {
  Tensor t{{m.rows(), m.cols()}, dtype, {m.values().begin(), m.values().end()}};
  write_tensor(path, t);
}

std::vector<DenseMatrix> load_samples(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  if (t.dims.size() == 2) return {DenseMatrix(t.dims[0], t.dims[1], std::move(t.values))};
  const std::size_t d = t.dims[0], b = t.dims[1], a = t.dims[2];
  std::vector<DenseMatrix> out;
  out.reserve(d);
  for (std::size_t l = 0; l < d; ++l) {
    auto first = t.values.begin() + static_cast<std::ptrdiff_t>(l * b * a);
    out.emplace_back(b, a, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(b * a)));
  }
  return out;
}

void save_samples(const std::filesystem::path& path, std::span<const DenseMatrix> samples, DType dtype) {
  if (samples.empty()) throw DataError("no samples to save");
  Tensor t;
  t.dtype = dtype;
  t.dims = {samples.size(), samples.front().rows(), samples.front().cols()};
  for (const auto& s : samples) {
    if (s.rows() != t.dims[1] || s.cols() != t.dims[2]) throw DimensionError("samples differ in shape");
    t.values.insert(t.values.end(), s.values().begin(), s.values().end());
  }
  write_tensor(path, t);
}

}  // namespace blockprune
