#pragma once

// Binary tensor container, all fields little-endian:
//
//   magic    4 bytes  "THNS"
//   version  u32      1
//   rank     u32      2 or 3
//   dims     rank x u64
//   dtype    u8       0 = float32, 1 = float64
//   payload  product(dims) values, row-major

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "blockprune/error.hpp"
#include "blockprune/matrix.hpp"

namespace blockprune {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

enum class TensorErrorCode { Io, BadMagic, BadVersion, BadRank, BadDtype, Truncated, TrailingBytes, NonFinite };

class TensorFileError : public DataError {
 public:
  TensorFileError(TensorErrorCode code, const std::string& what) : DataError(what), code_(code) {}
  TensorErrorCode code() const noexcept { return code_; }

 private:
  TensorErrorCode code_;
};

inline constexpr std::uint32_t kTensorFormatVersion = 1;

struct Tensor {
  std::vector<std::uint64_t> dims;
  DType dtype = DType::F64;
  std::vector<double> values;  // widened to double on load
};

std::vector<std::byte> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::byte> bytes);

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor& t);

DenseMatrix load_matrix(const std::filesystem::path& path, DType* dtype = nullptr);
void save_matrix(const std::filesystem::path& path, const DenseMatrix& m, DType dtype = DType::F64);

/// A rank-3 d x b x a file yields d samples; a rank-2 file yields one.
std::vector<DenseMatrix> load_samples(const std::filesystem::path& path);
void save_samples(const std::filesystem::path& path, std::span<const DenseMatrix> samples,
                  DType dtype = DType::F64);

}  // namespace blockprune
