#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "cmtf/tensor.hpp"

namespace cmtf {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary layout: "DTEN1", u32 order, order x u32 dims, then f64 values in
// first-index-fastest order; every integer and float is little-endian.
// Text layout: a header line "dten d1 d2 ..." followed by whitespace
// separated values in the same order.

void writeTensorBinary(std::ostream& os, const DenseTensor& t);
void writeTensorText(std::ostream& os, const DenseTensor& t);
DenseTensor readTensor(std::istream& is);

void writeTensorBinary(const std::filesystem::path& path, const DenseTensor& t);
void writeTensorText(const std::filesystem::path& path, const DenseTensor& t);

/// Reads either format, detected from the leading bytes.
DenseTensor readTensor(const std::filesystem::path& path);

/// Shape only; does not read the payload.
Shape readTensorHeader(const std::filesystem::path& path);

Matrix toMatrix(const DenseTensor& t);
DenseTensor fromMatrix(const Matrix& m);

inline Matrix readMatrix(const std::filesystem::path& path) { return toMatrix(readTensor(path)); }
inline void writeMatrixText(const std::filesystem::path& path, const Matrix& m) {
  writeTensorText(path, fromMatrix(m));
}

}  // namespace cmtf
