#include "cmtf/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

namespace cmtf {

namespace {

constexpr std::string_view kMagic = "DTEN1";
constexpr std::string_view kTextTag = "dten";
constexpr std::uint32_t kMaxOrder = 64;

template <typename U>
void putLittleEndian(std::ostream& os, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  os.write(bytes.data(), bytes.size());
}

template <typename U>
U getLittleEndian(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw FormatError("unexpected end of binary tensor data");
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

Shape readBinaryShape(std::istream& is) {
  const auto order = getLittleEndian<std::uint32_t>(is);
  if (order < 2 || order > kMaxOrder) {
    throw FormatError("binary tensor order " + std::to_string(order) + " is not supported");
  }
  Shape shape(order);
  for (auto& n : shape) {
    n = getLittleEndian<std::uint32_t>(is);
    if (n == 0) throw FormatError("binary tensor has a zero dimension");
  }
  return shape;
}

Shape parseTextHeader(const std::string& line) {
  std::istringstream header(line);
  std::string tag;
  header >> tag;
  if (tag != kTextTag) throw FormatError("text tensor header must start with 'dten'");
  Shape shape;
  long long n = 0;
  while (header >> n) {
    if (n <= 0) throw FormatError("text tensor dimensions must be positive");
    shape.push_back(static_cast<std::size_t>(n));
  }
  if (!header.eof()) throw FormatError("malformed text tensor header: '" + line + "'");
  if (shape.size() < 2) throw FormatError("text tensor header needs at least two dimensions");
  return shape;
}

bool startsWithMagic(std::istream& is) {
  std::array<char, kMagic.size()> head{};
  is.read(head.data(), head.size());
  const bool binary = is.gcount() == static_cast<std::streamsize>(head.size()) &&
                      std::string_view(head.data(), head.size()) == kMagic;
  is.clear();
  is.seekg(0);
  return binary;
}

std::ifstream openForRead(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open tensor file " + path.string());
  return is;
}

}  // namespace

void writeTensorBinary(std::ostream& os, const DenseTensor& t) {
  os.write(kMagic.data(), kMagic.size());
  putLittleEndian(os, static_cast<std::uint32_t>(t.order()));
  for (auto n : t.shape()) putLittleEndian(os, static_cast<std::uint32_t>(n));
  for (double v : t.values()) putLittleEndian(os, std::bit_cast<std::uint64_t>(v));
}

void writeTensorText(std::ostream& os, const DenseTensor& t) {
  os << kTextTag;
  for (auto n : t.shape()) os << ' ' << n;
  os << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  const std::size_t perLine = t.dim(0);
  std::size_t i = 0;
  for (double v : t.values()) {
    os << v << (++i % perLine == 0 ? '\n' : ' ');
  }
}

DenseTensor readTensor(std::istream& is) {
  if (startsWithMagic(is)) {
    is.ignore(kMagic.size());
    Shape shape = readBinaryShape(is);
    std::vector<double> values(product(shape));
    for (auto& v : values) v = std::bit_cast<double>(getLittleEndian<std::uint64_t>(is));
    return DenseTensor(std::move(shape), std::move(values));
  }
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty tensor file");
  Shape shape = parseTextHeader(line);
  std::vector<double> values;
  values.reserve(product(shape));
  std::string token;
  while (is >> token) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw FormatError("invalid number '" + token + "' at value " +
                        std::to_string(values.size()));
    }
  }
  if (values.size() != product(shape)) {
    throw FormatError("text tensor holds " + std::to_string(values.size()) +
                      " values, header promises " + std::to_string(product(shape)));
  }
  return DenseTensor(std::move(shape), std::move(values));
}

void writeTensorBinary(const std::filesystem::path& path, const DenseTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  writeTensorBinary(os, t);
}

void writeTensorText(const std::filesystem::path& path, const DenseTensor& t) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  writeTensorText(os, t);
}

DenseTensor readTensor(const std::filesystem::path& path) {
  auto is = openForRead(path);
  try {
    return readTensor(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Shape readTensorHeader(const std::filesystem::path& path) {
  auto is = openForRead(path);
  try {
    if (startsWithMagic(is)) {
      is.ignore(kMagic.size());
      return readBinaryShape(is);
    }
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty tensor file");
    return parseTextHeader(line);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Matrix toMatrix(const DenseTensor& t) {
  if (t.order() != 2) throw ShapeError("expected an order-2 tensor for a matrix");
  return Eigen::Map<const Matrix>(t.data(), static_cast<Eigen::Index>(t.dim(0)),
                                  static_cast<Eigen::Index>(t.dim(1)));
}

DenseTensor fromMatrix(const Matrix& m) {
  return DenseTensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                     std::vector<double>(m.data(), m.data() + m.size()));
}

}  // namespace cmtf
