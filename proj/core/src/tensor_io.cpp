#include "prism/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "prism/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor format is little-endian; big-endian hosts unsupported");

namespace prism::num {

namespace {

constexpr char kTensorMagic[4] = {'P', 'R', 'S', 'M'};
constexpr char kArchiveMagic[4] = {'P', 'R', 'S', 'A'};
constexpr std::uint16_t kFormatVersion = 1;
constexpr std::uint16_t kDtypeF64 = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& context) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError(context + ": truncated read");
  return v;
}

void write_header(std::ostream& out, std::uint64_t rank,
                  const std::uint64_t* dims) {
  out.write(kTensorMagic, 4);
  write_le<std::uint16_t>(out, kFormatVersion);
  write_le<std::uint16_t>(out, kDtypeF64);
  write_le<std::uint64_t>(out, rank);
  for (std::uint64_t i = 0; i < rank; ++i) write_le<std::uint64_t>(out, dims[i]);
}

}  // namespace

void write_tensor(std::ostream& out, const Matrix& m) {
  std::uint64_t dims[2] = {m.rows(), m.cols()};
  write_header(out, 2, dims);
  out.write(reinterpret_cast<const char*>(m.data().data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void write_tensor_1d(std::ostream& out, const std::vector<double>& v) {
  std::uint64_t dims[1] = {v.size()};
  write_header(out, 1, dims);
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Matrix read_tensor(std::istream& in, const std::string& context) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw IoError(context + ": bad tensor magic");
  }
  auto version = read_le<std::uint16_t>(in, context);
  if (version != kFormatVersion) {
    throw IoError(context + ": unsupported tensor format version " +
                  std::to_string(version));
  }
  auto dtype = read_le<std::uint16_t>(in, context);
  if (dtype != kDtypeF64) {
    throw IoError(context + ": unsupported dtype code " +
                  std::to_string(dtype));
  }
  auto rank = read_le<std::uint64_t>(in, context);
  if (rank != 1 && rank != 2) {
    throw IoError(context + ": unsupported rank " + std::to_string(rank));
  }
  std::uint64_t rows = read_le<std::uint64_t>(in, context);
  std::uint64_t cols = rank == 2 ? read_le<std::uint64_t>(in, context) : 1;
  std::uint64_t count = rows * cols;
  if (count > (1ull << 32)) throw IoError(context + ": implausible tensor size");
  std::vector<double> data(count);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw IoError(context + ": truncated payload");
  return Matrix(rows, cols, std::move(data));
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path.string());
  write_tensor(out, m);
  if (!out) throw IoError("write failed: " + path.string());
}

Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  return read_tensor(in, path.string());
}

void TensorArchive::add(std::string name, Matrix m) {
  entries_.emplace_back(std::move(name), std::move(m));
}

const Matrix& TensorArchive::get(const std::string& name) const {
  for (const auto& [n, m] : entries_) {
    if (n == name) return m;
  }
  throw IoError("archive entry not found: " + name);
}

bool TensorArchive::contains(const std::string& name) const {
  for (const auto& [n, m] : entries_) {
    if (n == name) return true;
  }
  return false;
}

void save_archive(const std::filesystem::path& path,
                  const TensorArchive& archive) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out.write(kArchiveMagic, 4);
  write_le<std::uint16_t>(out, kFormatVersion);
  write_le<std::uint64_t>(out, archive.entries().size());
  for (const auto& [name, m] : archive.entries()) {
    write_le<std::uint64_t>(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, m);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  const std::string context = path.string();
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kArchiveMagic, 4) != 0) {
    throw IoError(context + ": bad archive magic");
  }
  auto version = read_le<std::uint16_t>(in, context);
  if (version != kFormatVersion) {
    throw IoError(context + ": unsupported archive version " +
                  std::to_string(version));
  }
  auto count = read_le<std::uint64_t>(in, context);
  if (count > (1ull << 20)) throw IoError(context + ": implausible entry count");
  TensorArchive archive;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name_len = read_le<std::uint64_t>(in, context);
    if (name_len > (1ull << 16)) throw IoError(context + ": implausible name");
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!in) throw IoError(context + ": truncated entry name");
    archive.add(std::move(name), read_tensor(in, context));
  }
  return archive;
}

}  // namespace prism::num
