#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "prism/matrix.hpp"

namespace prism::num {

// Binary tensor blob, little-endian throughout:
//   magic "PRSM" | version u16 | dtype u16 (f64 = 1) | rank u64 |
//   dims u64[rank] | payload f64[prod(dims)]
// Matrices are rank 2; rank-1 blobs load as n x 1.
void write_tensor(std::ostream& out, const Matrix& m);
void write_tensor_1d(std::ostream& out, const std::vector<double>& v);
Matrix read_tensor(std::istream& in, const std::string& context);

void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

// A file holding several named tensors (bag files, model checkpoints):
//   magic "PRSA" | version u16 | count u64 |
//   count x (name_len u64 | name bytes | tensor blob)
class TensorArchive {
 public:
  void add(std::string name, Matrix m);
  const Matrix& get(const std::string& name) const;  // IoError if absent
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Matrix>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<std::string, Matrix>> entries_;
};

void save_archive(const std::filesystem::path& path,
                  const TensorArchive& archive);
TensorArchive load_archive(const std::filesystem::path& path);

}  // namespace prism::num
