#include "prism/fsutil.hpp"

#include <fstream>
#include <sstream>

#include "prism/errors.hpp"
#include "prism/rng.hpp"

namespace prism {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string bytes_hash(const std::string& bytes) {
  std::uint64_t h = fnv1a64(bytes);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

std::string file_content_hash(const std::filesystem::path& path) {
  return bytes_hash(read_file(path));
}

}  // namespace prism
