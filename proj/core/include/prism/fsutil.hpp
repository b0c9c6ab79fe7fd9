#pragma once

#include <filesystem>
#include <string>

namespace prism {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// FNV-1a 64 of the file contents, lowercase hex.
std::string file_content_hash(const std::filesystem::path& path);
std::string bytes_hash(const std::string& bytes);

}  // namespace prism
