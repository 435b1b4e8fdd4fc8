#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace tmca {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Content hash of a directory tree: every regular file contributes its
// relative path and content digest, visited in lexicographic order.
std::string tree_hash(const std::filesystem::path& root);

}  // namespace tmca
