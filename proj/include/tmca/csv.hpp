#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tmca {

// RFC 4180 fields: quoted fields may contain commas, newlines and "" escapes.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);
std::string csv_escape(std::string_view field);

// Reads a two-column `filename,text` table with header row.
std::vector<std::pair<std::string, std::string>> read_text_table(const std::filesystem::path& path);
void write_text_table(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& rows);

}  // namespace tmca
