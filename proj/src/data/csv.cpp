#include "tmca/csv.hpp"

#include <fstream>
#include <sstream>

#include "tmca/errors.hpp"

namespace tmca {

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
    };

    size_t i = 0;
    if (content.substr(0, 3) == "\xEF\xBB\xBF") i = 3;  // UTF-8 BOM
    for (; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started || !field.empty()) throw DataError("stray quote in CSV field");
                quoted = true;
                field_started = true;
                break;
            case ',':
                end_field();
                break;
            case '\r':
                break;
            case '\n':
                end_row();
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (quoted) throw DataError("unterminated quoted CSV field");
    if (field_started || !field.empty() || !row.empty()) end_row();
    return rows;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::vector<std::pair<std::string, std::string>> read_text_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing text table " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    auto rows = parse_csv(buf.str());
    if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "filename" || rows[0][1] != "text") {
        throw DataError(path.string() + ": expected header 'filename,text'");
    }
    std::vector<std::pair<std::string, std::string>> out;
    for (size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != 2) {
            throw DataError(path.string() + ": row " + std::to_string(r + 1) + " must have 2 fields");
        }
        out.emplace_back(std::move(rows[r][0]), std::move(rows[r][1]));
    }
    return out;
}

void write_text_table(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "filename,text\n";
    for (const auto& [file, text] : rows) out << csv_escape(file) << ',' << csv_escape(text) << '\n';
}

}  // namespace tmca
