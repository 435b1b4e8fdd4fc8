#include "tmca/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "tmca/errors.hpp"

namespace tmca {

Vocabulary::Vocabulary() {
    add("<pad>");
    add("<unk>");
}

void Vocabulary::add(const std::string& token) {
    if (ids_.count(token)) return;
    ids_.emplace(token, static_cast<int64_t>(tokens_.size()));
    tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
    std::set<std::string> words;
    for (const auto& text : texts) {
        for (auto& w : split_words(text)) words.insert(std::move(w));
    }
    Vocabulary vocab;
    for (const auto& w : words) vocab.add(w);
    return vocab;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("vocabulary must be a JSON object of token -> id");
    std::vector<std::string> tokens(j.size());
    for (const auto& [token, id_json] : j.items()) {
        const auto id = id_json.get<int64_t>();
        if (id < 0 || static_cast<size_t>(id) >= tokens.size() || !tokens[static_cast<size_t>(id)].empty()) {
            throw DataError("vocabulary ids must be contiguous from 0");
        }
        tokens[static_cast<size_t>(id)] = token;
    }
    if (tokens.size() < 2 || tokens[kPad] != "<pad>" || tokens[kUnk] != "<unk>") {
        throw DataError("vocabulary must reserve id 0 for <pad> and 1 for <unk>");
    }
    Vocabulary vocab;
    for (size_t i = 2; i < tokens.size(); ++i) vocab.add(tokens[i]);
    return vocab;
}

int64_t Vocabulary::id_of(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
}

nlohmann::json Vocabulary::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (size_t i = 0; i < tokens_.size(); ++i) j[tokens_[i]] = static_cast<int64_t>(i);
    return j;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 0x80 && (std::isspace(c) || std::ispunct(c))) {
            if (!current.empty()) words.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

int64_t TokenIds::valid_count() const {
    return std::count(valid.begin(), valid.end(), true);
}

TokenIds tokenize(std::string_view text, const Vocabulary& vocab, int max_len) {
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    TokenIds out;
    out.ids.assign(static_cast<size_t>(max_len), Vocabulary::kPad);
    out.valid.assign(static_cast<size_t>(max_len), false);
    const auto words = split_words(text);
    const size_t n = std::min(words.size(), static_cast<size_t>(max_len));
    for (size_t i = 0; i < n; ++i) {
        out.ids[i] = vocab.id_of(words[i]);
        out.valid[i] = true;
    }
    return out;
}

TokenBatch tokenize_batch(const std::vector<std::string>& texts, const Vocabulary& vocab, int max_len) {
    const auto b = static_cast<int64_t>(texts.size());
    TokenBatch batch{torch::zeros({b, max_len}, torch::kInt64), torch::zeros({b, max_len}, torch::kBool)};
    auto ids = batch.ids.accessor<int64_t, 2>();
    auto valid = batch.valid.accessor<bool, 2>();
    for (int64_t i = 0; i < b; ++i) {
        const auto tok = tokenize(texts[static_cast<size_t>(i)], vocab, max_len);
        for (int k = 0; k < max_len; ++k) {
            ids[i][k] = tok.ids[static_cast<size_t>(k)];
            valid[i][k] = tok.valid[static_cast<size_t>(k)];
        }
    }
    return batch;
}

}  // namespace tmca
