#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace tmca {

// Whitespace/punctuation word vocabulary. Ids are contiguous from 0.
class Vocabulary {
public:
    static constexpr int64_t kPad = 0;
    static constexpr int64_t kUnk = 1;

    Vocabulary();

    // Tokens of `texts`, sorted, after PAD and UNK.
    static Vocabulary build(const std::vector<std::string>& texts);
    static Vocabulary from_json(const nlohmann::json& j);

    int64_t id_of(std::string_view token) const;
    const std::string& token(int64_t id) const { return tokens_.at(static_cast<size_t>(id)); }
    size_t size() const { return tokens_.size(); }
    nlohmann::json to_json() const;

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    void add(const std::string& token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int64_t> ids_;
};

// Lowercased words; whitespace and ASCII punctuation separate tokens.
std::vector<std::string> split_words(std::string_view text);

struct TokenIds {
    std::vector<int64_t> ids;    // length max_len, PAD-filled
    std::vector<bool> valid;     // true for real tokens
    int64_t valid_count() const;
};

TokenIds tokenize(std::string_view text, const Vocabulary& vocab, int max_len = 32);

struct TokenBatch {
    torch::Tensor ids;    // int64 [B, K]
    torch::Tensor valid;  // bool  [B, K]
};

TokenBatch tokenize_batch(const std::vector<std::string>& texts, const Vocabulary& vocab, int max_len);

}  // namespace tmca
