#pragma once

#include <filesystem>
#include <string>

#include "tmca/config.hpp"
#include "tmca/model.hpp"
#include "tmca/vocabulary.hpp"

namespace tmca {

inline constexpr int64_t kCheckpointFormatVersion = 1;

// One archive holding parameters, the model config, the vocabulary and a
// format version.
void save_checkpoint(const std::filesystem::path& path, TmcaModel& model, const Vocabulary& vocab);

struct LoadedCheckpoint {
    ModelConfig config;
    Vocabulary vocab;
    TmcaModel model{nullptr};
    std::string fingerprint;  // sha256 of the archive bytes
};

// Model is returned in eval mode. Throws DataError on unreadable or
// incompatible archives.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tmca
