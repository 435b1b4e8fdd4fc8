#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tmca {

// Alignment levels: encoder strides plus the pooled global feature.
enum class Level { S8, S16, S32, Global };

std::string_view to_string(Level level);
Level parse_level(std::string_view name);  // "8", "16", "32", "G"
int stride_of(Level level);                // 0 for Global
inline std::ostream& operator<<(std::ostream& os, Level level) { return os << to_string(level); }

// Component switches. Each `false` removes that component.
struct AblationFlags {
    bool tsdm = true;
    bool ltem = true;
    bool mas = true;
    bool contrastive = true;
    bool text = true;

    bool operator==(const AblationFlags&) const = default;
};

struct OptimizerConfig {
    double lr0 = 3e-4;
    double lr_min = 1e-6;
    double weight_decay = 1e-4;

    bool operator==(const OptimizerConfig&) const = default;
};

struct ModelConfig {
    int image_size = 64;
    int in_channels = 1;
    std::array<int, 4> widths{32, 64, 128, 256};  // strides 4/8/16/32
    int text_dim = 128;                           // D, also C_g
    int text_layers = 3;
    int text_heads = 4;
    int max_len = 32;
    int attention_heads = 4;
    int head_channels = 16;

    double tau1 = 1.0;
    double tau2 = 0.07;
    double tau3 = 1.0;
    std::vector<Level> levels{Level::S8, Level::S16, Level::S32, Level::Global};

    AblationFlags ablation;
    OptimizerConfig optimizer;
    int batch_size = 32;
    int epochs = 30;
    std::uint64_t seed = 0;
    double zoom_probability = 0.10;
    double zoom_max_scale = 1.2;

    bool operator==(const ModelConfig&) const = default;
};

// Applies flag implications (mas off -> {G}; text off -> ltem and
// contrastive off) and canonical level order. Throws ConfigError on invalid
// values.
ModelConfig normalized(ModelConfig config);
void validate(const ModelConfig& config);

// Alignment levels actually trained; empty when contrastive alignment is off.
std::vector<Level> active_levels(const ModelConfig& config);

nlohmann::json to_json(const ModelConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {});

// JSON object, or `key = value` lines with optional [section] headers
// (nested keys map to JSON objects).
nlohmann::json parse_config_text(std::string_view text);
ModelConfig load_config_file(const std::filesystem::path& path, ModelConfig base = {});

// Applies a comma-separated list of {tsdm, ltem, mas, ca, text}.
// Throws ConfigError on unknown tokens.
AblationFlags parse_ablation_list(std::string_view list, AblationFlags base = {});

// Short stable hash of the normalised config.
std::string fingerprint(const ModelConfig& config);

}  // namespace tmca
