#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmca/config.hpp"
#include "tmca/data.hpp"
#include "tmca/training.hpp"

namespace tmca {

enum class Ladder { Components, Levels, DataRatio };

std::string_view to_string(Ladder ladder);

struct AblationRung {
    Ladder ladder = Ladder::Components;
    std::string label;
    ModelConfig config;
    double data_ratio = 1.0;

    // Runs with equal keys are trained once and shared across ladders.
    std::string key() const;
};

// Cumulative component removal: full, -TSDM, -LTEM, -MAS, -CA.
std::vector<AblationRung> component_ladder(const ModelConfig& base);
// Alignment levels {G}, {G,32}, {G,32,16}, {G,32,16,8}.
std::vector<AblationRung> level_ladder(const ModelConfig& base);
// 25 / 50 / 75 / 100 % of the training split.
std::vector<AblationRung> ratio_ladder(const ModelConfig& base);

struct AblationRun {
    std::string key;
    ModelConfig config;
    double data_ratio = 1.0;
    size_t train_samples = 0;
    MetricsReport report;
};

struct AblationReport {
    std::vector<AblationRung> rungs;
    std::vector<AblationRun> runs;  // unique by key, in first-use order

    const AblationRun& run_for(const AblationRung& rung) const;
    nlohmann::json to_json() const;
};

struct AblationOptions {
    std::set<Ladder> ladders{Ladder::Components, Ladder::Levels, Ladder::DataRatio};
    // Each run gets <out_dir>/<key>/ with best.ckpt, metrics.jsonl and manifest.json.
    std::optional<std::filesystem::path> out_dir;
    std::function<void(const AblationRung&, const AblationRun&)> on_run;
};

// Trains every distinct rung on `train`, selects on `val`, reports on `test`.
AblationReport run_ablation_suite(const ModelConfig& base, const Corpus& train, const Corpus& val,
                                  const Corpus& test, const AblationOptions& options = {});

}  // namespace tmca
