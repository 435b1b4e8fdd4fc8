#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmca/config.hpp"
#include "tmca/data.hpp"
#include "tmca/metrics.hpp"
#include "tmca/model.hpp"
#include "tmca/vocabulary.hpp"

namespace tmca {

// Cosine annealing from lr0 at step 0 to lr_min at step == total_steps.
double lr_at(int64_t step, int64_t total_steps, double lr0 = 3e-4, double lr_min = 1e-6);

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double loss_total = 0;
    double loss_seg = 0;
    double loss_ca = 0;
    std::map<std::string, double> loss_ca_per_level;
    std::optional<double> val_jaccard;
    std::optional<double> val_dice;
    std::optional<double> val_acc;

    nlohmann::json to_json() const;
};

struct MetricsReport {
    std::map<std::string, SplitMetrics> splits;
    std::vector<EpochLog> history;
    double wall_clock_seconds = 0;
    std::string config_fingerprint;

    nlohmann::json to_json() const;
};

// Sigmoid probabilities [N, H, W] at the model's configured size, in
// corpus order.
torch::Tensor predict_probabilities(TmcaModel& model, const Vocabulary& vocab, const std::vector<Sample>& samples,
                                    int batch_size = 64);

// Per-image Jaccard/Dice/accuracy at threshold 0.5. Throws DataError on an
// empty corpus.
SplitMetrics evaluate(TmcaModel& model, const Vocabulary& vocab, const Corpus& corpus, int batch_size = 64);

struct TrainOptions {
    // Writes best.ckpt and metrics.jsonl here when set.
    std::optional<std::filesystem::path> out_dir;
    std::function<void(const EpochLog&)> on_epoch;
    // Optional fixed vocabulary; built from the training split otherwise.
    std::optional<Vocabulary> vocab;
};

struct TrainResult {
    TmcaModel model{nullptr};  // weights of the best validation epoch
    Vocabulary vocab;
    std::vector<EpochLog> history;
    int best_epoch = 0;
    int64_t steps = 0;
    double wall_clock_seconds = 0;
};

// Throws NumericalError (naming the batch) when a loss becomes non-finite.
TrainResult train(const ModelConfig& config, const Corpus& train_corpus, const Corpus* val_corpus,
                  const TrainOptions& options = {});

// Copies every parameter and buffer.
std::map<std::string, torch::Tensor> snapshot_state(torch::nn::Module& module);
void restore_state(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& state);

}  // namespace tmca
