#include <chrono>
#include <cmath>
#include <fstream>

#include "tmca/checkpoint.hpp"
#include "tmca/errors.hpp"
#include "tmca/training.hpp"

namespace tmca {
namespace fs = std::filesystem;

nlohmann::json EpochLog::to_json() const {
    nlohmann::json j{{"epoch", epoch},       {"lr", lr},           {"loss_total", loss_total},
                     {"loss_seg", loss_seg}, {"loss_ca", loss_ca}, {"loss_ca_per_level", loss_ca_per_level}};
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    j["val_jaccard"] = opt(val_jaccard);
    j["val_dice"] = opt(val_dice);
    j["val_acc"] = opt(val_acc);
    return j;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["splits"] = nlohmann::json::object();
    for (const auto& [name, m] : splits) j["splits"][name] = m.to_json();
    j["history"] = nlohmann::json::array();
    for (const auto& e : history) j["history"].push_back(e.to_json());
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["config_fingerprint"] = config_fingerprint;
    return j;
}

std::map<std::string, torch::Tensor> snapshot_state(torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    std::map<std::string, torch::Tensor> state;
    for (const auto& p : module.named_parameters()) state[p.key()] = p.value().detach().clone();
    for (const auto& b : module.named_buffers()) state["buffer:" + b.key()] = b.value().detach().clone();
    return state;
}

void restore_state(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& state) {
    torch::NoGradGuard no_grad;
    for (auto& p : module.named_parameters()) p.value().copy_(state.at(p.key()));
    for (auto& b : module.named_buffers()) b.value().copy_(state.at("buffer:" + b.key()));
}

torch::Tensor predict_probabilities(TmcaModel& model, const Vocabulary& vocab, const std::vector<Sample>& samples,
                                    int batch_size) {
    const auto& config = model->config();
    torch::NoGradGuard no_grad;
    model->eval();
    std::vector<torch::Tensor> chunks;
    std::mt19937_64 unused_rng(0);
    for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(samples.size(), start + static_cast<size_t>(batch_size));
        std::vector<Sample> prepared;
        for (size_t i = start; i < end; ++i) {
            prepared.push_back(preprocess(samples[i], config.image_size, unused_rng, false));
        }
        const auto batch = collate(prepared);
        const auto tokens = tokenize_batch(batch.texts, vocab, config.max_len);
        auto out = model->forward(batch.images, tokens.ids, tokens.valid);
        chunks.push_back(torch::sigmoid(out.logits).squeeze(1));
    }
    if (chunks.empty()) return torch::empty({0, config.image_size, config.image_size});
    return torch::cat(chunks, 0);
}

SplitMetrics evaluate(TmcaModel& model, const Vocabulary& vocab, const Corpus& corpus, int batch_size) {
    if (corpus.empty()) throw DataError("cannot evaluate an empty corpus");
    const auto size = model->config().image_size;
    const auto probs = predict_probabilities(model, vocab, corpus.samples, batch_size);
    std::mt19937_64 unused_rng(0);
    std::vector<ImageMetrics> images;
    images.reserve(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        const auto gt = preprocess(corpus.samples[i], size, unused_rng, false).mask;
        const auto pred = (probs[static_cast<int64_t>(i)] >= 0.5).to(torch::kFloat32);
        images.push_back(image_metrics(corpus.samples[i].id, pred, gt));
    }
    return summarize(std::move(images));
}

TrainResult train(const ModelConfig& raw_config, const Corpus& train_corpus, const Corpus* val_corpus,
                  const TrainOptions& options) {
    const auto config = normalized(raw_config);
    if (train_corpus.empty()) throw DataError("training corpus is empty");
    const auto started = std::chrono::steady_clock::now();

    TrainResult result;
    if (options.vocab) {
        result.vocab = *options.vocab;
    } else {
        std::vector<std::string> texts;
        for (const auto& s : train_corpus.samples) texts.push_back(s.text);
        result.vocab = Vocabulary::build(texts);
    }

    torch::manual_seed(config.seed);
    result.model = TmcaModel(config, static_cast<int64_t>(result.vocab.size()));
    auto& model = result.model;
    torch::optim::AdamW optimizer(model->parameters(), torch::optim::AdamWOptions(config.optimizer.lr0)
                                                           .weight_decay(config.optimizer.weight_decay));

    std::ofstream metrics_log;
    if (options.out_dir) {
        fs::create_directories(*options.out_dir);
        metrics_log.open(*options.out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    }

    const ZoomOptions zoom{config.zoom_probability, config.zoom_max_scale};
    const auto n = train_corpus.size();
    const auto batches_per_epoch = static_cast<int64_t>((n + static_cast<size_t>(config.batch_size) - 1) /
                                                        static_cast<size_t>(config.batch_size));
    const int64_t total_steps = batches_per_epoch * config.epochs;
    const bool has_val = val_corpus != nullptr && !val_corpus->empty();

    std::map<std::string, torch::Tensor> best_state;
    double best_dice = -1.0;
    int64_t step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        model->train();
        EpochLog log;
        log.epoch = epoch + 1;
        int64_t batch_index = 0;
        const auto batches = make_batches(n, config.batch_size, config.seed, static_cast<std::uint64_t>(epoch));
        for (const auto& indices : batches) {
            std::vector<Sample> prepared;
            prepared.reserve(indices.size());
            for (size_t i : indices) {
                auto rng = sample_rng(config.seed, static_cast<std::uint64_t>(epoch) + 1, i);
                prepared.push_back(preprocess(train_corpus.samples[i], config.image_size, rng, true, zoom));
            }
            const auto batch = collate(prepared);
            const auto tokens = tokenize_batch(batch.texts, result.vocab, config.max_len);

            const double lr = lr_at(step, total_steps, config.optimizer.lr0, config.optimizer.lr_min);
            for (auto& group : optimizer.param_groups()) {
                static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
            }

            LossBreakdown loss;
            try {
                auto out = model->forward(batch.images, tokens.ids, tokens.valid);
                loss = model->loss(out, batch.masks);
            } catch (const NumericalError& e) {
                std::string ids;
                for (size_t k = 0; k < batch.ids.size() && k < 4; ++k) ids += (k ? "," : "") + batch.ids[k];
                throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) + " batch " +
                                     std::to_string(batch_index) + " (samples " + ids + (batch.ids.size() > 4 ? ",..." : "") +
                                     ")");
            }
            optimizer.zero_grad();
            loss.total.backward();
            optimizer.step();

            log.lr = lr;
            log.loss_total += loss.total.item<double>();
            log.loss_seg += loss.segmentation.item<double>();
            log.loss_ca += loss.alignment.item<double>();
            for (const auto& [level, value] : loss.alignment_per_level) {
                log.loss_ca_per_level[std::string(to_string(level))] += value.item<double>();
            }
            ++step;
            ++batch_index;
        }
        const double nb = static_cast<double>(batches.size());
        log.loss_total /= nb;
        log.loss_seg /= nb;
        log.loss_ca /= nb;
        for (auto& [_, v] : log.loss_ca_per_level) v /= nb;

        double score = static_cast<double>(epoch);
        if (has_val) {
            const auto val = evaluate(model, result.vocab, *val_corpus);
            log.val_jaccard = val.jaccard;
            log.val_dice = val.dice;
            log.val_acc = val.accuracy;
            score = val.dice;
        }
        if (score > best_dice) {
            best_dice = score;
            result.best_epoch = epoch + 1;
            best_state = snapshot_state(*model);
        }
        if (metrics_log.is_open()) {
            metrics_log << log.to_json().dump() << '\n';
            metrics_log.flush();
        }
        if (options.on_epoch) options.on_epoch(log);
        result.history.push_back(std::move(log));
    }

    restore_state(*model, best_state);
    model->eval();
    result.steps = step;
    result.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (options.out_dir) save_checkpoint(*options.out_dir / "best.ckpt", model, result.vocab);
    return result;
}

}  // namespace tmca
