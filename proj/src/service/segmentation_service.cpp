#include <chrono>
#include <mutex>

#include <httplib.h>

#include "tmca/errors.hpp"
#include "tmca/image_io.hpp"
#include "tmca/metrics.hpp"
#include "tmca/service.hpp"
#include "tmca/training.hpp"

namespace tmca {
namespace F = torch::nn::functional;

nlohmann::json SegmentResult::to_json() const {
    nlohmann::json j{{"mask", httplib::detail::base64_encode(mask_png)},
                     {"width", width},
                     {"height", height},
                     {"probabilities_available", probabilities_png.has_value()},
                     {"latency_ms", latency_ms},
                     {"model_fingerprint", model_fingerprint}};
    j["dice_vs_reference"] = dice_vs_reference ? nlohmann::json(*dice_vs_reference) : nlohmann::json(nullptr);
    if (probabilities_png) j["probabilities"] = httplib::detail::base64_encode(*probabilities_png);
    return j;
}

SegmentationService::SegmentationService(ServiceLimits limits) : limits_(limits) {}

void SegmentationService::load(const std::filesystem::path& checkpoint) { load(load_checkpoint(checkpoint)); }

void SegmentationService::load(LoadedCheckpoint checkpoint) {
    checkpoint.model->eval();
    auto next = std::make_shared<const LoadedCheckpoint>(std::move(checkpoint));
    std::unique_lock lock(mutex_);
    model_ = std::move(next);
}

bool SegmentationService::loaded() const {
    std::shared_lock lock(mutex_);
    return model_ != nullptr;
}

namespace {

std::shared_ptr<const LoadedCheckpoint> require(const std::shared_ptr<const LoadedCheckpoint>& m) {
    if (!m) throw ServiceError(503, "model not loaded");
    return m;
}

}  // namespace

std::string SegmentationService::fingerprint() const {
    std::shared_lock lock(mutex_);
    return require(model_)->fingerprint;
}

nlohmann::json SegmentationService::health() const {
    std::shared_lock lock(mutex_);
    return {{"status", "ok"}, {"model_fingerprint", require(model_)->fingerprint}};
}

nlohmann::json SegmentationService::model_summary() const {
    std::shared_lock lock(mutex_);
    const auto m = require(model_);
    const auto& c = m->config;
    nlohmann::json levels = nlohmann::json::array();
    for (auto l : active_levels(c)) levels.push_back(std::string(to_string(l)));
    return {{"image_size", c.image_size},
            {"in_channels", c.in_channels},
            {"widths", c.widths},
            {"text_dim", c.text_dim},
            {"max_len", c.max_len},
            {"levels", levels},
            {"temperatures", {{"tau1", c.tau1}, {"tau2", c.tau2}, {"tau3", c.tau3}}},
            {"ablation", to_json(c)["ablation"]},
            {"vocab_size", m->vocab.size()},
            {"model_fingerprint", m->fingerprint},
            {"config_fingerprint", tmca::fingerprint(c)}};
}

SegmentResult SegmentationService::segment(const SegmentRequest& request) const {
    const auto started = std::chrono::steady_clock::now();
    std::shared_ptr<const LoadedCheckpoint> m;
    {
        std::shared_lock lock(mutex_);
        m = require(model_);
    }
    const auto& config = m->config;

    if (request.image.empty()) throw ServiceError(400, "missing image");
    if (request.image.size() > limits_.max_image_bytes) throw ServiceError(413, "image exceeds size limit");
    if (trim(request.text).empty()) throw ServiceError(422, "text must not be empty");
    if (!(request.threshold >= 0.0 && request.threshold <= 1.0)) throw ServiceError(400, "threshold must be in [0, 1]");
    if (tokenize(request.text, m->vocab, config.max_len).valid_count() == 0) {
        throw ServiceError(422, "text contains no words");
    }

    torch::Tensor image;
    try {
        image = decode_image(request.image, config.in_channels);
    } catch (const std::exception& e) {
        throw ServiceError(400, std::string("cannot decode image: ") + e.what());
    }
    const auto height = image.size(1);
    const auto width = image.size(2);
    if (height > limits_.max_side || width > limits_.max_side) throw ServiceError(413, "image dimensions exceed limit");

    std::optional<torch::Tensor> reference;
    if (request.reference_mask) {
        try {
            reference = (decode_gray(*request.reference_mask) >= 0.5).to(torch::kFloat32);
        } catch (const std::exception& e) {
            throw ServiceError(400, std::string("cannot decode reference_mask: ") + e.what());
        }
        if (reference->size(0) != height || reference->size(1) != width) {
            throw ServiceError(400, "reference_mask dimensions differ from image");
        }
    }

    Sample sample{"request", image, torch::zeros({height, width}), request.text};
    auto model = m->model;
    auto probs = predict_probabilities(model, m->vocab, {sample}, 1)[0];
    probs = F::interpolate(probs.unsqueeze(0).unsqueeze(0),
                           F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(false))
                .squeeze(0)
                .squeeze(0)
                .clamp(0.0, 1.0);
    const auto mask = (probs >= request.threshold).to(torch::kFloat32);

    SegmentResult result;
    result.mask_png = encode_png(mask);
    result.width = static_cast<int>(width);
    result.height = static_cast<int>(height);
    if (request.probabilities) result.probabilities_png = encode_png(probs);
    if (reference) result.dice_vs_reference = dice(mask, *reference);
    result.model_fingerprint = m->fingerprint;
    result.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return result;
}

}  // namespace tmca
