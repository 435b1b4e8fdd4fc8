#include <cmath>

#include "tmca/decoder.hpp"
#include "tmca/errors.hpp"

namespace tmca {
namespace F = torch::nn::functional;

AttentionMap attention_map_from_scores(const torch::Tensor& scores, int64_t h, int64_t w, double tau3) {
    if (tau3 <= 0) throw ConfigError("tau3 must be > 0");
    if (scores.dim() != 2 || scores.size(1) != h * w) throw ConfigError("scores must be [B, h*w]");
    AttentionMap map;
    map.scores = scores;
    map.weights = torch::softmax(scores / tau3, 1);
    map.rescaled = (map.weights * static_cast<double>(h * w)).reshape({scores.size(0), 1, h, w});
    map.upsampled = F::interpolate(map.rescaled, F::InterpolateFuncOptions()
                                                     .scale_factor(std::vector<double>{2.0, 2.0})
                                                     .mode(torch::kBilinear)
                                                     .align_corners(false));
    return map;
}

LtemImpl::LtemImpl(int64_t text_dim, int64_t channels) {
    proj_ = register_module("proj", torch::nn::Linear(text_dim, channels));
}

torch::Tensor LtemImpl::scores(const torch::Tensor& deep_features, const torch::Tensor& text_global) {
    const auto c = deep_features.size(1);
    const auto query = proj_->forward(text_global);                        // [B, C]
    const auto regions = deep_features.flatten(2);                          // [B, C, h*w]
    return torch::einsum("bcn,bc->bn", {regions, query}) / std::sqrt(static_cast<double>(c));
}

AttentionMap LtemImpl::forward(const torch::Tensor& deep_features, const torch::Tensor& text_global, double tau3) {
    return attention_map_from_scores(scores(deep_features, text_global), deep_features.size(2),
                                     deep_features.size(3), tau3);
}

}  // namespace tmca
