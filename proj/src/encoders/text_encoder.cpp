#include "tmca/encoders.hpp"
#include "tmca/errors.hpp"

namespace tmca {
namespace nn = torch::nn;

TransformerLayerImpl::TransformerLayerImpl(int64_t dim, int64_t heads) {
    norm1_ = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({dim})));
    norm2_ = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({dim})));
    attn_ = register_module("attn", nn::MultiheadAttention(nn::MultiheadAttentionOptions(dim, heads).dropout(0.0)));
    ffn_ = register_module("ffn", nn::Sequential(nn::Linear(dim, 4 * dim), nn::GELU(), nn::Linear(4 * dim, dim)));
}

torch::Tensor TransformerLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& key_padding_mask) {
    auto h = norm1_->forward(x);
    auto attended = std::get<0>(attn_->forward(h, h, h, key_padding_mask, /*need_weights=*/false));
    auto y = x + attended;
    return y + ffn_->forward(norm2_->forward(y));
}

TransformerTextEncoder::TransformerTextEncoder(int64_t vocab_size, int64_t dim, int64_t layers, int64_t heads,
                                               int64_t max_len)
    : dim_(dim), max_len_(max_len) {
    if (layers < 3) throw ConfigError("text encoder needs at least 3 layers for the last-3-layer readout");
    embedding_ = register_module("embedding", nn::Embedding(vocab_size, dim));
    positions_ = register_parameter("positions", torch::randn({max_len, dim}) * 0.02);
    for (int64_t i = 0; i < layers; ++i) {
        layers_.push_back(register_module("layer" + std::to_string(i), TransformerLayer(dim, heads)));
    }
}

std::vector<torch::Tensor> TransformerTextEncoder::layer_outputs(const torch::Tensor& ids, const torch::Tensor& valid) {
    if (ids.dim() != 2 || valid.sizes() != ids.sizes()) throw ConfigError("token ids and mask must be [B, K]");
    const auto k = ids.size(1);
    if (k > max_len_) throw ConfigError("token sequence longer than max_len");
    if ((valid.sum(1) == 0).any().item<bool>()) throw ConfigError("text has no valid tokens");

    // [B, K, D] -> [K, B, D] for MultiheadAttention
    auto x = (embedding_->forward(ids) + positions_.narrow(0, 0, k).unsqueeze(0)).transpose(0, 1);
    const auto padding = valid.logical_not();
    std::vector<torch::Tensor> outs;
    outs.reserve(layers_.size());
    for (auto& layer : layers_) {
        x = layer->forward(x, padding);
        outs.push_back(x.transpose(0, 1));
    }
    return outs;
}

TextFeatures TransformerTextEncoder::encode(const torch::Tensor& ids, const torch::Tensor& valid) {
    auto outs = layer_outputs(ids, valid);
    const size_t n = outs.size();
    auto words = (outs[n - 3] + outs[n - 2] + outs[n - 1]) / 3.0;
    const auto keep = valid.unsqueeze(-1).to(words.dtype());
    words = words * keep;
    return {words, valid, masked_mean(words, valid)};
}

torch::Tensor masked_mean(const torch::Tensor& words, const torch::Tensor& valid) {
    const auto keep = valid.unsqueeze(-1).to(words.dtype());
    return (words * keep).sum(1) / keep.sum(1).clamp_min(1.0);
}

std::shared_ptr<TextEncoder> make_text_encoder(const ModelConfig& config, int64_t vocab_size) {
    return std::make_shared<TransformerTextEncoder>(vocab_size, config.text_dim, config.text_layers,
                                                    config.text_heads, config.max_len);
}

}  // namespace tmca
