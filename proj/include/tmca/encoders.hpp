#pragma once

#include <torch/torch.h>

#include <array>
#include <map>
#include <memory>
#include <vector>

#include "tmca/config.hpp"

namespace tmca {

// Per-stride image features plus the pooled global vector.
//   levels[s]: [B, C_s, H/s, W/s]
//   global:    [B, C_g]
struct FeaturePyramid {
    std::map<int, torch::Tensor> levels;
    torch::Tensor global;

    const torch::Tensor& at(int stride) const;
};

// Per-word features with padding mask and pooled global vector.
//   words:  [B, K, D], rows at padded positions are zero
//   valid:  [B, K] bool
//   global: [B, D], mean of valid rows
struct TextFeatures {
    torch::Tensor words;
    torch::Tensor valid;
    torch::Tensor global;
};

// Any image backbone producing the stride 4/8/16/32 pyramid.
class ImageEncoder : public torch::nn::Module {
public:
    virtual FeaturePyramid encode(const torch::Tensor& images) = 0;
    virtual std::array<int64_t, 4> widths() const = 0;
    virtual int64_t global_dim() const = 0;
};

// Any text backbone producing TextFeatures.
class TextEncoder : public torch::nn::Module {
public:
    virtual TextFeatures encode(const torch::Tensor& ids, const torch::Tensor& valid) = 0;
    virtual int64_t dim() const = 0;
};

// Conv + GroupNorm + GELU.
torch::nn::Sequential conv_norm_act(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t padding);
// Flattens several Sequentials into one (libtorch cannot nest them).
torch::nn::Sequential chain(std::initializer_list<torch::nn::Sequential> parts);

// Stem (stride 4) followed by three x2 downsampling stages.
class ConvPyramidEncoder : public ImageEncoder {
public:
    ConvPyramidEncoder(int64_t in_channels, std::array<int64_t, 4> widths, int64_t global_dim);

    FeaturePyramid encode(const torch::Tensor& images) override;
    std::array<int64_t, 4> widths() const override { return widths_; }
    int64_t global_dim() const override { return global_dim_; }

private:
    std::array<int64_t, 4> widths_;
    int64_t global_dim_;
    torch::nn::Sequential stem_{nullptr};
    std::vector<torch::nn::Sequential> stages_;
    torch::nn::Linear global_proj_{nullptr};
};

// Pre-norm transformer encoder layer over [K, B, D] tokens.
class TransformerLayerImpl : public torch::nn::Module {
public:
    TransformerLayerImpl(int64_t dim, int64_t heads);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& key_padding_mask);

private:
    torch::nn::LayerNorm norm1_{nullptr};
    torch::nn::LayerNorm norm2_{nullptr};
    torch::nn::MultiheadAttention attn_{nullptr};
    torch::nn::Sequential ffn_{nullptr};
};
TORCH_MODULE(TransformerLayer);

// Small transformer; per-word features are the mean of the last three layer
// outputs.
class TransformerTextEncoder : public TextEncoder {
public:
    TransformerTextEncoder(int64_t vocab_size, int64_t dim, int64_t layers, int64_t heads, int64_t max_len);

    TextFeatures encode(const torch::Tensor& ids, const torch::Tensor& valid) override;
    int64_t dim() const override { return dim_; }

    // Hidden state after every layer, [B, K, D] each.
    std::vector<torch::Tensor> layer_outputs(const torch::Tensor& ids, const torch::Tensor& valid);

private:
    int64_t dim_;
    int64_t max_len_;
    torch::nn::Embedding embedding_{nullptr};
    torch::Tensor positions_;
    std::vector<TransformerLayer> layers_;
};

// Builds the default encoders for a config.
std::shared_ptr<ImageEncoder> make_image_encoder(const ModelConfig& config);
std::shared_ptr<TextEncoder> make_text_encoder(const ModelConfig& config, int64_t vocab_size);

// Mean of rows where valid is true; [B, K, D] x [B, K] -> [B, D].
torch::Tensor masked_mean(const torch::Tensor& words, const torch::Tensor& valid);

}  // namespace tmca
