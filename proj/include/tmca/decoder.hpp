#pragma once

#include <torch/torch.h>

#include <optional>

#include "tmca/encoders.hpp"

namespace tmca {

// Language-guided attention over the h*w sub-regions of a deep feature map.
//   scores:    [B, h*w]
//   weights:   [B, h*w], softmax(scores / τ3)
//   rescaled:  [B, 1, h, w], weights * (h*w), spatial mean 1
//   upsampled: [B, 1, 2h, 2w], bilinear x2 of rescaled
struct AttentionMap {
    torch::Tensor scores;
    torch::Tensor weights;
    torch::Tensor rescaled;
    torch::Tensor upsampled;
};

AttentionMap attention_map_from_scores(const torch::Tensor& scores, int64_t h, int64_t w, double tau3);

class LtemImpl : public torch::nn::Module {
public:
    LtemImpl(int64_t text_dim, int64_t channels);

    // <I_i, proj(T_g)> / sqrt(C) for every sub-region i.
    torch::Tensor scores(const torch::Tensor& deep_features, const torch::Tensor& text_global);
    AttentionMap forward(const torch::Tensor& deep_features, const torch::Tensor& text_global, double tau3);

    torch::nn::Linear& projection() { return proj_; }

private:
    torch::nn::Linear proj_{nullptr};
};
TORCH_MODULE(Ltem);

struct DecoderBlockOptions {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int64_t skip_channels = 0;
    int64_t text_dim = 128;
    int64_t heads = 4;
    // Token grid the positional embedding is learned at; other sizes are
    // served by bilinear resampling.
    int64_t base_height = 2;
    int64_t base_width = 2;
    bool use_text = true;
    bool use_ltem = true;
    double tau3 = 1.0;
};

// Intermediates of one block, filled when a trace is requested.
struct DecoderTrace {
    torch::Tensor enhanced;        // I'  [B, h*w, C]
    torch::Tensor text_projected;  // T'  [B, K, C]
    torch::Tensor fused;           // f_s [B, C, h, w]
    std::optional<AttentionMap> attention;
};

class DecoderBlockImpl : public torch::nn::Module {
public:
    explicit DecoderBlockImpl(const DecoderBlockOptions& options);

    // in: [B, C, h, w]; skip: [B, C_skip, 2h, 2w] -> [B, C', 2h, 2w].
    // `text` may be null only when the block was built without text.
    torch::Tensor forward(const torch::Tensor& in, const TextFeatures* text, const torch::Tensor& skip,
                          DecoderTrace* trace = nullptr);

    const DecoderBlockOptions& options() const { return options_; }
    void set_text_enabled(bool on) { options_.use_text = on; }
    void set_ltem_enabled(bool on) { options_.use_ltem = on; }

    torch::nn::MultiheadAttention& cross_attention() { return cross_attn_; }
    Ltem& ltem() { return ltem_; }

private:
    torch::Tensor positional(int64_t h, int64_t w);

    DecoderBlockOptions options_;
    torch::Tensor pos_embedding_;
    torch::nn::LayerNorm self_norm_{nullptr};
    torch::nn::MultiheadAttention self_attn_{nullptr};
    torch::nn::Linear text_proj_{nullptr};
    torch::nn::LayerNorm cross_norm_{nullptr};
    torch::nn::MultiheadAttention cross_attn_{nullptr};
    torch::nn::ConvTranspose2d upsample_{nullptr};
    torch::nn::Sequential fuse_{nullptr};
    Ltem ltem_{nullptr};
};
TORCH_MODULE(DecoderBlock);

// Two plain x2 upsampling blocks and a 1x1 projection to one logit channel.
class SegHeadImpl : public torch::nn::Module {
public:
    SegHeadImpl(int64_t in_channels, int64_t hidden_channels);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(SegHead);

struct SegLoss {
    torch::Tensor total;
    torch::Tensor dice;
    torch::Tensor bce;
};

// Dice loss on sigmoid probabilities (per image, averaged over the batch)
// plus mean binary cross-entropy.
SegLoss seg_loss(const torch::Tensor& logits, const torch::Tensor& target);

// L_CA + L_SEG. Throws NumericalError if either term is not finite.
torch::Tensor total_loss(const torch::Tensor& alignment_loss, const torch::Tensor& segmentation_loss);

}  // namespace tmca
