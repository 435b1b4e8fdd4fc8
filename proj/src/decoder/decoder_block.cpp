#include "tmca/decoder.hpp"
#include "tmca/errors.hpp"

namespace tmca {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

DecoderBlockImpl::DecoderBlockImpl(const DecoderBlockOptions& o) : options_(o) {
    const auto c = o.in_channels;
    pos_embedding_ = register_parameter("pos_embedding", torch::randn({1, c, o.base_height, o.base_width}) * 0.02);
    self_norm_ = register_module("self_norm", nn::LayerNorm(nn::LayerNormOptions({c})));
    self_attn_ = register_module("self_attn", nn::MultiheadAttention(nn::MultiheadAttentionOptions(c, o.heads)));
    text_proj_ = register_module("text_proj", nn::Linear(o.text_dim, c));
    cross_norm_ = register_module("cross_norm", nn::LayerNorm(nn::LayerNormOptions({c})));
    cross_attn_ = register_module("cross_attn", nn::MultiheadAttention(nn::MultiheadAttentionOptions(c, o.heads)));
    upsample_ = register_module(
        "upsample", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(c, o.out_channels, 2).stride(2)));
    fuse_ = register_module("fuse", chain({conv_norm_act(o.out_channels + o.skip_channels, o.out_channels, 1, 1, 0),
                                                   conv_norm_act(o.out_channels, o.out_channels, 3, 1, 1)}));
    ltem_ = register_module("ltem", Ltem(o.text_dim, c));
}

torch::Tensor DecoderBlockImpl::positional(int64_t h, int64_t w) {
    if (h == options_.base_height && w == options_.base_width) return pos_embedding_;
    return F::interpolate(pos_embedding_, F::InterpolateFuncOptions()
                                              .size(std::vector<int64_t>{h, w})
                                              .mode(torch::kBilinear)
                                              .align_corners(false));
}

torch::Tensor DecoderBlockImpl::forward(const torch::Tensor& in, const TextFeatures* text, const torch::Tensor& skip,
                                        DecoderTrace* trace) {
    const auto b = in.size(0);
    const auto c = in.size(1);
    const auto h = in.size(2);
    const auto w = in.size(3);
    if (skip.dim() != 4 || skip.size(0) != b || skip.size(2) != 2 * h || skip.size(3) != 2 * w ||
        skip.size(1) != options_.skip_channels) {
        throw ConfigError("decoder skip features must be [B, " + std::to_string(options_.skip_channels) + ", " +
                          std::to_string(2 * h) + ", " + std::to_string(2 * w) + "]");
    }
    const bool use_text = options_.use_text;
    if (use_text && text == nullptr) throw ConfigError("decoder block needs text features");

    // Image tokens, sequence-first: [h*w, B, C].
    auto tokens = (in + positional(h, w)).flatten(2).permute({2, 0, 1});
    auto normed = self_norm_->forward(tokens);
    auto enhanced = tokens + std::get<0>(self_attn_->forward(normed, normed, normed, {}, false));

    auto fused_tokens = enhanced;
    torch::Tensor text_projected;
    if (use_text) {
        text_projected = text_proj_->forward(text->words);  // [B, K, C]
        const auto kv = text_projected.transpose(0, 1);
        const auto query = cross_norm_->forward(enhanced);
        fused_tokens = enhanced + std::get<0>(cross_attn_->forward(query, kv, kv, text->valid.logical_not(), false));
    }
    const auto fused = fused_tokens.permute({1, 2, 0}).reshape({b, c, h, w});

    auto out = fuse_->forward(torch::cat({upsample_->forward(fused), skip}, 1));

    std::optional<AttentionMap> attention;
    if (use_text && options_.use_ltem) {
        attention = ltem_->forward(in, text->global, options_.tau3);
        out = out * attention->upsampled;
    }

    if (trace != nullptr) {
        trace->enhanced = enhanced.transpose(0, 1);
        trace->text_projected = text_projected;
        trace->fused = fused;
        trace->attention = attention;
    }
    return out;
}

SegHeadImpl::SegHeadImpl(int64_t in_channels, int64_t hidden) {
    body_ = register_module(
        "body", nn::Sequential(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in_channels, hidden, 2).stride(2)),
                               nn::GroupNorm(nn::GroupNormOptions(1, hidden)), nn::GELU(),
                               nn::ConvTranspose2d(nn::ConvTranspose2dOptions(hidden, hidden, 2).stride(2)),
                               nn::GroupNorm(nn::GroupNormOptions(1, hidden)), nn::GELU(),
                               nn::Conv2d(nn::Conv2dOptions(hidden, 1, 1))));
}

torch::Tensor SegHeadImpl::forward(const torch::Tensor& x) {
    return body_->forward(x);
}

}  // namespace tmca
