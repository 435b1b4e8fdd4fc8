#include "tmca/encoders.hpp"
#include "tmca/errors.hpp"

namespace tmca {
namespace nn = torch::nn;

const torch::Tensor& FeaturePyramid::at(int stride) const {
    auto it = levels.find(stride);
    if (it == levels.end()) throw std::out_of_range("no pyramid level at stride " + std::to_string(stride));
    return it->second;
}

nn::Sequential conv_norm_act(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t padding) {
    return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding)),
                          nn::GroupNorm(nn::GroupNormOptions(1, out)), nn::GELU());
}

nn::Sequential chain(std::initializer_list<nn::Sequential> parts) {
    nn::Sequential seq;
    for (const auto& part : parts) seq->extend(*part);
    return seq;
}

ConvPyramidEncoder::ConvPyramidEncoder(int64_t in_channels, std::array<int64_t, 4> widths, int64_t global_dim)
    : widths_(widths), global_dim_(global_dim) {
    stem_ = register_module("stem", chain({conv_norm_act(in_channels, widths[0], 4, 4, 0),
                                                   conv_norm_act(widths[0], widths[0], 3, 1, 1)}));
    for (size_t i = 1; i < widths.size(); ++i) {
        stages_.push_back(register_module("stage" + std::to_string(i),
                                          chain({conv_norm_act(widths[i - 1], widths[i], 2, 2, 0),
                                                         conv_norm_act(widths[i], widths[i], 3, 1, 1)})));
    }
    global_proj_ = register_module("global_proj", nn::Linear(widths[3], global_dim));
}

FeaturePyramid ConvPyramidEncoder::encode(const torch::Tensor& images) {
    if (images.dim() != 4) throw ConfigError("image batch must be [B, ch, H, W]");
    if (images.size(2) % 32 != 0 || images.size(3) % 32 != 0) {
        throw ConfigError("image height and width must be divisible by 32, got " + std::to_string(images.size(2)) +
                          "x" + std::to_string(images.size(3)));
    }
    FeaturePyramid out;
    auto x = stem_->forward(images);
    out.levels[4] = x;
    int stride = 4;
    for (auto& stage : stages_) {
        x = stage->forward(x);
        stride *= 2;
        out.levels[stride] = x;
    }
    out.global = global_proj_->forward(x.mean({2, 3}));
    return out;
}

std::shared_ptr<ImageEncoder> make_image_encoder(const ModelConfig& config) {
    std::array<int64_t, 4> widths{};
    for (size_t i = 0; i < 4; ++i) widths[i] = config.widths[i];
    return std::make_shared<ConvPyramidEncoder>(config.in_channels, widths, config.text_dim);
}

}  // namespace tmca
