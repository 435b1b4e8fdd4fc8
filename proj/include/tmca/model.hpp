#pragma once

#include <torch/torch.h>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tmca/alignment.hpp"
#include "tmca/config.hpp"
#include "tmca/decoder.hpp"
#include "tmca/encoders.hpp"

namespace tmca {

struct ModelOutput {
    torch::Tensor logits;  // [B, 1, H, W]
    FeaturePyramid pyramid;
    std::optional<TextFeatures> text;
};

struct LossBreakdown {
    torch::Tensor total;
    torch::Tensor segmentation;
    torch::Tensor alignment;  // zero scalar when contrastive alignment is off
    std::map<Level, torch::Tensor> alignment_per_level;
};

// Image encoder, text encoder, per-level alignment projections, three
// language-guided decoder blocks (strides 32->16->8->4) and a segmentation
// head.
class TmcaModelImpl : public torch::nn::Module {
public:
    TmcaModelImpl(const ModelConfig& config, int64_t vocab_size);
    TmcaModelImpl(const ModelConfig& config, std::shared_ptr<ImageEncoder> image_encoder,
                  std::shared_ptr<TextEncoder> text_encoder);

    ModelOutput forward(const torch::Tensor& images, const torch::Tensor& token_ids, const torch::Tensor& valid);
    LossBreakdown loss(const ModelOutput& output, const torch::Tensor& masks);

    const ModelConfig& config() const { return config_; }
    ImageEncoder& image_encoder() { return *image_encoder_; }
    TextEncoder& text_encoder() { return *text_encoder_; }
    LevelProjections& projections() { return projections_; }
    std::vector<DecoderBlock>& blocks() { return blocks_; }

    // Parameters by component: image_encoder, text_encoder, projections,
    // decoder, ltem.
    std::map<std::string, std::vector<torch::Tensor>> parameter_groups();

private:
    void build();

    ModelConfig config_;
    std::shared_ptr<ImageEncoder> image_encoder_;
    std::shared_ptr<TextEncoder> text_encoder_;
    LevelProjections projections_{nullptr};
    std::vector<DecoderBlock> blocks_;
    SegHead head_{nullptr};
};
TORCH_MODULE(TmcaModel);

}  // namespace tmca
