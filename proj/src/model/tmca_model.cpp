#include "tmca/model.hpp"

#include "tmca/errors.hpp"

namespace tmca {

TmcaModelImpl::TmcaModelImpl(const ModelConfig& config, int64_t vocab_size)
    : TmcaModelImpl(config, make_image_encoder(normalized(config)), make_text_encoder(normalized(config), vocab_size)) {}

TmcaModelImpl::TmcaModelImpl(const ModelConfig& config, std::shared_ptr<ImageEncoder> image_encoder,
                             std::shared_ptr<TextEncoder> text_encoder)
    : config_(normalized(config)), image_encoder_(std::move(image_encoder)), text_encoder_(std::move(text_encoder)) {
    build();
}

void TmcaModelImpl::build() {
    register_module("image_encoder", image_encoder_);
    register_module("text_encoder", text_encoder_);
    const auto widths = image_encoder_->widths();
    const auto text_dim = text_encoder_->dim();
    if (text_dim != config_.text_dim) throw ConfigError("text encoder dimension differs from config.text_dim");

    const std::map<Level, int64_t> level_dims{{Level::S8, widths[1]},
                                              {Level::S16, widths[2]},
                                              {Level::S32, widths[3]},
                                              {Level::Global, image_encoder_->global_dim()}};
    projections_ = register_module("projections", LevelProjections(text_dim, level_dims));

    const bool use_text = config_.ablation.text;
    const bool use_ltem = use_text && config_.ablation.ltem;
    for (int i = 0; i < 3; ++i) {
        const auto in_idx = static_cast<size_t>(3 - i);
        DecoderBlockOptions o;
        o.in_channels = widths[in_idx];
        o.out_channels = widths[in_idx - 1];
        o.skip_channels = widths[in_idx - 1];
        o.text_dim = text_dim;
        o.heads = config_.attention_heads;
        o.base_height = o.base_width = config_.image_size / (32 >> i);
        o.use_text = use_text;
        o.use_ltem = use_ltem;
        o.tau3 = config_.tau3;
        blocks_.push_back(register_module("block" + std::to_string(i), DecoderBlock(o)));
    }
    head_ = register_module("head", SegHead(widths[0], config_.head_channels));
}

ModelOutput TmcaModelImpl::forward(const torch::Tensor& images, const torch::Tensor& token_ids,
                                   const torch::Tensor& valid) {
    ModelOutput out;
    out.pyramid = image_encoder_->encode(images);
    if (config_.ablation.text) out.text = text_encoder_->encode(token_ids, valid);
    const TextFeatures* text = out.text ? &*out.text : nullptr;

    auto x = out.pyramid.at(32);
    const int skips[3] = {16, 8, 4};
    for (size_t i = 0; i < blocks_.size(); ++i) x = blocks_[i]->forward(x, text, out.pyramid.at(skips[i]));
    out.logits = head_->forward(x);
    return out;
}

LossBreakdown TmcaModelImpl::loss(const ModelOutput& output, const torch::Tensor& masks) {
    LossBreakdown out;
    const auto target = masks.dim() == 3 ? masks.unsqueeze(1) : masks;
    out.segmentation = seg_loss(output.logits, target).total;
    const auto levels = active_levels(config_);
    torch::Tensor alignment;
    if (!levels.empty() && output.text) {
        AlignmentSettings settings{levels, config_.tau1, config_.tau2, config_.ablation.tsdm};
        auto ca = multi_level_ca_loss(output.pyramid, *output.text, target, settings, projections_);
        alignment = ca.total;
        out.alignment_per_level = std::move(ca.per_level);
    }
    out.total = total_loss(alignment, out.segmentation);
    out.alignment = alignment.defined() ? alignment : torch::zeros({}, out.segmentation.options());
    return out;
}

std::map<std::string, std::vector<torch::Tensor>> TmcaModelImpl::parameter_groups() {
    std::map<std::string, std::vector<torch::Tensor>> groups;
    for (const auto& item : named_parameters()) {
        const auto& name = item.key();
        std::string group;
        if (name.rfind("image_encoder.", 0) == 0) {
            group = "image_encoder";
        } else if (name.rfind("text_encoder.", 0) == 0) {
            group = "text_encoder";
        } else if (name.rfind("projections.", 0) == 0) {
            group = "projections";
        } else if (name.find(".ltem.") != std::string::npos) {
            group = "ltem";
        } else {
            group = "decoder";
        }
        groups[group].push_back(item.value());
    }
    return groups;
}

}  // namespace tmca
