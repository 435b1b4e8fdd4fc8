#include "tmca/alignment.hpp"

#include "tmca/errors.hpp"

namespace tmca {

double mask_dice(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) throw ConfigError("mask_dice: mask shapes differ");
    const auto fa = (a > 0.5).to(torch::kFloat64);
    const auto fb = (b > 0.5).to(torch::kFloat64);
    const double inter = (fa * fb).sum().item<double>();
    const double total = fa.sum().item<double>() + fb.sum().item<double>();
    return (2.0 * inter + kDiceEpsilon) / (total + kDiceEpsilon);
}

AlignmentTargets build_targets(const torch::Tensor& masks, double tau1) {
    if (tau1 <= 0) throw ConfigError("tau1 must be > 0");
    torch::NoGradGuard no_grad;
    const auto b = masks.size(0);
    if (b < 1) throw ConfigError("build_targets needs at least one mask");
    const auto flat = (masks.reshape({b, -1}) > 0.5).to(torch::kFloat64);
    const auto area = flat.sum(1);
    const auto inter = flat.matmul(flat.t());
    auto raw = (2.0 * inter + kDiceEpsilon) / (area.unsqueeze(1) + area.unsqueeze(0) + kDiceEpsilon);
    const auto dtype = masks.is_floating_point() ? masks.scalar_type() : torch::kFloat32;
    raw = raw.to(dtype);
    return {raw, torch::softmax(raw / tau1, 1), torch::softmax(raw / tau1, 0)};
}

AlignmentTargets identity_targets(int64_t batch, torch::TensorOptions options) {
    auto eye = torch::eye(batch, options);
    return {eye, eye, eye};
}

torch::Tensor pool_level(const torch::Tensor& feature_map) {
    if (feature_map.dim() < 3) throw ConfigError("pool_level expects [..., C, h, w]");
    return feature_map.mean({-2, -1});
}

SimilarityMatrix level_similarity(const torch::Tensor& image_vectors, const torch::Tensor& text_vectors,
                                  double tau2) {
    if (tau2 <= 0) throw ConfigError("tau2 must be > 0");
    if (image_vectors.sizes() != text_vectors.sizes() || image_vectors.dim() != 2) {
        throw ConfigError("level_similarity expects matching [B, C] inputs");
    }
    const auto img = image_vectors / image_vectors.norm(2, 1, true).clamp_min(1e-12);
    const auto txt = text_vectors / text_vectors.norm(2, 1, true).clamp_min(1e-12);
    SimilarityMatrix s;
    s.raw_cos = img.matmul(txt.t());
    const auto logits = s.raw_cos / tau2;
    s.log_i2t = torch::log_softmax(logits, 1);
    s.log_t2i = torch::log_softmax(logits, 0);
    s.i2t = s.log_i2t.exp();
    s.t2i = s.log_t2i.exp();
    return s;
}

torch::Tensor soft_contrastive_loss(const SimilarityMatrix& similarity, const AlignmentTargets& targets) {
    if (similarity.raw_cos.sizes() != targets.raw.sizes()) {
        throw ConfigError("similarity and target batch sizes differ");
    }
    const auto b = static_cast<double>(similarity.raw_cos.size(0));
    const auto i2t = -(targets.i2t * similarity.log_i2t).sum() / b;
    const auto t2i = -(targets.t2i * similarity.log_t2i).sum() / b;
    return 0.5 * (i2t + t2i);
}

LevelProjectionsImpl::LevelProjectionsImpl(int64_t text_dim, const std::map<Level, int64_t>& level_dims) {
    for (const auto& [level, dim] : level_dims) {
        if (level == Level::Global && dim == text_dim) continue;
        heads_.emplace(level, register_module("level_" + std::string(to_string(level)),
                                              torch::nn::Linear(text_dim, dim)));
    }
}

torch::Tensor LevelProjectionsImpl::forward(Level level, const torch::Tensor& text_vectors) {
    auto it = heads_.find(level);
    if (it == heads_.end()) {
        if (level == Level::Global) return text_vectors;
        throw ConfigError("no projection head for level " + std::string(to_string(level)));
    }
    return it->second->forward(text_vectors);
}

AlignmentLoss multi_level_ca_loss(const FeaturePyramid& pyramid, const TextFeatures& text, const torch::Tensor& masks,
                                  const AlignmentSettings& settings, LevelProjections& projections) {
    if (settings.levels.empty()) throw ConfigError("contrastive alignment enabled with an empty level set");
    const auto batch = masks.size(0);
    const auto targets = settings.tsdm ? build_targets(masks, settings.tau1)
                                       : identity_targets(batch, text.global.options().requires_grad(false));
    AlignmentLoss out;
    torch::Tensor sum;
    for (Level level : settings.levels) {
        const auto image_vec = level == Level::Global ? pyramid.global : pool_level(pyramid.at(stride_of(level)));
        const auto text_vec = projections->forward(level, text.global);
        const auto targets_typed = AlignmentTargets{targets.raw.to(image_vec.dtype()), targets.i2t.to(image_vec.dtype()),
                                                    targets.t2i.to(image_vec.dtype())};
        auto loss = soft_contrastive_loss(level_similarity(image_vec, text_vec, settings.tau2), targets_typed);
        out.per_level.emplace(level, loss);
        sum = sum.defined() ? sum + loss : loss;
    }
    out.total = sum / static_cast<double>(settings.levels.size());
    return out;
}

}  // namespace tmca
