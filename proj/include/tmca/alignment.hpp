#pragma once

#include <torch/torch.h>

#include <map>
#include <vector>

#include "tmca/config.hpp"
#include "tmca/encoders.hpp"

namespace tmca {

inline constexpr double kDiceEpsilon = 1e-6;

// (2|a∩b| + ε) / (|a| + |b| + ε). Throws ConfigError on shape mismatch.
double mask_dice(const torch::Tensor& a, const torch::Tensor& b);

// Soft contrastive targets from mask overlap.
//   raw: [B, B] pairwise mask Dice
//   i2t: row softmax of raw / τ1 (each row sums to 1)
//   t2i: column softmax of raw / τ1 (each column sums to 1)
struct AlignmentTargets {
    torch::Tensor raw;
    torch::Tensor i2t;
    torch::Tensor t2i;
};

// masks: [B, H, W] or [B, 1, H, W]. The result carries no gradient.
AlignmentTargets build_targets(const torch::Tensor& masks, double tau1);
// One-hot instance targets (TSDM removed).
AlignmentTargets identity_targets(int64_t batch, torch::TensorOptions options = torch::kFloat32);

// Predicted image/text similarity distributions.
//   raw_cos: [B, B], raw_cos[p][q] = cos(img_p, txt_q)
//   i2t / t2i: row / column softmax of raw_cos / τ2, with their logs.
struct SimilarityMatrix {
    torch::Tensor raw_cos;
    torch::Tensor i2t;
    torch::Tensor t2i;
    torch::Tensor log_i2t;
    torch::Tensor log_t2i;
};

// Spatial average pool: [B, C, h, w] -> [B, C] (or [C, h, w] -> [C]).
torch::Tensor pool_level(const torch::Tensor& feature_map);

SimilarityMatrix level_similarity(const torch::Tensor& image_vectors, const torch::Tensor& text_vectors, double tau2);

// Mean of the image-to-text and text-to-image soft cross-entropies.
torch::Tensor soft_contrastive_loss(const SimilarityMatrix& similarity, const AlignmentTargets& targets);

// Text-to-image-level projection heads. The global level is the identity
// when the text and global image dimensions agree.
class LevelProjectionsImpl : public torch::nn::Module {
public:
    LevelProjectionsImpl(int64_t text_dim, const std::map<Level, int64_t>& level_dims);
    torch::Tensor forward(Level level, const torch::Tensor& text_vectors);

private:
    std::map<Level, torch::nn::Linear> heads_;
};
TORCH_MODULE(LevelProjections);

struct AlignmentSettings {
    std::vector<Level> levels;
    double tau1 = 1.0;
    double tau2 = 0.07;
    bool tsdm = true;
};

struct AlignmentLoss {
    torch::Tensor total;
    std::map<Level, torch::Tensor> per_level;
};

// Mean over `settings.levels` of the per-level soft contrastive loss.
// Throws ConfigError if no level is enabled.
AlignmentLoss multi_level_ca_loss(const FeaturePyramid& pyramid, const TextFeatures& text, const torch::Tensor& masks,
                                  const AlignmentSettings& settings, LevelProjections& projections);

}  // namespace tmca
