#include "tmca/alignment.hpp"
#include "tmca/decoder.hpp"
#include "tmca/errors.hpp"

namespace tmca {

SegLoss seg_loss(const torch::Tensor& logits, const torch::Tensor& target) {
    if (logits.numel() != target.numel() || logits.size(0) != target.size(0)) {
        throw ConfigError("seg_loss: logits and target shapes differ");
    }
    const auto b = logits.size(0);
    const auto x = logits.reshape({b, -1});
    const auto g = target.reshape({b, -1}).to(logits.dtype());
    const auto p = torch::sigmoid(x);
    const auto dice_coeff = (2.0 * (p * g).sum(1) + kDiceEpsilon) / (p.sum(1) + g.sum(1) + kDiceEpsilon);
    SegLoss out;
    out.dice = (1.0 - dice_coeff).mean();
    out.bce = torch::binary_cross_entropy_with_logits(x, g);
    out.total = out.dice + out.bce;
    return out;
}

torch::Tensor total_loss(const torch::Tensor& alignment_loss, const torch::Tensor& segmentation_loss) {
    auto finite = [](const torch::Tensor& t) { return torch::isfinite(t.detach()).all().item<bool>(); };
    if (!finite(segmentation_loss)) throw NumericalError("segmentation loss is not finite");
    if (alignment_loss.defined() && !finite(alignment_loss)) throw NumericalError("alignment loss is not finite");
    return alignment_loss.defined() ? alignment_loss + segmentation_loss : segmentation_loss;
}

}  // namespace tmca
