#include "tmca/metrics.hpp"

#include <cmath>

#include "tmca/alignment.hpp"
#include "tmca/errors.hpp"

namespace tmca {

OverlapCounts overlap_counts(const torch::Tensor& pred, const torch::Tensor& gt) {
    if (pred.numel() != gt.numel()) throw ConfigError("metric: mask shapes differ");
    const auto p = (pred.reshape({-1}) > 0.5);
    const auto g = (gt.reshape({-1}) > 0.5);
    OverlapCounts c;
    c.intersection = (p & g).sum().item<int64_t>();
    c.predicted = p.sum().item<int64_t>();
    c.actual = g.sum().item<int64_t>();
    c.pixels = p.numel();
    c.correct = (p == g).sum().item<int64_t>();
    return c;
}

double dice(const OverlapCounts& c) {
    return (2.0 * static_cast<double>(c.intersection) + kDiceEpsilon) /
           (static_cast<double>(c.predicted + c.actual) + kDiceEpsilon);
}

double jaccard(const OverlapCounts& c) {
    return (static_cast<double>(c.intersection) + kDiceEpsilon) / (static_cast<double>(c.union_size()) + kDiceEpsilon);
}

double pixel_accuracy(const OverlapCounts& c) {
    return c.pixels == 0 ? 1.0 : static_cast<double>(c.correct) / static_cast<double>(c.pixels);
}

double dice(const torch::Tensor& pred, const torch::Tensor& gt) {
    if (pred.sizes() != gt.sizes()) throw ConfigError("dice: mask shapes differ");
    return dice(overlap_counts(pred, gt));
}

double jaccard(const torch::Tensor& pred, const torch::Tensor& gt) {
    if (pred.sizes() != gt.sizes()) throw ConfigError("jaccard: mask shapes differ");
    return jaccard(overlap_counts(pred, gt));
}

ImageMetrics image_metrics(const std::string& id, const torch::Tensor& pred, const torch::Tensor& gt) {
    if (pred.sizes() != gt.sizes()) throw ConfigError("metric: mask shapes differ for " + id);
    const auto c = overlap_counts(pred, gt);
    ImageMetrics m{id, jaccard(c), dice(c), pixel_accuracy(c)};
    if (m.dice + 1e-12 < m.jaccard || std::abs(m.jaccard - m.dice / (2.0 - m.dice)) > 1e-6) {
        throw std::logic_error("Dice/Jaccard identity violated for " + id);
    }
    return m;
}

SplitMetrics summarize(std::vector<ImageMetrics> images) {
    SplitMetrics s;
    s.count = images.size();
    if (images.empty()) return s;
    for (const auto& m : images) {
        s.jaccard += m.jaccard;
        s.dice += m.dice;
        s.accuracy += m.accuracy;
    }
    const double n = static_cast<double>(images.size());
    s.jaccard = 100.0 * s.jaccard / n;
    s.dice = 100.0 * s.dice / n;
    s.accuracy = 100.0 * s.accuracy / n;
    s.per_image = std::move(images);
    return s;
}

nlohmann::json SplitMetrics::to_json(bool with_images) const {
    nlohmann::json j{{"jaccard", jaccard}, {"dice", dice}, {"accuracy", accuracy}, {"count", count}};
    if (with_images) {
        auto arr = nlohmann::json::array();
        for (const auto& m : per_image) {
            arr.push_back({{"id", m.id}, {"jaccard", m.jaccard}, {"dice", m.dice}, {"accuracy", m.accuracy}});
        }
        j["images"] = arr;
    }
    return j;
}

}  // namespace tmca
