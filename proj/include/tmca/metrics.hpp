#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include <json.hpp>

namespace tmca {

// Overlap counts of two binary masks (> 0.5 is foreground).
struct OverlapCounts {
    int64_t intersection = 0;
    int64_t predicted = 0;
    int64_t actual = 0;
    int64_t pixels = 0;
    int64_t correct = 0;

    int64_t union_size() const { return predicted + actual - intersection; }
};

OverlapCounts overlap_counts(const torch::Tensor& pred, const torch::Tensor& gt);

// ε-smoothed coefficients in [0, 1]; throw ConfigError on shape mismatch.
double dice(const torch::Tensor& pred, const torch::Tensor& gt);
double jaccard(const torch::Tensor& pred, const torch::Tensor& gt);
double dice(const OverlapCounts& c);
double jaccard(const OverlapCounts& c);
double pixel_accuracy(const OverlapCounts& c);

struct ImageMetrics {
    std::string id;
    double jaccard = 0;
    double dice = 0;
    double accuracy = 0;
};

// Also checks Dice >= Jaccard and J = D / (2 - D) to 1e-6.
ImageMetrics image_metrics(const std::string& id, const torch::Tensor& pred, const torch::Tensor& gt);

// Per-image averages, as percentages.
struct SplitMetrics {
    double jaccard = 0;
    double dice = 0;
    double accuracy = 0;
    size_t count = 0;
    std::vector<ImageMetrics> per_image;

    nlohmann::json to_json(bool with_images = false) const;
};

SplitMetrics summarize(std::vector<ImageMetrics> images);

}  // namespace tmca
