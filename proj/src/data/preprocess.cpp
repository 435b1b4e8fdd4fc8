#include <cmath>

#include "tmca/data.hpp"
#include "tmca/errors.hpp"

namespace tmca {
namespace F = torch::nn::functional;

namespace {

torch::Tensor resize_bilinear(const torch::Tensor& image, int64_t size) {
    if (image.size(1) == size && image.size(2) == size) return image.clone();
    return F::interpolate(image.unsqueeze(0),
                          F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{size, size})
                              .mode(torch::kBilinear)
                              .align_corners(false))
        .squeeze(0)
        .clamp(0.0, 1.0);
}

torch::Tensor resize_nearest(const torch::Tensor& mask, int64_t size) {
    if (mask.size(0) == size && mask.size(1) == size) return mask.clone();
    return F::interpolate(mask.unsqueeze(0).unsqueeze(0),
                          F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{size, size})
                              .mode(torch::kNearest))
        .squeeze(0)
        .squeeze(0);
}

}  // namespace

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(epoch), hi(epoch), lo(index), hi(index)};
    return std::mt19937_64(seq);
}

Sample preprocess(const Sample& sample, int target_size, std::mt19937_64& rng, bool augment,
                  const ZoomOptions& zoom) {
    if (target_size < 16) throw ConfigError("target_size must be >= 16");
    double scale = 1.0;
    if (augment) {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        if (unit(rng) < zoom.probability) {
            std::uniform_real_distribution<double> zoom_dist(1.0, zoom.max_scale);
            scale = zoom_dist(rng);
        }
    }
    const int64_t resized = std::max<int64_t>(target_size, std::llround(target_size * scale));

    Sample out;
    out.id = sample.id;
    out.text = sample.text;
    out.image = resize_bilinear(sample.image, resized);
    out.mask = resize_nearest(sample.mask, resized);
    if (resized != target_size) {
        const int64_t off = (resized - target_size) / 2;
        out.image = out.image.narrow(1, off, target_size).narrow(2, off, target_size).contiguous();
        out.mask = out.mask.narrow(0, off, target_size).narrow(1, off, target_size).contiguous();
    }
    return out;
}

}  // namespace tmca
