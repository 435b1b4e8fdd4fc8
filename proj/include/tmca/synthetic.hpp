#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tmca/data.hpp"

namespace tmca {

enum class Shape { Circle, Square, Triangle };
enum class BlobSize { Small, Medium, Large };

// Row-major names of the 3x3 grid cells.
inline constexpr std::array<std::string_view, 9> kPositionNames = {
    "top left", "top", "top right", "left", "center", "right", "bottom left", "bottom", "bottom right"};

std::string_view to_string(Shape shape);
std::string_view to_string(BlobSize size);
Shape parse_shape(std::string_view name);
BlobSize parse_blob_size(std::string_view name);

struct SynthSpec {
    int image_size = 64;
    int min_blobs = 2;
    int max_blobs = 4;
    std::vector<Shape> shapes{Shape::Circle, Shape::Square, Shape::Triangle};
    std::vector<BlobSize> sizes{BlobSize::Small, BlobSize::Medium, BlobSize::Large};
    std::vector<int> positions{0, 1, 2, 3, 4, 5, 6, 7, 8};
    std::uint64_t seed = 7;
    int n_samples = 2000;

    // Throws ConfigError.
    void validate() const;
};

nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

struct Blob {
    Shape shape = Shape::Circle;
    BlobSize size = BlobSize::Small;
    int cell = 0;
    double cx = 0.0;
    double cy = 0.0;
    double half_extent = 0.0;
    double intensity = 1.0;
};

// Everything needed to re-derive a generated sample's mask.
struct GenerationRecord {
    std::string id;
    std::uint64_t seed = 0;
    std::uint64_t index = 0;
    int image_size = 64;
    int target = 0;
    int attempts = 1;
    std::vector<Blob> blobs;
};

nlohmann::json to_json(const GenerationRecord& record);
GenerationRecord generation_record_from_json(const nlohmann::json& j);

struct SyntheticCorpus {
    Corpus corpus;
    std::vector<GenerationRecord> records;
};

// Deterministic in (spec, split). Each image holds blobs in distinct grid
// cells; exactly one is the target and the mask covers only that blob.
SyntheticCorpus generate_synthetic(const SynthSpec& spec, Split split = Split::Train);

// Pixel-centre rasterisation: float32 [size, size] in {0, 1}.
torch::Tensor rasterize_blob(const Blob& blob, int image_size);

// "one <size> <shape> region, located in <position>"
std::string describe_blob(const Blob& blob);

// Dice obtained by predicting every blob: 2t / (t + U), t = target area,
// U = area of the union of all blobs.
double all_blobs_ceiling(const GenerationRecord& record);

void write_generation_records(const std::filesystem::path& path, const std::vector<GenerationRecord>& records);
std::vector<GenerationRecord> read_generation_records(const std::filesystem::path& path);

}  // namespace tmca
