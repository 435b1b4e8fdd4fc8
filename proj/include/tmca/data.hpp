#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace tmca {

// One (image, binary mask, report) triplet.
//   image: float32 [ch, H, W] in [0, 1]
//   mask:  float32 [H, W] with values in {0, 1}
struct Sample {
    std::string id;
    torch::Tensor image;
    torch::Tensor mask;
    std::string text;
};

enum class Split { Train, Val, Test };
enum class Source { MedicalDir, Synthetic };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct Corpus {
    std::vector<Sample> samples;
    Split split = Split::Train;
    Source source = Source::MedicalDir;

    size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

// Throws DataError when a Sample invariant is violated.
void validate_sample(const Sample& sample);
// Throws DataError on duplicate ids or invalid samples.
void validate_corpus(const Corpus& corpus);

std::string trim(std::string_view text);

// Reads <root>/<split>/{images,masks,texts.csv}. Samples are ordered by image
// filename; masks are binarised at 0.5. Images are converted to `channels`
// channels (1 = grayscale, 3 = RGB).
Corpus load_corpus(const std::filesystem::path& root, Split split, int channels = 1);

// Writes a corpus in the same layout load_corpus reads. Images and masks are
// 8-bit PNG named <id>.png.
void write_corpus(const std::filesystem::path& root, const Corpus& corpus);

struct ZoomOptions {
    double probability = 0.10;
    double max_scale = 1.2;
};

// Resizes to target_size x target_size (bilinear image, nearest mask). With
// augment, a centre zoom is applied with ZoomOptions::probability.
Sample preprocess(const Sample& sample, int target_size, std::mt19937_64& rng, bool augment,
                  const ZoomOptions& zoom = {});

// Generator used for all per-sample randomness: a function of
// (seed, epoch, sample index) only.
std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

Corpus subset_by_ratio(const Corpus& corpus, double ratio, std::uint64_t seed);

// Index batches covering [0, n) exactly once; shuffle depends on (seed, epoch).
std::vector<std::vector<size_t>> make_batches(size_t n, int batch_size, std::uint64_t shuffle_seed,
                                              std::uint64_t epoch = 0);

// Stacks samples into [B, ch, H, W] images and [B, 1, H, W] masks.
struct SampleBatch {
    std::vector<std::string> ids;
    std::vector<std::string> texts;
    torch::Tensor images;
    torch::Tensor masks;
};
SampleBatch collate(const std::vector<Sample>& samples);

}  // namespace tmca
