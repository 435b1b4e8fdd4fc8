#include <algorithm>
#include <cmath>
#include <numeric>

#include "tmca/data.hpp"
#include "tmca/errors.hpp"

namespace tmca {

Corpus subset_by_ratio(const Corpus& corpus, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("data ratio must be in (0, 1]");
    if (ratio == 1.0) return corpus;
    const auto count = static_cast<size_t>(std::floor(ratio * static_cast<double>(corpus.size()) + 1e-9));
    if (count == 0) throw DataError("data ratio selects no samples");

    std::vector<size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), size_t{0});
    auto rng = sample_rng(seed, 0, 0);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(count);
    std::sort(order.begin(), order.end());

    Corpus out;
    out.split = corpus.split;
    out.source = corpus.source;
    out.samples.reserve(count);
    for (size_t i : order) out.samples.push_back(corpus.samples[i]);
    return out;
}

std::vector<std::vector<size_t>> make_batches(size_t n, int batch_size, std::uint64_t shuffle_seed,
                                              std::uint64_t epoch) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(shuffle_seed), static_cast<std::uint32_t>(shuffle_seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 0xba7c4u};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<size_t>> batches;
    const auto bs = static_cast<size_t>(batch_size);
    for (size_t start = 0; start < n; start += bs) {
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
    }
    return batches;
}

}  // namespace tmca
