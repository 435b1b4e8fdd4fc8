#include "tmca/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "tmca/errors.hpp"

namespace tmca {
namespace {

constexpr int kMaxAttempts = 100;
constexpr double kBackground = 0.1;
constexpr double kNoiseSigma = 0.03;

double base_half_extent(BlobSize size) {
    switch (size) {
        case BlobSize::Small: return 5.0;
        case BlobSize::Medium: return 7.0;
        case BlobSize::Large: return 9.0;
    }
    return 5.0;
}

bool inside(const Blob& b, double px, double py) {
    const double dx = px - b.cx;
    const double dy = py - b.cy;
    const double r = b.half_extent;
    switch (b.shape) {
        case Shape::Circle:
            return dx * dx + dy * dy <= r * r;
        case Shape::Square:
            return std::abs(dx) <= 0.9 * r && std::abs(dy) <= 0.9 * r;
        case Shape::Triangle:
            // Apex at the top, base along the bottom edge of the bounding box.
            return dy >= -r && dy <= r && std::abs(dx) <= 0.5 * (dy + r);
    }
    return false;
}

template <typename T>
const T& pick(const std::vector<T>& values, std::mt19937_64& rng) {
    std::uniform_int_distribution<size_t> dist(0, values.size() - 1);
    return values[dist(rng)];
}

std::uint64_t split_stream(Split split) {
    switch (split) {
        case Split::Train: return 0x7121;
        case Split::Val: return 0x7a11;
        case Split::Test: return 0x7e57;
    }
    return 0;
}

}  // namespace

std::string_view to_string(Shape shape) {
    switch (shape) {
        case Shape::Circle: return "circle";
        case Shape::Square: return "square";
        case Shape::Triangle: return "triangle";
    }
    return "circle";
}

std::string_view to_string(BlobSize size) {
    switch (size) {
        case BlobSize::Small: return "small";
        case BlobSize::Medium: return "medium";
        case BlobSize::Large: return "large";
    }
    return "small";
}

Shape parse_shape(std::string_view name) {
    for (auto s : {Shape::Circle, Shape::Square, Shape::Triangle}) {
        if (to_string(s) == name) return s;
    }
    throw ConfigError("unknown shape '" + std::string(name) + "'");
}

BlobSize parse_blob_size(std::string_view name) {
    for (auto s : {BlobSize::Small, BlobSize::Medium, BlobSize::Large}) {
        if (to_string(s) == name) return s;
    }
    throw ConfigError("unknown blob size '" + std::string(name) + "'");
}

void SynthSpec::validate() const {
    if (image_size < 32 || image_size % 32 != 0) throw ConfigError("synthetic image_size must be a multiple of 32");
    if (min_blobs < 1 || max_blobs < min_blobs) throw ConfigError("invalid blob_count_range");
    if (shapes.empty() || sizes.empty() || positions.empty()) {
        throw ConfigError("shapes, sizes and positions must be non-empty");
    }
    for (int p : positions) {
        if (p < 0 || p > 8) throw ConfigError("position index out of range");
    }
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
}

nlohmann::json to_json(const SynthSpec& spec) {
    nlohmann::json shapes = nlohmann::json::array();
    for (auto s : spec.shapes) shapes.push_back(to_string(s));
    nlohmann::json sizes = nlohmann::json::array();
    for (auto s : spec.sizes) sizes.push_back(to_string(s));
    nlohmann::json positions = nlohmann::json::array();
    for (int p : spec.positions) positions.push_back(kPositionNames[static_cast<size_t>(p)]);
    return {{"image_size", spec.image_size},
            {"blob_count_range", {spec.min_blobs, spec.max_blobs}},
            {"shapes", shapes},
            {"sizes", sizes},
            {"positions", positions},
            {"seed", spec.seed},
            {"n_samples", spec.n_samples}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec spec;
    try {
        spec.image_size = j.value("image_size", spec.image_size);
        if (j.contains("blob_count_range")) {
            spec.min_blobs = j.at("blob_count_range").at(0).get<int>();
            spec.max_blobs = j.at("blob_count_range").at(1).get<int>();
        }
        if (j.contains("shapes")) {
            spec.shapes.clear();
            for (const auto& s : j.at("shapes")) spec.shapes.push_back(parse_shape(s.get<std::string>()));
        }
        if (j.contains("sizes")) {
            spec.sizes.clear();
            for (const auto& s : j.at("sizes")) spec.sizes.push_back(parse_blob_size(s.get<std::string>()));
        }
        if (j.contains("positions")) {
            spec.positions.clear();
            for (const auto& p : j.at("positions")) {
                const auto name = p.get<std::string>();
                auto it = std::find(kPositionNames.begin(), kPositionNames.end(), name);
                if (it == kPositionNames.end()) throw ConfigError("unknown position '" + name + "'");
                spec.positions.push_back(static_cast<int>(it - kPositionNames.begin()));
            }
        }
        spec.seed = j.value("seed", spec.seed);
        spec.n_samples = j.value("n_samples", spec.n_samples);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid synthetic spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

torch::Tensor rasterize_blob(const Blob& blob, int image_size) {
    auto out = torch::zeros({image_size, image_size}, torch::kFloat32);
    auto acc = out.accessor<float, 2>();
    for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
            if (inside(blob, x + 0.5, y + 0.5)) acc[y][x] = 1.0f;
        }
    }
    return out;
}

std::string describe_blob(const Blob& blob) {
    return "one " + std::string(to_string(blob.size)) + " " + std::string(to_string(blob.shape)) +
           " region, located in " + std::string(kPositionNames[static_cast<size_t>(blob.cell)]);
}

double all_blobs_ceiling(const GenerationRecord& record) {
    auto all = torch::zeros({record.image_size, record.image_size}, torch::kFloat32);
    for (const auto& b : record.blobs) all = torch::maximum(all, rasterize_blob(b, record.image_size));
    const double t = rasterize_blob(record.blobs.at(static_cast<size_t>(record.target)), record.image_size)
                         .sum()
                         .item<double>();
    const double u = all.sum().item<double>();
    return 2.0 * t / (t + u);
}

SyntheticCorpus generate_synthetic(const SynthSpec& spec, Split split) {
    spec.validate();
    SyntheticCorpus out;
    out.corpus.split = split;
    out.corpus.source = Source::Synthetic;
    const double scale = spec.image_size / 64.0;
    const double cell = spec.image_size / 3.0;
    const std::string prefix = std::string(to_string(split)) + "_";

    for (int i = 0; i < spec.n_samples; ++i) {
        auto rng = sample_rng(spec.seed ^ split_stream(split), 0, static_cast<std::uint64_t>(i));
        GenerationRecord record;
        bool ok = false;
        for (int attempt = 1; attempt <= kMaxAttempts && !ok; ++attempt) {
            record.blobs.clear();
            record.attempts = attempt;
            std::uniform_int_distribution<int> count_dist(spec.min_blobs, spec.max_blobs);
            const int count = count_dist(rng);
            std::vector<int> cells = spec.positions;
            std::shuffle(cells.begin(), cells.end(), rng);
            if (static_cast<size_t>(count) > cells.size()) continue;

            bool placed = true;
            for (int k = 0; k < count; ++k) {
                Blob b;
                b.shape = pick(spec.shapes, rng);
                b.size = pick(spec.sizes, rng);
                b.cell = cells[static_cast<size_t>(k)];
                b.half_extent = base_half_extent(b.size) * scale;
                const double x0 = (b.cell % 3) * cell;
                const double y0 = (b.cell / 3) * cell;
                const double lo = b.half_extent + 0.5;
                const double hi = cell - b.half_extent - 0.5;
                if (hi < lo) {
                    placed = false;
                    break;
                }
                std::uniform_real_distribution<double> pos(lo, hi);
                b.cx = x0 + pos(rng);
                b.cy = y0 + pos(rng);
                std::uniform_real_distribution<double> intensity(0.45, 1.0);
                b.intensity = intensity(rng);
                record.blobs.push_back(b);
            }
            if (!placed) continue;

            std::uniform_int_distribution<int> target_dist(0, count - 1);
            record.target = target_dist(rng);
            const Blob& t = record.blobs[static_cast<size_t>(record.target)];
            ok = std::all_of(record.blobs.begin(), record.blobs.end(), [&](const Blob& other) {
                return &other == &t || other.shape != t.shape || other.size != t.size || other.cell != t.cell;
            });
        }
        if (!ok) {
            throw DataError("cannot place a distinguishable target for synthetic sample " + std::to_string(i) +
                            " after " + std::to_string(kMaxAttempts) + " attempts");
        }

        char id[32];
        std::snprintf(id, sizeof(id), "%05d", i);
        record.id = prefix + id;
        record.seed = spec.seed;
        record.index = static_cast<std::uint64_t>(i);
        record.image_size = spec.image_size;

        std::normal_distribution<float> noise(0.0f, static_cast<float>(kNoiseSigma));
        auto image = torch::empty({1, spec.image_size, spec.image_size}, torch::kFloat32);
        auto acc = image.accessor<float, 3>();
        for (int y = 0; y < spec.image_size; ++y) {
            for (int x = 0; x < spec.image_size; ++x) acc[0][y][x] = static_cast<float>(kBackground) + noise(rng);
        }
        for (const auto& b : record.blobs) {
            auto region = rasterize_blob(b, spec.image_size);
            auto in = region.accessor<float, 2>();
            for (int y = 0; y < spec.image_size; ++y) {
                for (int x = 0; x < spec.image_size; ++x) {
                    if (in[y][x] > 0.5f) acc[0][y][x] = static_cast<float>(b.intensity) + noise(rng);
                }
            }
        }
        // Quantise to 8 bits so the on-disk PNG round-trips exactly.
        image = (image.clamp(0.0, 1.0) * 255.0).round() / 255.0;

        Sample s;
        s.id = record.id;
        s.image = image;
        s.mask = rasterize_blob(record.blobs[static_cast<size_t>(record.target)], spec.image_size);
        s.text = describe_blob(record.blobs[static_cast<size_t>(record.target)]);
        out.corpus.samples.push_back(std::move(s));
        out.records.push_back(std::move(record));
    }
    return out;
}

nlohmann::json to_json(const GenerationRecord& r) {
    nlohmann::json blobs = nlohmann::json::array();
    for (const auto& b : r.blobs) {
        blobs.push_back({{"shape", to_string(b.shape)},
                         {"size", to_string(b.size)},
                         {"position", kPositionNames[static_cast<size_t>(b.cell)]},
                         {"cell", b.cell},
                         {"cx", b.cx},
                         {"cy", b.cy},
                         {"half_extent", b.half_extent},
                         {"intensity", b.intensity}});
    }
    return {{"id", r.id},         {"seed", r.seed},         {"index", r.index}, {"image_size", r.image_size},
            {"target", r.target}, {"attempts", r.attempts}, {"blobs", blobs}};
}

GenerationRecord generation_record_from_json(const nlohmann::json& j) {
    GenerationRecord r;
    try {
        r.id = j.at("id").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.index = j.at("index").get<std::uint64_t>();
        r.image_size = j.at("image_size").get<int>();
        r.target = j.at("target").get<int>();
        r.attempts = j.value("attempts", 1);
        for (const auto& jb : j.at("blobs")) {
            Blob b;
            b.shape = parse_shape(jb.at("shape").get<std::string>());
            b.size = parse_blob_size(jb.at("size").get<std::string>());
            b.cell = jb.at("cell").get<int>();
            b.cx = jb.at("cx").get<double>();
            b.cy = jb.at("cy").get<double>();
            b.half_extent = jb.at("half_extent").get<double>();
            b.intensity = jb.value("intensity", 1.0);
            r.blobs.push_back(b);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid generation record: ") + e.what());
    }
    if (r.target < 0 || static_cast<size_t>(r.target) >= r.blobs.size()) {
        throw DataError("generation record " + r.id + " has an out-of-range target");
    }
    return r;
}

void write_generation_records(const std::filesystem::path& path, const std::vector<GenerationRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<GenerationRecord> read_generation_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::vector<GenerationRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        try {
            out.push_back(generation_record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(path.string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace tmca
