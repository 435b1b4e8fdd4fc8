#include "tmca/data.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "tmca/csv.hpp"
#include "tmca/errors.hpp"
#include "tmca/image_io.hpp"

namespace tmca {
namespace fs = std::filesystem;

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw ConfigError("unknown split '" + std::string(name) + "' (expected train|val|test)");
}

std::string trim(std::string_view text) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    size_t b = 0;
    size_t e = text.size();
    while (b < e && is_space(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(text[e - 1]))) --e;
    return std::string(text.substr(b, e - b));
}

void validate_sample(const Sample& s) {
    const std::string who = "sample '" + s.id + "': ";
    if (!s.image.defined() || s.image.dim() != 3) throw DataError(who + "image must be [ch,H,W]");
    if (!s.mask.defined() || s.mask.dim() != 2) throw DataError(who + "mask must be [H,W]");
    if (s.image.size(1) != s.mask.size(0) || s.image.size(2) != s.mask.size(1)) {
        throw DataError(who + "image and mask sizes differ");
    }
    if (!((s.mask == 0) | (s.mask == 1)).all().item<bool>()) throw DataError(who + "mask is not binary");
    if (trim(s.text).empty()) throw DataError(who + "text is empty");
}

void validate_corpus(const Corpus& corpus) {
    std::set<std::string> seen;
    for (const auto& s : corpus.samples) {
        validate_sample(s);
        if (!seen.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'");
    }
}

namespace {

bool is_image_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

Corpus load_corpus(const fs::path& root, Split split, int channels) {
    const fs::path dir = root / std::string(to_string(split));
    const fs::path image_dir = dir / "images";
    const fs::path mask_dir = dir / "masks";
    if (!fs::is_directory(image_dir)) throw DataError("missing directory " + image_dir.string());
    if (!fs::is_directory(mask_dir)) throw DataError("missing directory " + mask_dir.string());

    std::map<std::string, std::string> texts;
    for (auto& [file, text] : read_text_table(dir / "texts.csv")) texts[file] = std::move(text);

    std::vector<fs::path> images;
    for (const auto& entry : fs::directory_iterator(image_dir)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) images.push_back(entry.path());
    }
    std::sort(images.begin(), images.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

    Corpus corpus;
    corpus.split = split;
    corpus.source = Source::MedicalDir;
    corpus.samples.reserve(images.size());
    for (const auto& image_path : images) {
        const std::string filename = image_path.filename().string();
        fs::path mask_path = mask_dir / filename;
        if (!fs::exists(mask_path)) mask_path = mask_dir / (image_path.stem().string() + ".png");
        if (!fs::exists(mask_path)) throw DataError("no mask for image " + filename);
        auto text_it = texts.find(filename);
        if (text_it == texts.end()) throw DataError("no text row for image " + filename);

        Sample s;
        s.id = image_path.stem().string();
        s.image = read_image(image_path, channels);
        s.mask = (read_gray(mask_path) >= 0.5).to(torch::kFloat32);
        s.text = text_it->second;
        validate_sample(s);
        corpus.samples.push_back(std::move(s));
    }
    validate_corpus(corpus);
    return corpus;
}

void write_corpus(const fs::path& root, const Corpus& corpus) {
    const fs::path dir = root / std::string(to_string(corpus.split));
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    std::vector<std::pair<std::string, std::string>> rows;
    rows.reserve(corpus.size());
    for (const auto& s : corpus.samples) {
        const std::string filename = s.id + ".png";
        write_png(dir / "images" / filename, s.image);
        write_png(dir / "masks" / filename, s.mask);
        rows.emplace_back(filename, s.text);
    }
    write_text_table(dir / "texts.csv", rows);
}

SampleBatch collate(const std::vector<Sample>& samples) {
    if (samples.empty()) throw DataError("cannot collate an empty batch");
    SampleBatch batch;
    std::vector<torch::Tensor> images;
    std::vector<torch::Tensor> masks;
    for (const auto& s : samples) {
        batch.ids.push_back(s.id);
        batch.texts.push_back(s.text);
        images.push_back(s.image);
        masks.push_back(s.mask.unsqueeze(0));
    }
    batch.images = torch::stack(images);
    batch.masks = torch::stack(masks);
    return batch;
}

}  // namespace tmca
