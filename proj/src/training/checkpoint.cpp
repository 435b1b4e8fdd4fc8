#include "tmca/checkpoint.hpp"

#include "tmca/errors.hpp"
#include "tmca/hashing.hpp"

namespace tmca {

void save_checkpoint(const std::filesystem::path& path, TmcaModel& model, const Vocabulary& vocab) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    archive.write("format_version", c10::IValue(kCheckpointFormatVersion));
    archive.write("config", c10::IValue(to_json(model->config()).dump()));
    archive.write("vocab", c10::IValue(vocab.to_json().dump()));
    torch::serialize::OutputArchive params;
    model->save(params);
    archive.write("model", params);
    archive.save_to(path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw DataError("checkpoint not found: " + path.string());
    LoadedCheckpoint out;
    try {
        torch::serialize::InputArchive archive;
        archive.load_from(path.string());
        c10::IValue version;
        archive.read("format_version", version);
        if (version.toInt() != kCheckpointFormatVersion) {
            throw DataError("unsupported checkpoint format version " + std::to_string(version.toInt()));
        }
        c10::IValue config;
        c10::IValue vocab;
        archive.read("config", config);
        archive.read("vocab", vocab);
        out.config = normalized(config_from_json(nlohmann::json::parse(config.toStringRef())));
        out.vocab = Vocabulary::from_json(nlohmann::json::parse(vocab.toStringRef()));
        out.model = TmcaModel(out.config, static_cast<int64_t>(out.vocab.size()));
        torch::serialize::InputArchive params;
        archive.read("model", params);
        out.model->load(params);
    } catch (const c10::Error& e) {
        throw DataError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt checkpoint metadata in " + path.string() + ": " + e.what());
    }
    out.model->eval();
    out.fingerprint = sha256_file(path);
    return out;
}

}  // namespace tmca
