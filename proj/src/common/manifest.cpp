#include "tmca/manifest.hpp"

#include <fstream>

#include "tmca/errors.hpp"

namespace tmca {

nlohmann::json RunManifest::to_json() const {
    return {{"command", command}, {"argv", argv},       {"config", config}, {"seed", seed},
            {"input_hash", input_hash}, {"outputs", outputs}, {"extra", extra}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    RunManifest m;
    m.command = j.value("command", "");
    m.argv = j.value("argv", std::vector<std::string>{});
    m.config = j.value("config", nlohmann::json::object());
    m.seed = j.value("seed", std::uint64_t{0});
    m.input_hash = j.value("input_hash", "");
    m.outputs = j.value("outputs", std::map<std::string, std::string>{});
    m.extra = j.value("extra", nlohmann::json::object());
    return m;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write manifest " + path.string());
    out << manifest.to_json().dump(2) << '\n';
}

RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read manifest " + path.string());
    try {
        return RunManifest::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace tmca
