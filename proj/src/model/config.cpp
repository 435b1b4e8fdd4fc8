#include "tmca/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "tmca/data.hpp"
#include "tmca/errors.hpp"
#include "tmca/hashing.hpp"

namespace tmca {
using nlohmann::json;

std::string_view to_string(Level level) {
    switch (level) {
        case Level::S8: return "8";
        case Level::S16: return "16";
        case Level::S32: return "32";
        case Level::Global: return "G";
    }
    return "G";
}

Level parse_level(std::string_view name) {
    if (name == "8") return Level::S8;
    if (name == "16") return Level::S16;
    if (name == "32") return Level::S32;
    if (name == "G" || name == "g") return Level::Global;
    throw ConfigError("unknown alignment level '" + std::string(name) + "' (expected 8, 16, 32 or G)");
}

int stride_of(Level level) {
    switch (level) {
        case Level::S8: return 8;
        case Level::S16: return 16;
        case Level::S32: return 32;
        case Level::Global: return 0;
    }
    return 0;
}

ModelConfig normalized(ModelConfig c) {
    if (!c.ablation.text) {
        c.ablation.ltem = false;
        c.ablation.contrastive = false;
    }
    if (!c.ablation.contrastive) {
        c.ablation.tsdm = false;
        c.ablation.mas = false;
    }
    if (!c.ablation.mas) c.levels = {Level::Global};
    std::sort(c.levels.begin(), c.levels.end());
    c.levels.erase(std::unique(c.levels.begin(), c.levels.end()), c.levels.end());
    validate(c);
    return c;
}

void validate(const ModelConfig& c) {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(c.image_size >= 32 && c.image_size % 32 == 0, "image_size must be a positive multiple of 32");
    require(c.in_channels == 1 || c.in_channels == 3, "in_channels must be 1 or 3");
    for (int w : c.widths) require(w > 0, "channel widths must be positive");
    require(c.attention_heads >= 1, "attention_heads must be >= 1");
    for (size_t i = 1; i < c.widths.size(); ++i) {
        require(c.widths[i] % c.attention_heads == 0, "decoder widths must be divisible by attention_heads");
    }
    require(c.text_dim > 0 && c.text_heads >= 1 && c.text_dim % c.text_heads == 0,
            "text_dim must be divisible by text_heads");
    require(c.text_layers >= 3, "text encoder needs at least 3 layers for the last-3-layer readout");
    require(c.max_len >= 1, "max_len must be >= 1");
    require(c.head_channels >= 1, "head_channels must be >= 1");
    require(c.tau1 > 0 && c.tau2 > 0 && c.tau3 > 0, "temperatures must be > 0");
    require(!c.ablation.contrastive || !c.levels.empty(), "contrastive alignment enabled with no levels");
    require(c.optimizer.lr0 > 0 && c.optimizer.lr_min >= 0 && c.optimizer.lr_min <= c.optimizer.lr0,
            "need 0 <= lr_min <= lr0 and lr0 > 0");
    require(c.optimizer.weight_decay >= 0, "weight_decay must be >= 0");
    require(c.batch_size >= 1, "batch_size must be >= 1");
    require(c.epochs >= 1, "epochs must be >= 1");
    require(c.zoom_probability >= 0 && c.zoom_probability <= 1, "zoom_probability must be in [0, 1]");
    require(c.zoom_max_scale >= 1.0, "zoom_max_scale must be >= 1");
}

std::vector<Level> active_levels(const ModelConfig& config) {
    if (!config.ablation.contrastive || !config.ablation.text) return {};
    if (!config.ablation.mas) return {Level::Global};
    return config.levels;
}

json to_json(const ModelConfig& c) {
    json levels = json::array();
    for (auto l : c.levels) levels.push_back(to_string(l));
    return {{"image_size", c.image_size},
            {"in_channels", c.in_channels},
            {"widths", c.widths},
            {"text_dim", c.text_dim},
            {"text_layers", c.text_layers},
            {"text_heads", c.text_heads},
            {"max_len", c.max_len},
            {"attention_heads", c.attention_heads},
            {"head_channels", c.head_channels},
            {"tau1", c.tau1},
            {"tau2", c.tau2},
            {"tau3", c.tau3},
            {"levels", levels},
            {"ablation",
             {{"tsdm", c.ablation.tsdm},
              {"ltem", c.ablation.ltem},
              {"mas", c.ablation.mas},
              {"contrastive", c.ablation.contrastive},
              {"text", c.ablation.text}}},
            {"optimizer",
             {{"lr0", c.optimizer.lr0}, {"lr_min", c.optimizer.lr_min}, {"weight_decay", c.optimizer.weight_decay}}},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"zoom_probability", c.zoom_probability},
            {"zoom_max_scale", c.zoom_max_scale}};
}

ModelConfig config_from_json(const json& j, ModelConfig c) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> kKeys{
        "image_size", "in_channels", "widths",     "text_dim",  "text_layers", "text_heads",
        "max_len",    "attention_heads", "head_channels", "tau1", "tau2",      "tau3",
        "levels",     "ablation",    "optimizer",  "batch_size", "epochs",    "seed",
        "zoom_probability", "zoom_max_scale"};
    for (const auto& [key, _] : j.items()) {
        if (!kKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("image_size", c.image_size);
        get("in_channels", c.in_channels);
        get("widths", c.widths);
        get("text_dim", c.text_dim);
        get("text_layers", c.text_layers);
        get("text_heads", c.text_heads);
        get("max_len", c.max_len);
        get("attention_heads", c.attention_heads);
        get("head_channels", c.head_channels);
        get("tau1", c.tau1);
        get("tau2", c.tau2);
        get("tau3", c.tau3);
        get("batch_size", c.batch_size);
        get("epochs", c.epochs);
        get("seed", c.seed);
        get("zoom_probability", c.zoom_probability);
        get("zoom_max_scale", c.zoom_max_scale);
        if (j.contains("levels")) {
            c.levels.clear();
            for (const auto& l : j.at("levels")) {
                c.levels.push_back(parse_level(l.is_string() ? l.get<std::string>() : std::to_string(l.get<int>())));
            }
        }
        if (j.contains("ablation")) {
            const auto& a = j.at("ablation");
            for (const auto& [key, _] : a.items()) {
                if (key != "tsdm" && key != "ltem" && key != "mas" && key != "contrastive" && key != "text") {
                    throw ConfigError("unknown ablation key '" + key + "'");
                }
            }
            c.ablation.tsdm = a.value("tsdm", c.ablation.tsdm);
            c.ablation.ltem = a.value("ltem", c.ablation.ltem);
            c.ablation.mas = a.value("mas", c.ablation.mas);
            c.ablation.contrastive = a.value("contrastive", c.ablation.contrastive);
            c.ablation.text = a.value("text", c.ablation.text);
        }
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            c.optimizer.lr0 = o.value("lr0", c.optimizer.lr0);
            c.optimizer.lr_min = o.value("lr_min", c.optimizer.lr_min);
            c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    }
    return c;
}

json parse_config_text(std::string_view text) {
    const std::string body = trim(text);
    if (!body.empty() && body.front() == '{') {
        try {
            return json::parse(body);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
    }
    json out = json::object();
    std::string section;
    std::istringstream lines{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string raw = trim(std::string_view(line).substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::parse_error&) {
            value = raw;
        }
        json::json_pointer ptr("/" + [&] {
            std::string p = key;
            std::replace(p.begin(), p.end(), '.', '/');
            return p;
        }());
        out[ptr] = value;
    }
    return out;
}

ModelConfig load_config_file(const std::filesystem::path& path, ModelConfig base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return config_from_json(parse_config_text(buf.str()), std::move(base));
}

AblationFlags parse_ablation_list(std::string_view list, AblationFlags flags) {
    std::string token;
    std::istringstream in{std::string(list)};
    while (std::getline(in, token, ',')) {
        token = trim(token);
        if (token.empty()) continue;
        if (token == "tsdm") {
            flags.tsdm = false;
        } else if (token == "ltem") {
            flags.ltem = false;
        } else if (token == "mas") {
            flags.mas = false;
        } else if (token == "ca" || token == "contrastive") {
            flags.contrastive = false;
        } else if (token == "text") {
            flags.text = false;
        } else {
            throw ConfigError("unknown ablation '" + token + "' (expected tsdm, ltem, mas, ca, text)");
        }
    }
    return flags;
}

std::string fingerprint(const ModelConfig& config) {
    return sha256_hex(to_json(normalized(config)).dump()).substr(0, 16);
}

}  // namespace tmca
