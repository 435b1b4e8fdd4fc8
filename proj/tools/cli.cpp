#include "cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "tmca/ablation.hpp"
#include "tmca/checkpoint.hpp"
#include "tmca/errors.hpp"
#include "tmca/hashing.hpp"
#include "tmca/image_io.hpp"
#include "tmca/manifest.hpp"
#include "tmca/report.hpp"
#include "tmca/service.hpp"
#include "tmca/synthetic.hpp"
#include "tmca/training.hpp"

namespace tmca::cli {
namespace fs = std::filesystem;

namespace {

std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("TMCA_SEED");
    if (v == nullptr || *v == '\0') return std::nullopt;
    try {
        size_t used = 0;
        const auto seed = std::stoull(v, &used);
        if (used != std::string(v).size()) throw std::invalid_argument(v);
        return seed;
    } catch (const std::exception&) {
        throw ConfigError(std::string("TMCA_SEED is not an unsigned integer: ") + v);
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Precedence: flag > config file > TMCA_SEED > built-in default.
ModelConfig resolve_config(const std::string& config_path, const std::string& ablate,
                           const std::optional<std::uint64_t>& seed_flag) {
    ModelConfig config;
    if (auto s = env_seed()) config.seed = *s;
    if (!config_path.empty()) config = load_config_file(config_path, config);
    if (!ablate.empty()) config.ablation = parse_ablation_list(ablate, config.ablation);
    if (seed_flag) config.seed = *seed_flag;
    return config;
}

// Flags switched off only through an implication of another flag.
std::vector<std::string> implied_off(const ModelConfig& requested, const ModelConfig& resolved) {
    std::vector<std::string> out;
    auto check = [&](const char* name, bool req, bool res) {
        if (req && !res) out.push_back(name);
    };
    check("tsdm", requested.ablation.tsdm, resolved.ablation.tsdm);
    check("ltem", requested.ablation.ltem, resolved.ablation.ltem);
    check("mas", requested.ablation.mas, resolved.ablation.mas);
    check("contrastive", requested.ablation.contrastive, resolved.ablation.contrastive);
    return out;
}

bool has_split(const fs::path& root, Split split) { return fs::is_directory(root / std::string(to_string(split))); }

// Synthetic corpora record their generation size; a checkpoint trained at a
// different size is refused rather than silently resampled.
void check_image_size(const fs::path& data, Split split, const ModelConfig& config) {
    const auto records = data / std::string(to_string(split)) / "gen_records.jsonl";
    if (!fs::exists(records)) return;
    const auto recs = read_generation_records(records);
    for (const auto& r : recs) {
        if (r.image_size != config.image_size) {
            throw ConfigError("checkpoint image_size " + std::to_string(config.image_size) + " (config " +
                              fingerprint(config) + ") does not match data image_size " +
                              std::to_string(r.image_size));
        }
    }
}

int cmd_synth(const std::string& spec_path, const fs::path& out, std::optional<int> n, std::optional<int> n_val,
              std::optional<int> n_test, std::optional<std::uint64_t> seed, std::optional<int> size,
              const std::vector<std::string>& argv) {
    SynthSpec spec;
    if (auto s = env_seed()) spec.seed = *s;
    if (!spec_path.empty()) {
        std::ifstream in(spec_path);
        if (!in) throw ConfigError("cannot read spec " + spec_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(spec_path + ": " + e.what());
        }
        if (!j.contains("seed")) j["seed"] = spec.seed;
        spec = synth_spec_from_json(j);
    }
    if (n) spec.n_samples = *n;
    if (seed) spec.seed = *seed;
    if (size) spec.image_size = *size;
    spec.validate();
    const int val_count = n_val.value_or(std::max(1, spec.n_samples / 10));
    const int test_count = n_test.value_or(std::max(1, spec.n_samples / 10));
    if (val_count < 1 || test_count < 1) throw ConfigError("--n-val and --n-test must be >= 1");

    RunManifest manifest;
    manifest.command = "synth";
    manifest.argv = argv;
    manifest.config = to_json(spec);
    manifest.config["n_val"] = val_count;
    manifest.config["n_test"] = test_count;
    manifest.seed = spec.seed;
    manifest.input_hash = sha256_hex(manifest.config.dump());
    for (Split s : {Split::Train, Split::Val, Split::Test}) {
        manifest.outputs[std::string(to_string(s))] = (out / std::string(to_string(s))).string();
    }
    fs::create_directories(out);
    write_manifest(out / "manifest.json", manifest);
    write_text(out / "synth_spec.json", to_json(spec).dump(2) + "\n");

    for (auto [split, count] : {std::pair{Split::Train, spec.n_samples}, std::pair{Split::Val, val_count},
                                std::pair{Split::Test, test_count}}) {
        SynthSpec s = spec;
        s.n_samples = count;
        const auto generated = generate_synthetic(s, split);
        write_corpus(out, generated.corpus);
        write_generation_records(out / std::string(to_string(split)) / "gen_records.jsonl", generated.records);
        std::cout << to_string(split) << ": " << count << " samples\n";
    }
    std::cout << "tree hash " << tree_hash(out / "train") << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const fs::path& data, const fs::path& out, double ratio,
              const std::string& ablate, std::optional<std::uint64_t> seed, const std::vector<std::string>& argv) {
    const auto raw = resolve_config(config_path, ablate, seed);
    const auto config = normalized(raw);
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("--data-ratio must be in (0, 1]");

    const auto train_full = load_corpus(data, Split::Train, config.in_channels);
    const auto train_corpus = subset_by_ratio(train_full, ratio, config.seed);
    std::optional<Corpus> val;
    if (has_split(data, Split::Val)) val = load_corpus(data, Split::Val, config.in_channels);
    std::optional<Corpus> test;
    if (has_split(data, Split::Test)) test = load_corpus(data, Split::Test, config.in_channels);

    RunManifest manifest;
    manifest.command = "train";
    manifest.argv = argv;
    manifest.config = to_json(config);
    manifest.seed = config.seed;
    manifest.input_hash = tree_hash(data);
    manifest.outputs = {{"checkpoint", (out / "best.ckpt").string()},
                        {"metrics", (out / "metrics.jsonl").string()},
                        {"report", (out / "report.json").string()}};
    manifest.extra = {{"data_ratio", ratio},
                      {"train_samples", train_corpus.size()},
                      {"train_samples_available", train_full.size()},
                      {"implied_off", implied_off(raw, config)},
                      {"config_fingerprint", fingerprint(config)}};
    write_manifest(out / "manifest.json", manifest);
    for (const auto& flag : implied_off(raw, config)) std::cerr << "note: " << flag << " implied off\n";

    TrainOptions options;
    options.out_dir = out;
    options.on_epoch = [&](const EpochLog& e) {
        std::cout << "epoch " << e.epoch << "/" << config.epochs << " loss " << e.loss_total << " seg " << e.loss_seg
                  << " ca " << e.loss_ca;
        if (e.val_dice) std::cout << " val_dice " << *e.val_dice;
        std::cout << std::endl;
    };
    auto result = train(config, train_corpus, val ? &*val : nullptr, options);

    MetricsReport report;
    report.history = result.history;
    report.wall_clock_seconds = result.wall_clock_seconds;
    report.config_fingerprint = fingerprint(config);
    if (val) report.splits["val"] = evaluate(result.model, result.vocab, *val);
    if (test) report.splits["test"] = evaluate(result.model, result.vocab, *test);
    write_text(out / "report.json", report.to_json().dump(2) + "\n");
    for (const auto& [name, m] : report.splits) {
        std::cout << name << ": jaccard " << m.jaccard << " dice " << m.dice << " acc " << m.accuracy << "\n";
    }
    return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data, const std::string& split_name,
             const std::string& out_path) {
    const auto split = parse_split(split_name);
    auto loaded = load_checkpoint(checkpoint);
    check_image_size(data, split, loaded.config);
    const auto corpus = load_corpus(data, split, loaded.config.in_channels);
    MetricsReport report;
    report.config_fingerprint = fingerprint(loaded.config);
    report.splits[split_name] = evaluate(loaded.model, loaded.vocab, corpus);
    auto j = report.to_json();
    j["checkpoint_fingerprint"] = loaded.fingerprint;
    j.erase("wall_clock_seconds");
    j.erase("history");
    const auto text = j.dump(2) + "\n";
    const fs::path out = out_path.empty() ? checkpoint.parent_path() / ("eval_" + split_name + ".json") : fs::path(out_path);
    write_text(out, text);
    std::cout << text;
    return 0;
}

int cmd_infer(const fs::path& checkpoint, const fs::path& image, const std::string& text, const fs::path& out,
              const std::string& overlay) {
    if (trim(text).empty()) throw ConfigError("--text must not be empty");
    SegmentationService service;
    service.load(checkpoint);
    SegmentRequest request;
    request.image = read_bytes(image);
    request.text = text;
    SegmentResult result;
    try {
        result = service.segment(request);
    } catch (const ServiceError& e) {
        throw ConfigError(e.what());
    }
    write_text(out, result.mask_png);
    if (!overlay.empty()) {
        const auto rgb = decode_image(request.image, 3);
        const auto mask = decode_gray(result.mask_png);
        write_text(overlay, encode_overlay(rgb, mask));
    }
    std::cout << "wrote " << out.string() << " (" << result.width << "x" << result.height << ")\n";
    return 0;
}

int cmd_ablate(const std::string& config_path, const fs::path& data, const fs::path& out,
               const std::string& ladders, std::optional<std::uint64_t> seed, const std::vector<std::string>& argv) {
    const auto config = normalized(resolve_config(config_path, "", seed));
    AblationOptions options;
    options.out_dir = out;
    if (!ladders.empty()) {
        options.ladders.clear();
        std::stringstream ss(ladders);
        std::string token;
        while (std::getline(ss, token, ',')) {
            token = trim(token);
            if (token == "components") options.ladders.insert(Ladder::Components);
            else if (token == "levels") options.ladders.insert(Ladder::Levels);
            else if (token == "ratios" || token == "data_ratio") options.ladders.insert(Ladder::DataRatio);
            else throw ConfigError("unknown ladder '" + token + "' (expected components, levels, ratios)");
        }
    }
    const auto train_corpus = load_corpus(data, Split::Train, config.in_channels);
    const auto val = load_corpus(data, Split::Val, config.in_channels);
    const auto test = load_corpus(data, Split::Test, config.in_channels);

    RunManifest manifest;
    manifest.command = "ablate";
    manifest.argv = argv;
    manifest.config = to_json(config);
    manifest.seed = config.seed;
    manifest.input_hash = tree_hash(data);
    manifest.outputs = {{"report", (out / "ablation.json").string()}};
    write_manifest(out / "manifest.json", manifest);

    options.on_run = [](const AblationRung& rung, const AblationRun& run) {
        std::cout << to_string(rung.ladder) << " " << rung.label << ": test dice "
                  << run.report.splits.at("test").dice << std::endl;
    };
    const auto report = run_ablation_suite(config, train_corpus, val, test, options);
    write_text(out / "ablation.json", report.to_json().dump(2) + "\n");
    return 0;
}

HttpServer* g_server = nullptr;

int cmd_serve(std::string checkpoint, std::string host, std::optional<int> port) {
    if (checkpoint.empty()) {
        if (const char* v = std::getenv("TMCA_CHECKPOINT")) checkpoint = v;
    }
    if (!port) {
        if (const char* v = std::getenv("TMCA_PORT")) {
            try {
                port = std::stoi(v);
            } catch (const std::exception&) {
                throw ConfigError(std::string("TMCA_PORT is not a number: ") + v);
            }
        }
    }
    SegmentationService service;
    if (!checkpoint.empty()) service.load(checkpoint);
    ServerOptions options;
    options.host = host;
    options.port = port.value_or(8080);
    HttpServer server(service, options);
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    std::cout << "serving on " << host << ":" << options.port
              << (service.loaded() ? "" : " (no checkpoint loaded, /segment returns 503)") << std::endl;
    server.run();
    g_server = nullptr;
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Text-guided segmentation with multi-level contrastive alignment"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::string config_path, ablate, ladders, spec_path, split = "test", text, overlay, out_json, host = "127.0.0.1";
    fs::path data, out, checkpoint, image, runs;
    std::optional<int> n, n_val, n_test, size, port;
    double ratio = 1.0;

    auto* synth = app.add_subcommand("synth", "Generate the synthetic ambiguous-blob corpus");
    synth->add_option("--spec", spec_path, "JSON generator spec")->check(CLI::ExistingFile);
    synth->add_option("--out", out, "Output directory")->required();
    synth->add_option("--n", n, "Training samples (val/test default to n/10)");
    synth->add_option("--n-val", n_val, "Validation samples");
    synth->add_option("--n-test", n_test, "Test samples");
    synth->add_option("--seed", seed, "Generator seed");
    synth->add_option("--size", size, "Image side in pixels");

    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--config", config_path, "Config file (JSON or key = value)")->check(CLI::ExistingFile);
    train_cmd->add_option("--data", data, "Corpus root")->required()->check(CLI::ExistingDirectory);
    train_cmd->add_option("--out", out, "Run directory")->required();
    train_cmd->add_option("--data-ratio", ratio, "Fraction of the training split");
    train_cmd->add_option("--ablate", ablate, "Comma list of tsdm, ltem, mas, ca, text");
    train_cmd->add_option("--seed", seed, "Seed");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--split", split, "train, val or test");
    eval_cmd->add_option("--out", out_json, "Report path (default next to the checkpoint)");

    auto* infer = app.add_subcommand("infer", "Segment one image");
    infer->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    infer->add_option("--image", image)->required()->check(CLI::ExistingFile);
    infer->add_option("--text", text)->required();
    infer->add_option("--out", out, "Mask PNG")->required();
    infer->add_option("--overlay", overlay, "RGBA overlay PNG");

    auto* report = app.add_subcommand("report", "Compare runs");
    report->add_option("--runs", runs)->required();
    report->add_option("--out", out, "report.md or report.html")->required();

    auto* ablate_cmd = app.add_subcommand("ablate", "Run the ablation ladders");
    ablate_cmd->add_option("--config", config_path)->check(CLI::ExistingFile);
    ablate_cmd->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
    ablate_cmd->add_option("--out", out)->required();
    ablate_cmd->add_option("--ladders", ladders, "components,levels,ratios (default all)");
    ablate_cmd->add_option("--seed", seed);

    auto* serve = app.add_subcommand("serve", "HTTP inference service");
    serve->add_option("--checkpoint", config_path, "Checkpoint (or TMCA_CHECKPOINT)");
    serve->add_option("--host", host);
    serve->add_option("--port", port, "Port (or TMCA_PORT, default 8080)");

    std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return cmd_synth(spec_path, out, n, n_val, n_test, seed, size, args);
        if (*train_cmd) return cmd_train(config_path, data, out, ratio, ablate, seed, args);
        if (*eval_cmd) return cmd_eval(checkpoint, data, split, out_json);
        if (*infer) return cmd_infer(checkpoint, image, text, out, overlay);
        if (*report) {
            write_report(runs, out);
            std::cout << "wrote " << out.string() << "\n";
            return 0;
        }
        if (*ablate_cmd) return cmd_ablate(config_path, data, out, ladders, seed, args);
        if (*serve) return cmd_serve(config_path, host, port);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace tmca::cli
