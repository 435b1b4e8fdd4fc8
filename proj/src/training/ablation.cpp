#include "tmca/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "tmca/errors.hpp"
#include "tmca/manifest.hpp"

namespace tmca {

std::string_view to_string(Ladder ladder) {
    switch (ladder) {
        case Ladder::Components: return "components";
        case Ladder::Levels: return "levels";
        case Ladder::DataRatio: return "data_ratio";
    }
    return "?";
}

std::string AblationRung::key() const {
    char ratio[16];
    std::snprintf(ratio, sizeof ratio, "%03d", static_cast<int>(std::lround(data_ratio * 100)));
    return fingerprint(config) + "_r" + ratio;
}

std::vector<AblationRung> component_ladder(const ModelConfig& base) {
    std::vector<AblationRung> rungs;
    ModelConfig c = base;
    c.ablation = AblationFlags{};
    c.levels = ModelConfig{}.levels;
    rungs.push_back({Ladder::Components, "TMCA", normalized(c)});
    c.ablation.tsdm = false;
    rungs.push_back({Ladder::Components, "-TSDM", normalized(c)});
    c.ablation.ltem = false;
    rungs.push_back({Ladder::Components, "-LTEM", normalized(c)});
    c.ablation.mas = false;
    rungs.push_back({Ladder::Components, "-MAS", normalized(c)});
    c.ablation.contrastive = false;
    rungs.push_back({Ladder::Components, "-CA", normalized(c)});
    return rungs;
}

std::vector<AblationRung> level_ladder(const ModelConfig& base) {
    std::vector<AblationRung> rungs;
    ModelConfig c = base;
    c.ablation = AblationFlags{};
    const std::vector<std::pair<std::string, std::vector<Level>>> steps = {
        {"G", {Level::Global}},
        {"G+32", {Level::Global, Level::S32}},
        {"G+32+16", {Level::Global, Level::S32, Level::S16}},
        {"G+32+16+8", {Level::Global, Level::S32, Level::S16, Level::S8}},
    };
    for (const auto& [label, levels] : steps) {
        c.levels = levels;
        rungs.push_back({Ladder::Levels, label, normalized(c)});
    }
    return rungs;
}

std::vector<AblationRung> ratio_ladder(const ModelConfig& base) {
    std::vector<AblationRung> rungs;
    ModelConfig c = base;
    c.ablation = AblationFlags{};
    c.levels = ModelConfig{}.levels;
    for (int pct : {25, 50, 75, 100}) {
        rungs.push_back({Ladder::DataRatio, std::to_string(pct) + "%", normalized(c), pct / 100.0});
    }
    return rungs;
}

const AblationRun& AblationReport::run_for(const AblationRung& rung) const {
    const auto key = rung.key();
    for (const auto& run : runs) {
        if (run.key == key) return run;
    }
    throw std::out_of_range("no run for rung " + rung.label);
}

nlohmann::json AblationReport::to_json() const {
    nlohmann::json j;
    j["runs"] = nlohmann::json::array();
    for (const auto& run : runs) {
        j["runs"].push_back({{"key", run.key},
                             {"config", tmca::to_json(run.config)},
                             {"data_ratio", run.data_ratio},
                             {"train_samples", run.train_samples},
                             {"report", run.report.to_json()}});
    }
    j["ladders"] = nlohmann::json::object();
    for (const auto& rung : rungs) {
        const auto& run = run_for(rung);
        nlohmann::json row{{"label", rung.label}, {"key", run.key}, {"data_ratio", rung.data_ratio}};
        if (auto it = run.report.splits.find("test"); it != run.report.splits.end()) {
            row["jaccard"] = it->second.jaccard;
            row["dice"] = it->second.dice;
            row["accuracy"] = it->second.accuracy;
        }
        j["ladders"][std::string(to_string(rung.ladder))].push_back(row);
    }
    return j;
}

AblationReport run_ablation_suite(const ModelConfig& base, const Corpus& train_corpus, const Corpus& val,
                                  const Corpus& test, const AblationOptions& options) {
    validate(normalized(base));
    AblationReport report;
    if (options.ladders.count(Ladder::Components)) {
        for (auto& r : component_ladder(base)) report.rungs.push_back(std::move(r));
    }
    if (options.ladders.count(Ladder::Levels)) {
        for (auto& r : level_ladder(base)) report.rungs.push_back(std::move(r));
    }
    if (options.ladders.count(Ladder::DataRatio)) {
        for (auto& r : ratio_ladder(base)) report.rungs.push_back(std::move(r));
    }

    std::map<std::string, size_t> done;
    for (const auto& rung : report.rungs) {
        const auto key = rung.key();
        if (auto it = done.find(key); it != done.end()) {
            if (options.on_run) options.on_run(rung, report.runs[it->second]);
            continue;
        }
        const auto subset = subset_by_ratio(train_corpus, rung.data_ratio, rung.config.seed);

        TrainOptions train_options;
        if (options.out_dir) {
            const auto dir = *options.out_dir / key;
            RunManifest manifest;
            manifest.command = "ablate";
            manifest.config = to_json(rung.config);
            manifest.seed = rung.config.seed;
            manifest.outputs = {{"checkpoint", (dir / "best.ckpt").string()},
                                {"metrics", (dir / "metrics.jsonl").string()}};
            manifest.extra = {{"label", rung.label},
                              {"ladder", std::string(to_string(rung.ladder))},
                              {"data_ratio", rung.data_ratio},
                              {"train_samples", subset.size()}};
            write_manifest(dir / "manifest.json", manifest);
            train_options.out_dir = dir;
        }

        auto trained = train(rung.config, subset, &val, train_options);
        AblationRun run;
        run.key = key;
        run.config = rung.config;
        run.data_ratio = rung.data_ratio;
        run.train_samples = subset.size();
        run.report.history = trained.history;
        run.report.wall_clock_seconds = trained.wall_clock_seconds;
        run.report.config_fingerprint = fingerprint(rung.config);
        run.report.splits["val"] = evaluate(trained.model, trained.vocab, val);
        run.report.splits["test"] = evaluate(trained.model, trained.vocab, test);
        if (options.out_dir) {
            std::ofstream out(*options.out_dir / key / "report.json", std::ios::binary | std::ios::trunc);
            out << run.report.to_json().dump(2) << '\n';
        }
        done[key] = report.runs.size();
        report.runs.push_back(std::move(run));
        if (options.on_run) options.on_run(rung, report.runs.back());
    }
    return report;
}

}  // namespace tmca
