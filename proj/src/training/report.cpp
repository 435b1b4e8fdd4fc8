#include "tmca/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "tmca/errors.hpp"

namespace tmca {
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kEpochKeys = {"epoch",   "lr",         "loss_total", "loss_seg", "loss_ca",
                                             "loss_ca_per_level", "val_jaccard", "val_dice", "val_acc"};

std::string derive_label(const nlohmann::json& config) {
    if (!config.is_object() || !config.contains("ablation")) return "unknown";
    std::string label;
    for (const char* flag : {"tsdm", "ltem", "mas", "contrastive", "text"}) {
        if (config["ablation"].value(flag, true) == false) label += std::string(label.empty() ? "" : ",") + "-" + flag;
    }
    if (label.empty()) label = "full";
    if (config.contains("levels") && config["levels"].is_array()) {
        std::string lv;
        for (const auto& l : config["levels"]) lv += (lv.empty() ? "" : "+") + l.get<std::string>();
        label += " [" + lv + "]";
    }
    return label;
}

std::string fmt(const nlohmann::json& v, int digits = 4) {
    if (!v.is_number()) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v.get<double>());
    return buf;
}

nlohmann::json best_epoch(const RunSummary& run) {
    nlohmann::json best = nullptr;
    for (const auto& e : run.epochs) {
        if (!e.contains("val_dice") || !e["val_dice"].is_number()) continue;
        if (best.is_null() || e["val_dice"].get<double>() > best["val_dice"].get<double>()) best = e;
    }
    return best;
}

struct Row {
    std::string label, ladder, epochs, val_j, val_d, val_a, test_j, test_d, test_a, loss, loss_ca, flags;
};

Row make_row(const RunSummary& run) {
    Row r;
    r.label = run.label;
    r.ladder = run.ladder.empty() ? "-" : run.ladder;
    r.epochs = std::to_string(run.epochs.size());
    const auto best = best_epoch(run);
    r.val_j = best.is_null() ? "n/a" : fmt(best["val_jaccard"], 2);
    r.val_d = best.is_null() ? "n/a" : fmt(best["val_dice"], 2);
    r.val_a = best.is_null() ? "n/a" : fmt(best["val_acc"], 2);
    if (run.test.is_object()) {
        r.test_j = fmt(run.test.value("jaccard", nlohmann::json()), 2);
        r.test_d = fmt(run.test.value("dice", nlohmann::json()), 2);
        r.test_a = fmt(run.test.value("accuracy", nlohmann::json()), 2);
    } else {
        r.test_j = r.test_d = r.test_a = "n/a";
    }
    if (!run.epochs.empty()) {
        r.loss = fmt(run.epochs.back().value("loss_total", nlohmann::json()));
        r.loss_ca = fmt(run.epochs.back().value("loss_ca", nlohmann::json()));
    } else {
        r.loss = r.loss_ca = "n/a";
    }
    if (!run.missing.empty()) {
        r.flags = "missing:";
        for (const auto& m : run.missing) r.flags += " " + m;
    }
    return r;
}

std::string html_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string slug(const std::string& name) {
    std::string s;
    for (char c : name) s += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
    return s;
}

}  // namespace

std::vector<RunSummary> collect_runs(const fs::path& runs_dir) {
    if (!fs::is_directory(runs_dir)) throw ConfigError("runs directory not found: " + runs_dir.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::recursive_directory_iterator(runs_dir)) {
        if (entry.is_regular_file() && entry.path().filename() == "metrics.jsonl") dirs.push_back(entry.path().parent_path());
    }
    if (dirs.empty()) throw ConfigError("no runs (metrics.jsonl) under " + runs_dir.string());
    std::sort(dirs.begin(), dirs.end());

    std::vector<RunSummary> runs;
    for (const auto& dir : dirs) {
        RunSummary run;
        run.name = fs::relative(dir, runs_dir).generic_string();
        if (run.name == ".") run.name = dir.filename().string();

        std::ifstream in(dir / "metrics.jsonl");
        std::string line;
        std::set<std::string> missing;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            nlohmann::json e;
            try {
                e = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception&) {
                missing.insert("unparseable-line");
                continue;
            }
            for (const auto& k : kEpochKeys) {
                if (!e.contains(k)) missing.insert(k);
            }
            run.epochs.push_back(std::move(e));
        }
        if (run.epochs.empty()) missing.insert("epochs");

        nlohmann::json config;
        if (fs::exists(dir / "manifest.json")) {
            try {
                std::ifstream mf(dir / "manifest.json");
                const auto m = nlohmann::json::parse(mf);
                config = m.value("config", nlohmann::json());
                if (m.contains("extra") && m["extra"].is_object()) {
                    run.label = m["extra"].value("label", "");
                    run.ladder = m["extra"].value("ladder", "");
                }
            } catch (const nlohmann::json::exception&) {
                missing.insert("manifest");
            }
        } else {
            missing.insert("manifest");
        }
        if (run.label.empty()) run.label = derive_label(config);
        if (fs::exists(dir / "report.json")) {
            try {
                std::ifstream rf(dir / "report.json");
                const auto r = nlohmann::json::parse(rf);
                if (r.contains("splits") && r["splits"].contains("test")) run.test = r["splits"]["test"];
                run.fingerprint = r.value("config_fingerprint", "");
            } catch (const nlohmann::json::exception&) {
                missing.insert("report");
            }
        }
        run.missing.assign(missing.begin(), missing.end());
        runs.push_back(std::move(run));
    }
    std::stable_sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) {
        return std::tie(a.ladder, a.label, a.name) < std::tie(b.ladder, b.label, b.name);
    });
    return runs;
}

std::string loss_curve_svg(const RunSummary& run) {
    constexpr double W = 480, H = 260, L = 50, R = 110, T = 20, B = 35;
    const std::vector<std::pair<std::string, std::string>> series = {
        {"loss_total", "#1f77b4"}, {"loss_seg", "#2ca02c"}, {"loss_ca", "#d62728"}};
    double ymax = 0;
    for (const auto& e : run.epochs) {
        for (const auto& [k, _] : series) {
            if (e.contains(k) && e[k].is_number()) ymax = std::max(ymax, e[k].get<double>());
        }
    }
    if (ymax <= 0) ymax = 1;
    const auto n = run.epochs.size();
    auto x_of = [&](size_t i) { return L + (n > 1 ? (W - L - R) * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0); };
    auto y_of = [&](double v) { return T + (H - T - B) * (1.0 - v / ymax); };

    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << L - 5 << "\" y=\"" << T + 4 << "\" font-size=\"10\" text-anchor=\"end\">" << ymax << "</text>\n";
    s << "<text x=\"" << L - 5 << "\" y=\"" << H - B << "\" font-size=\"10\" text-anchor=\"end\">0</text>\n";
    s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 8 << "\" font-size=\"11\" text-anchor=\"middle\">epoch (1.."
      << n << ")</text>\n";
    double legend_y = T + 10;
    for (const auto& [key, color] : series) {
        std::string points;
        for (size_t i = 0; i < n; ++i) {
            const auto& e = run.epochs[i];
            if (!e.contains(key) || !e[key].is_number()) continue;
            char buf[48];
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x_of(i), y_of(e[key].get<double>()));
            points += buf;
        }
        if (!points.empty()) {
            s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << points << "\"/>\n";
        }
        s << "<text x=\"" << W - R + 10 << "\" y=\"" << legend_y << "\" font-size=\"11\" fill=\"" << color << "\">" << key
          << "</text>\n";
        legend_y += 16;
    }
    s << "</svg>\n";
    return s.str();
}

std::string render_markdown(const std::vector<RunSummary>& runs) {
    std::ostringstream s;
    s << "# Run comparison\n\n";
    s << "| configuration | ladder | epochs | val Jaccard | val Dice | val Acc | test Jaccard | test Dice | test Acc | "
         "final loss | final L_CA | flags |\n";
    s << "|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& run : runs) {
        const auto r = make_row(run);
        s << "| " << r.label << " | " << r.ladder << " | " << r.epochs << " | " << r.val_j << " | " << r.val_d << " | "
          << r.val_a << " | " << r.test_j << " | " << r.test_d << " | " << r.test_a << " | " << r.loss << " | "
          << r.loss_ca << " | " << r.flags << " |\n";
    }
    s << "\n## Loss curves\n\n";
    for (const auto& run : runs) {
        s << "### " << run.label << " (" << run.name << ")\n\n![" << run.label << "](" << slug(run.name) << ".svg)\n\n";
    }
    return s.str();
}

std::string render_html(const std::vector<RunSummary>& runs) {
    std::ostringstream s;
    s << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Run comparison</title>\n"
         "<style>body{font-family:sans-serif}table{border-collapse:collapse}td,th{border:1px solid #ccc;"
         "padding:3px 8px;text-align:right}td:first-child{text-align:left}.flag{color:#b00}</style>\n"
         "</head><body>\n<h1>Run comparison</h1>\n<table>\n<tr><th>configuration</th><th>ladder</th><th>epochs</th>"
         "<th>val Jaccard</th><th>val Dice</th><th>val Acc</th><th>test Jaccard</th><th>test Dice</th><th>test Acc</th>"
         "<th>final loss</th><th>final L_CA</th><th>flags</th></tr>\n";
    for (const auto& run : runs) {
        const auto r = make_row(run);
        s << "<tr><td>" << html_escape(r.label) << "</td><td>" << html_escape(r.ladder) << "</td><td>" << r.epochs
          << "</td><td>" << r.val_j << "</td><td>" << r.val_d << "</td><td>" << r.val_a << "</td><td>" << r.test_j
          << "</td><td>" << r.test_d << "</td><td>" << r.test_a << "</td><td>" << r.loss << "</td><td>" << r.loss_ca
          << "</td><td class=\"flag\">" << html_escape(r.flags) << "</td></tr>\n";
    }
    s << "</table>\n<h2>Loss curves</h2>\n";
    for (const auto& run : runs) {
        s << "<h3>" << html_escape(run.label) << " (" << html_escape(run.name) << ")</h3>\n" << loss_curve_svg(run);
    }
    s << "</body></html>\n";
    return s.str();
}

void write_report(const fs::path& runs_dir, const fs::path& out) {
    const auto runs = collect_runs(runs_dir);
    const auto ext = out.extension().string();
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    auto write = [](const fs::path& p, const std::string& text) {
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write " + p.string());
        f << text;
    };
    if (ext == ".html" || ext == ".htm") {
        write(out, render_html(runs));
    } else if (ext == ".md") {
        write(out, render_markdown(runs));
        const auto dir = out.parent_path();
        for (const auto& run : runs) write(dir / (slug(run.name) + ".svg"), loss_curve_svg(run));
    } else {
        throw ConfigError("report output must end in .md or .html: " + out.string());
    }
}

}  // namespace tmca
