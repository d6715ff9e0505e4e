#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "gwrcil/harness.hpp"

namespace gwrcil::harness {

using nlohmann::json;

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string xml_escape(const std::string& s) {
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

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

}  // namespace

std::vector<SummaryRow> summarize(std::span<const Metrics> runs) {
    std::vector<std::string> order;
    std::map<std::pair<std::string, int>, std::vector<const TaskMetrics*>> groups;
    for (const auto& m : runs) {
        if (std::find(order.begin(), order.end(), m.label) == order.end()) order.push_back(m.label);
        for (const auto& t : m.tasks) groups[{m.label, t.task}].push_back(&t);
    }
    std::vector<SummaryRow> rows;
    for (const auto& label : order) {
        for (const auto& [key, items] : groups) {
            if (key.first != label) continue;
            SummaryRow r;
            r.config = label;
            r.task = key.second;
            r.runs = items.size();
            for (const auto* t : items) {
                r.mean_accuracy += t->accuracy;
                r.mean_nodes += static_cast<double>(t->nodes);
            }
            r.mean_accuracy /= static_cast<double>(r.runs);
            r.mean_nodes /= static_cast<double>(r.runs);
            if (r.runs > 1) {
                double ss = 0.0;
                for (const auto* t : items) ss += (t->accuracy - r.mean_accuracy) * (t->accuracy - r.mean_accuracy);
                r.std_accuracy = std::sqrt(ss / static_cast<double>(r.runs - 1));
            }
            rows.push_back(r);
        }
    }
    return rows;
}

std::string run_csv(const Metrics& m, bool record_wallclock) {
    std::ostringstream out;
    out << "task,accuracy,nodes,wallclock_ms\n";
    for (const auto& t : m.tasks) {
        out << t.task << ',' << fixed(t.accuracy, 6) << ',' << t.nodes << ','
            << fixed(record_wallclock ? t.wallclock_ms : 0.0, 3) << '\n';
    }
    return out.str();
}

std::string summary_csv(std::span<const SummaryRow> rows) {
    std::ostringstream out;
    out << "config,task,runs,mean_accuracy,std_accuracy,mean_nodes\n";
    for (const auto& r : rows) {
        out << r.config << ',' << r.task << ',' << r.runs << ',' << fixed(r.mean_accuracy, 6) << ','
            << fixed(r.std_accuracy, 6) << ',' << fixed(r.mean_nodes, 2) << '\n';
    }
    return out.str();
}

std::vector<SummaryRow> parse_summary_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("summary csv: empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "config,task,runs,mean_accuracy,std_accuracy,mean_nodes")
        throw FormatError("summary csv: unexpected header '" + line + "'");
    std::vector<SummaryRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 6) throw FormatError("summary csv line " + std::to_string(line_no) + ": expected 6 fields");
        try {
            SummaryRow r;
            r.config = f[0];
            r.task = std::stoi(f[1]);
            r.runs = static_cast<std::size_t>(std::stoul(f[2]));
            r.mean_accuracy = std::stod(f[3]);
            r.std_accuracy = std::stod(f[4]);
            r.mean_nodes = std::stod(f[5]);
            rows.push_back(r);
        } catch (const std::exception&) {
            throw FormatError("summary csv line " + std::to_string(line_no) + ": bad number");
        }
    }
    if (rows.empty()) throw FormatError("summary csv: no data rows");
    return rows;
}

std::string render_svg(std::span<const SummaryRow> rows) {
    constexpr double W = 640, H = 400, L = 60, R = 150, T = 30, B = 50;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::vector<std::string> labels;
    int max_task = 1, min_task = 1;
    bool first = true;
    for (const auto& r : rows) {
        if (std::find(labels.begin(), labels.end(), r.config) == labels.end()) labels.push_back(r.config);
        max_task = first ? r.task : std::max(max_task, r.task);
        min_task = first ? r.task : std::min(min_task, r.task);
        first = false;
    }
    const double span = std::max(1, max_task - min_task);
    auto px = [&](int task) { return L + (W - L - R) * (task - min_task) / span; };
    auto py = [&](double acc) { return T + (H - T - B) * (1.0 - std::clamp(acc, 0.0, 1.0)); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double acc = i / 5.0;
        s << "<text x=\"" << L - 8 << "\" y=\"" << fixed(py(acc) + 4, 1) << "\" font-size=\"11\" text-anchor=\"end\">"
          << fixed(acc, 1) << "</text>\n";
    }
    for (int t = min_task; t <= max_task; ++t) {
        s << "<text x=\"" << fixed(px(t), 1) << "\" y=\"" << H - B + 16
          << "\" font-size=\"11\" text-anchor=\"middle\">" << t << "</text>\n";
    }
    s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" font-size=\"12\" text-anchor=\"middle\">task</text>\n";
    s << "<text x=\"15\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
      << (T + H - B) / 2 << ")\">top-1 accuracy</text>\n";

    for (std::size_t li = 0; li < labels.size(); ++li) {
        const char* color = colors[li % std::size(colors)];
        std::vector<const SummaryRow*> pts;
        for (const auto& r : rows)
            if (r.config == labels[li]) pts.push_back(&r);
        std::sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->task < b->task; });

        // std band: upper edge forward, lower edge back
        s << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
        for (const auto* p : pts) s << fixed(px(p->task), 1) << ',' << fixed(py(p->mean_accuracy + p->std_accuracy), 1) << ' ';
        for (auto it = pts.rbegin(); it != pts.rend(); ++it)
            s << fixed(px((*it)->task), 1) << ',' << fixed(py((*it)->mean_accuracy - (*it)->std_accuracy), 1) << ' ';
        s << "\"/>\n";

        s << "<polyline data-config=\"" << xml_escape(labels[li]) << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i)
            s << (i ? " " : "") << fixed(px(pts[i]->task), 1) << ',' << fixed(py(pts[i]->mean_accuracy), 1);
        s << "\"/>\n";

        const double ly = T + 10 + 18.0 * static_cast<double>(li);
        s << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        s << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << xml_escape(labels[li])
          << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

json run_manifest(const Metrics& m, const RunConfig& cfg) {
    json tasks = json::array();
    for (const auto& t : m.task_specs) {
        tasks.push_back({{"task", t.t},
                         {"k", t.k},
                         {"k_resamples", t.k_resamples},
                         {"indicator", t.indicator},
                         {"counts", t.counts},
                         {"weights", t.weights}});
    }
    json config = config_to_json(cfg);
    config["mode"] = m.label;
    return {{"config", config},
            {"label", m.label},
            {"seed", m.seed},
            {"deviation_flags", m.deviation_flags},
            {"hallucinator_trainings", m.hallucinator_trainings},
            {"degenerate_hallucinations", m.degenerate_hallucinations},
            {"tasks", tasks},
            {"trace", m.trace}};
}

EmittedFiles emit_outputs(std::span<const Metrics> runs, const RunConfig& cfg, const std::string& dir) {
    if (runs.empty()) throw InputError("no runs to emit");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
    const std::filesystem::path base(dir);

    EmittedFiles files;
    for (const auto& m : runs) {
        const std::string stem = m.label + "_seed" + std::to_string(m.seed);
        const auto csv = (base / (stem + ".csv")).string();
        write_text_file(csv, run_csv(m, cfg.record_wallclock));
        files.run_csvs.push_back(csv);
        const auto manifest = (base / (stem + "_manifest.json")).string();
        write_text_file(manifest, run_manifest(m, cfg).dump(2) + "\n");
        files.manifests.push_back(manifest);
    }
    const auto rows = summarize(runs);
    files.summary_csv = (base / "summary.csv").string();
    write_text_file(files.summary_csv, summary_csv(rows));
    files.svg = (base / "accuracy.svg").string();
    write_text_file(files.svg, render_svg(rows));
    return files;
}

}  // namespace gwrcil::harness
