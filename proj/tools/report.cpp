#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace scalpel::cli {
namespace {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;

  int column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("table lacks column '" + name + "'");
    return static_cast<int>(it - header.begin());
  }
};

Row split_line(const std::string& line) {
  Row out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<Table> read_csv(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) return std::nullopt;
  Table t;
  std::string line;
  if (!std::getline(is, line)) return t;
  t.header = split_line(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Row r = split_line(line);
    r.resize(t.header.size());
    t.rows.push_back(std::move(r));
  }
  return t;
}

std::string fixed3(const std::string& v) {
  if (v.empty()) return "–";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << std::stod(v);
  return os.str();
}

void metrics_table(std::ostream& md, const Table& t, const std::vector<const Row*>& rows) {
  const int ab = t.column("ablation"), ap = t.column("ap"), p = t.column("p"), r = t.column("r"),
            f1 = t.column("f1"), st = t.column("status");
  md << "| ablation | AP | P | R | F1 | status |\n|---|---:|---:|---:|---:|---|\n";
  for (const Row* row : rows) {
    const Row& x = *row;
    md << "| " << x[ab] << " | " << fixed3(x[ap]) << " | " << fixed3(x[p]) << " | " << fixed3(x[r]) << " | "
       << fixed3(x[f1]) << " | " << x[st] << " |\n";
  }
  md << '\n';
}

// Groups row pointers by the testset column, keeping first-seen order.
std::vector<std::pair<std::string, std::vector<const Row*>>> by_testset(const Table& t) {
  std::vector<std::pair<std::string, std::vector<const Row*>>> groups;
  const int ts = t.column("testset");
  for (const Row& r : t.rows) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == r[ts]; });
    if (it == groups.end()) {
      groups.push_back({r[ts], {}});
      it = groups.end() - 1;
    }
    it->second.push_back(&r);
  }
  return groups;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
                          "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39"};

std::string colour(size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

void svg_open(std::ostream& os, int w, int h) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

// Grouped bars: one group per test set, one bar per ablation.
void f1_bars(const std::filesystem::path& file, const Table& t) {
  const auto groups = by_testset(t);
  std::vector<std::string> ablations;
  const int ab = t.column("ablation"), f1 = t.column("f1");
  for (const Row& r : t.rows)
    if (std::find(ablations.begin(), ablations.end(), r[ab]) == ablations.end()) ablations.push_back(r[ab]);
  const int bar = 10, gap = 24, left = 50, top = 30, plot_h = 240;
  const int group_w = static_cast<int>(ablations.size()) * bar + gap;
  const int width = left + static_cast<int>(groups.size()) * group_w + 160;
  const int height = top + plot_h + 50;
  std::ofstream os(file);
  svg_open(os, width, height);
  os << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">F1 (IoU sweep) per test set and ablation</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = top + plot_h - plot_h * k / 4.0;
    os << "<line x1=\"" << left << "\" x2=\"" << width - 160 << "\" y1=\"" << y << "\" y2=\"" << y
       << "\" stroke=\"#ddd\"/><text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << k / 4.0
       << "</text>\n";
  }
  for (size_t g = 0; g < groups.size(); ++g) {
    const int x0 = left + static_cast<int>(g) * group_w + gap / 2;
    for (const Row* r : groups[g].second) {
      const size_t a = std::find(ablations.begin(), ablations.end(), (*r)[ab]) - ablations.begin();
      const double v = (*r)[f1].empty() ? 0.0 : std::clamp(std::stod((*r)[f1]), 0.0, 1.0);
      const double h = v * plot_h;
      os << "<rect x=\"" << x0 + static_cast<int>(a) * bar << "\" y=\"" << top + plot_h - h << "\" width=\""
         << bar - 1 << "\" height=\"" << h << "\" fill=\"" << colour(a) << "\"/>\n";
    }
    os << "<text x=\"" << x0 + (group_w - gap) / 2 << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">"
       << esc(groups[g].first) << "</text>\n";
  }
  for (size_t a = 0; a < ablations.size(); ++a) {
    const int y = top + static_cast<int>(a) * 16;
    os << "<rect x=\"" << width - 150 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << colour(a)
       << "\"/><text x=\"" << width - 135 << "\" y=\"" << y + 9 << "\">" << esc(ablations[a]) << "</text>\n";
  }
  os << "</svg>\n";
}

void pr_plot(const std::filesystem::path& file, const std::string& testset, const Table& curves) {
  const int ts = curves.column("testset"), ab = curves.column("ablation"), rc = curves.column("recall"),
            pc = curves.column("precision");
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> series;
  for (const Row& r : curves.rows) {
    if (r[ts] != testset) continue;
    if (series.empty() || series.back().first != r[ab]) series.push_back({r[ab], {}});
    series.back().second.push_back({std::stod(r[rc]), std::stod(r[pc])});
  }
  const int left = 50, top = 30, side = 260, width = left + side + 170, height = top + side + 45;
  std::ofstream os(file);
  svg_open(os, width, height);
  os << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">PR curve at IoU 0.5: " << esc(testset) << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << side << "\" height=\"" << side
     << "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double f = k / 4.0;
    os << "<text x=\"" << left - 6 << "\" y=\"" << top + side - side * f + 4 << "\" text-anchor=\"end\">" << f
       << "</text><text x=\"" << left + side * f << "\" y=\"" << top + side + 14 << "\" text-anchor=\"middle\">" << f
       << "</text>\n";
  }
  os << "<text x=\"" << left + side / 2 << "\" y=\"" << top + side + 32 << "\" text-anchor=\"middle\">recall</text>\n";
  for (size_t i = 0; i < series.size(); ++i) {
    os << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << colour(i) << "\" points=\"";
    for (const auto& [r, p] : series[i].second) os << left + r * side << ',' << top + side - p * side << ' ';
    os << "\"/>\n";
    const int y = top + static_cast<int>(i) * 16;
    os << "<rect x=\"" << left + side + 15 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << colour(i)
       << "\"/><text x=\"" << left + side + 30 << "\" y=\"" << y + 9 << "\">" << esc(series[i].first) << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace

std::vector<std::filesystem::path> render_report(const std::filesystem::path& dir, bool plots) {
  const auto report = read_csv(dir / "report.csv");
  const auto tune = read_csv(dir / "tune_report.csv");
  if (!report && !tune) throw std::runtime_error("no report.csv or tune_report.csv in " + dir.string());
  std::vector<std::filesystem::path> written;

  const auto md_path = dir / "report.md";
  std::ofstream md(md_path);
  if (!md) throw std::runtime_error("cannot write " + md_path.string());
  md << "# Surgical fine-tuning results\n\nMetrics are means over IoU thresholds 0.30–0.90; F1 is computed from the "
        "mean precision and recall.\n\n";
  if (tune) {
    for (const auto& [name, rows] : by_testset(*tune)) {
      md << "## Fine-tuning set: " << name << "\n\n";
      metrics_table(md, *tune, rows);
    }
  }
  if (report) {
    for (const auto& [name, rows] : by_testset(*report)) {
      md << "## Target: " << name << "\n\n";
      metrics_table(md, *report, rows);
    }
  }
  if (const auto runs = read_csv(dir / "runs.csv")) {
    md << "## Runs\n\n| ablation | iterations | early stop | changed | ledger | status |\n"
          "|---|---:|---|---:|---:|---|\n";
    const int ab = runs->column("ablation"), it = runs->column("iterations"), es = runs->column("early_stopped"),
              ch = runs->column("changed"), lg = runs->column("ledger"), st = runs->column("status");
    for (const Row& r : runs->rows) {
      md << "| " << r[ab] << " | " << r[it] << " | " << (r[es] == "1" ? "yes" : "no") << " | " << r[ch] << " | "
         << r[lg] << " | " << r[st] << " |\n";
    }
    md << '\n';
  }
  written.push_back(md_path);

  if (plots) {
    Table all;
    for (const auto* t : {&tune, &report}) {
      if (!*t) continue;
      if (all.header.empty()) all.header = (*t)->header;
      all.rows.insert(all.rows.end(), (*t)->rows.begin(), (*t)->rows.end());
    }
    f1_bars(dir / "f1_bars.svg", all);
    written.push_back(dir / "f1_bars.svg");
    md << "![F1 per test set](f1_bars.svg)\n\n";
    if (const auto curves = read_csv(dir / "curves.csv")) {
      for (const auto& [name, rows] : by_testset(*curves)) {
        const auto file = dir / ("pr_" + name + ".svg");
        pr_plot(file, name, *curves);
        written.push_back(file);
        md << "![PR curve " << name << "](pr_" << name << ".svg)\n\n";
      }
    }
  }
  return written;
}

}  // namespace scalpel::cli
