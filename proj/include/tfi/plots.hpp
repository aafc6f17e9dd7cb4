// Copyright 2026 The tfisim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TFI_PLOTS_HPP_
#define TFI_PLOTS_HPP_

// Plot data export: a long-format CSV plus small self-contained SVG charts
// (ASR/MTA, retention against DP noise, SCC against ASR, the intensity
// schedule) built from a run or sweep manifest.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tfi/attacks.hpp"
#include "tfi/errors.hpp"
#include "tfi/io.hpp"

namespace tfi {

inline constexpr const char* kLongHeader = "source,seed,round,metric,value";

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

inline std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double kW = 480, kH = 320, kL = 60, kR = 20, kT = 40, kB = 50;
  double X(double x) const { return kL + (x - x0) / (x1 - x0) * (kW - kL - kR); }
  double Y(double y) const { return kH - kB - (y - y0) / (y1 - y0) * (kH - kT - kB); }
};

inline Frame FitFrame(const std::vector<Series>& series, bool zero_floor) {
  double x0 = 1e300, x1 = -1e300, y0 = zero_floor ? 0.0 : 1e300, y1 = -1e300;
  for (const Series& s : series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
  if (!(y1 > y0)) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  return {x0, x1, zero_floor && y0 == 0.0 ? 0.0 : y0 - pad, y1 + pad};
}

inline std::string Open(const std::string& title, const Frame& f, const std::string& xlabel,
                        const std::string& ylabel) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Frame::kW << "\" height=\"" << Frame::kH
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << Frame::kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << Escape(title) << "</text>\n"
    << "<line x1=\"" << Frame::kL << "\" y1=\"" << Frame::kH - Frame::kB << "\" x2=\""
    << Frame::kW - Frame::kR << "\" y2=\"" << Frame::kH - Frame::kB << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << Frame::kL << "\" y1=\"" << Frame::kT << "\" x2=\"" << Frame::kL << "\" y2=\""
    << Frame::kH - Frame::kB << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << Frame::kW / 2 << "\" y=\"" << Frame::kH - 12 << "\" text-anchor=\"middle\">"
    << Escape(xlabel) << "</text>\n"
    << "<text x=\"14\" y=\"" << Frame::kH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << Frame::kH / 2 << ")\">" << Escape(ylabel) << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    o << "<text x=\"" << Frame::kL - 4 << "\" y=\"" << f.Y(yv) + 4 << "\" text-anchor=\"end\">"
      << FormatNumber(std::round(yv * 1000) / 1000) << "</text>\n";
    o << "<text x=\"" << f.X(xv) << "\" y=\"" << Frame::kH - Frame::kB + 16
      << "\" text-anchor=\"middle\">" << FormatNumber(std::round(xv * 1000) / 1000) << "</text>\n";
  }
  return o.str();
}

inline std::string Legend(const std::vector<std::string>& names) {
  std::ostringstream o;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = Frame::kT + 14.0 * static_cast<double>(i);
    o << "<rect x=\"" << Frame::kW - 130 << "\" y=\"" << y - 8 << "\" width=\"10\" height=\"10\" fill=\""
      << kPalette[i % 6] << "\"/><text x=\"" << Frame::kW - 116 << "\" y=\"" << y << "\">"
      << Escape(names[i]) << "</text>\n";
  }
  return o.str();
}

}  // namespace detail

inline std::string SvgLineChart(const std::string& title, const std::string& xlabel,
                                const std::string& ylabel, const std::vector<Series>& series) {
  const detail::Frame f = detail::FitFrame(series, true);
  std::ostringstream o;
  o << detail::Open(title, f, xlabel, ylabel);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    names.push_back(s.name);
    o << "<polyline fill=\"none\" stroke=\"" << detail::kPalette[i % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) o << f.X(s.x[k]) << "," << f.Y(s.y[k]) << " ";
    o << "\"/>\n";
  }
  o << detail::Legend(names) << "</svg>\n";
  return o.str();
}

inline std::string SvgScatter(const std::string& title, const std::string& xlabel,
                              const std::string& ylabel, const Series& points,
                              const std::vector<std::string>& labels) {
  const detail::Frame f = detail::FitFrame({points}, false);
  std::ostringstream o;
  o << detail::Open(title, f, xlabel, ylabel);
  for (std::size_t k = 0; k < points.x.size(); ++k) {
    o << "<circle cx=\"" << f.X(points.x[k]) << "\" cy=\"" << f.Y(points.y[k])
      << "\" r=\"4\" fill=\"" << detail::kPalette[0] << "\"/>\n";
    if (k < labels.size()) {
      o << "<text x=\"" << f.X(points.x[k]) + 6 << "\" y=\"" << f.Y(points.y[k]) - 6 << "\">"
        << detail::Escape(labels[k]) << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

// Grouped bars: one group per category, one bar per series (series.y
// indexed by category).
inline std::string SvgBarChart(const std::string& title, const std::string& ylabel,
                               const std::vector<std::string>& categories,
                               const std::vector<Series>& series) {
  std::vector<Series> fit = series;
  for (Series& s : fit) {
    s.x.assign(s.y.size(), 0.0);
    for (std::size_t k = 0; k < s.x.size(); ++k) s.x[k] = static_cast<double>(k);
  }
  detail::Frame f = detail::FitFrame(fit, true);
  f.x0 = -0.5;
  f.x1 = static_cast<double>(categories.size()) - 0.5;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::Frame::kW << "\" height=\""
    << detail::Frame::kH << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << detail::Frame::kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << detail::Escape(title) << "</text>\n"
    << "<text x=\"14\" y=\"" << detail::Frame::kH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << detail::Frame::kH / 2 << ")\">" << detail::Escape(ylabel) << "</text>\n";
  const double slot = (f.X(1.0) - f.X(0.0)) * 0.8;
  const double bar = slot / static_cast<double>(std::max<std::size_t>(1, series.size()));
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    names.push_back(series[i].name);
    for (std::size_t k = 0; k < series[i].y.size() && k < categories.size(); ++k) {
      const double x = f.X(static_cast<double>(k)) - slot / 2 + bar * static_cast<double>(i);
      const double y = f.Y(series[i].y[k]);
      o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar * 0.9 << "\" height=\""
        << std::max(0.0, f.Y(0.0) - y) << "\" fill=\"" << detail::kPalette[i % 6] << "\"/>\n";
    }
  }
  for (std::size_t k = 0; k < categories.size(); ++k) {
    o << "<text x=\"" << f.X(static_cast<double>(k)) << "\" y=\"" << detail::Frame::kH - detail::Frame::kB + 16
      << "\" text-anchor=\"middle\">" << detail::Escape(categories[k]) << "</text>\n";
  }
  o << "<line x1=\"" << detail::Frame::kL << "\" y1=\"" << f.Y(0.0) << "\" x2=\""
    << detail::Frame::kW - detail::Frame::kR << "\" y2=\"" << f.Y(0.0) << "\" stroke=\"black\"/>\n";
  o << detail::Legend(names) << "</svg>\n";
  return o.str();
}

// Samples I(t) at integer rounds 0..rounds.
inline Series IntensitySeries(const TemporalSchedule& schedule, int rounds) {
  Series s{"I(t)", {}, {}};
  for (int t = 0; t <= rounds; ++t) {
    s.x.push_back(t);
    s.y.push_back(schedule.Intensity(t));
  }
  return s;
}

inline std::vector<std::vector<std::string>> ReadCsv(const std::filesystem::path& path) {
  std::istringstream in(ReadTextFile(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

struct PlotOutputs {
  std::filesystem::path long_csv;
  std::vector<std::filesystem::path> svgs;
  std::size_t long_rows = 0;
  std::size_t scatter_points = 0;
};

namespace detail {

struct RunRef {
  std::string source;
  std::filesystem::path dir;
  std::uint64_t seed = 0;
};

inline void CollectRuns(const std::filesystem::path& manifest_path, const std::string& source,
                        std::vector<RunRef>& runs, Json& config) {
  const Json m = ReadJsonFile(manifest_path);
  if (m.value("format", "") != "tfi-manifest") throw ConfigError(manifest_path.string() + ": not a manifest");
  const std::filesystem::path base = manifest_path.parent_path();
  if (m.at("kind") == "sweep") {
    for (const Json& p : m.at("points")) {
      CollectRuns(base / p.at("manifest").get<std::string>(), p.at("value").get<std::string>(), runs, config);
    }
    return;
  }
  if (config.is_null()) config = m.at("config");
  for (const Json& r : m.at("runs")) {
    runs.push_back({source, base / r.at("dir").get<std::string>(), r.at("seed").get<std::uint64_t>()});
  }
}

}  // namespace detail

// Reads the manifest's runs and writes long.csv plus SVG charts into
// `out_dir`. Without any metric rows only the CSV header is written.
inline PlotOutputs EmitPlots(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir) {
  std::vector<detail::RunRef> runs;
  Json config;
  const Json manifest = ReadJsonFile(manifest_path);
  detail::CollectRuns(manifest_path, manifest.value("name", "run"), runs, config);
  PlotOutputs out;
  out.long_csv = out_dir / "long.csv";
  std::ostringstream csv;
  csv << kLongHeader << "\n";
  const std::vector<std::string> metric_names = {"mta", "asr", "mean_cosine", "detection_rate", "margin"};

  std::vector<std::string> sources;
  std::map<std::string, std::pair<double, double>> final_sum;  // mta, asr
  std::map<std::string, int> final_n;
  std::map<std::string, std::pair<double, int>> scc_sum;
  std::map<std::string, Series> asr_curves;
  for (const detail::RunRef& r : runs) {
    const auto rows = ReadCsv(r.dir / "metrics.csv");
    if (rows.empty()) throw ConfigError((r.dir / "metrics.csv").string() + ": missing metrics");
    std::optional<double> last_mta, last_asr;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& row = rows[i];
      for (std::size_t k = 0; k < metric_names.size() && k + 1 < row.size(); ++k) {
        if (row[k + 1].empty()) continue;
        csv << r.source << "," << r.seed << "," << row[0] << "," << metric_names[k] << "," << row[k + 1] << "\n";
        ++out.long_rows;
      }
      if (row.size() > 2 && !row[1].empty()) last_mta = std::stod(row[1]), last_asr = std::stod(row[2]);
      if (row.size() > 2 && !row[2].empty()) {
        Series& s = asr_curves[r.source + " seed " + std::to_string(r.seed)];
        s.x.push_back(std::stod(row[0]));
        s.y.push_back(std::stod(row[2]));
      }
    }
    if (std::find(sources.begin(), sources.end(), r.source) == sources.end()) sources.push_back(r.source);
    if (last_mta) {
      final_sum[r.source].first += *last_mta;
      final_sum[r.source].second += *last_asr;
      ++final_n[r.source];
    }
    const Json summary = ReadJsonFile(r.dir / "summary.json");
    if (summary.contains("final_scc") && !summary["final_scc"].is_null()) {
      scc_sum[r.source].first += summary["final_scc"].get<double>();
      ++scc_sum[r.source].second;
    }
  }
  std::filesystem::create_directories(out_dir);
  if (out.long_rows == 0) {
    WriteTextFile(out.long_csv, csv.str());
    return out;
  }
  const double i_max = config["attack"]["i_max"].get<double>();
  const double lambda = config["attack"]["lambda"].get<double>();
  const int rounds = config["training"]["rounds"].get<int>();
  const Series intensity = IntensitySeries({i_max, lambda}, std::max(rounds, 30));
  for (std::size_t k = 0; k < intensity.x.size(); ++k) {
    csv << "schedule,0," << FormatNumber(intensity.x[k]) << ",intensity," << FormatNumber(intensity.y[k]) << "\n";
    ++out.long_rows;
  }
  WriteTextFile(out.long_csv, csv.str());

  auto write = [&](const std::string& name, const std::string& svg) {
    WriteTextFile(out_dir / name, svg);
    out.svgs.push_back(out_dir / name);
  };
  Series mta{"MTA", {}, {}}, asr{"ASR", {}, {}};
  std::vector<std::string> cats;
  for (const std::string& s : sources) {
    if (!final_n.count(s)) continue;
    cats.push_back(s);
    mta.y.push_back(final_sum[s].first / final_n[s]);
    asr.y.push_back(final_sum[s].second / final_n[s]);
  }
  if (!cats.empty()) write("asr_mta.svg", SvgBarChart("Final ASR and MTA", "rate", cats, {asr, mta}));
  std::vector<Series> curves;
  for (auto& [name, s] : asr_curves) curves.push_back(Series{name, s.x, s.y});
  write("asr_rounds.svg", SvgLineChart("ASR by round", "round", "ASR", curves));
  write("intensity.svg", SvgLineChart("Attack intensity schedule", "round", "I(t)", {intensity}));
  if (manifest.value("axis", "") == "dp_sigma") {
    const auto it = std::find_if(cats.begin(), cats.end(), [](const std::string& c) { return std::stod(c) == 0.0; });
    if (it != cats.end() && asr.y[static_cast<std::size_t>(it - cats.begin())] > 0.0) {
      const double ref = asr.y[static_cast<std::size_t>(it - cats.begin())];
      Series ret{"retention", {}, {}};
      for (std::size_t k = 0; k < cats.size(); ++k) {
        ret.x.push_back(std::stod(cats[k]));
        ret.y.push_back(asr.y[k] / ref);
      }
      write("retention.svg", SvgLineChart("ASR retention vs DP noise", "sigma", "retention", {ret}));
    }
  }
  Series pts{"scc_asr", {}, {}};
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < cats.size(); ++k) {
    auto it = scc_sum.find(cats[k]);
    if (it == scc_sum.end() || it->second.second == 0) continue;
    pts.x.push_back(it->second.first / it->second.second);
    pts.y.push_back(asr.y[k]);
    labels.push_back(cats[k]);
  }
  out.scatter_points = pts.x.size();
  if (!pts.x.empty()) write("scc_asr.svg", SvgScatter("SCC vs ASR", "SCC", "ASR", pts, labels));
  return out;
}

}  // namespace tfi

#endif  // TFI_PLOTS_HPP_
