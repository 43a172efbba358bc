// Copyright 2026 The Capture Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "capture/experiment.hpp"

namespace capture {
namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<fs::path> find_summaries(const std::string& root) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) return out;
  if (fs::is_regular_file(root)) return {fs::path(root)};
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() == "summary.json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Arm name -> metric block.
std::map<std::string, Json> arms_by_name(const Json& summary) {
  std::map<std::string, Json> out;
  for (const auto& a : summary.at("arms")) out[a.at("name").get<std::string>()] = a.at("metrics");
  return out;
}

double stat(const Json& metrics, const std::string& metric, const char* which) {
  return metrics.at(metric).at(which).get<double>();
}

}  // namespace

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::vector<double>& errors) {
  const int bar = 48, gap = 24, left = 60, top = 40, height = 220;
  const int width = left + static_cast<int>(labels.size()) * (bar + gap) + gap;
  double vmax = 0.0;
  for (size_t i = 0; i < values.size(); ++i)
    vmax = std::max(vmax, values[i] + (i < errors.size() ? errors[i] : 0.0));
  vmax = vmax > 0.0 ? vmax * 1.1 : 1.0;
  auto y = [&](double v) { return top + height - static_cast<int>(v / vmax * height); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << top + height + 90 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + height << "\" x2=\"" << width << "\" y2=\""
     << top + height << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = vmax * t / 4.0;
    os << "<text x=\"4\" y=\"" << y(v) + 4 << "\">" << fixed(v, 3) << "</text>\n";
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    const int x = left + gap + static_cast<int>(i) * (bar + gap);
    const double v = values[i];
    os << "<rect x=\"" << x << "\" y=\"" << y(v) << "\" width=\"" << bar << "\" height=\""
       << top + height - y(v) << "\" fill=\"#4c72b0\"/>\n";
    if (i < errors.size() && errors[i] > 0.0) {
      const int cx = x + bar / 2;
      os << "<line x1=\"" << cx << "\" y1=\"" << y(v + errors[i]) << "\" x2=\"" << cx
         << "\" y2=\"" << y(std::max(0.0, v - errors[i])) << "\" stroke=\"black\"/>\n";
    }
    os << "<text x=\"" << x << "\" y=\"" << y(v) - 4 << "\">" << fixed(v, 3) << "</text>\n";
    os << "<text transform=\"translate(" << x + bar / 2 << "," << top + height + 12
       << ") rotate(35)\">" << xml_escape(labels[i]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<std::string> write_report(const std::string& root) {
  std::vector<std::string> written;
  const auto summaries = find_summaries(root);
  if (summaries.empty()) throw InputError("no summary.json under " + root);
  const fs::path base = fs::is_directory(root) ? fs::path(root) : fs::path(root).parent_path();
  std::ostringstream md;
  md << "# Retrieval report\n\n";
  for (const auto& path : summaries) {
    Json summary;
    try {
      std::ifstream is(path);
      summary = Json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    const auto cutoffs = summary.at("cutoffs").get<std::vector<int>>();
    md << "## " << summary.at("experiment").get<std::string>() << "\n\n";
    md << "seeds: " << summary.at("seeds").dump() << "; mean ± std over seeds\n\n| arm |";
    for (int n : cutoffs) md << " mAP@" << n << " | mAR@" << n << " | Prec@" << n << " |";
    md << "\n|---|";
    for (size_t k = 0; k < cutoffs.size() * 3; ++k) md << "---|";
    md << '\n';

    std::vector<std::string> labels;
    std::vector<double> values, errors;
    const std::string headline = "mAP@" + std::to_string(cutoffs.front());
    for (const auto& a : summary.at("arms")) {
      const auto& m = a.at("metrics");
      md << "| " << a.at("name").get<std::string>() << " |";
      for (int n : cutoffs) {
        for (const char* kind : {"mAP@", "mAR@", "Prec@"}) {
          const std::string key = kind + std::to_string(n);
          md << ' ' << fixed(stat(m, key, "mean")) << " ± " << fixed(stat(m, key, "std")) << " |";
        }
      }
      md << '\n';
      labels.push_back(a.at("name").get<std::string>());
      values.push_back(stat(m, headline, "mean"));
      errors.push_back(stat(m, headline, "std"));
    }
    const fs::path svg = path.parent_path() / "chart.svg";
    std::ofstream os(svg);
    if (!os) throw FormatError("cannot write " + svg.string());
    os << bar_chart_svg(summary.at("experiment").get<std::string>() + ": " + headline, labels,
                        values, errors);
    written.push_back(svg.string());
    md << "\n![" << headline << "](" << fs::relative(svg, base).string() << ")\n\n";
  }
  const fs::path report = base / "report.md";
  std::ofstream os(report);
  if (!os) throw FormatError("cannot write " + report.string());
  os << md.str();
  written.push_back(report.string());
  return written;
}

std::vector<CheckResult> check_summaries(const std::string& root) {
  std::vector<CheckResult> out;
  for (const auto& path : find_summaries(root)) {
    Json summary;
    try {
      std::ifstream is(path);
      summary = Json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    const auto arms = arms_by_name(summary);
    const std::string exp = summary.at("experiment").get<std::string>();
    auto has = [&](std::initializer_list<const char*> names) {
      for (const char* n : names)
        if (!arms.count(n)) return false;
      return true;
    };
    auto med = [&](const char* arm, const std::string& metric) {
      return stat(arms.at(arm), metric, "median");
    };
    const std::string map10 = "mAP@10";
    const bool has10 = !arms.empty() && arms.begin()->second.contains(map10);

    if (has({"capture", "random_init", "image_only", "text_only"}) && has10) {
      const double c = med("capture", map10);
      for (const char* other : {"random_init", "image_only", "text_only"}) {
        const double o = med(other, map10);
        out.push_back({exp + ": capture vs " + other, c - o >= 0.10, true,
                       "median mAP@10 " + fixed(c) + " vs " + fixed(o) + " (need +0.10)"});
      }
    }
    if (has({"oracle", "jitter", "whole_image"}) && has10) {
      const double a = med("oracle", map10), b = med("jitter", map10), c = med("whole_image", map10);
      out.push_back({exp + ": oracle > jitter > whole_image", a > b && b > c, true,
                     "median mAP@10 " + fixed(a) + " / " + fixed(b) + " / " + fixed(c)});
    }
    if (has({"1_masked", "2_masked_concat", "3_masked_itm", "4_masked_ctr", "5_masked_ctr_concat"}) &&
        has10) {
      out.push_back({exp + ": five pretext arms reported", true, true, "all arms present"});
      const double ctr = stat(arms.at("4_masked_ctr"), map10, "mean");
      const double masked = stat(arms.at("1_masked"), map10, "mean");
      const double itm = stat(arms.at("3_masked_itm"), map10, "mean");
      out.push_back({exp + ": ctr >= masked >= itm", ctr >= masked && masked >= itm, false,
                     "mean mAP@10 " + fixed(ctr) + " / " + fixed(masked) + " / " + fixed(itm)});
    }
    for (const char* zs : {"category_holdout", "brand_holdout"}) {
      if (!arms.count(zs) || !arms.at(zs).contains("Prec@10")) continue;
      const double p = med(zs, "Prec@10");
      const double chance = stat(arms.at(zs), "chance_precision", "median");
      out.push_back({exp + ": " + zs + " Prec@10 >= 3x chance", p >= 3.0 * chance, true,
                     "median Prec@10 " + fixed(p) + " vs chance " + fixed(chance)});
    }
  }
  return out;
}

}  // namespace capture
