#include "vcaug/eval/mushra.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <tuple>

#include "vcaug/error.hpp"
#include "vcaug/util/strings.hpp"

namespace vcaug::eval {

namespace {
constexpr const char* kHeader = "#mushra v1";

struct MetricInfo {
  Metric metric;
  const char* name;
};
constexpr MetricInfo kMetrics[] = {
    {Metric::kSignalQuality, "signal_quality"},
    {Metric::kStyleAdequacy, "style_adequacy"},
    {Metric::kNaturalness, "naturalness"},
    {Metric::kSpeakerSimilarity, "speaker_similarity"},
};

// Display width in code points, so "±" counts once.
size_t Width(const std::string& s) {
  size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string Pad(const std::string& s, size_t width) {
  return s + std::string(width > Width(s) ? width - Width(s) : 0, ' ');
}
}  // namespace

std::string MetricName(Metric m) {
  for (const auto& info : kMetrics) {
    if (info.metric == m) return info.name;
  }
  throw ContractError("unknown metric");
}

Metric ParseMetric(const std::string& name) {
  for (const auto& info : kMetrics) {
    if (name == info.name) return info.metric;
  }
  throw ValidationError("unknown metric '" + name + "'");
}

std::vector<MushraResponse> ParseResponses(const std::string& text) {
  const auto lines = SplitLines(text);
  if (lines.empty() || Trim(lines[0]) != kHeader) {
    throw ParseError("expected header '" + std::string(kHeader) + "'", 1);
  }
  std::vector<MushraResponse> out;
  std::set<std::tuple<std::string, std::string, std::string, Metric>> seen;
  for (size_t i = 1; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i + 1);
    const std::string line = Trim(lines[i]);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = Split(line, '\t');
    if (fields.size() != 5) {
      throw ParseError("expected 5 tab-separated fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    MushraResponse r;
    r.listener_id = fields[0];
    r.screen_id = fields[1];
    r.system = fields[2];
    try {
      r.metric = ParseMetric(fields[3]);
      const int64_t score = ParseInt(fields[4], "score");
      if (score < 0 || score > 100) {
        throw ValidationError("score " + std::to_string(score) + " outside [0, 100]");
      }
      r.score = static_cast<int>(score);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (r.listener_id.empty() || r.screen_id.empty() || r.system.empty()) {
      throw ValidationError("line " + std::to_string(line_no) + ": empty identifier");
    }
    if (!seen.emplace(r.listener_id, r.screen_id, r.system, r.metric).second) {
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate response for (" +
                            r.listener_id + ", " + r.screen_id + ", " + r.system + ", " +
                            fields[3] + ")");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<MushraResponse> LoadResponses(const std::string& path) {
  try {
    return ParseResponses(ReadFile(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line(), e.column());
  }
}

std::string FormatResponses(const std::vector<MushraResponse>& responses) {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : responses) {
    out += r.listener_id + "\t" + r.screen_id + "\t" + r.system + "\t" + MetricName(r.metric) +
           "\t" + std::to_string(r.score) + "\n";
  }
  return out;
}

SystemStats Aggregate(const std::vector<MushraResponse>& responses, const std::string& system,
                      Metric metric) {
  std::vector<double> scores;
  for (const auto& r : responses) {
    if (r.system == system && r.metric == metric) scores.push_back(r.score);
  }
  if (scores.empty()) {
    throw SelectionError("no responses for system '" + system + "' and metric " +
                         MetricName(metric));
  }
  const MeanCi m = MeanWithCi(scores);
  return {system, m.n, m.mean, m.ci95_halfwidth};
}

void PairScores(const std::vector<MushraResponse>& responses, const std::string& a,
                const std::string& b, Metric metric, std::vector<double>* a_scores,
                std::vector<double>* b_scores) {
  std::map<std::pair<std::string, std::string>, int> sa, sb;
  for (const auto& r : responses) {
    if (r.metric != metric) continue;
    if (r.system == a) sa[{r.listener_id, r.screen_id}] = r.score;
    if (r.system == b) sb[{r.listener_id, r.screen_id}] = r.score;
  }
  a_scores->clear();
  b_scores->clear();
  for (const auto& [key, score] : sa) {
    auto it = sb.find(key);
    if (it == sb.end()) {
      throw PairingError("no '" + b + "' score to pair with listener " + key.first + ", screen " +
                         key.second);
    }
    a_scores->push_back(score);
    b_scores->push_back(it->second);
  }
  if (sb.size() != sa.size()) {
    throw PairingError("'" + b + "' has scores with no matching '" + a + "' score");
  }
}

EvalTable BuildTable(const std::vector<MushraResponse>& responses,
                     const std::vector<std::string>& systems, const std::vector<Metric>& metrics,
                     const std::string& baseline, const std::string& treatment, double alpha) {
  auto index_of = [&](const std::string& s) {
    auto it = std::find(systems.begin(), systems.end(), s);
    if (it == systems.end()) throw SelectionError("system '" + s + "' is not in the table");
    return static_cast<size_t>(it - systems.begin());
  };
  const size_t base_row = index_of(baseline);
  const size_t treat_row = index_of(treatment);
  if (base_row == treat_row) throw ContractError("baseline and treatment must differ");

  EvalTable t;
  t.systems = systems;
  t.metrics = metrics;
  t.baseline = baseline;
  t.treatment = treatment;
  t.alpha = alpha;
  t.cells.assign(systems.size(), {});
  t.best.assign(systems.size(), std::vector<bool>(metrics.size(), false));
  t.significant.assign(systems.size(), std::vector<bool>(metrics.size(), false));
  for (size_t s = 0; s < systems.size(); ++s) {
    for (Metric m : metrics) t.cells[s].push_back(Aggregate(responses, systems[s], m));
  }
  std::vector<double> pvals;
  for (size_t j = 0; j < metrics.size(); ++j) {
    std::optional<size_t> best;
    for (size_t s = 0; s < systems.size(); ++s) {
      if (systems[s] == kRecordingsSystem) continue;
      if (!best || t.cells[s][j].mean > t.cells[*best][j].mean) best = s;
    }
    if (best) t.best[*best][j] = true;
    std::vector<double> a, b;
    PairScores(responses, treatment, baseline, metrics[j], &a, &b);
    t.tests.push_back(PairedTTest(a, b));
    pvals.push_back(t.tests.back().p);
  }
  const auto reject = HolmBonferroni(pvals, alpha);
  for (size_t j = 0; j < metrics.size(); ++j) t.significant[treat_row][j] = reject[j];
  return t;
}

std::string FormatCell(const SystemStats& s) {
  return FormatFixed(s.mean, 1) + "\xC2\xB1" + FormatFixed(s.ci95_halfwidth, 1);
}

std::string RenderText(const EvalTable& table) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {"system"};
  for (Metric m : table.metrics) header.push_back(MetricName(m));
  grid.push_back(header);
  for (size_t s = 0; s < table.systems.size(); ++s) {
    std::vector<std::string> row = {table.systems[s]};
    for (size_t j = 0; j < table.metrics.size(); ++j) {
      std::string cell = FormatCell(table.cells[s][j]);
      if (table.significant[s][j]) cell = "_" + cell + "_";
      if (table.best[s][j]) cell = "*" + cell + "*";
      row.push_back(cell);
    }
    grid.push_back(row);
  }
  std::vector<size_t> widths(header.size(), 0);
  for (const auto& row : grid) {
    for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], Width(row[c]));
  }
  std::string out;
  for (const auto& row : grid) {
    std::string line;
    for (size_t c = 0; c < row.size(); ++c) {
      line += c + 1 < row.size() ? Pad(row[c], widths[c] + 2) : row[c];
    }
    out += line + "\n";
  }
  out += "baseline: " + table.baseline + ", treatment: " + table.treatment +
         ", Holm-Bonferroni alpha " + FormatDouble(table.alpha) + "\n";
  out += "*x* best mean per metric (excluding " + std::string(kRecordingsSystem) +
         "), _x_ significant difference from baseline\n";
  return out;
}

std::string RenderTsv(const EvalTable& table) {
  std::string out = "system\tmetric\tn\tmean\tci95_halfwidth\tcell\tbest\tsignificant\tt\tp\n";
  for (size_t s = 0; s < table.systems.size(); ++s) {
    for (size_t j = 0; j < table.metrics.size(); ++j) {
      const SystemStats& c = table.cells[s][j];
      std::string t = "", p = "";
      if (table.systems[s] == table.treatment) {
        t = FormatDouble(table.tests[j].t);
        p = FormatDouble(table.tests[j].p);
      }
      out += c.system + "\t" + MetricName(table.metrics[j]) + "\t" + std::to_string(c.n) + "\t" +
             FormatDouble(c.mean) + "\t" + FormatDouble(c.ci95_halfwidth) + "\t" + FormatCell(c) +
             "\t" + (table.best[s][j] ? "1" : "0") + "\t" + (table.significant[s][j] ? "1" : "0") +
             "\t" + t + "\t" + p + "\n";
    }
  }
  return out;
}

}  // namespace vcaug::eval
