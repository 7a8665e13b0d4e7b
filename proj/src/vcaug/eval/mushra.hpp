#pragma once

#include <string>
#include <vector>

#include "vcaug/eval/stats.hpp"

namespace vcaug::eval {

enum class Metric { kSignalQuality, kStyleAdequacy, kNaturalness, kSpeakerSimilarity };

// "signal_quality", "style_adequacy", "naturalness", "speaker_similarity".
std::string MetricName(Metric m);
Metric ParseMetric(const std::string& name);  // ValidationError when unknown

struct MushraResponse {
  std::string listener_id;
  std::string screen_id;
  std::string system;
  Metric metric = Metric::kSignalQuality;
  int score = 0;
};

// Row recording name excluded from the best-system flag.
inline constexpr const char* kRecordingsSystem = "Recs";

// "#mushra v1" then listener, screen, system, metric, score per line (tabs).
// Range and duplicate-key violations raise ValidationError with the line.
std::vector<MushraResponse> ParseResponses(const std::string& text);
std::vector<MushraResponse> LoadResponses(const std::string& path);
std::string FormatResponses(const std::vector<MushraResponse>& responses);

struct SystemStats {
  std::string system;
  size_t n = 0;
  double mean = 0.0;
  double ci95_halfwidth = 0.0;
};

SystemStats Aggregate(const std::vector<MushraResponse>& responses, const std::string& system,
                      Metric metric);

// Scores of two systems for one metric, paired by (listener, screen).
// Unmatched records raise PairingError.
void PairScores(const std::vector<MushraResponse>& responses, const std::string& a,
                const std::string& b, Metric metric, std::vector<double>* a_scores,
                std::vector<double>* b_scores);

// One row per system, one column per metric.
struct EvalTable {
  std::vector<std::string> systems;
  std::vector<Metric> metrics;
  std::vector<std::vector<SystemStats>> cells;   // [system][metric]
  std::vector<std::vector<bool>> best;           // bold
  std::vector<std::vector<bool>> significant;    // underline, treatment row only
  std::vector<TTest> tests;                      // per metric, treatment vs baseline
  std::string baseline;
  std::string treatment;
  double alpha = 0.05;
};

// The Holm family is the set of baseline-vs-treatment tests in this table,
// one per metric.
EvalTable BuildTable(const std::vector<MushraResponse>& responses,
                     const std::vector<std::string>& systems, const std::vector<Metric>& metrics,
                     const std::string& baseline, const std::string& treatment,
                     double alpha = 0.05);

// "69.9±1.1"
std::string FormatCell(const SystemStats& s);
// Aligned plain text; best as *x*, significant as _x_.
std::string RenderText(const EvalTable& table);
// system, metric, n, mean, ci95_halfwidth, cell, best, significant, t, p.
std::string RenderTsv(const EvalTable& table);

}  // namespace vcaug::eval
