#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vcaug/corpus/corpus.hpp"

namespace vcaug::recipe {

using corpus::SpeakerId;
using corpus::StyleId;

// S(i,j,k) or S*(i,j,k). `hours` empty means ALL.
struct DatasetRef {
  bool synthetic = false;
  SpeakerId speaker;
  StyleId style;
  std::optional<double> hours;

  bool operator==(const DatasetRef&) const = default;
  // "S(1,news,0.5h)", "S*(1,news,7h)", "S(9,conv,ALL)"
  std::string ToString() const;
};

struct VcTrain {
  std::string name;
  std::vector<DatasetRef> datasets;
  bool operator==(const VcTrain&) const = default;
};

// The output dataset is S*(target, source style, source hours).
struct Convert {
  std::string name;
  std::string vc_name;
  DatasetRef source;
  SpeakerId target;
  bool operator==(const Convert&) const = default;
  DatasetRef out() const;
};

// A TTS input: a dataset reference or the name of a CONVERT statement.
using TtsItem = std::variant<DatasetRef, std::string>;

struct TtsTrain {
  std::string name;
  std::vector<TtsItem> items;
  bool multi_speaker = false;
  bool operator==(const TtsTrain&) const = default;
};

struct FineTune {
  std::string name;
  std::string tts_name;
  DatasetRef dataset;
  bool operator==(const FineTune&) const = default;
};

using Statement = std::variant<VcTrain, Convert, TtsTrain, FineTune>;

const std::string& StatementName(const Statement& s);

struct Program {
  std::vector<Statement> statements;
  bool operator==(const Program&) const = default;
};

// Expands "for i in A..B { ... }" blocks, substituting "{i}". Each output
// line keeps the 1-based number of the line it came from.
struct SourceLine {
  std::string text;
  int line = 0;
};
std::vector<SourceLine> ExpandMacros(const std::string& text);

// Grammar, one statement per line (a statement continues onto the next
// line while a parenthesis is open), '#' starts a comment:
//   name = VC(dataset, ...)
//   name = CONVERT(vc_name, dataset, target=speaker)
//   name = TTS(item, ..., [multi_speaker=true|false])
//   name = FT(tts_name, dataset)
//   dataset := S["*"](speaker, style, hours) ; hours := <num>h | <num>m | ALL
// Syntax errors raise ParseError (line, column); semantic errors raise
// ValidationError prefixed with the line.
Program ParseRecipe(const std::string& text);
Program LoadRecipe(const std::string& path);

std::string FormatRecipe(const Program& p);

// Re-runs the semantic checks on an in-memory program.
void ValidateProgram(const Program& p);

}  // namespace vcaug::recipe
