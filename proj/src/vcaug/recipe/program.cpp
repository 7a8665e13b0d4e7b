#include "vcaug/recipe/program.hpp"

#include <cctype>
#include <cmath>
#include <map>

#include "vcaug/error.hpp"
#include "vcaug/util/strings.hpp"

namespace vcaug::recipe {

namespace {

bool IsWordChar(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-' ||
         c == '+';
}

bool IsIdentifier(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return s != "S";
}

bool IsLabel(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

struct Token {
  enum Kind { kWord, kSymbol, kEnd } kind;
  std::string text;
  int line;
  int column;
};

std::vector<Token> Tokenize(const std::string& line, int line_no) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
    } else if (c == '#') {
      break;
    } else if (c == '(' || c == ')' || c == ',' || c == '=' || c == '*') {
      out.push_back({Token::kSymbol, std::string(1, c), line_no, static_cast<int>(i) + 1});
      ++i;
    } else if (IsWordChar(c)) {
      const size_t start = i;
      while (i < line.size() && IsWordChar(line[i])) ++i;
      out.push_back({Token::kWord, line.substr(start, i - start), line_no, static_cast<int>(start) + 1});
    } else {
      throw ParseError(std::string("unexpected character '") + c + "'", line_no,
                       static_cast<int>(i) + 1);
    }
  }
  return out;
}

class LineParser {
 public:
  // `tokens` is one statement, possibly spanning several lines.
  explicit LineParser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {
    const int line = tokens_.empty() ? 0 : tokens_.back().line;
    const int column = tokens_.empty() ? 1 : tokens_.back().column + static_cast<int>(tokens_.back().text.size());
    tokens_.push_back({Token::kEnd, "", line, column});
  }

  Statement ParseStatement() {
    const Token name = ExpectWord("statement name");
    if (!IsIdentifier(name.text)) Fail("invalid statement name '" + name.text + "'", name);
    ExpectSymbol("=");
    const Token call = ExpectWord("VC, CONVERT, TTS or FT");
    ExpectSymbol("(");
    Statement st;
    if (call.text == "VC") {
      VcTrain s{name.text, {}};
      do s.datasets.push_back(ParseDataset());
      while (AcceptSymbol(","));
      st = std::move(s);
    } else if (call.text == "CONVERT") {
      Convert s;
      s.name = name.text;
      s.vc_name = ExpectWord("VC model name").text;
      ExpectSymbol(",");
      s.source = ParseDataset();
      ExpectSymbol(",");
      ExpectKeyword("target");
      ExpectSymbol("=");
      s.target = SpeakerId{ParseLabel("target speaker")};
      st = std::move(s);
    } else if (call.text == "TTS") {
      TtsTrain s;
      s.name = name.text;
      do {
        if (Peek().kind == Token::kWord && Peek().text == "multi_speaker") {
          Next();
          ExpectSymbol("=");
          const Token v = ExpectWord("true or false");
          if (v.text != "true" && v.text != "false") Fail("expected true or false", v);
          s.multi_speaker = v.text == "true";
          break;
        }
        s.items.push_back(ParseItem());
      } while (AcceptSymbol(","));
      if (s.items.empty()) Fail("TTS needs at least one dataset", Peek());
      st = std::move(s);
    } else if (call.text == "FT") {
      FineTune s;
      s.name = name.text;
      s.tts_name = ExpectWord("TTS model name").text;
      ExpectSymbol(",");
      s.dataset = ParseDataset();
      st = std::move(s);
    } else {
      Fail("unknown call '" + call.text + "', expected VC, CONVERT, TTS or FT", call);
    }
    ExpectSymbol(")");
    if (Peek().kind != Token::kEnd) Fail("unexpected '" + Peek().text + "' after statement", Peek());
    return st;
  }

 private:
  const Token& Peek() const { return tokens_[pos_]; }
  Token Next() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void Fail(const std::string& what, const Token& at) const {
    throw ParseError(what, at.line, at.column);
  }

  Token ExpectWord(const std::string& what) {
    if (Peek().kind != Token::kWord) {
      Fail("expected " + what + ", got " + (Peek().kind == Token::kEnd ? "end of line" : "'" + Peek().text + "'"), Peek());
    }
    return Next();
  }
  void ExpectSymbol(const std::string& s) {
    if (Peek().kind != Token::kSymbol || Peek().text != s) {
      Fail("expected '" + s + "', got " + (Peek().kind == Token::kEnd ? "end of line" : "'" + Peek().text + "'"), Peek());
    }
    Next();
  }
  bool AcceptSymbol(const std::string& s) {
    if (Peek().kind == Token::kSymbol && Peek().text == s) {
      Next();
      return true;
    }
    return false;
  }
  void ExpectKeyword(const std::string& k) {
    const Token t = ExpectWord("'" + k + "'");
    if (t.text != k) Fail("expected '" + k + "', got '" + t.text + "'", t);
  }
  std::string ParseLabel(const std::string& what) {
    const Token t = ExpectWord(what);
    if (!IsLabel(t.text)) Fail("invalid " + what + " '" + t.text + "'", t);
    return t.text;
  }

  bool AtDataset() const {
    const Token& t = Peek();
    if (t.kind != Token::kWord || t.text != "S") return false;
    const Token& n = tokens_[pos_ + 1];
    return n.kind == Token::kSymbol && (n.text == "(" || n.text == "*");
  }

  DatasetRef ParseDataset() {
    if (!AtDataset()) Fail("expected dataset S(speaker, style, hours)", Peek());
    Next();
    DatasetRef d;
    d.synthetic = AcceptSymbol("*");
    ExpectSymbol("(");
    d.speaker = SpeakerId{ParseLabel("speaker")};
    ExpectSymbol(",");
    d.style = StyleId{ParseLabel("style")};
    ExpectSymbol(",");
    const Token h = ExpectWord("hours (e.g. 20h, 30m, ALL)");
    if (h.text != "ALL") {
      const char unit = h.text.back();
      if (h.text.size() < 2 || (unit != 'h' && unit != 'm')) {
        Fail("hours must look like 20h, 0.5h, 30m or ALL, got '" + h.text + "'", h);
      }
      double v = 0.0;
      try {
        v = ParseDouble(std::string_view(h.text).substr(0, h.text.size() - 1), "hours");
      } catch (const ValidationError&) {
        Fail("invalid amount '" + h.text + "'", h);
      }
      if (!(v > 0.0) || !std::isfinite(v)) Fail("amount must be positive, got '" + h.text + "'", h);
      d.hours = unit == 'h' ? v : v / 60.0;
    }
    ExpectSymbol(")");
    return d;
  }

  TtsItem ParseItem() {
    if (AtDataset()) return ParseDataset();
    const Token t = ExpectWord("dataset or converted-data name");
    if (!IsIdentifier(t.text)) Fail("invalid name '" + t.text + "'", t);
    return t.text;
  }

  std::vector<Token> tokens_;
  size_t pos_ = 0;
};

// Semantic checks shared by the parser and ValidateProgram.
class Checker {
 public:
  void Add(const Statement& st, int line) {
    line_ = line;
    const std::string& name = StatementName(st);
    if (!IsIdentifier(name)) Fail("invalid statement name '" + name + "'");
    if (kinds_.count(name)) Fail("name '" + name + "' is already defined");
    std::visit([&](const auto& s) { Check(s); }, st);
    kinds_[name] = st.index();
  }

 private:
  [[noreturn]] void Fail(const std::string& what) const {
    throw ValidationError(line_ > 0 ? "line " + std::to_string(line_) + ": " + what : what);
  }

  void CheckDataset(const DatasetRef& d) const {
    if (!IsLabel(d.speaker.value) || !IsLabel(d.style.value)) {
      Fail("invalid speaker or style in " + d.ToString());
    }
    if (d.hours && !(*d.hours > 0.0 && std::isfinite(*d.hours))) {
      Fail("dataset amount must be positive in " + d.ToString());
    }
  }

  void Require(const std::string& ref, size_t kind, const std::string& kind_name) const {
    auto it = kinds_.find(ref);
    if (it == kinds_.end()) Fail("undefined name '" + ref + "'");
    if (it->second != kind) Fail("'" + ref + "' is not a " + kind_name + " statement");
  }

  void Check(const VcTrain& s) const {
    if (s.datasets.empty()) Fail("VC needs at least one dataset");
    for (const auto& d : s.datasets) CheckDataset(d);
  }
  void Check(const Convert& s) const {
    Require(s.vc_name, 0, "VC");
    CheckDataset(s.source);
    if (!IsLabel(s.target.value)) Fail("invalid target speaker '" + s.target.value + "'");
  }
  void Check(const TtsTrain& s) const {
    if (s.items.empty()) Fail("TTS needs at least one dataset");
    for (const auto& item : s.items) {
      if (const auto* d = std::get_if<DatasetRef>(&item)) {
        CheckDataset(*d);
      } else {
        Require(std::get<std::string>(item), 1, "CONVERT");
      }
    }
  }
  void Check(const FineTune& s) const {
    Require(s.tts_name, 2, "TTS");
    CheckDataset(s.dataset);
    if (s.dataset.synthetic) {
      Fail("fine-tuning must use non-synthetic data, got " + s.dataset.ToString());
    }
  }

  std::map<std::string, size_t> kinds_;
  int line_ = 0;
};

std::string FormatHours(const std::optional<double>& hours) {
  return hours ? FormatDouble(*hours) + "h" : "ALL";
}

void ExpandInto(const std::vector<SourceLine>& lines, size_t begin, size_t end,
                std::vector<SourceLine>* out);

// Parses "for VAR in A..B {" and returns the rest of the line after '{'.
bool ParseForHeader(const std::string& text, int line_no, std::string* var, int64_t* lo,
                    int64_t* hi, std::string* rest) {
  const std::string t = Trim(text);
  if (t.rfind("for ", 0) != 0) return false;
  const size_t brace = t.find('{');
  if (brace == std::string::npos) throw ParseError("expected '{' after for header", line_no);
  const auto words = SplitWords(t.substr(0, brace));
  if (words.size() != 4 || words[2] != "in") {
    throw ParseError("expected 'for <var> in <a>..<b> {'", line_no);
  }
  *var = words[1];
  const size_t dots = words[3].find("..");
  if (dots == std::string::npos) throw ParseError("expected range <a>..<b>", line_no);
  try {
    *lo = ParseInt(words[3].substr(0, dots), "range start");
    *hi = ParseInt(words[3].substr(dots + 2), "range end");
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), line_no);
  }
  if (*hi < *lo) throw ParseError("empty range " + words[3], line_no);
  if (*hi - *lo > 10000) throw ParseError("range too large", line_no);
  *rest = t.substr(brace + 1);
  return true;
}

std::string Substitute(const std::string& text, const std::string& var, int64_t value) {
  const std::string key = "{" + var + "}";
  std::string out;
  size_t i = 0;
  while (true) {
    const size_t at = text.find(key, i);
    if (at == std::string::npos) break;
    out += text.substr(i, at - i) + std::to_string(value);
    i = at + key.size();
  }
  return out + text.substr(i);
}

void ExpandInto(const std::vector<SourceLine>& lines, size_t begin, size_t end,
                std::vector<SourceLine>* out) {
  for (size_t i = begin; i < end; ++i) {
    std::string var, rest;
    int64_t lo = 0, hi = 0;
    if (!ParseForHeader(lines[i].text, lines[i].line, &var, &lo, &hi, &rest)) {
      if (Trim(lines[i].text) == "}") throw ParseError("unmatched '}'", lines[i].line);
      out->push_back(lines[i]);
      continue;
    }
    std::vector<SourceLine> body;
    const std::string tail = Trim(rest);
    if (!tail.empty() && tail.back() == '}') {
      // Single-line form: for i in 1..8 { stmt }
      body.push_back({tail.substr(0, tail.size() - 1), lines[i].line});
    } else {
      if (!tail.empty()) body.push_back({tail, lines[i].line});
      int depth = 1;
      size_t j = i + 1;
      for (; j < end; ++j) {
        const std::string t = Trim(lines[j].text);
        std::string v2, r2;
        int64_t a = 0, b = 0;
        if (ParseForHeader(lines[j].text, lines[j].line, &v2, &a, &b, &r2)) {
          const std::string tt = Trim(r2);
          if (tt.empty() || tt.back() != '}') ++depth;
        } else if (t == "}") {
          if (--depth == 0) break;
        }
        body.push_back(lines[j]);
      }
      if (j == end) throw ParseError("unterminated for block", lines[i].line);
      i = j;
    }
    std::vector<SourceLine> expanded_body;
    ExpandInto(body, 0, body.size(), &expanded_body);
    for (int64_t v = lo; v <= hi; ++v) {
      for (const auto& b : expanded_body) out->push_back({Substitute(b.text, var, v), b.line});
    }
  }
}

}  // namespace

std::string DatasetRef::ToString() const {
  return std::string(synthetic ? "S*(" : "S(") + speaker.value + "," + style.value + "," +
         FormatHours(hours) + ")";
}

DatasetRef Convert::out() const { return {true, target, source.style, source.hours}; }

const std::string& StatementName(const Statement& s) {
  return std::visit([](const auto& v) -> const std::string& { return v.name; }, s);
}

std::vector<SourceLine> ExpandMacros(const std::string& text) {
  std::vector<SourceLine> lines;
  int n = 0;
  for (auto& l : SplitLines(text)) {
    ++n;
    const size_t hash = l.find('#');
    lines.push_back({hash == std::string::npos ? l : l.substr(0, hash), n});
  }
  std::vector<SourceLine> out;
  ExpandInto(lines, 0, lines.size(), &out);
  return out;
}

Program ParseRecipe(const std::string& text) {
  Program p;
  Checker checker;
  // A statement ends at the end of a line with no open parenthesis.
  std::vector<Token> pending;
  int depth = 0;
  auto flush = [&] {
    if (pending.empty()) return;
    const int first_line = pending.front().line;
    LineParser parser(std::move(pending));
    pending.clear();
    Statement st = parser.ParseStatement();
    checker.Add(st, first_line);
    p.statements.push_back(std::move(st));
  };
  for (const auto& line : ExpandMacros(text)) {
    for (auto& t : Tokenize(line.text, line.line)) {
      if (t.kind == Token::kSymbol && t.text == "(") ++depth;
      if (t.kind == Token::kSymbol && t.text == ")") --depth;
      pending.push_back(std::move(t));
    }
    if (depth <= 0) {
      depth = 0;
      flush();
    }
  }
  if (depth > 0) throw ParseError("unclosed '(' at end of recipe", pending.front().line, pending.front().column);
  return p;
}

Program LoadRecipe(const std::string& path) {
  try {
    return ParseRecipe(ReadFile(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.message(), e.line(), e.column());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void ValidateProgram(const Program& p) {
  Checker checker;
  for (const auto& st : p.statements) checker.Add(st, 0);
}

std::string FormatRecipe(const Program& p) {
  std::string out;
  for (const auto& st : p.statements) {
    std::string line = StatementName(st) + " = ";
    if (const auto* s = std::get_if<VcTrain>(&st)) {
      std::vector<std::string> parts;
      for (const auto& d : s->datasets) parts.push_back(d.ToString());
      line += "VC(" + Join(parts, ", ") + ")";
    } else if (const auto* s = std::get_if<Convert>(&st)) {
      line += "CONVERT(" + s->vc_name + ", " + s->source.ToString() + ", target=" +
              s->target.value + ")";
    } else if (const auto* s = std::get_if<TtsTrain>(&st)) {
      std::vector<std::string> parts;
      for (const auto& item : s->items) {
        if (const auto* d = std::get_if<DatasetRef>(&item)) parts.push_back(d->ToString());
        else parts.push_back(std::get<std::string>(item));
      }
      if (s->multi_speaker) parts.push_back("multi_speaker=true");
      line += "TTS(" + Join(parts, ", ") + ")";
    } else if (const auto* s = std::get_if<FineTune>(&st)) {
      line += "FT(" + s->tts_name + ", " + s->dataset.ToString() + ")";
    }
    out += line + "\n";
  }
  return out;
}

}  // namespace vcaug::recipe
