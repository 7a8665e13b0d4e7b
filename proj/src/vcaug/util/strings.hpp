#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vcaug {

std::vector<std::string> SplitLines(std::string_view text);
std::vector<std::string> Split(std::string_view text, char sep);
// Splits on runs of spaces; empty input gives an empty vector.
std::vector<std::string> SplitWords(std::string_view text);
std::string Join(const std::vector<std::string>& parts, std::string_view sep);
std::string Trim(std::string_view s);

// Strict numeric parsing: the whole token must be consumed.
// `what` names the field in the thrown ValidationError.
double ParseDouble(std::string_view token, const std::string& what);
int64_t ParseInt(std::string_view token, const std::string& what);

// Shortest decimal text that parses back to exactly `v`.
std::string FormatDouble(double v);
// Fixed-point with `decimals` digits.
std::string FormatFixed(double v, int decimals);

std::string ReadFile(const std::string& path);
void WriteFile(const std::string& path, std::string_view contents);

}  // namespace vcaug
