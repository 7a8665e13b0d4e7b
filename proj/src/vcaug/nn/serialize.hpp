#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vcaug/nn/autograd.hpp"

namespace vcaug {

// Little-endian binary encoding used by checkpoint files.
class BinaryWriter {
 public:
  void U32(uint32_t v);
  void U64(uint64_t v);
  void F64(double v);
  void Str(std::string_view s);
  void Mat(const nn::Matrix& m);
  void Raw(std::string_view bytes) { buf_.append(bytes); }

  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string bytes) : buf_(std::move(bytes)) {}

  uint32_t U32();
  uint64_t U64();
  double F64();
  std::string Str();
  nn::Matrix Mat();
  std::string Raw(size_t n);
  bool AtEnd() const { return pos_ == buf_.size(); }

 private:
  void Need(size_t n) const;
  std::string buf_;
  size_t pos_ = 0;
};

// Checkpoint container:
//   magic "VCAUGCKP" | u32 format version | str kind | u32 kind version |
//   u64 config hash | payload
struct CheckpointHeader {
  std::string kind;
  uint32_t kind_version = 1;
  uint64_t config_hash = 0;
};

inline constexpr uint32_t kCheckpointFormatVersion = 1;

void WriteCheckpoint(const std::string& path, const CheckpointHeader& header,
                     const BinaryWriter& payload);
// Validates magic, format version, kind, and kind version.
BinaryReader ReadCheckpoint(const std::string& path, const std::string& expected_kind,
                            uint32_t expected_kind_version, CheckpointHeader* header);

}  // namespace vcaug
