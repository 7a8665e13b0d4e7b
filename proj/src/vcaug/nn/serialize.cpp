#include "vcaug/nn/serialize.hpp"

#include <bit>
#include <cstring>

#include "vcaug/error.hpp"
#include "vcaug/util/strings.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint and mel I/O assume a little-endian host");

namespace vcaug {

namespace {
constexpr std::string_view kMagic = "VCAUGCKP";
}

void BinaryWriter::U32(uint32_t v) { buf_.append(reinterpret_cast<const char*>(&v), 4); }
void BinaryWriter::U64(uint64_t v) { buf_.append(reinterpret_cast<const char*>(&v), 8); }
void BinaryWriter::F64(double v) { buf_.append(reinterpret_cast<const char*>(&v), 8); }

void BinaryWriter::Str(std::string_view s) {
  U32(static_cast<uint32_t>(s.size()));
  buf_.append(s);
}

void BinaryWriter::Mat(const nn::Matrix& m) {
  U32(static_cast<uint32_t>(m.rows()));
  U32(static_cast<uint32_t>(m.cols()));
  buf_.append(reinterpret_cast<const char*>(m.data()),
              static_cast<size_t>(m.size()) * sizeof(double));
}

void BinaryReader::Need(size_t n) const {
  if (pos_ + n > buf_.size()) throw ValidationError("checkpoint truncated");
}

uint32_t BinaryReader::U32() {
  Need(4);
  uint32_t v;
  std::memcpy(&v, buf_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

uint64_t BinaryReader::U64() {
  Need(8);
  uint64_t v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

double BinaryReader::F64() {
  Need(8);
  double v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::string BinaryReader::Str() {
  const uint32_t n = U32();
  return Raw(n);
}

std::string BinaryReader::Raw(size_t n) {
  Need(n);
  std::string s = buf_.substr(pos_, n);
  pos_ += n;
  return s;
}

nn::Matrix BinaryReader::Mat() {
  const uint32_t rows = U32();
  const uint32_t cols = U32();
  const size_t bytes = static_cast<size_t>(rows) * cols * sizeof(double);
  Need(bytes);
  nn::Matrix m(rows, cols);
  std::memcpy(m.data(), buf_.data() + pos_, bytes);
  pos_ += bytes;
  return m;
}

void WriteCheckpoint(const std::string& path, const CheckpointHeader& header,
                     const BinaryWriter& payload) {
  BinaryWriter w;
  w.Raw(kMagic);
  w.U32(kCheckpointFormatVersion);
  w.Str(header.kind);
  w.U32(header.kind_version);
  w.U64(header.config_hash);
  w.Raw(payload.bytes());
  WriteFile(path, w.bytes());
}

BinaryReader ReadCheckpoint(const std::string& path, const std::string& expected_kind,
                            uint32_t expected_kind_version, CheckpointHeader* header) {
  BinaryReader r(ReadFile(path));
  if (r.Raw(kMagic.size()) != kMagic) {
    throw ValidationError(path + ": not a checkpoint file");
  }
  const uint32_t fmt = r.U32();
  if (fmt != kCheckpointFormatVersion) {
    throw ValidationError(path + ": unsupported checkpoint format version " +
                          std::to_string(fmt));
  }
  CheckpointHeader h;
  h.kind = r.Str();
  h.kind_version = r.U32();
  h.config_hash = r.U64();
  if (h.kind != expected_kind) {
    throw ValidationError(path + ": checkpoint holds '" + h.kind + "', expected '" +
                          expected_kind + "'");
  }
  if (h.kind_version != expected_kind_version) {
    throw ValidationError(path + ": unsupported " + h.kind + " version " +
                          std::to_string(h.kind_version));
  }
  if (header) *header = h;
  return r;
}

}  // namespace vcaug
