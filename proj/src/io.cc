/*
 * Copyright 2026 The OpenTTA Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "opentta/io.h"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>

namespace opentta {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'C', 'S'};
constexpr char kVerdictMagic[4] = {'P', 'D', 'C', 'V'};

void PutU32(unsigned char* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

void PutU64(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

std::uint32_t GetU32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t GetU64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void PutF32(unsigned char* p, float f) { PutU32(p, std::bit_cast<std::uint32_t>(f)); }
float GetF32(const unsigned char* p) { return std::bit_cast<float>(GetU32(p)); }
void PutF64(unsigned char* p, double d) { PutU64(p, std::bit_cast<std::uint64_t>(d)); }
double GetF64(const unsigned char* p) { return std::bit_cast<double>(GetU64(p)); }

std::array<unsigned char, kHeaderSize> EncodeHeader(const EmbeddingFileHeader& h) {
  std::array<unsigned char, kHeaderSize> b{};
  std::memcpy(b.data(), kMagic, 4);
  PutU32(b.data() + 4, h.version);
  PutU32(b.data() + 8, static_cast<std::uint32_t>(h.kind));
  PutU32(b.data() + 12, h.dim);
  PutU64(b.data() + 16, h.count);
  PutU32(b.data() + 24, h.num_classes);
  return b;
}

std::uint64_t FileSize(const std::string& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw Error("cannot stat " + path + ": " + ec.message());
  return size;
}

std::ifstream OpenForRead(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return in;
}

std::ofstream OpenForWrite(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create " + path);
  return out;
}

// Reads and validates a header, and checks the total length.
EmbeddingFileHeader ReadHeader(const std::string& path, std::ifstream& in) {
  std::array<unsigned char, kHeaderSize> b{};
  const std::uint64_t size = FileSize(path);
  if (size < kHeaderSize) {
    throw ParseError(path, size, "file shorter than the 28-byte header");
  }
  in.read(reinterpret_cast<char*>(b.data()), kHeaderSize);
  if (!in) throw ParseError(path, 0, "cannot read header");
  if (std::memcmp(b.data(), kMagic, 4) != 0) {
    throw ParseError(path, 0, "bad magic");
  }
  EmbeddingFileHeader h;
  h.version = GetU32(b.data() + 4);
  if (h.version != kFormatVersion) {
    throw ParseError(path, 4, "unsupported version " + std::to_string(h.version));
  }
  const std::uint32_t kind = GetU32(b.data() + 8);
  if (kind > 1) throw ParseError(path, 8, "unknown kind " + std::to_string(kind));
  h.kind = static_cast<FileKind>(kind);
  h.dim = GetU32(b.data() + 12);
  if (h.dim == 0) throw ParseError(path, 12, "dim must be at least 1");
  h.count = GetU64(b.data() + 16);
  h.num_classes = GetU32(b.data() + 24);

  const std::uint64_t rec = h.RecordSize();
  const std::uint64_t body = size - kHeaderSize;
  if (body / rec < h.count) {
    const std::uint64_t complete = body / rec;
    throw ParseError(path, kHeaderSize + complete * rec,
                     "truncated record " + std::to_string(complete) + " of " +
                         std::to_string(h.count));
  }
  if (body != h.count * rec) {
    throw ParseError(path, kHeaderSize + h.count * rec,
                     "trailing bytes after the last record");
  }
  return h;
}

bool EndsWith(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::array<unsigned char, kVerdictRecordSize> EncodeVerdict(const SampleVerdict& v) {
  std::array<unsigned char, kVerdictRecordSize> b{};
  PutU32(b.data(), static_cast<std::uint32_t>(v.predicted_class));
  b[4] = static_cast<unsigned char>(v.tier);
  b[5] = v.is_ood ? 1 : 0;
  b[6] = v.accepted_for_evolution ? 1 : 0;
  b[7] = 0;
  PutF64(b.data() + 8, v.s_open_init);
  PutF64(b.data() + 16, v.s_open_final);
  PutF64(b.data() + 24, v.p_ood);
  PutF64(b.data() + 32, v.au);
  PutF64(b.data() + 40, v.eu);
  return b;
}

}  // namespace

ParseError::ParseError(const std::string& path, std::uint64_t offset,
                       const std::string& what)
    : Error(path + ": byte offset " + std::to_string(offset) + ": " + what),
      offset_(offset) {}

Vector ToVector(std::span<const float> feature) {
  Vector v(static_cast<Eigen::Index>(feature.size()));
  for (std::size_t i = 0; i < feature.size(); ++i) v[i] = feature[i];
  return v;
}

std::vector<float> ToFloats(const Vector& v) {
  std::vector<float> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

StreamReader::StreamReader(const std::string& path)
    : path_(path), in_(OpenForRead(path)) {
  header_ = ReadHeader(path_, in_);
  if (header_.kind != FileKind::kStream) {
    throw ParseError(path_, 8, "expected a stream file (kind 0)");
  }
  buffer_.resize(header_.RecordSize());
}

bool StreamReader::Next(StreamRecord* record) {
  if (index_ >= header_.count) return false;
  const std::uint64_t offset = kHeaderSize + index_ * header_.RecordSize();
  in_.read(reinterpret_cast<char*>(buffer_.data()),
           static_cast<std::streamsize>(buffer_.size()));
  if (!in_) throw ParseError(path_, offset, "short read");
  record->label = static_cast<std::int32_t>(GetU32(buffer_.data()));
  if (record->label < -1 ||
      (record->label >= 0 &&
       static_cast<std::uint32_t>(record->label) >= header_.num_classes)) {
    throw ParseError(path_, offset,
                     "label " + std::to_string(record->label) +
                         " outside [-1, " + std::to_string(header_.num_classes) +
                         ")");
  }
  record->feature.resize(header_.dim);
  for (std::uint32_t i = 0; i < header_.dim; ++i) {
    record->feature[i] = GetF32(buffer_.data() + 4 + 4 * i);
    if (!std::isfinite(record->feature[i])) {
      throw ParseError(path_, offset + 4 + 4 * i, "non-finite feature value");
    }
  }
  ++index_;
  return true;
}

StreamWriter::StreamWriter(const std::string& path, std::uint32_t dim,
                           std::uint32_t num_classes, FileKind kind)
    : path_(path), out_(OpenForWrite(path)), dim_(dim) {
  if (dim == 0) throw Error("dim must be at least 1");
  EmbeddingFileHeader h;
  h.kind = kind;
  h.dim = dim;
  h.num_classes = num_classes;
  const auto b = EncodeHeader(h);
  out_.write(reinterpret_cast<const char*>(b.data()), b.size());
}

StreamWriter::~StreamWriter() {
  try {
    Close();
  } catch (...) {
  }
}

void StreamWriter::Write(std::int32_t label, std::span<const float> feature) {
  if (closed_) throw Error("write after close: " + path_);
  if (feature.size() != dim_) throw Error("feature dimension mismatch");
  std::vector<unsigned char> b(4 + 4 * feature.size());
  PutU32(b.data(), static_cast<std::uint32_t>(label));
  for (std::size_t i = 0; i < feature.size(); ++i) {
    PutF32(b.data() + 4 + 4 * i, feature[i]);
  }
  out_.write(reinterpret_cast<const char*>(b.data()),
             static_cast<std::streamsize>(b.size()));
  ++count_;
}

void StreamWriter::Close() {
  if (closed_) return;
  closed_ = true;
  unsigned char b[8];
  PutU64(b, count_);
  out_.seekp(16);
  out_.write(reinterpret_cast<const char*>(b), 8);
  out_.close();
  if (!out_) throw Error("write failed: " + path_);
}

std::vector<StreamRecord> ReadStream(const std::string& path) {
  StreamReader reader(path);
  std::vector<StreamRecord> out;
  out.reserve(reader.header().count);
  StreamRecord r;
  while (reader.Next(&r)) out.push_back(r);
  return out;
}

void WriteStream(const std::string& path, std::uint32_t dim,
                 std::uint32_t num_classes,
                 std::span<const StreamRecord> records) {
  StreamWriter w(path, dim, num_classes);
  for (const StreamRecord& r : records) w.Write(r.label, r.feature);
  w.Close();
}

std::vector<StreamRecord> ReadTextStream(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<StreamRecord> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = Trim(line);
    if (line.empty() || line[0] == '#') continue;
    StreamRecord r;
    std::stringstream fields(line);
    std::string field;
    bool first = true;
    while (std::getline(fields, field, ',')) {
      field = Trim(field);
      const char* b = field.data();
      const char* e = b + field.size();
      if (first) {
        auto [p, ec] = std::from_chars(b, e, r.label);
        if (ec != std::errc() || p != e || r.label < -1) {
          throw Error(path + ":" + std::to_string(line_no) + ": bad label");
        }
        first = false;
      } else {
        // from_chars for floating point is not in libstdc++ 11.
        char* end = nullptr;
        const float v = std::strtof(field.c_str(), &end);
        if (field.empty() || end != field.c_str() + field.size() ||
            !std::isfinite(v)) {
          throw Error(path + ":" + std::to_string(line_no) + ": bad value '" +
                      field + "'");
        }
        r.feature.push_back(v);
      }
    }
    if (r.feature.empty()) {
      throw Error(path + ":" + std::to_string(line_no) + ": no feature values");
    }
    if (dim == 0) dim = r.feature.size();
    if (r.feature.size() != dim) {
      throw Error(path + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(dim) + " values");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void WriteTextStream(const std::string& path,
                     std::span<const StreamRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot create " + path);
  char buf[64];
  for (const StreamRecord& r : records) {
    out << r.label;
    for (float v : r.feature) {
      std::snprintf(buf, sizeof(buf), ",%.9g", v);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw Error("write failed: " + path);
}

std::vector<StreamRecord> ReadAnyStream(const std::string& path) {
  if (EndsWith(path, ".csv") || EndsWith(path, ".txt")) {
    return ReadTextStream(path);
  }
  return ReadStream(path);
}

PrototypeSet ReadPrototypes(const std::string& path) {
  std::ifstream in = OpenForRead(path);
  const EmbeddingFileHeader h = ReadHeader(path, in);
  if (h.kind != FileKind::kPrototypes) {
    throw ParseError(path, 8, "expected a prototype file (kind 1)");
  }
  if (h.num_classes == 0) throw ParseError(path, 24, "no classes");
  if (h.count != h.num_classes) {
    throw ParseError(path, 16, "record count " + std::to_string(h.count) +
                                   " differs from num_classes " +
                                   std::to_string(h.num_classes));
  }
  Matrix rows(h.num_classes, h.dim);
  std::vector<bool> seen(h.num_classes, false);
  std::vector<unsigned char> b(h.RecordSize());
  for (std::uint64_t i = 0; i < h.count; ++i) {
    const std::uint64_t offset = kHeaderSize + i * h.RecordSize();
    in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!in) throw ParseError(path, offset, "short read");
    const std::uint32_t id = GetU32(b.data());
    if (id >= h.num_classes) {
      throw ParseError(path, offset, "class id " + std::to_string(id) + " out of range");
    }
    if (seen[id]) {
      throw ParseError(path, offset, "duplicate class id " + std::to_string(id));
    }
    seen[id] = true;
    for (std::uint32_t j = 0; j < h.dim; ++j) {
      const float v = GetF32(b.data() + 4 + 4 * j);
      if (!std::isfinite(v)) {
        throw ParseError(path, offset + 4 + 4 * j, "non-finite feature value");
      }
      rows(id, j) = v;
    }
  }
  for (std::uint32_t k = 0; k < h.num_classes; ++k) {
    if (!seen[k]) {
      throw ParseError(path, kHeaderSize, "missing class id " + std::to_string(k));
    }
  }
  return PrototypeSet(std::move(rows));
}

void WritePrototypes(const std::string& path, const PrototypeSet& protos) {
  StreamWriter w(path, static_cast<std::uint32_t>(protos.dim()),
                 static_cast<std::uint32_t>(protos.num_classes()),
                 FileKind::kPrototypes);
  for (int k = 0; k < protos.num_classes(); ++k) {
    w.Write(k, ToFloats(protos.row(k).transpose()));
  }
  w.Close();
}

void WriteCacheDump(const std::string& path, const VisualCache& cache) {
  StreamWriter w(path, static_cast<std::uint32_t>(cache.dim()),
                 static_cast<std::uint32_t>(cache.num_classes()));
  for (int k = 0; k < cache.num_classes(); ++k) {
    for (const CachedItem& item : cache.queue(k)) {
      w.Write(k, ToFloats(item.feature));
    }
  }
  w.Close();
}

VerdictWriter::VerdictWriter(const std::string& path)
    : path_(path), out_(OpenForWrite(path)) {
  unsigned char b[kVerdictHeaderSize] = {};
  std::memcpy(b, kVerdictMagic, 4);
  PutU32(b + 4, kFormatVersion);
  out_.write(reinterpret_cast<const char*>(b), sizeof(b));
}

VerdictWriter::~VerdictWriter() {
  try {
    Close();
  } catch (...) {
  }
}

void VerdictWriter::Write(const SampleVerdict& v) {
  if (closed_) throw Error("write after close: " + path_);
  const auto b = EncodeVerdict(v);
  out_.write(reinterpret_cast<const char*>(b.data()), b.size());
  ++count_;
}

void VerdictWriter::Close() {
  if (closed_) return;
  closed_ = true;
  unsigned char b[8];
  PutU64(b, count_);
  out_.seekp(8);
  out_.write(reinterpret_cast<const char*>(b), 8);
  out_.close();
  if (!out_) throw Error("write failed: " + path_);
}

std::vector<SampleVerdict> ReadVerdicts(const std::string& path) {
  std::ifstream in = OpenForRead(path);
  const std::uint64_t size = FileSize(path);
  unsigned char h[kVerdictHeaderSize];
  if (size < kVerdictHeaderSize) throw ParseError(path, size, "short header");
  in.read(reinterpret_cast<char*>(h), sizeof(h));
  if (std::memcmp(h, kVerdictMagic, 4) != 0) throw ParseError(path, 0, "bad magic");
  if (GetU32(h + 4) != kFormatVersion) throw ParseError(path, 4, "unsupported version");
  const std::uint64_t count = GetU64(h + 8);
  const std::uint64_t body = size - kVerdictHeaderSize;
  if (body != count * kVerdictRecordSize) {
    const std::uint64_t complete = std::min<std::uint64_t>(count, body / kVerdictRecordSize);
    throw ParseError(path, kVerdictHeaderSize + complete * kVerdictRecordSize,
                     "file length does not match the verdict count");
  }
  std::vector<SampleVerdict> out(count);
  std::array<unsigned char, kVerdictRecordSize> b{};
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t offset = kVerdictHeaderSize + i * kVerdictRecordSize;
    in.read(reinterpret_cast<char*>(b.data()), b.size());
    if (!in) throw ParseError(path, offset, "short read");
    SampleVerdict& v = out[i];
    v.predicted_class = static_cast<std::int32_t>(GetU32(b.data()));
    if (b[4] > 2) throw ParseError(path, offset + 4, "bad tier");
    v.tier = static_cast<Tier>(b[4]);
    v.is_ood = b[5] != 0;
    v.accepted_for_evolution = b[6] != 0;
    v.s_open_init = GetF64(b.data() + 8);
    v.s_open_final = GetF64(b.data() + 16);
    v.p_ood = GetF64(b.data() + 24);
    v.au = GetF64(b.data() + 32);
    v.eu = GetF64(b.data() + 40);
  }
  return out;
}

void WriteVerdicts(const std::string& path,
                   std::span<const SampleVerdict> verdicts) {
  VerdictWriter w(path);
  for (const SampleVerdict& v : verdicts) w.Write(v);
  w.Close();
}

void WriteVerdictsCsv(const std::string& path,
                      std::span<const SampleVerdict> verdicts) {
  std::ofstream out(path);
  if (!out) throw Error("cannot create " + path);
  out << "index,predicted_class,s_open_init,s_open_final,p_ood,tier,is_ood,"
         "au,eu,accepted\n";
  char buf[512];
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const SampleVerdict& v = verdicts[i];
    std::snprintf(buf, sizeof(buf), "%zu,%d,%.17g,%.17g,%.17g,%s,%d,%.17g,%.17g,%d\n",
                  i, v.predicted_class, v.s_open_init, v.s_open_final, v.p_ood,
                  TierName(v.tier), v.is_ood ? 1 : 0, v.au, v.eu,
                  v.accepted_for_evolution ? 1 : 0);
    out << buf;
  }
  if (!out) throw Error("write failed: " + path);
}

std::vector<int> ReadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = Trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    std::size_t index = 0;
    int label = 0;
    bool ok = comma != std::string::npos;
    if (ok) {
      const std::string a = Trim(line.substr(0, comma));
      const std::string b = Trim(line.substr(comma + 1));
      auto ra = std::from_chars(a.data(), a.data() + a.size(), index);
      auto rb = std::from_chars(b.data(), b.data() + b.size(), label);
      ok = ra.ec == std::errc() && ra.ptr == a.data() + a.size() &&
           rb.ec == std::errc() && rb.ptr == b.data() + b.size() && label >= -1;
    }
    if (!ok) throw Error(path + ":" + std::to_string(line_no) + ": bad manifest line");
    if (index != labels.size()) {
      throw Error(path + ":" + std::to_string(line_no) + ": expected index " +
                  std::to_string(labels.size()));
    }
    labels.push_back(label);
  }
  return labels;
}

void WriteManifest(const std::string& path, std::span<const int> labels) {
  std::ofstream out(path);
  if (!out) throw Error("cannot create " + path);
  out << "# index,label (-1 = csOOD)\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << i << "," << labels[i] << "\n";
  }
  if (!out) throw Error("write failed: " + path);
}

}  // namespace opentta
