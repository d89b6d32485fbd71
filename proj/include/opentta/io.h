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

// Embedding file formats.
//
// All integers little-endian, floats IEEE-754 binary32.
//
//   offset  size  field
//        0     4  magic "PDCS"
//        4     4  version (u32) = 1
//        8     4  kind (u32): 0 = stream, 1 = prototypes
//       12     4  dim (u32) >= 1
//       16     8  count (u64)
//       24     4  num_classes (u32)
//       28        records
//
// Stream record:    label (i32, -1 = csOOD / unknown), feature (f32 x dim)
// Prototype record: class_id (u32), feature (f32 x dim)
//
// Verdict files:
//
//        0     4  magic "PDCV"
//        4     4  version (u32) = 1
//        8     8  count (u64)
//       16        48-byte records:
//                 predicted_class (i32), tier (u8), is_ood (u8),
//                 accepted (u8), reserved (u8) = 0,
//                 s_open_init, s_open_final, p_ood, au, eu (f64 each)
//
// The text fallback stream is one "label,v1,...,vd" line per record.

#ifndef OPENTTA_IO_H_
#define OPENTTA_IO_H_

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "opentta/cache.h"
#include "opentta/core.h"

namespace opentta {

class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::uint64_t offset,
             const std::string& what);
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

enum class FileKind : std::uint32_t { kStream = 0, kPrototypes = 1 };

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderSize = 28;
inline constexpr std::size_t kVerdictHeaderSize = 16;
inline constexpr std::size_t kVerdictRecordSize = 48;

struct EmbeddingFileHeader {
  std::uint32_t version = kFormatVersion;
  FileKind kind = FileKind::kStream;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::uint32_t num_classes = 0;

  std::size_t RecordSize() const { return 4 + 4 * static_cast<std::size_t>(dim); }
};

struct StreamRecord {
  std::int32_t label = -1;
  std::vector<float> feature;
};

Vector ToVector(std::span<const float> feature);
std::vector<float> ToFloats(const Vector& v);

// Sequential reader holding one record at a time. The header and the file
// length are validated on open.
class StreamReader {
 public:
  explicit StreamReader(const std::string& path);

  const EmbeddingFileHeader& header() const { return header_; }
  // False at end of stream.
  bool Next(StreamRecord* record);
  std::uint64_t index() const { return index_; }

 private:
  std::string path_;
  std::ifstream in_;
  EmbeddingFileHeader header_;
  std::uint64_t index_ = 0;
  std::vector<unsigned char> buffer_;
};

// Writes records as they come and patches the count on Close().
class StreamWriter {
 public:
  StreamWriter(const std::string& path, std::uint32_t dim,
               std::uint32_t num_classes, FileKind kind = FileKind::kStream);
  ~StreamWriter();
  StreamWriter(const StreamWriter&) = delete;
  StreamWriter& operator=(const StreamWriter&) = delete;

  void Write(std::int32_t label, std::span<const float> feature);
  void Close();

 private:
  std::string path_;
  std::ofstream out_;
  std::uint32_t dim_;
  std::uint64_t count_ = 0;
  bool closed_ = false;
};

std::vector<StreamRecord> ReadStream(const std::string& path);
void WriteStream(const std::string& path, std::uint32_t dim,
                 std::uint32_t num_classes,
                 std::span<const StreamRecord> records);

// Comma-separated text fallback.
std::vector<StreamRecord> ReadTextStream(const std::string& path);
void WriteTextStream(const std::string& path,
                     std::span<const StreamRecord> records);

// Binary unless the path ends in .csv or .txt.
std::vector<StreamRecord> ReadAnyStream(const std::string& path);

PrototypeSet ReadPrototypes(const std::string& path);
void WritePrototypes(const std::string& path, const PrototypeSet& protos);

// Every cached item as a stream record labeled with its class.
void WriteCacheDump(const std::string& path, const VisualCache& cache);

class VerdictWriter {
 public:
  explicit VerdictWriter(const std::string& path);
  ~VerdictWriter();
  VerdictWriter(const VerdictWriter&) = delete;
  VerdictWriter& operator=(const VerdictWriter&) = delete;

  void Write(const SampleVerdict& v);
  void Close();

 private:
  std::string path_;
  std::ofstream out_;
  std::uint64_t count_ = 0;
  bool closed_ = false;
};

std::vector<SampleVerdict> ReadVerdicts(const std::string& path);
void WriteVerdicts(const std::string& path,
                   std::span<const SampleVerdict> verdicts);
void WriteVerdictsCsv(const std::string& path,
                      std::span<const SampleVerdict> verdicts);

// Manifest: "index,label" lines in sample order, '#' comments allowed.
std::vector<int> ReadManifest(const std::string& path);
void WriteManifest(const std::string& path, std::span<const int> labels);

}  // namespace opentta

#endif  // OPENTTA_IO_H_
