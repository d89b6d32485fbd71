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

#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "testing.h"

namespace opentta {
namespace {

using testing::TempDir;

std::vector<char> Bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void PutBytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<StreamRecord> RandomRecords(int n, int dim, int classes) {
  std::mt19937_64 rng(n);
  std::normal_distribution<float> normal;
  std::uniform_int_distribution<int> label(-1, classes - 1);
  std::vector<StreamRecord> r(n);
  for (StreamRecord& rec : r) {
    rec.label = label(rng);
    rec.feature.resize(dim);
    for (float& x : rec.feature) x = normal(rng);
  }
  return r;
}

template <typename T>
std::uint64_t OffsetOf(const std::function<T()>& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no parse error";
  return ~0ull;
}

TEST(StreamFileTest, RoundTripIsByteExact) {
  TempDir dir;
  const auto records = RandomRecords(37, 5, 4);
  WriteStream(dir.File("a.stream"), 5, 4, records);
  const auto back = ReadStream(dir.File("a.stream"));
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].label, records[i].label);
    EXPECT_EQ(back[i].feature, records[i].feature);
  }
  WriteStream(dir.File("b.stream"), 5, 4, back);
  EXPECT_EQ(Bytes(dir.File("a.stream")), Bytes(dir.File("b.stream")));
  EXPECT_EQ(Bytes(dir.File("a.stream")).size(), kHeaderSize + 37 * (4 + 20));
}

TEST(StreamFileTest, EmptyStream) {
  TempDir dir;
  WriteStream(dir.File("e.stream"), 3, 2, {});
  StreamReader reader(dir.File("e.stream"));
  StreamRecord r;
  EXPECT_FALSE(reader.Next(&r));
  EXPECT_EQ(reader.header().count, 0u);
}

TEST(StreamFileTest, TruncatedRecordReportsItsOffset) {
  TempDir dir;
  WriteStream(dir.File("t.stream"), 4, 3, RandomRecords(10, 4, 3));
  auto bytes = Bytes(dir.File("t.stream"));
  bytes.resize(bytes.size() - 7);
  PutBytes(dir.File("t.stream"), bytes);
  const std::uint64_t offset = OffsetOf<std::vector<StreamRecord>>(
      [&] { return ReadStream(dir.File("t.stream")); });
  EXPECT_EQ(offset, kHeaderSize + 9 * (4 + 16));
}

TEST(StreamFileTest, HeaderErrors) {
  TempDir dir;
  WriteStream(dir.File("h.stream"), 4, 3, RandomRecords(2, 4, 3));
  const auto good = Bytes(dir.File("h.stream"));

  auto bad = good;
  bad[0] = 'X';
  PutBytes(dir.File("m.stream"), bad);
  EXPECT_EQ(OffsetOf<std::vector<StreamRecord>>(
                [&] { return ReadStream(dir.File("m.stream")); }),
            0u);

  bad = good;
  bad[4] = 2;
  PutBytes(dir.File("v.stream"), bad);
  EXPECT_EQ(OffsetOf<std::vector<StreamRecord>>(
                [&] { return ReadStream(dir.File("v.stream")); }),
            4u);

  bad = good;
  bad.push_back(0);
  PutBytes(dir.File("x.stream"), bad);
  EXPECT_THROW(ReadStream(dir.File("x.stream")), ParseError);

  PutBytes(dir.File("s.stream"), std::vector<char>(good.begin(), good.begin() + 10));
  EXPECT_THROW(ReadStream(dir.File("s.stream")), ParseError);
  EXPECT_THROW(ReadPrototypes(dir.File("h.stream")), ParseError);
}

TEST(StreamFileTest, LabelOutOfRange) {
  TempDir dir;
  std::vector<StreamRecord> records = RandomRecords(3, 4, 10);
  records[2].label = 999;
  WriteStream(dir.File("l.stream"), 4, 10, records);
  EXPECT_EQ(OffsetOf<std::vector<StreamRecord>>(
                [&] { return ReadStream(dir.File("l.stream")); }),
            kHeaderSize + 2 * (4 + 16));
}

TEST(StreamFileTest, NonFiniteFeature) {
  TempDir dir;
  std::vector<StreamRecord> records = RandomRecords(2, 4, 3);
  records[1].feature[2] = std::numeric_limits<float>::quiet_NaN();
  WriteStream(dir.File("n.stream"), 4, 3, records);
  EXPECT_EQ(OffsetOf<std::vector<StreamRecord>>(
                [&] { return ReadStream(dir.File("n.stream")); }),
            kHeaderSize + (4 + 16) + 4 + 8);
}

TEST(TextStreamTest, RoundTripAndDispatch) {
  TempDir dir;
  const auto records = RandomRecords(9, 3, 4);
  WriteTextStream(dir.File("s.csv"), records);
  const auto back = ReadAnyStream(dir.File("s.csv"));
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].label, records[i].label);
    EXPECT_EQ(back[i].feature, records[i].feature);
  }
}

TEST(PrototypeFileTest, RoundTrip) {
  TempDir dir;
  Matrix rows(2, 3);
  rows << 1, 2, 3, -0.5f, 0.25f, 8;
  WritePrototypes(dir.File("p.protos"), PrototypeSet(rows));
  const PrototypeSet p = ReadPrototypes(dir.File("p.protos"));
  EXPECT_EQ(p.num_classes(), 2);
  EXPECT_EQ(p.dim(), 3);
  EXPECT_EQ(p.matrix(), rows);
}

void WriteRawPrototypes(const std::string& path, std::uint32_t num_classes,
                        const std::vector<std::uint32_t>& ids) {
  StreamWriter w(path, 2, num_classes, FileKind::kPrototypes);
  for (std::uint32_t id : ids) {
    w.Write(static_cast<std::int32_t>(id), std::vector<float>{1.0f, 0.0f});
  }
  w.Close();
}

TEST(PrototypeFileTest, DuplicateAndMissingIds) {
  TempDir dir;
  WriteRawPrototypes(dir.File("d.protos"), 2, {0, 0});
  EXPECT_THROW(ReadPrototypes(dir.File("d.protos")), ParseError);
  WriteRawPrototypes(dir.File("m.protos"), 3, {0, 2, 2});
  EXPECT_THROW(ReadPrototypes(dir.File("m.protos")), ParseError);
  WriteRawPrototypes(dir.File("g.protos"), 3, {2, 0, 1});
  const PrototypeSet p = ReadPrototypes(dir.File("g.protos"));
  EXPECT_EQ(p.num_classes(), 3);
}

TEST(PrototypeFileTest, NonContiguousIds) {
  TempDir dir;
  WriteRawPrototypes(dir.File("n.protos"), 3, {0, 2});
  EXPECT_THROW(ReadPrototypes(dir.File("n.protos")), ParseError);
}

TEST(VerdictFileTest, RoundTrip) {
  TempDir dir;
  std::vector<SampleVerdict> v(3);
  v[0] = {3, 0.1, 0.2, 0.3, Tier::kConfident, false, 0.4, 0.5, true};
  v[1] = {0, 0.6, 0.7, 0.8, Tier::kSkipped, true, 0.9, 1.0, false};
  v[2] = {1, 1e-300, 2.0, 1.0, Tier::kTrustworthy, true, 0.0, 0.125, false};
  WriteVerdicts(dir.File("v.bin"), v);
  EXPECT_EQ(Bytes(dir.File("v.bin")).size(),
            kVerdictHeaderSize + 3 * kVerdictRecordSize);
  const auto back = ReadVerdicts(dir.File("v.bin"));
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].predicted_class, v[i].predicted_class);
    EXPECT_EQ(back[i].tier, v[i].tier);
    EXPECT_EQ(back[i].is_ood, v[i].is_ood);
    EXPECT_EQ(back[i].accepted_for_evolution, v[i].accepted_for_evolution);
    EXPECT_EQ(back[i].s_open_init, v[i].s_open_init);
    EXPECT_EQ(back[i].s_open_final, v[i].s_open_final);
    EXPECT_EQ(back[i].p_ood, v[i].p_ood);
    EXPECT_EQ(back[i].au, v[i].au);
    EXPECT_EQ(back[i].eu, v[i].eu);
  }
  WriteVerdicts(dir.File("w.bin"), back);
  EXPECT_EQ(Bytes(dir.File("v.bin")), Bytes(dir.File("w.bin")));

  auto bytes = Bytes(dir.File("v.bin"));
  bytes.resize(bytes.size() - 1);
  PutBytes(dir.File("t.bin"), bytes);
  EXPECT_EQ(OffsetOf<std::vector<SampleVerdict>>(
                [&] { return ReadVerdicts(dir.File("t.bin")); }),
            kVerdictHeaderSize + 2 * kVerdictRecordSize);
}

TEST(ManifestTest, RoundTripAndErrors) {
  TempDir dir;
  const std::vector<int> labels = {3, -1, 0, 0, -1};
  WriteManifest(dir.File("m.csv"), labels);
  EXPECT_EQ(ReadManifest(dir.File("m.csv")), labels);

  std::ofstream(dir.File("gap.csv")) << "0,1\n2,1\n";
  EXPECT_THROW(ReadManifest(dir.File("gap.csv")), Error);
  std::ofstream(dir.File("bad.csv")) << "# c\n0,x\n";
  EXPECT_THROW(ReadManifest(dir.File("bad.csv")), Error);
  std::ofstream(dir.File("neg.csv")) << "0,-2\n";
  EXPECT_THROW(ReadManifest(dir.File("neg.csv")), Error);
}

TEST(CacheDumpTest, WritesEveryItem) {
  TempDir dir;
  VisualCache cache(3, 2, 5);
  CachedItem item;
  item.feature = Vector::Ones(2).normalized();
  item.logits = Vector::Zero(3);
  cache.Update(2, item, 0.9);
  item.feature << 1, 0;
  cache.Update(0, item, 0.9);
  WriteCacheDump(dir.File("c.stream"), cache);
  const auto r = ReadStream(dir.File("c.stream"));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].label, 0);
  EXPECT_EQ(r[1].label, 2);
}

TEST(ConversionTest, FloatsAndBack) {
  Vector v(3);
  v << 0.5, -2.0, 1e-3;
  EXPECT_EQ(ToVector(ToFloats(v)).cast<float>(), v.cast<float>());
}

}  // namespace
}  // namespace opentta
