#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "ism/data.hpp"

using namespace ism;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const char* name)
      : path((std::filesystem::temp_directory_path() / name).string()) {}
  ~TempFile() { std::remove(path.c_str()); }

  void write(const std::string& text) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
  }
};

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_classes = 4;
  s.per_class = 10;
  s.dim = 3;
  s.seed = 5;
  return s;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic and shaped as asked") {
  const SyntheticSpec spec = small_spec();
  const Dataset a = generate_synthetic(spec);
  const Dataset b = generate_synthetic(spec);
  CHECK(a.size() == 40);
  CHECK(a.dim() == 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.features[i] == b.features[i]);  // bitwise
    CHECK(a.labels[i] == b.labels[i]);
  }

  SyntheticSpec other = spec;
  other.seed = 6;
  const Dataset c = generate_synthetic(other);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.features[i] != c.features[i]) differs = true;
  CHECK(differs);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("blends sit in the tails of the first split's classes") {
  SyntheticSpec spec = small_spec();
  spec.ambiguity_fraction = 0.2;  // 2 of 10 samples per eligible class
  spec.train_class_fraction = 0.5;  // classes 0 and 1 are eligible
  const Dataset data = generate_synthetic(spec);

  std::size_t n_blends = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const LabelSet& set = data.labels[i];
    if (set.size() == 2) {
      ++n_blends;
      for (int id : set.ids()) CHECK(id < 2);  // only eligible classes blend
      // Blends occupy each eligible class's last slots.
      CHECK(i % 10 >= 8);
    } else {
      CHECK(set.is_singleton());
    }
  }
  CHECK(n_blends == 4);

  // Zero ambiguity keeps every label a singleton.
  const Dataset clean = generate_synthetic(small_spec());
  for (const auto& set : clean.labels) CHECK(set.is_singleton());
}

TEST_CASE("degenerate scales collapse the geometry as expected") {
  SyntheticSpec spec = small_spec();
  spec.center_scale = 0.0;
  spec.cluster_spread = 0.0;
  const Dataset data = generate_synthetic(spec);
  for (const auto& x : data.features)
    for (double v : x) CHECK(v == 0.0);

  SyntheticSpec tight = small_spec();
  tight.cluster_spread = 0.0;
  const Dataset clustered = generate_synthetic(tight);
  // All samples of one class coincide with its center.
  for (std::size_t k = 1; k < 10; ++k)
    CHECK(clustered.features[k] == clustered.features[0]);

  SyntheticSpec bad = small_spec();
  bad.ambiguity_fraction = 2.0;
  CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);
  bad = small_spec();
  bad.n_classes = 1;
  bad.ambiguity_fraction = 0.5;
  bad.train_class_fraction = 1.0;
  CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);
}

TEST_CASE("csv round trip preserves every bit and every label") {
  SyntheticSpec spec = small_spec();
  spec.ambiguity_fraction = 0.3;
  const Dataset data = generate_synthetic(spec);

  TempFile file("ism_test_data.csv");
  save_csv(file.path, data);
  const Dataset back = load_csv(file.path);
  REQUIRE(back.size() == data.size());
  CHECK(back.dim() == data.dim());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back.features[i] == data.features[i]);  // bitwise through text
    CHECK(back.labels[i] == data.labels[i]);
  }

  std::ifstream in(file.path);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("label,f0,", 0) == 0);
}

TEST_CASE("csv parsing of labels, sets, and plain rows") {
  TempFile file("ism_test_parse.csv");
  file.write("label,f0,f1\n3|7,0.1,0.2\n5,1,2\n");
  const Dataset data = load_csv(file.path);
  REQUIRE(data.size() == 2);
  CHECK(data.labels[0] == LabelSet({3, 7}));
  CHECK(data.labels[1] == LabelSet(5));
  CHECK(data.features[0][0] == 0.1);
  CHECK(data.features[0][1] == 0.2);
  CHECK(data.features[1][0] == 1.0);

  // A file without the header line is accepted.
  file.write("4,0.5,0.25\n");
  const Dataset headerless = load_csv(file.path);
  REQUIRE(headerless.size() == 1);
  CHECK(headerless.labels[0] == LabelSet(4));
}

TEST_CASE("csv errors carry the offending line number") {
  TempFile file("ism_test_bad.csv");

  file.write("label,f0,f1\n1,0.1,0.2\n2,0.3\n");
  try {
    load_csv(file.path);
    FAIL("expected a parse error");
  } catch (const CsvError& e) {
    CHECK(e.line == 3);
  }

  file.write("label,f0\n1,0.1x\n");
  CHECK_THROWS_AS(load_csv(file.path), CsvError);

  file.write("label,f0\nx,0.1\n");
  CHECK_THROWS_AS(load_csv(file.path), CsvError);

  file.write("label,f0\n");
  CHECK_THROWS_AS(load_csv(file.path), CsvError);

  CHECK_THROWS(load_csv("/nonexistent/dir/none.csv"));
}

TEST_CASE("zero-shot split sends whole classes to one side") {
  SyntheticSpec spec = small_spec();
  spec.per_class = 50;
  const Dataset data = generate_synthetic(spec);  // classes 0..3, 200 rows
  const SplitResult split = split_zero_shot(data, 0.5);
  CHECK(split.train_classes == std::vector<int>{0, 1});
  CHECK(split.test_classes == std::vector<int>{2, 3});
  CHECK(split.train.size() == 100);
  CHECK(split.test.size() == 100);
  for (const auto& set : split.train.labels)
    for (int id : set.ids()) CHECK(id < 2);
  for (const auto& set : split.test.labels)
    for (int id : set.ids()) CHECK(id >= 2);

  // Blends never straddle the boundary when the generator and the split use
  // the same fraction.
  SyntheticSpec mixed = small_spec();
  mixed.ambiguity_fraction = 0.3;
  CHECK_NOTHROW(split_zero_shot(generate_synthetic(mixed), 0.5));

  // Everything lands on the train side at fraction 1.
  const SplitResult all = split_zero_shot(data, 1.0);
  CHECK(all.train.size() == 200);
  CHECK(all.test.size() == 0);
}

TEST_CASE("a label set straddling the class boundary is an error") {
  Dataset data;
  data.features = {{0.0}, {1.0}, {2.0}};
  data.labels = {LabelSet(0), LabelSet(1), LabelSet({0, 1})};
  // Classes {0} train, {1} test at fraction 0.5: row 2 straddles.
  CHECK_THROWS_AS(split_zero_shot(data, 0.5), std::runtime_error);
  CHECK_THROWS_AS(split_zero_shot(data, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(split_zero_shot(data, 1.5), std::invalid_argument);
}

TEST_CASE("dataset validation rejects ragged and non-finite rows") {
  Dataset ragged;
  ragged.features = {{0.0, 1.0}, {2.0}};
  ragged.labels = {LabelSet(0), LabelSet(1)};
  CHECK_THROWS_AS(ragged.validate(), std::invalid_argument);

  Dataset nan_row;
  nan_row.features = {{0.0, std::nan("")}};
  nan_row.labels = {LabelSet(0)};
  CHECK_THROWS_AS(nan_row.validate(), std::invalid_argument);

  Dataset mismatch;
  mismatch.features = {{0.0}};
  CHECK_THROWS_AS(mismatch.validate(), std::invalid_argument);
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  const std::string empty;
  CHECK(fnv1a64(std::span<const char>(empty.data(), 0)) ==
        14695981039346656037ull);
  const std::string a = "a";
  CHECK(fnv1a64(std::span<const char>(a.data(), a.size())) ==
        0xaf63dc4c8601ec8cull);
  const std::string foobar = "foobar";
  CHECK(fnv1a64(std::span<const char>(foobar.data(), foobar.size())) ==
        0x85944171f73967e8ull);
}
