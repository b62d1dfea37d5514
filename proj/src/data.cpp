#include "ism/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ism/rng.hpp"

namespace ism {

void Dataset::validate() const {
  if (features.size() != labels.size())
    throw std::invalid_argument("dataset: features/labels size mismatch");
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != dim())
      throw std::invalid_argument("dataset: ragged feature row " +
                                  std::to_string(i));
    if (!vec::all_finite(features[i]))
      throw std::invalid_argument("dataset: non-finite feature in row " +
                                  std::to_string(i));
    if (labels[i].empty())
      throw std::invalid_argument("dataset: empty label in row " +
                                  std::to_string(i));
  }
}

void SyntheticSpec::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("synthetic spec: ") + what);
  };
  need(n_classes >= 1, "n_classes must be >= 1");
  need(per_class >= 1, "per_class must be >= 1");
  need(dim >= 1, "dim must be >= 1");
  need(center_scale >= 0.0 && std::isfinite(center_scale),
       "center_scale must be finite and >= 0");
  need(cluster_spread >= 0.0 && std::isfinite(cluster_spread),
       "cluster_spread must be finite and >= 0");
  need(ambiguity_fraction >= 0.0 && ambiguity_fraction <= 1.0,
       "ambiguity_fraction must be in [0, 1]");
  need(train_class_fraction > 0.0 && train_class_fraction <= 1.0,
       "train_class_fraction must be in (0, 1]");
  if (ambiguity_fraction > 0.0) {
    const auto eligible = static_cast<std::size_t>(
        std::ceil(train_class_fraction * static_cast<double>(n_classes)));
    need(eligible >= 2, "ambiguity needs at least 2 train-side classes");
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<Vec> centers(spec.n_classes, Vec(spec.dim));
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    auto rng = make_rng(mix64(spec.seed, 1, c));
    NormalDraw nd;
    for (std::size_t d = 0; d < spec.dim; ++d)
      centers[c][d] = spec.center_scale * nd(rng);
  }

  const auto eligible = static_cast<std::size_t>(
      std::ceil(spec.train_class_fraction * static_cast<double>(spec.n_classes)));
  const auto n_blend = static_cast<std::size_t>(
      spec.ambiguity_fraction * static_cast<double>(spec.per_class) + 1e-9);

  Dataset data;
  data.features.reserve(spec.n_classes * spec.per_class);
  data.labels.reserve(spec.n_classes * spec.per_class);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    auto rng = make_rng(mix64(spec.seed, 2, c));
    NormalDraw nd;
    for (std::size_t k = 0; k < spec.per_class; ++k) {
      Vec x(spec.dim);
      for (std::size_t d = 0; d < spec.dim; ++d)
        x[d] = centers[c][d] + spec.cluster_spread * nd(rng);
      // The tail of each eligible class becomes blends with a random other
      // eligible class; draws come from a per-sample substream.
      if (c < eligible && k >= spec.per_class - n_blend) {
        auto brng = make_rng(mix64(spec.seed, 3, c * spec.per_class + k));
        std::size_t partner = next_index(brng, eligible - 1);
        if (partner >= c) ++partner;
        const double lam = next_uniform(brng, 0.3, 0.7);
        NormalDraw bnd;
        for (std::size_t d = 0; d < spec.dim; ++d) {
          const double other =
              centers[partner][d] + spec.cluster_spread * bnd(brng);
          x[d] = lam * x[d] + (1.0 - lam) * other;
        }
        data.labels.push_back(LabelSet(std::vector<int>{
            static_cast<int>(c), static_cast<int>(partner)}));
      } else {
        data.labels.push_back(LabelSet(static_cast<int>(c)));
      }
      data.features.push_back(std::move(x));
    }
  }
  return data;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

int parse_int_field(std::string_view field, std::size_t line_no) {
  int value = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    throw CsvError("line " + std::to_string(line_no) + ": bad label id '" +
                       std::string(field) + "'",
                   line_no);
  return value;
}

double parse_double_field(std::string_view field, std::size_t line_no) {
  double value = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    throw CsvError("line " + std::to_string(line_no) + ": bad number '" +
                       std::string(field) + "'",
                   line_no);
  return value;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

void save_csv(const std::string& path, const Dataset& data) {
  data.validate();
  std::string out;
  out += "label";
  for (std::size_t d = 0; d < data.dim(); ++d) {
    out += ",f";
    out += std::to_string(d);
  }
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    bool first = true;
    for (int id : data.labels[i].ids()) {
      if (!first) out += '|';
      out += std::to_string(id);
      first = false;
    }
    for (double v : data.features[i]) {
      out += ',';
      append_double(out, v);
    }
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << out;
  f.flush();
  if (!f) throw std::runtime_error("short write: " + path);
}

Dataset load_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  std::size_t expect_fields = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("label", 0) == 0) continue;  // header
    const auto fields = split_on(line, ',');
    if (fields.size() < 2)
      throw CsvError("line " + std::to_string(line_no) + ": need a label and at least one feature",
                     line_no);
    if (expect_fields == 0) {
      expect_fields = fields.size();
    } else if (fields.size() != expect_fields) {
      throw CsvError("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(expect_fields) + " fields, got " +
                         std::to_string(fields.size()),
                     line_no);
    }
    std::vector<int> ids;
    for (const auto part : split_on(fields[0], '|'))
      ids.push_back(parse_int_field(part, line_no));
    Vec x(fields.size() - 1);
    for (std::size_t k = 1; k < fields.size(); ++k)
      x[k - 1] = parse_double_field(fields[k], line_no);
    data.labels.push_back(LabelSet(std::move(ids)));
    data.features.push_back(std::move(x));
  }
  if (data.features.empty())
    throw CsvError(path + ": no data rows", 0);
  return data;
}

SplitResult split_zero_shot(const Dataset& data, double train_fraction) {
  data.validate();
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw std::invalid_argument("split: train_fraction must be in (0, 1]");
  std::set<int> distinct;
  for (const auto& set : data.labels)
    distinct.insert(set.ids().begin(), set.ids().end());
  const std::vector<int> ids(distinct.begin(), distinct.end());
  const auto n_train = static_cast<std::size_t>(
      std::ceil(train_fraction * static_cast<double>(ids.size())));

  SplitResult res;
  res.train_classes.assign(ids.begin(), ids.begin() + n_train);
  res.test_classes.assign(ids.begin() + n_train, ids.end());
  auto is_train = [&](int id) {
    return std::binary_search(res.train_classes.begin(),
                              res.train_classes.end(), id);
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t on_train = 0;
    for (int id : data.labels[i].ids()) on_train += is_train(id) ? 1 : 0;
    if (on_train == data.labels[i].size()) {
      res.train.features.push_back(data.features[i]);
      res.train.labels.push_back(data.labels[i]);
    } else if (on_train == 0) {
      res.test.features.push_back(data.features[i]);
      res.test.labels.push_back(data.labels[i]);
    } else {
      throw std::runtime_error("split: label set of row " + std::to_string(i) +
                               " straddles the class split");
    }
  }
  return res;
}

std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace ism
