#pragma once

/// Dataset container plus synthetic generation, CSV persistence, and the
/// class-disjoint split. Features are plain double rows; labels are id sets
/// (singleton for clean samples, two ids for generated cross-class blends).
///
/// CSV layout: header "label,f0,...", one row per sample, labels joined with
/// '|' and features printed with the shortest representation that parses
/// back to the identical double.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ism/labels.hpp"
#include "ism/vec.hpp"

namespace ism {

struct Dataset {
  std::vector<Vec> features;
  std::vector<LabelSet> labels;

  std::size_t size() const { return features.size(); }
  std::size_t dim() const { return features.empty() ? 0 : features[0].size(); }
  void validate() const;
};

struct SyntheticSpec {
  std::size_t n_classes = 8;
  std::size_t per_class = 250;
  std::size_t dim = 32;
  double center_scale = 1.0;    // class centers ~ N(0, scale^2 I)
  double cluster_spread = 0.25; // per-sample noise sigma
  // Fraction of samples per eligible class replaced by two-class blends with
  // lambda ~ U(0.3, 0.7). Blends carry both parent ids as their label.
  double ambiguity_fraction = 0.0;
  // Blends only mix classes inside the first ceil(fraction * n_classes)
  // sorted classes, so a later zero-shot split at the same fraction never
  // sees a blend straddling the boundary.
  double train_class_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

/// Parse failure with a 1-based line number (0 when not tied to a line).
struct CsvError : std::runtime_error {
  CsvError(const std::string& msg, std::size_t line_no)
      : std::runtime_error(msg), line(line_no) {}
  std::size_t line;
};

void save_csv(const std::string& path, const Dataset& data);
Dataset load_csv(const std::string& path);

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<int> train_classes;
  std::vector<int> test_classes;
};

/// Zero-shot split: the first ceil(fraction * n) of the sorted distinct class
/// ids go to train. A sample lands on the side containing its whole label
/// set; a set straddling the boundary is an error.
SplitResult split_zero_shot(const Dataset& data, double train_fraction = 0.5);

/// FNV-1a, used for the dataset metadata sidecar.
std::uint64_t fnv1a64(std::span<const char> bytes);

}  // namespace ism
