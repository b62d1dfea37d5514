#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace ism {

/// A set of class ids attached to one sample. Plain samples carry one id;
/// blended samples carry the ids of both parents. Two label sets count as
/// "equal" when they intersect, which is reflexive and symmetric but NOT
/// transitive: {1,2} ~ {2,3} ~ {3,4} while {1,2} !~ {3,4}.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(int id) : ids_{id} {}
  LabelSet(std::initializer_list<int> ids) : ids_(ids) { normalize(); }
  explicit LabelSet(std::vector<int> ids) : ids_(std::move(ids)) { normalize(); }

  const std::vector<int>& ids() const { return ids_; }
  bool empty() const { return ids_.empty(); }
  std::size_t size() const { return ids_.size(); }
  bool is_singleton() const { return ids_.size() == 1; }

  /// The single id of a singleton set. Throws otherwise.
  int sole_id() const {
    if (ids_.size() != 1) throw std::logic_error("LabelSet: not a singleton");
    return ids_[0];
  }

  bool contains(int id) const {
    return std::binary_search(ids_.begin(), ids_.end(), id);
  }

  bool intersects(const LabelSet& other) const {
    // Sets have at most a handful of ids; a merge walk is plenty.
    std::size_t i = 0, j = 0;
    while (i < ids_.size() && j < other.ids_.size()) {
      if (ids_[i] == other.ids_[j]) return true;
      if (ids_[i] < other.ids_[j]) ++i; else ++j;
    }
    return false;
  }

  static LabelSet merged(const LabelSet& a, const LabelSet& b) {
    std::vector<int> ids = a.ids_;
    ids.insert(ids.end(), b.ids_.begin(), b.ids_.end());
    return LabelSet(std::move(ids));
  }

  bool operator==(const LabelSet& other) const { return ids_ == other.ids_; }

 private:
  void normalize() {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    if (ids_.empty()) throw std::invalid_argument("LabelSet: empty");
  }

  std::vector<int> ids_;
};

/// Intersection-based label equality: positives share at least one class.
inline bool label_equal(const LabelSet& a, const LabelSet& b) {
  return a.intersects(b);
}

}  // namespace ism
