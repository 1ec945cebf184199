#pragma once

#include <cassert>
#include <numeric>
#include <span>
#include <vector>

namespace rematch {

/// Fixed-size binary max-heap over the ids [0, n) with keyed updates.
///
/// Ordering is by key, ties broken towards the lower id, so top() is the
/// lowest id among those with the maximal key. Storage is allocated once;
/// the only mutation is set_key().
class IndexedMaxHeap {
public:
  IndexedMaxHeap() = default;

  explicit IndexedMaxHeap(std::span<const double> keys)
      : keys_(keys.begin(), keys.end()), heap_(keys.size()), pos_(keys.size()) {
    std::iota(heap_.begin(), heap_.end(), 0);
    std::iota(pos_.begin(), pos_.end(), 0);
    for (int i = static_cast<int>(heap_.size()) / 2 - 1; i >= 0; --i) sift_down(i);
  }

  int size() const { return static_cast<int>(heap_.size()); }
  double key(int id) const { return keys_[id]; }
  const std::vector<double> &keys() const { return keys_; }

  int top() const { return heap_.front(); }
  double top_key() const { return keys_[heap_.front()]; }

  void set_key(int id, double k) {
    const double old = keys_[id];
    keys_[id] = k;
    if (k > old) sift_up(pos_[id]);
    else if (k < old) sift_down(pos_[id]);
  }

  /// Full structural check: heap order and position/heap inverse relation.
  bool valid() const {
    for (int i = 0; i < size(); ++i) {
      if (pos_[heap_[i]] != i) return false;
      if (i > 0 && before(heap_[i], heap_[(i - 1) / 2])) return false;
    }
    return true;
  }

private:
  bool before(int a, int b) const { // a ranks strictly above b
    return keys_[a] > keys_[b] || (keys_[a] == keys_[b] && a < b);
  }

  void place(int i, int id) {
    heap_[i] = id;
    pos_[id] = i;
  }

  void sift_up(int i) {
    const int id = heap_[i];
    while (i > 0) {
      const int p = (i - 1) / 2;
      if (!before(id, heap_[p])) break;
      place(i, heap_[p]);
      i = p;
    }
    place(i, id);
  }

  void sift_down(int i) {
    const int n = size();
    const int id = heap_[i];
    for (;;) {
      int c = 2 * i + 1;
      if (c >= n) break;
      if (c + 1 < n && before(heap_[c + 1], heap_[c])) ++c;
      if (!before(heap_[c], id)) break;
      place(i, heap_[c]);
      i = c;
    }
    place(i, id);
  }

  std::vector<double> keys_;
  std::vector<int> heap_;
  std::vector<int> pos_;
};

} // namespace rematch
