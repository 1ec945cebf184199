#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "rematch/errors.hpp"
#include "rematch/parallel.hpp"

namespace rematch {

/// Exact Euclidean nearest neighbour over the rows of a dense matrix.
///
/// Squared distances are summed over coordinates in order, so two equal
/// rows give bit-identical distances and ties resolve to the lowest row
/// index. Subtree pruning uses incremental per-axis offsets with a small
/// relative slack, so a rounding difference in the bound never discards a
/// candidate that the exact sum would keep.
class KdTree {
public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit KdTree(const Eigen::MatrixXd &points, int leaf_size = 12) : pts_(points), leaf_(std::max(1, leaf_size)) {
    if (pts_.rows() == 0 || pts_.cols() == 0) throw UsageError("nearest-neighbour search over an empty point set");
    idx_.resize(pts_.rows());
    std::iota(idx_.begin(), idx_.end(), 0);
    build(0, static_cast<int>(idx_.size()));
  }

  int size() const { return static_cast<int>(pts_.rows()); }
  int dim() const { return static_cast<int>(pts_.cols()); }

  double distance2(int i, const double *q) const {
    const double *p = pts_.row(i).data();
    double s = 0.0;
    for (int d = 0; d < dim(); ++d) {
      const double t = p[d] - q[d];
      s += t * t;
    }
    return s;
  }

  int nearest(const double *q) const {
    Search s{q, std::vector<double>(dim(), 0.0), std::numeric_limits<double>::infinity(), -1};
    search(s, 0, 0.0);
    return s.best;
  }

  /// Nearest row for every query row; queries are split across threads.
  std::vector<int> nearest_all(const Eigen::MatrixXd &queries, int threads = 1) const {
    if (queries.cols() != dim()) throw UsageError("query dimension does not match the indexed points");
    const RowMatrix q = queries;
    std::vector<int> out(q.rows());
    parallel_for(static_cast<int>(q.rows()), threads, [&](int b, int e) {
      for (int i = b; i < e; ++i) out[i] = nearest(q.row(i).data());
    });
    return out;
  }

private:
  struct Node {
    int begin, end;
    int axis = -1; // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };
  struct Search {
    const double *q;
    std::vector<double> off;
    double best_d;
    int best;
  };

  static constexpr double kSlack = 1e-10;

  int build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_) return id;
    int axis = 0;
    double spread = -1.0;
    for (int d = 0; d < dim(); ++d) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int i = begin; i < end; ++i) {
        lo = std::min(lo, pts_(idx_[i], d));
        hi = std::max(hi, pts_(idx_[i], d));
      }
      if (hi - lo > spread) {
        spread = hi - lo;
        axis = d;
      }
    }
    if (spread <= 0.0) return id; // all points coincide
    const int mid = begin + (end - begin) / 2;
    std::nth_element(idx_.begin() + begin, idx_.begin() + mid, idx_.begin() + end,
                     [&](int a, int b) { return pts_(a, axis) < pts_(b, axis); });
    const double split = pts_(idx_[mid], axis);
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(Search &s, int id, double rd) const {
    const Node &n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int p = idx_[i];
        const double d = distance2(p, s.q);
        if (d < s.best_d || (d == s.best_d && p < s.best)) {
          s.best_d = d;
          s.best = p;
        }
      }
      return;
    }
    const double diff = s.q[n.axis] - n.split;
    const int near = diff <= 0.0 ? n.left : n.right;
    const int far = diff <= 0.0 ? n.right : n.left;
    search(s, near, rd);
    const double old = s.off[n.axis];
    const double far_rd = rd - old * old + diff * diff;
    // The slack covers rounding in the running bound, which is updated by
    // subtraction and can drift by a few ulps of its summands.
    if (far_rd <= s.best_d + kSlack * (s.best_d + rd + old * old + diff * diff)) {
      s.off[n.axis] = diff;
      search(s, far, far_rd);
      s.off[n.axis] = old;
    }
  }

  RowMatrix pts_;
  int leaf_;
  std::vector<int> idx_;
  std::vector<Node> nodes_;
};

} // namespace rematch
