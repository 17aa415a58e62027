#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "rangeup/geometry.hpp"

namespace rangeup::detail {

// Exact nearest-neighbor search over a fixed point set. Median-split kd-tree
// built once per query batch; no approximation.
class KdTree {
public:
    explicit KdTree(const std::vector<Vec3>& points) : pts_(points) {
        index_.resize(pts_.size());
        for (std::size_t i = 0; i < index_.size(); ++i) index_[i] = i;
        nodes_.reserve(pts_.size() * 2);
        root_ = build(0, index_.size(), 0);
    }

    // Squared Euclidean distance to the nearest stored point.
    double nearest_sq(const Vec3& q) const {
        double best = std::numeric_limits<double>::infinity();
        search(root_, q, 0, best);
        return best;
    }

private:
    static constexpr int kLeafSize = 16;

    struct Node {
        double split = 0.0;
        int left = -1;
        int right = -1;
        std::size_t begin = 0;
        std::size_t end = 0; // leaf when end > begin
    };

    static double coord(const Vec3& p, int axis) {
        return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
    }

    int build(std::size_t begin, std::size_t end, int axis) {
        if (begin >= end) return -1;
        Node node;
        if (end - begin <= kLeafSize) {
            node.begin = begin;
            node.end = end;
            nodes_.push_back(node);
            return static_cast<int>(nodes_.size() - 1);
        }
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                         [&](std::size_t a, std::size_t b) {
                             return coord(pts_[a], axis) < coord(pts_[b], axis);
                         });
        node.split = coord(pts_[index_[mid]], axis);
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        const int next = (axis + 1) % 3;
        const int l = build(begin, mid, next);
        const int r = build(mid, end, next);
        nodes_[self].left = l;
        nodes_[self].right = r;
        return self;
    }

    void search(int id, const Vec3& q, int axis, double& best) const {
        if (id < 0) return;
        const Node& node = nodes_[id];
        if (node.end > node.begin) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const Vec3 d = pts_[index_[i]] - q;
                best = std::min(best, dot(d, d));
            }
            return;
        }
        const double delta = coord(q, axis) - node.split;
        const int next = (axis + 1) % 3;
        const int near = delta < 0.0 ? node.left : node.right;
        const int far = delta < 0.0 ? node.right : node.left;
        search(near, q, next, best);
        if (delta * delta < best) search(far, q, next, best);
    }

    const std::vector<Vec3>& pts_;
    std::vector<std::size_t> index_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

} // namespace rangeup::detail
