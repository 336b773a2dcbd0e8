#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "hetpfl/errors.hpp"

namespace hetpfl {

/// A point in the two-objective space (minimization in both coordinates).
struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2& a, const Point2& b) { return a.x == b.x && a.y == b.y; }
};

/// Reference point bounding the dominated region; both coordinates > 0.
struct RefPoint {
    double x = 1.0;
    double y = 1.0;
};

/// True iff a dominates b: a <= b component-wise and a != b.
inline bool dominates(const Point2& a, const Point2& b) {
    return a.x <= b.x && a.y <= b.y && (a.x < b.x || a.y < b.y);
}

/**
 * Non-dominated subset. Duplicates collapse to one representative. The
 * result is sorted by x ascending (hence y strictly descending).
 */
inline std::vector<Point2> pareto_filter(std::vector<Point2> pts) {
    std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    std::vector<Point2> front;
    double best_y = std::numeric_limits<double>::infinity();
    for (const Point2& p : pts) {
        if (!front.empty() && front.back().x == p.x) continue;  // keep lowest y per x
        if (p.y < best_y) {
            front.push_back(p);
            best_y = p.y;
        }
    }
    return front;
}

namespace detail {

/// Clip into the reference box: coordinates below 0 go to 0; points with any
/// coordinate at or beyond the reference contribute nothing and are dropped.
inline std::vector<Point2> clip_to_box(const std::vector<Point2>& pts, RefPoint r) {
    std::vector<Point2> out;
    out.reserve(pts.size());
    for (Point2 p : pts) {
        p.x = std::max(p.x, 0.0);
        p.y = std::max(p.y, 0.0);
        if (p.x >= r.x || p.y >= r.y) continue;
        out.push_back(p);
    }
    return out;
}

}  // namespace detail

/**
 * Exact 2-d hypervolume of a point set w.r.t. reference point r: the area of
 * the union of boxes [p, r] over all points. Dominance-filtered coordinate
 * sweep, so hv_2d(S) == hv_2d(pareto_filter(S)) bit-exactly.
 */
inline double hv_2d(const std::vector<Point2>& pts, RefPoint r = {}) {
    if (!(r.x > 0.0) || !(r.y > 0.0)) throw ContractError("hv_2d: reference must be positive");
    std::vector<Point2> front = pareto_filter(detail::clip_to_box(pts, r));
    double area = 0.0;
    for (std::size_t i = 0; i < front.size(); ++i) {
        double x_next = i + 1 < front.size() ? front[i + 1].x : r.x;
        area += (x_next - front[i].x) * (r.y - front[i].y);
    }
    return area;
}

/// Hypervolume contribution of point i: hv(batch) - hv(batch without i).
/// Exactly 0 for dominated points and for points duplicated elsewhere.
inline double hvc(std::size_t i, const std::vector<Point2>& batch, RefPoint r = {}) {
    if (i >= batch.size()) throw ContractError("hvc: index out of range");
    std::vector<Point2> rest;
    rest.reserve(batch.size() - 1);
    for (std::size_t j = 0; j < batch.size(); ++j)
        if (j != i) rest.push_back(batch[j]);
    return hv_2d(batch, r) - hv_2d(rest, r);
}

}  // namespace hetpfl
