#include "scalpel/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "scalpel/log.hpp"

namespace scalpel {

int64_t Mask::count() const {
  int64_t n = 0;
  for (uint8_t b : bits) n += b != 0;
  return n;
}

double polygon_area(const Polygon& poly) {
  double twice = 0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) / 2.0;
}

double polygon_perimeter(const Polygon& poly) {
  double p = 0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    p += std::hypot(b.x - a.x, b.y - a.y);
  }
  return p;
}

namespace {

// Calls fn(y, x_first, x_last) for disjoint, ascending runs of pixel centres
// in the closed polygon region on rows [y_lo, y_hi]. Runs are not clipped
// horizontally.
template <typename Fn>
void scan_polygon(const Polygon& poly, int64_t y_lo, int64_t y_hi, Fn&& fn) {
  std::vector<double> xs;
  std::vector<std::pair<double, double>> spans;
  const size_t n = poly.size();
  for (int64_t y = y_lo; y <= y_hi; ++y) {
    const double yc = static_cast<double>(y) + 0.5;
    xs.clear();
    spans.clear();
    for (size_t i = 0; i < n; ++i) {
      const Point& a = poly[i];
      const Point& b = poly[(i + 1) % n];
      if ((a.y <= yc) != (b.y <= yc)) xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
      // Boundary pieces lying exactly on the row.
      if (a.y == yc) {
        if (b.y == yc) spans.emplace_back(std::min(a.x, b.x), std::max(a.x, b.x));
        else spans.emplace_back(a.x, a.x);
      }
    }
    std::sort(xs.begin(), xs.end());
    for (size_t k = 0; k + 1 < xs.size(); k += 2) spans.emplace_back(xs[k], xs[k + 1]);
    std::sort(spans.begin(), spans.end());
    int64_t run_first = 0, run_last = -1;
    bool open = false;
    for (const auto& [lo, hi] : spans) {
      const auto first = static_cast<int64_t>(std::ceil(lo - 0.5));
      const auto last = static_cast<int64_t>(std::floor(hi - 0.5));
      if (first > last) continue;
      if (open && first <= run_last + 1) {
        run_last = std::max(run_last, last);
        continue;
      }
      if (open) fn(y, run_first, run_last);
      run_first = first;
      run_last = last;
      open = true;
    }
    if (open) fn(y, run_first, run_last);
  }
}

std::pair<double, double> y_extent(const Polygon& poly) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Point& p : poly) {
    lo = std::min(lo, p.y);
    hi = std::max(hi, p.y);
  }
  return {lo, hi};
}

void rasterize_into(const Polygon& poly, Mask& mask) {
  if (poly.size() < 3) return;
  auto [lo, hi] = y_extent(poly);
  const int64_t y_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(lo - 0.5)));
  const int64_t y_hi =
      std::min<int64_t>(mask.height - 1, static_cast<int64_t>(std::ceil(hi - 0.5)));
  scan_polygon(poly, y_lo, y_hi, [&mask](int64_t y, int64_t x0, int64_t x1) {
    x0 = std::max<int64_t>(x0, 0);
    x1 = std::min<int64_t>(x1, mask.width - 1);
    for (int64_t x = x0; x <= x1; ++x) mask.at(static_cast<int>(y), static_cast<int>(x)) = 1;
  });
}

// No enclosed region at all. A self-intersecting outline whose signed parts
// cancel (shoelace area 0) still covers pixels, so it is not degenerate.
bool collinear(const Polygon& poly) {
  const Point& a = poly[0];
  size_t k = 1;
  while (k < poly.size() && poly[k] == a) ++k;
  if (k == poly.size()) return true;
  const Point& b = poly[k];
  for (const Point& c : poly)
    if ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x) != 0.0) return false;
  return true;
}

}  // namespace

Mask rasterize(const Polygon& poly, int height, int width) {
  Mask mask(height, width);
  if (poly.size() >= 3 && collinear(poly)) {
    log_warning("rasterize: degenerate polygon with zero area");
    return mask;
  }
  rasterize_into(poly, mask);
  return mask;
}

Mask rasterize_all(std::span<const Polygon> polys, int height, int width) {
  Mask mask(height, width);
  for (const Polygon& p : polys) {
    Mask one = rasterize(p, height, width);
    for (size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] |= one.bits[i];
  }
  return mask;
}

int64_t count_centres_inside(const Polygon& poly) {
  if (poly.size() < 3) return 0;
  auto [lo, hi] = y_extent(poly);
  int64_t total = 0;
  scan_polygon(poly, static_cast<int64_t>(std::floor(lo - 0.5)),
               static_cast<int64_t>(std::ceil(hi - 0.5)),
               [&total](int64_t, int64_t x0, int64_t x1) { total += x1 - x0 + 1; });
  return total;
}

namespace {

constexpr int kDx[4] = {1, 0, -1, 0};
constexpr int kDy[4] = {0, 1, 0, -1};

struct CrackEdge {
  int x, y;  // start vertex
  int dir;   // 0:+x 1:+y 2:-x 3:-y
  bool used = false;
};

std::vector<std::vector<Point>> trace_loops(const Mask& mask) {
  const int w = mask.width, h = mask.height;
  auto set = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && mask.at(y, x); };
  std::vector<CrackEdge> edges;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      if (!set(x, y - 1)) edges.push_back({x, y, 0});
      if (!set(x + 1, y)) edges.push_back({x + 1, y, 1});
      if (!set(x, y + 1)) edges.push_back({x + 1, y + 1, 2});
      if (!set(x - 1, y)) edges.push_back({x, y + 1, 3});
    }
  // Outgoing edges per lattice vertex (at most two, at pinch points).
  std::vector<std::array<int, 2>> out(static_cast<size_t>(w + 1) * (h + 1), {-1, -1});
  auto vid = [w](int x, int y) { return static_cast<size_t>(y) * (w + 1) + x; };
  for (int i = 0; i < static_cast<int>(edges.size()); ++i) {
    auto& slot = out[vid(edges[i].x, edges[i].y)];
    (slot[0] < 0 ? slot[0] : slot[1]) = i;
  }

  std::vector<std::vector<Point>> loops;
  for (size_t start = 0; start < edges.size(); ++start) {
    if (edges[start].used) continue;
    std::vector<int> dirs;
    std::vector<Point> pts;
    int cur = static_cast<int>(start);
    while (cur >= 0) {
      CrackEdge& e = edges[cur];
      e.used = true;
      pts.push_back({static_cast<double>(e.x), static_cast<double>(e.y)});
      dirs.push_back(e.dir);
      const int ex = e.x + kDx[e.dir], ey = e.y + kDy[e.dir];
      int next = -1;
      // Prefer turning toward the interior (right), then straight, then left.
      for (int turn : {1, 0, 3}) {
        const int want = (e.dir + turn) % 4;
        for (int cand : out[vid(ex, ey)]) {
          if (cand >= 0 && !edges[cand].used && edges[cand].dir == want) {
            next = cand;
            break;
          }
        }
        if (next >= 0) break;
      }
      cur = next;
    }
    // Keep only corners.
    std::vector<Point> corners;
    const size_t n = pts.size();
    for (size_t i = 0; i < n; ++i) {
      if (dirs[(i + n - 1) % n] != dirs[i]) corners.push_back(pts[i]);
    }
    if (corners.size() >= 3) loops.push_back(std::move(corners));
  }
  return loops;
}

Polygon bridge_loops(const std::vector<std::vector<Point>>& loops) {
  Polygon poly(loops[0]);
  const Point anchor = loops[0][0];
  for (size_t j = 1; j < loops.size(); ++j) {
    const Point& w0 = loops[j][0];
    const Point corner{w0.x, anchor.y};
    poly.push_back(anchor);
    poly.push_back(corner);
    poly.insert(poly.end(), loops[j].begin(), loops[j].end());
    poly.push_back(w0);
    poly.push_back(corner);
  }
  // Drop consecutive duplicates, including across the wrap.
  Polygon out;
  for (const Point& p : poly)
    if (out.empty() || !(out.back() == p)) out.push_back(p);
  while (out.size() > 1 && out.back() == out.front()) out.pop_back();
  return out;
}

// Greedy budgeted vertex removal against the traced mask. Removing v can
// only change pixels whose centres lie in the closed bounding box of
// (prev, v, next), so the exact change in mismatches is found by re-scanning
// those rows of the polygon with and without v.
Polygon simplify(const Polygon& poly, const Mask& target, int max_vertices) {
  const int n = static_cast<int>(poly.size());
  std::vector<int> prev(n), next(n);
  std::vector<char> alive(n, 1);
  std::vector<int64_t> cost(n);
  for (int i = 0; i < n; ++i) {
    prev[i] = (i + n - 1) % n;
    next[i] = (i + 1) % n;
  }
  int start = 0;
  Polygon cur, cand;
  auto mismatches = [&](const Polygon& p, int64_t y0, int64_t y1, int64_t x0, int64_t x1) {
    int64_t inside_target = 0, agree = 0;
    for (int64_t y = y0; y <= y1; ++y)
      for (int64_t x = x0; x <= x1; ++x) inside_target += target.at(static_cast<int>(y), static_cast<int>(x));
    scan_polygon(p, y0, y1, [&](int64_t y, int64_t a, int64_t b) {
      for (int64_t x = std::max(a, x0); x <= std::min(b, x1); ++x)
        agree += target.at(static_cast<int>(y), static_cast<int>(x)) ? 1 : -1;
    });
    return inside_target - agree;  // misses + false hits
  };
  auto eval = [&](int i) {
    const Point& a = poly[prev[i]];
    const Point& v = poly[i];
    const Point& b = poly[next[i]];
    const double lx = std::min({a.x, v.x, b.x}), hx = std::max({a.x, v.x, b.x});
    const double ly = std::min({a.y, v.y, b.y}), hy = std::max({a.y, v.y, b.y});
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(lx - 0.5)));
    const int64_t x1 = std::min<int64_t>(target.width - 1, static_cast<int64_t>(std::floor(hx - 0.5)));
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(ly - 0.5)));
    const int64_t y1 = std::min<int64_t>(target.height - 1, static_cast<int64_t>(std::floor(hy - 0.5)));
    if (x0 > x1 || y0 > y1) {
      cost[i] = 0;
      return;
    }
    cur.clear();
    cand.clear();
    int j = i;
    do {
      cur.push_back(poly[j]);
      if (j != i) cand.push_back(poly[j]);
      j = next[j];
    } while (j != i);
    cost[i] = mismatches(cand, y0, y1, x0, x1) - mismatches(cur, y0, y1, x0, x1);
  };
  for (int i = 0; i < n; ++i) eval(i);

  int count = n;
  while (count > 3) {
    int best = -1;
    for (int i = 0; i < n; ++i) {
      if (alive[i] && (best < 0 || cost[i] < cost[best])) best = i;
    }
    // Free removals always happen; paid ones only while over budget.
    if (cost[best] > 0 && count <= max_vertices) break;
    alive[best] = 0;
    --count;
    next[prev[best]] = next[best];
    prev[next[best]] = prev[best];
    if (best == start) start = next[best];
    eval(prev[best]);
    eval(next[best]);
  }
  Polygon out;
  int i = start;
  do {
    out.push_back(poly[i]);
    i = next[i];
  } while (i != start);
  return out;
}

}  // namespace

Polygon trace_mask(const Mask& mask, int max_vertices) {
  auto loops = trace_loops(mask);
  if (loops.empty()) return {};
  Polygon poly = bridge_loops(loops);
  return simplify(poly, mask, std::max(3, max_vertices));
}

Mask mirror_horizontal(const Mask& mask) {
  Mask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) out.at(y, mask.width - 1 - x) = mask.at(y, x);
  return out;
}

}  // namespace scalpel
