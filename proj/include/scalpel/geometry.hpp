#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace scalpel {

struct Point {
  double x = 0;
  double y = 0;
  bool operator==(const Point&) const = default;
};

/// Closed polygon; the last vertex connects back to the first.
using Polygon = std::vector<Point>;

/// Row-major binary mask.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> bits;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), bits(static_cast<size_t>(h) * w, 0) {}

  uint8_t& at(int y, int x) { return bits[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return bits[static_cast<size_t>(y) * width + x]; }
  int64_t count() const;
  bool operator==(const Mask&) const = default;
};

/// Absolute shoelace area.
double polygon_area(const Polygon& poly);
double polygon_perimeter(const Polygon& poly);

/// Pixel (x, y) is set iff its centre (x + 0.5, y + 0.5) lies inside the
/// polygon under the even-odd rule or on its boundary. Counting the boundary
/// as inside keeps the rule symmetric under mirroring. Parts outside the
/// image are clipped; a zero-area polygon yields an empty mask and a warning.
Mask rasterize(const Polygon& poly, int height, int width);

/// Union of the per-polygon rasterizations.
Mask rasterize_all(std::span<const Polygon> polys, int height, int width);

/// Number of pixel centres the rasterizer would set, without clipping.
int64_t count_centres_inside(const Polygon& poly);

/// Traces every boundary loop of the mask along pixel edges and joins them
/// into one even-odd polygon through zero-width doubled bridges, so holes and
/// separate components survive. When the vertex count exceeds max_vertices,
/// vertices are removed greedily by the exact change in mismatched pixels
/// each removal causes; removals that cost nothing always happen. Vertices
/// stay on integer coordinates. Returns an empty polygon for an empty mask.
Polygon trace_mask(const Mask& mask, int max_vertices);

Mask mirror_horizontal(const Mask& mask);

}  // namespace scalpel
