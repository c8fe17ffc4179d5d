#pragma once

#include <string>
#include <vector>

#include "s2m/geometry.hpp"

namespace s2m {

struct Viewpoint {
  Vec3 eye;                      // unit direction from object center to camera
  Vec3 up;                       // orthogonalized against eye
  double ortho_half_extent = 0.5;
  int image_size = 64;

  Vec3 right() const { return up.cross(eye).normalized(); }
};

// Orthographic camera at center + eye, looking back at the center.
// up hint is world +z, with a fixed fallback for (near-)polar views.
Viewpoint make_viewpoint(const Vec3& eye_dir, double half_extent, int image_size);

enum class ViewpointCount { kTwelve, kFourteen };

// The 12 vertices of a regular icosahedron inscribed in the unit sphere in a
// fixed canonical orientation; kFourteen appends the +-z poles.
std::vector<Viewpoint> icosahedron_viewpoints(ViewpointCount mode, double half_extent,
                                              int image_size);

// Index of the view best aligned with the slanted front direction
// (0, -sin 30deg, cos 30deg).
int default_front_view_index(const std::vector<Viewpoint>& views);

// One viewpoint's depth(1)+normal(3)+mask(1) maps. Background pixels carry
// depth +1 (farthest) and zero normal. Depth is the axis distance mapped so
// the [center-extent, center+extent] slab spans [-1,1], camera side at -1.
struct ViewMap25D {
  int size = 0;
  std::vector<double> depth;    // size*size
  std::vector<double> normal;   // 3 planes of size*size (camera frame x,y,z)
  std::vector<double> mask;     // size*size in [0,1]
  Viewpoint viewpoint;

  int64_t pix(int y, int x) const { return static_cast<int64_t>(y) * size + x; }
  void validate() const;  // ViewMap25D invariants
};

ViewMap25D render_view25d(const TriMesh& mesh, const Viewpoint& vp);

struct SketchThresholds {
  double depth_step = 0.05;           // normalized depth discontinuity
  double normal_angle_deg = 30.0;     // crease threshold
};

// Binary line image: silhouette edges, depth discontinuities and creases.
std::vector<double> render_sketch_proxy(const ViewMap25D& view, const SketchThresholds& th);

// ---- file formats ----
// 2.5D map: magic "S2M25D1", u32 width, u32 height, u8 channels=5, float32 LE
// planes in order depth, nx, ny, nz, mask. Sketch: "S2MSKT1" with channels=1.
void save_view25d(const ViewMap25D& v, const std::string& path);
ViewMap25D load_view25d(const std::string& path);
void save_sketch(const std::vector<double>& img, int size, const std::string& path);
std::vector<double> load_sketch(const std::string& path, int* size_out);

}  // namespace s2m
