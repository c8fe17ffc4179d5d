#include "s2m/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <vector>

namespace s2m {

namespace {

double sq_dist(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

// Uniform hash grid over the target cloud's bounding box. Expanding-shell
// queries terminate once the shell's lower-bound distance exceeds the best
// hit, so the reported minimum is exact.
class NnGrid {
 public:
  explicit NnGrid(const std::vector<Vec3>& pts) : pts_(pts) {
    lo_ = hi_ = pts[0];
    for (const Vec3& p : pts) {
      lo_.x = std::min(lo_.x, p.x); lo_.y = std::min(lo_.y, p.y); lo_.z = std::min(lo_.z, p.z);
      hi_.x = std::max(hi_.x, p.x); hi_.y = std::max(hi_.y, p.y); hi_.z = std::max(hi_.z, p.z);
    }
    const double ext = std::max({hi_.x - lo_.x, hi_.y - lo_.y, hi_.z - lo_.z, 1e-12});
    res_ = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(pts.size()) / 2.0)));
    cell_ = ext / res_;
    cells_.assign(static_cast<size_t>(res_) * res_ * res_, {});
    for (int i = 0; i < static_cast<int>(pts.size()); ++i)
      cells_[cell_index(cell_of(pts[static_cast<size_t>(i)]))].push_back(i);
  }

  double min_sq_dist(const Vec3& q) const {
    const auto [qi, qj, qk] = cell_of(q);
    double best = std::numeric_limits<double>::infinity();
    for (int ring = 0;; ++ring) {
      // lower bound for cells at Chebyshev distance `ring` from the query cell
      if (ring > 0) {
        const double lb = (ring - 1) * cell_;
        if (lb > 0 && lb * lb > best) break;
        if (ring > res_ + 1) break;
      }
      bool any_cell = false;
      for (int dk = -ring; dk <= ring; ++dk)
        for (int dj = -ring; dj <= ring; ++dj)
          for (int di = -ring; di <= ring; ++di) {
            if (std::max({std::abs(di), std::abs(dj), std::abs(dk)}) != ring) continue;
            const int ci = qi + di, cj = qj + dj, ck = qk + dk;
            if (ci < 0 || ci >= res_ || cj < 0 || cj >= res_ || ck < 0 || ck >= res_) continue;
            any_cell = true;
            for (int idx : cells_[cell_index({ci, cj, ck})])
              best = std::min(best, sq_dist(q, pts_[static_cast<size_t>(idx)]));
          }
      if (!any_cell && ring > res_) break;
    }
    return best;
  }

 private:
  std::tuple<int, int, int> cell_of(const Vec3& p) const {
    auto clampi = [&](double v) {
      return std::min(res_ - 1, std::max(0, static_cast<int>(v)));
    };
    return {clampi((p.x - lo_.x) / cell_), clampi((p.y - lo_.y) / cell_),
            clampi((p.z - lo_.z) / cell_)};
  }
  size_t cell_index(const std::tuple<int, int, int>& c) const {
    return (static_cast<size_t>(std::get<2>(c)) * res_ + std::get<1>(c)) * res_ + std::get<0>(c);
  }

  const std::vector<Vec3>& pts_;
  Vec3 lo_, hi_;
  int res_ = 1;
  double cell_ = 1;
  std::vector<std::vector<int>> cells_;
};

double directed_sum(const std::vector<Vec3>& from, const NnGrid& to) {
  double s = 0;
  for (const Vec3& p : from) s += to.min_sq_dist(p);
  return s;
}

}  // namespace

std::string EvalReport::line() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "metric=%s value=%.9g samples=%d seed=%llu", metric.c_str(),
                value, samples, static_cast<unsigned long long>(seed));
  return buf;
}

double chamfer_point_cloud(const PointCloud& a, const PointCloud& b) {
  if (a.points.empty() || b.points.empty())
    throw std::runtime_error("chamfer: empty point cloud");
  NnGrid ga(a.points), gb(b.points);
  return directed_sum(a.points, gb) / static_cast<double>(a.points.size()) +
         directed_sum(b.points, ga) / static_cast<double>(b.points.size());
}

double chamfer_point_cloud_brute(const PointCloud& a, const PointCloud& b) {
  if (a.points.empty() || b.points.empty())
    throw std::runtime_error("chamfer: empty point cloud");
  auto directed = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double s = 0;
    for (const Vec3& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : to) best = std::min(best, sq_dist(p, q));
      s += best;
    }
    return s;
  };
  return directed(a.points, b.points) / static_cast<double>(a.points.size()) +
         directed(b.points, a.points) / static_cast<double>(b.points.size());
}

EvalReport chamfer_mesh(const TriMesh& pred, const TriMesh& gt, int samples, uint64_t seed) {
  const PointCloud pa = sample_surface(pred, samples, seed);
  const PointCloud pb = sample_surface(gt, samples, seed);
  EvalReport r;
  r.metric = "mesh_chamfer";
  r.value = chamfer_point_cloud(pa, pb);
  r.samples = samples;
  r.seed = seed;
  r.note = "CD(A,B) = mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2, squared normalized units";
  return r;
}

double voxel_iou(const VoxelGrid& a, const VoxelGrid& b) {
  if (a.n != b.n)
    throw std::runtime_error("voxel_iou: resolution mismatch " + std::to_string(a.n) + " vs " +
                             std::to_string(b.n));
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.occupancy.size(); ++i) {
    const bool av = a.occupancy[i] != 0, bv = b.occupancy[i] != 0;
    inter += av && bv;
    uni += av || bv;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace s2m
