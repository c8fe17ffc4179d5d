#include "s2m/marching_cubes.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "mc_tables.inc"

namespace s2m {

namespace {

// Corner offsets in the Bourke numbering (0-3 bottom ring, 4-7 top ring).
const int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                           {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
// Edge -> (corner, corner)
const int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

constexpr double kPadValue = 0.0;  // outside for inside=1 occupancy at iso 0.5

}  // namespace

ScalarField ScalarField::from_grid(const VoxelGrid& g) {
  ScalarField f(g.n);
  for (size_t i = 0; i < g.occupancy.size(); ++i) f.values[i] = g.occupancy[i] ? 1.0 : 0.0;
  return f;
}

VoxelGrid ScalarField::threshold_grid(double iso_level) const {
  VoxelGrid g(n);
  for (size_t i = 0; i < values.size(); ++i) g.occupancy[i] = values[i] > iso_level ? 1 : 0;
  return g;
}

TriMesh marching_cubes(const ScalarField& field, double threshold) {
  const int n = field.n;
  if (n < 2) throw std::runtime_error("marching_cubes: resolution must be >= 2");
  // Padded lattice: sample index -1..n maps to li = idx+1 in 0..n+1.
  const int L = n + 2;
  auto sample = [&](int li, int lj, int lk) -> double {
    const int i = li - 1, j = lj - 1, k = lk - 1;
    if (i < 0 || i >= n || j < 0 || j >= n || k < 0 || k >= n) return kPadValue;
    return field.at(i, j, k);
  };
  auto sample_pos = [&](int li, int lj, int lk) -> Vec3 {
    return {(li - 1 + 0.5) / n, (lj - 1 + 0.5) / n, (lk - 1 + 0.5) / n};
  };

  TriMesh mesh;
  std::unordered_map<int64_t, int> edge_vertex;  // global lattice-edge id -> vertex index

  auto edge_key = [&](int li, int lj, int lk, int axis) -> int64_t {
    return ((static_cast<int64_t>(li) * L + lj) * L + lk) * 3 + axis;
  };

  auto vertex_on_edge = [&](int li, int lj, int lk, int li2, int lj2, int lk2) -> int {
    // canonical edge: min corner + axis
    int axis = li2 != li ? 0 : (lj2 != lj ? 1 : 2);
    int bi = std::min(li, li2), bj = std::min(lj, lj2), bk = std::min(lk, lk2);
    const int64_t key = edge_key(bi, bj, bk, axis);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double v1 = sample(bi, bj, bk);
    const double v2 = sample(bi + (axis == 0), bj + (axis == 1), bk + (axis == 2));
    const Vec3 p1 = sample_pos(bi, bj, bk);
    const Vec3 p2 = sample_pos(bi + (axis == 0), bj + (axis == 1), bk + (axis == 2));
    const double t = (threshold - v1) / (v2 - v1);  // crossing edges have v1 != v2 sides
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p1 + (p2 - p1) * t);
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int lk = 0; lk + 1 < L; ++lk) {
    for (int lj = 0; lj + 1 < L; ++lj) {
      for (int li = 0; li + 1 < L; ++li) {
        int cube_index = 0;
        double cv[8];
        for (int c = 0; c < 8; ++c) {
          cv[c] = sample(li + kCorner[c][0], lj + kCorner[c][1], lk + kCorner[c][2]);
          if (cv[c] > threshold) cube_index |= 1 << c;  // inside = strictly above
        }
        if (kEdgeTable[cube_index] == 0) continue;
        int ev[12];
        for (int e = 0; e < 12; ++e) {
          if (!(kEdgeTable[cube_index] & (1 << e))) continue;
          const int* c1 = kCorner[kEdgeCorner[e][0]];
          const int* c2 = kCorner[kEdgeCorner[e][1]];
          ev[e] = vertex_on_edge(li + c1[0], lj + c1[1], lk + c1[2], li + c2[0], lj + c2[1],
                                 lk + c2[2]);
        }
        for (int t = 0; kTriTable[cube_index][t] != -1; t += 3) {
          // Bourke's winding with inside = bit-set yields inward normals for
          // occupancy fields; flip to point toward lower values (outward).
          const int a = ev[kTriTable[cube_index][t]];
          const int b = ev[kTriTable[cube_index][t + 2]];
          const int c = ev[kTriTable[cube_index][t + 1]];
          if (a == b || b == c || a == c) continue;  // collapsed after welding
          mesh.faces.push_back({a, b, c});
        }
      }
    }
  }
  return mesh;
}

TriMesh laplacian_smooth(const TriMesh& mesh, int iterations, double lambda) {
  TriMesh out = mesh;
  std::vector<std::vector<int>> nbr(mesh.vertices.size());
  for (const auto& f : mesh.faces)
    for (int i = 0; i < 3; ++i) {
      nbr[static_cast<size_t>(f[static_cast<size_t>(i)])].push_back(
          f[static_cast<size_t>((i + 1) % 3)]);
      nbr[static_cast<size_t>(f[static_cast<size_t>(i)])].push_back(
          f[static_cast<size_t>((i + 2) % 3)]);
    }
  for (int it = 0; it < iterations; ++it) {
    std::vector<Vec3> next = out.vertices;
    for (size_t v = 0; v < out.vertices.size(); ++v) {
      if (nbr[v].empty()) continue;
      Vec3 avg;
      for (int u : nbr[v]) avg += out.vertices[static_cast<size_t>(u)];
      avg = avg / static_cast<double>(nbr[v].size());
      next[v] = out.vertices[v] + (avg - out.vertices[v]) * lambda;
    }
    out.vertices = std::move(next);
  }
  return out;
}

void save_field(const ScalarField& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open field file for writing: " + path);
  os.write("S2MFLD1", 7);
  const uint32_t n = static_cast<uint32_t>(f.n);
  char nb[4];
  for (int i = 0; i < 4; ++i) nb[i] = static_cast<char>((n >> (8 * i)) & 0xff);
  os.write(nb, 4);
  std::vector<float> data(f.values.begin(), f.values.end());
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!os) throw std::runtime_error("write failure on field file: " + path);
}

ScalarField load_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open field file: " + path);
  char magic[7];
  is.read(magic, 7);
  if (!is || std::memcmp(magic, "S2MFLD1", 7) != 0)
    throw std::runtime_error("bad field file magic in " + path);
  unsigned char nb[4];
  is.read(reinterpret_cast<char*>(nb), 4);
  const uint32_t n = static_cast<uint32_t>(nb[0]) | (nb[1] << 8) | (nb[2] << 16) |
                     (static_cast<uint32_t>(nb[3]) << 24);
  ScalarField f(static_cast<int>(n));
  std::vector<float> data(f.values.size());
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!is) throw std::runtime_error("truncated field file: " + path);
  f.values.assign(data.begin(), data.end());
  return f;
}

}  // namespace s2m
