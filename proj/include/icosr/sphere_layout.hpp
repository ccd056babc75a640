#pragma once

#include <vector>

#include "icosr/core.hpp"
#include "icosr/ga_stencil.hpp"
#include "icosr/icosphere.hpp"
#include "icosr/image.hpp"

namespace icosr {

// Rectangular rearrangement of the icosphere faces: 5 panels of
// 2^(L+2) x 2^L cells, one per pair of stacked rhombi. Even rows (0-based)
// hold up faces, odd rows down faces. Convolutions pad each panel with a
// 2-row / 1-column halo whose sources are the sphere-adjacent faces across
// the panel seams.
struct LayoutMap {
  struct Cell {
    int16_t panel;
    int32_t row, col;
  };

  int level = 0;
  int panels = 5;
  int panel_height = 0;  // 2^(L+2)
  int panel_width = 0;   // 2^L
  std::vector<Cell> face_to_cell;
  std::vector<int32_t> cell_to_face;  // [panel][row][col]
  // Source spatial index (panel*H*W + row*W + col) for every cell of the
  // padded (H+4) x (W+2) grid, interior cells included.
  std::vector<int32_t> pad_src;  // [panel][(row+2)][(col+1)]

  int padded_height() const { return panel_height + 4; }
  int padded_width() const { return panel_width + 2; }

  int32_t face_at(int panel, int row, int col) const {
    return cell_to_face[(static_cast<size_t>(panel) * panel_height + row) * panel_width + col];
  }
  int32_t pad_source(int panel, int row, int col) const {  // row in [-2, H+2), col in [-1, W+1)
    return pad_src[(static_cast<size_t>(panel) * padded_height() + row + 2) * padded_width() + col + 1];
  }
};

// Multichannel values stored in panel layout, C x 5 x H x W.
template <typename T = float>
struct SphereTensor {
  const LayoutMap* layout = nullptr;
  int channels = 0;
  std::vector<T> values;

  SphereTensor() = default;
  SphereTensor(const LayoutMap& map, int C)
      : layout(&map),
        channels(C),
        values(static_cast<size_t>(C) * 5 * map.panel_height * map.panel_width, T(0)) {}

  size_t spatial_size() const { return static_cast<size_t>(5) * layout->panel_height * layout->panel_width; }

  T& at(int c, int panel, int row, int col) {
    return values[c * spatial_size() +
                  (static_cast<size_t>(panel) * layout->panel_height + row) * layout->panel_width + col];
  }
  T at(int c, int panel, int row, int col) const {
    return values[c * spatial_size() +
                  (static_cast<size_t>(panel) * layout->panel_height + row) * layout->panel_width + col];
  }
  T& at_face(int c, int face) {
    const auto& cell = layout->face_to_cell[face];
    return at(c, cell.panel, cell.row, cell.col);
  }
  T at_face(int c, int face) const {
    const auto& cell = layout->face_to_cell[face];
    return at(c, cell.panel, cell.row, cell.col);
  }

  bool all_finite() const {
    for (T v : values)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

// Per-panel padded buffer, C x 5 x (H+4) x (W+2).
template <typename T = float>
struct PaddedTensor {
  const LayoutMap* layout = nullptr;
  int channels = 0;
  std::vector<T> values;

  size_t plane() const { return static_cast<size_t>(layout->padded_height()) * layout->padded_width(); }
  T& at(int c, int panel, int row, int col) {  // row in [-2, H+2), col in [-1, W+1)
    return values[((static_cast<size_t>(c) * 5 + panel) * layout->padded_height() + row + 2) * layout->padded_width() +
                  col + 1];
  }
  T at(int c, int panel, int row, int col) const {
    return values[((static_cast<size_t>(c) * 5 + panel) * layout->padded_height() + row + 2) * layout->padded_width() +
                  col + 1];
  }
};

namespace detail {

// Chordal lattice step vectors of a face: e_u advances one cell row (i+1),
// e_w one cell column (j+1). Derived from the canonical corner roles.
inline void lattice_steps(const IcosphereGrid& g, int face, Vec3& e_u, Vec3& e_w) {
  const auto& f = g.faces[face];
  const Vec3& a = g.vertices[f.v[0]];
  const Vec3& b = g.vertices[f.v[1]];
  const Vec3& c = g.vertices[f.v[2]];
  if (f.up) {
    e_u = b - a;  // (i+1,j) - (i,j)
    e_w = c - a;  // (i,j+1) - (i,j)
  } else {
    e_w = b - a;  // (i+1,j+1) - (i+1,j)
    e_u = b - c;  // (i+1,j+1) - (i,j+1)
  }
}

inline bool faces_share_vertex(const IcosphereGrid& g, int fa, int fb) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (g.faces[fa].v[i] == g.faces[fb].v[j]) return true;
  return false;
}

}  // namespace detail

inline LayoutMap build_layout(const IcosphereGrid& grid) {
  LayoutMap map;
  map.level = grid.level;
  const int n = 1 << grid.level;
  map.panel_height = 4 * n;
  map.panel_width = n;
  const int H = map.panel_height, W = map.panel_width;

  map.face_to_cell.resize(grid.face_count());
  map.cell_to_face.assign(static_cast<size_t>(5) * H * W, -1);
  for (int f = 0; f < grid.face_count(); ++f) {
    const auto& face = grid.faces[f];
    const int strip = face.base / 4;
    const int m = face.base % 4;
    LayoutMap::Cell cell;
    if (m < 2) {  // top rhombus of strip p lives in panel p
      cell.panel = static_cast<int16_t>(strip);
      cell.row = 2 * face.cell_i + (face.up ? 0 : 1);
    } else {  // bottom rhombus of strip p lives in panel (p+1) % 5
      cell.panel = static_cast<int16_t>((strip + 1) % 5);
      cell.row = 2 * n + 2 * face.cell_i + (face.up ? 0 : 1);
    }
    cell.col = face.cell_j;
    map.face_to_cell[f] = cell;
    map.cell_to_face[(static_cast<size_t>(cell.panel) * H + cell.row) * W + cell.col] = f;
  }

  // Halo sources. Each halo cell's position is extrapolated along the local
  // face lattice from its clamped interior anchor, located on the sphere, and
  // repaired to the anchor's one-ring where the pentagonal corners leave no
  // true lattice continuation.
  map.pad_src.assign(static_cast<size_t>(5) * (H + 4) * (W + 2), -1);
  auto pad_entry = [&](int p, int r, int c) -> int32_t& {
    return map.pad_src[(static_cast<size_t>(p) * (H + 4) + r + 2) * (W + 2) + c + 1];
  };
  for (int p = 0; p < 5; ++p) {
    for (int r = -2; r < H + 2; ++r) {
      for (int c = -1; c < W + 1; ++c) {
        if (r >= 0 && r < H && c >= 0 && c < W) {
          pad_entry(p, r, c) = static_cast<int32_t>((static_cast<size_t>(p) * H + r) * W + c);
          continue;
        }
        const int r0 = std::clamp(r, 0, H - 1), c0 = std::clamp(c, 0, W - 1);
        const int anchor = map.cell_to_face[(static_cast<size_t>(p) * H + r0) * W + c0];
        // Lattice deltas in panel coordinates; a panel is one continuous
        // 2n-deep lattice, so row parity determines i and up/down.
        auto parity = [](int row) { return ((row % 2) + 2) % 2; };
        const int di = (r - parity(r)) / 2 - (r0 - parity(r0)) / 2;
        const int dj = c - c0;
        const int dpar = parity(r) - parity(r0);
        Vec3 e_u, e_w;
        detail::lattice_steps(grid, anchor, e_u, e_w);
        const Vec3 virt = grid.face_centers[anchor] + e_w * (dj + dpar / 3.0) + e_u * (di + dpar / 3.0);
        int src = grid.face_of_point(normalized(virt));
        if (src == anchor || !detail::faces_share_vertex(grid, src, anchor)) {
          // Pentagonal corner (or overshoot past a pole): repeat the nearest
          // existing adjacent face.
          double best = 1e30;
          int pick = -1;
          const Vec3 vn = normalized(virt);
          for (int k = 0; k < 3; ++k) {
            const int vid = grid.faces[anchor].v[k];
            const int m = grid.ring_size(vid);
            for (int q = 0; q < m; ++q) {
              const int cand = grid.ring_begin(vid)[q];
              if (cand == anchor) continue;
              const double d = norm(grid.face_centers[cand] - vn);
              if (d < best - 1e-15 || (d < best + 1e-15 && cand < pick)) {
                best = d;
                pick = cand;
              }
            }
          }
          src = pick;
        }
        const auto& cell = map.face_to_cell[src];
        pad_entry(p, r, c) = static_cast<int32_t>((static_cast<size_t>(cell.panel) * H + cell.row) * W + cell.col);
      }
    }
  }
  return map;
}

// Copy a tensor into per-panel padded buffers; halo values come from the
// pad table, interior values are unchanged. Pure gather.
template <typename T>
PaddedTensor<T> pad(const SphereTensor<T>& x) {
  const LayoutMap& map = *x.layout;
  PaddedTensor<T> out;
  out.layout = &map;
  out.channels = x.channels;
  out.values.resize(static_cast<size_t>(x.channels) * 5 * map.padded_height() * map.padded_width());
  const size_t spatial = x.spatial_size();
  size_t k = 0;
  for (int c = 0; c < x.channels; ++c) {
    const T* src = x.values.data() + c * spatial;
    for (size_t i = 0; i < map.pad_src.size(); ++i) out.values[k++] = src[map.pad_src[i]];
  }
  return out;
}

// SpherePHD-style per-face gather lists for the stencil, read off the padded
// layout so both convolution routes resolve seams and pentagons identically.
// Used as the correctness oracle and the memory baseline.
struct CallTable {
  struct Entry {
    // For each of the 13 stencil taps: 1 source face (face tap) or the 4
    // faces whose mean forms the imaginary vertex pixel (vertex tap).
    std::array<std::array<int32_t, 4>, kGaTapCount> taps;
    std::array<uint8_t, kGaTapCount> counts;
  };
  std::vector<Entry> entries;  // per face
};

inline CallTable build_calltable(const IcosphereGrid& grid, const LayoutMap& map,
                                 const std::array<GaTap, kGaTapCount>& stencil = kGaTaps) {
  CallTable table;
  table.entries.resize(grid.face_count());
  const int H = map.panel_height, W = map.panel_width;
  for (int f = 0; f < grid.face_count(); ++f) {
    const auto& cell = map.face_to_cell[f];
    const bool up = grid.faces[f].up;
    auto source = [&](int dr, int dc) {
      const int32_t spatial = map.pad_source(cell.panel, cell.row + dr, cell.col + dc);
      return map.cell_to_face[spatial];
    };
    (void)H;
    (void)W;
    auto& e = table.entries[f];
    for (int t = 0; t < kGaTapCount; ++t) {
      const auto& tap = stencil[t];
      const bool is_vertex = up ? tap.up_is_vertex : tap.down_is_vertex;
      const auto& pos = up ? tap.up : tap.down;
      if (is_vertex) {
        e.counts[t] = 4;
        for (int q = 0; q < 4; ++q) e.taps[t][q] = source(pos[q][0], pos[q][1]);
      } else {
        e.counts[t] = 1;
        e.taps[t][0] = source(pos[0][0], pos[0][1]);
        e.taps[t][1] = e.taps[t][2] = e.taps[t][3] = -1;
      }
    }
  }
  return table;
}

// Bilinear ERP sampling at the face centers. Input must be 2:1 (W = 2H);
// pixel (i,j) is centered at theta=(i+0.5)*pi/H, phi=(j+0.5)*2*pi/W - pi.
inline SphereTensor<float> sample_erp_to_sphere(const Image& erp, const IcosphereGrid& grid,
                                                const LayoutMap& map) {
  if (erp.width != 2 * erp.height) throw InvalidInputError("ERP input must have width = 2 * height");
  SphereTensor<float> out(map, erp.channels);
  for (int f = 0; f < grid.face_count(); ++f) {
    const SpherePoint s = SpherePoint::from_dir(grid.face_centers[f]);
    const double y = s.theta / kPi * erp.height;
    const double x = (s.phi + kPi) / (2.0 * kPi) * erp.width;
    for (int c = 0; c < erp.channels; ++c) out.at_face(c, f) = bilinear_wrap(erp, y, x, c);
  }
  return out;
}

// Analytic per-layer activation footprint of the two representations, in
// bytes of 32-bit storage. The call-table route stacks every stencil tap as
// an extra channel before each conv; the layout route only pays the halo.
struct MemoryReport {
  long long calltable_bytes = 0;
  long long layout_bytes = 0;
};

inline MemoryReport activation_memory_report(int level, int layers, int channels, int footprint = kGaTapCount - 1) {
  if (layers < 1 || channels < 1) throw InvalidInputError("activation_memory_report: layers and channels must be >= 1");
  if (level < 0 || level > 30) throw BoundsError("activation_memory_report: level out of range");
  MemoryReport r;
  const long long F = 20LL << (2 * level);
  const long long H = 4LL << level, W = 1LL << level;
  r.calltable_bytes = static_cast<long long>(layers) * (footprint + 1) * channels * 4 * F;
  r.layout_bytes = static_cast<long long>(layers) * channels * 4 * 5 * (H + 4) * (W + 2);
  return r;
}

}  // namespace icosr
