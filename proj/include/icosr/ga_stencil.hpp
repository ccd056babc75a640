#pragma once

#include <array>
#include <cstdint>

namespace icosr {

// The geometry-aligned convolution stencil.
//
// A conv layer owns 13 conceptual weights per (out,in) channel pair. Both row
// orientations read a 5x3 window (row offsets -2..2, col offsets -1..1) of
// the panel layout; 10 window cells are live faces and 5 are masked out per
// orientation. The remaining 3 conceptual taps sit on the center face's
// vertices: each distributes w/4 onto the 4 live window faces incident to
// that vertex. The same 13 positions, laid out on the triangulation plane,
// form one translation-congruent stencil for both orientations, which is what
// lets the two kernels share weights without rotation. The table below is
// the single source of truth; the congruence and layout-vs-calltable
// equivalence tests pin its geometry.
struct GaTap {
  bool up_is_vertex;
  std::array<std::array<int8_t, 2>, 4> up;  // {dr, dc} window offsets; only [0] is used for a face tap
  int8_t up_corner;                         // corner role of the vertex (see IcosphereGrid::Face), -1 for face taps
  bool down_is_vertex;
  std::array<std::array<int8_t, 2>, 4> down;
  int8_t down_corner;
};

inline constexpr int kGaTapCount = 13;
inline constexpr int kGaFaceTapCount = 10;
inline constexpr int kGaCenterTap = 6;
inline constexpr int kGaWindowRows = 5;  // row offsets -2..2
inline constexpr int kGaWindowCols = 3;  // col offsets -1..1

namespace detail {
using P = std::array<int8_t, 2>;
inline constexpr std::array<P, 4> one(int8_t r, int8_t c) { return {P{r, c}, P{0, 0}, P{0, 0}, P{0, 0}}; }
}  // namespace detail

inline constexpr std::array<GaTap, kGaTapCount> kGaTaps = {{
    // 0
    {false, detail::one(-2, 0), -1, false, detail::one(-2, 0), -1},
    // 1
    {false, detail::one(-2, 1), -1, false, detail::one(-2, 1), -1},
    // 2: down orientation's apex vertex
    {false, detail::one(-1, 0), -1, true,
     {detail::P{-1, 0}, detail::P{-1, 1}, detail::P{-2, 0}, detail::P{-2, 1}}, 2},
    // 3: up orientation's first base vertex
    {true, {detail::P{-2, 0}, detail::P{0, -1}, detail::P{-1, 0}, detail::P{1, -1}}, 0, false,
     detail::one(-1, 0), -1},
    // 4: up orientation's second base vertex
    {true, {detail::P{-2, 1}, detail::P{0, 1}, detail::P{-1, 0}, detail::P{1, 0}}, 2, false,
     detail::one(-1, 1), -1},
    // 5
    {false, detail::one(0, -1), -1, false, detail::one(0, -1), -1},
    // 6: center
    {false, detail::one(0, 0), -1, false, detail::one(0, 0), -1},
    // 7
    {false, detail::one(0, 1), -1, false, detail::one(0, 1), -1},
    // 8: down orientation's first base vertex
    {false, detail::one(1, -1), -1, true,
     {detail::P{1, 0}, detail::P{0, -1}, detail::P{2, -1}, detail::P{-1, 0}}, 0},
    // 9: down orientation's second base vertex
    {false, detail::one(1, 0), -1, true,
     {detail::P{1, 0}, detail::P{-1, 1}, detail::P{0, 1}, detail::P{2, 0}}, 1},
    // 10: up orientation's apex vertex
    {true, {detail::P{1, -1}, detail::P{1, 0}, detail::P{2, -1}, detail::P{2, 0}}, 1, false,
     detail::one(1, 0), -1},
    // 11
    {false, detail::one(2, -1), -1, false, detail::one(2, -1), -1},
    // 12
    {false, detail::one(2, 0), -1, false, detail::one(2, 0), -1},
}};

// 5x3 live-position mask for one orientation; exactly 10 ones.
inline std::array<std::array<bool, 3>, 5> ga_mask(bool up) {
  std::array<std::array<bool, 3>, 5> m{};
  for (const auto& tap : kGaTaps) {
    const bool is_vertex = up ? tap.up_is_vertex : tap.down_is_vertex;
    if (is_vertex) continue;
    const auto& pos = up ? tap.up[0] : tap.down[0];
    m[pos[0] + 2][pos[1] + 1] = true;
  }
  return m;
}

}  // namespace icosr
