#pragma once

#include <vector>

#include "icosr/ga_stencil.hpp"
#include "icosr/sphere_layout.hpp"

namespace icosr {

// Geometry-aligned convolution layer: 13 conceptual weights per (out,in)
// channel pair (see ga_stencil.hpp) plus one bias per output channel. The
// same weight vector serves both row orientations.
template <typename T = float>
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<T> weights;  // [out][in][13]
  std::vector<T> bias;     // [out]

  ConvLayer() = default;
  ConvLayer(int in_c, int out_c)
      : in_channels(in_c),
        out_channels(out_c),
        weights(static_cast<size_t>(out_c) * in_c * kGaTapCount, T(0)),
        bias(out_c, T(0)) {}

  T& w(int o, int i, int t) { return weights[(static_cast<size_t>(o) * in_channels + i) * kGaTapCount + t]; }
  T w(int o, int i, int t) const { return weights[(static_cast<size_t>(o) * in_channels + i) * kGaTapCount + t]; }

  size_t parameter_count() const { return weights.size() + bias.size(); }
};

// Dense 5x3 kernels for the two row orientations, derived from the conceptual
// weights: face taps map to their window slot, vertex taps contribute w/4 to
// each of their 4 incident window slots, masked slots stay exactly zero.
template <typename T = float>
struct EquivalentKernel {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<T> dense;  // [out][in][orient(0=up,1=down)][5][3]

  T& at(int o, int i, int orient, int wr, int wc) {
    return dense[(((static_cast<size_t>(o) * in_channels + i) * 2 + orient) * kGaWindowRows + wr) * kGaWindowCols + wc];
  }
  T at(int o, int i, int orient, int wr, int wc) const {
    return dense[(((static_cast<size_t>(o) * in_channels + i) * 2 + orient) * kGaWindowRows + wr) * kGaWindowCols + wc];
  }
};

template <typename T>
EquivalentKernel<T> expand_kernel(const ConvLayer<T>& layer) {
  EquivalentKernel<T> k;
  k.in_channels = layer.in_channels;
  k.out_channels = layer.out_channels;
  k.dense.assign(static_cast<size_t>(layer.out_channels) * layer.in_channels * 2 * kGaWindowRows * kGaWindowCols,
                 T(0));
  for (int o = 0; o < layer.out_channels; ++o)
    for (int i = 0; i < layer.in_channels; ++i)
      for (int t = 0; t < kGaTapCount; ++t) {
        const T w = layer.w(o, i, t);
        const auto& tap = kGaTaps[t];
        if (tap.up_is_vertex) {
          for (int q = 0; q < 4; ++q) k.at(o, i, 0, tap.up[q][0] + 2, tap.up[q][1] + 1) += w / T(4);
        } else {
          k.at(o, i, 0, tap.up[0][0] + 2, tap.up[0][1] + 1) += w;
        }
        if (tap.down_is_vertex) {
          for (int q = 0; q < 4; ++q) k.at(o, i, 1, tap.down[q][0] + 2, tap.down[q][1] + 1) += w / T(4);
        } else {
          k.at(o, i, 1, tap.down[0][0] + 2, tap.down[0][1] + 1) += w;
        }
      }
  return k;
}

// Adjoint of expand_kernel: fold dense-kernel gradients back onto the 13
// conceptual weights.
template <typename TG, typename T>
void fold_kernel_grad(const EquivalentKernel<TG>& dense_grad, ConvLayer<T>& grad_out) {
  for (int o = 0; o < grad_out.out_channels; ++o)
    for (int i = 0; i < grad_out.in_channels; ++i)
      for (int t = 0; t < kGaTapCount; ++t) {
        const auto& tap = kGaTaps[t];
        double g = 0.0;
        if (tap.up_is_vertex) {
          for (int q = 0; q < 4; ++q) g += dense_grad.at(o, i, 0, tap.up[q][0] + 2, tap.up[q][1] + 1) / 4.0;
        } else {
          g += dense_grad.at(o, i, 0, tap.up[0][0] + 2, tap.up[0][1] + 1);
        }
        if (tap.down_is_vertex) {
          for (int q = 0; q < 4; ++q) g += dense_grad.at(o, i, 1, tap.down[q][0] + 2, tap.down[q][1] + 1) / 4.0;
        } else {
          g += dense_grad.at(o, i, 1, tap.down[0][0] + 2, tap.down[0][1] + 1);
        }
        grad_out.w(o, i, t) = static_cast<T>(g);
      }
}

// Forward pass: pad with the 2x1 halo, run the up kernel on even rows and the
// down kernel on odd rows, add bias. Spatial shape is preserved.
template <typename T>
SphereTensor<T> conv_forward(const SphereTensor<T>& x, const ConvLayer<T>& layer,
                             const EquivalentKernel<T>* precomputed = nullptr) {
  if (x.channels != layer.in_channels) throw ShapeError("conv_forward: channel mismatch");
  const LayoutMap& map = *x.layout;
  const EquivalentKernel<T> local = precomputed ? EquivalentKernel<T>{} : expand_kernel(layer);
  const EquivalentKernel<T>& k = precomputed ? *precomputed : local;

  const PaddedTensor<T> px = pad(x);
  SphereTensor<T> y(map, layer.out_channels);
  const int H = map.panel_height, W = map.panel_width;
  const int PW = map.padded_width();
  const size_t plane = px.plane();
  std::vector<double> acc(W);
  for (int o = 0; o < layer.out_channels; ++o)
    for (int p = 0; p < 5; ++p)
      for (int r = 0; r < H; ++r) {
        const int orient = r % 2;
        std::fill(acc.begin(), acc.end(), static_cast<double>(layer.bias[o]));
        for (int i = 0; i < layer.in_channels; ++i) {
          const T* base = px.values.data() + (static_cast<size_t>(i) * 5 + p) * plane;
          for (int wr = 0; wr < kGaWindowRows; ++wr) {
            const T* row = base + static_cast<size_t>(r + wr) * PW;  // padded row (r + wr - 2)
            for (int wc = 0; wc < kGaWindowCols; ++wc) {
              const double kv = static_cast<double>(k.at(o, i, orient, wr, wc));
              if (kv == 0.0) continue;
              const T* src = row + wc;  // padded col (c + wc - 1)
              for (int c = 0; c < W; ++c) acc[c] += kv * static_cast<double>(src[c]);
            }
          }
        }
        for (int c = 0; c < W; ++c) y.at(o, p, r, c) = static_cast<T>(acc[c]);
      }
  return y;
}

// Reference convolution over the call table: per face, gather the stencil,
// materialize the 3 imaginary vertex pixels as 4-neighbor means, dot with
// the conceptual weights.
template <typename T>
SphereTensor<T> reference_conv(const SphereTensor<T>& x, const CallTable& table, const ConvLayer<T>& layer) {
  if (x.channels != layer.in_channels) throw ShapeError("reference_conv: channel mismatch");
  SphereTensor<T> y(*x.layout, layer.out_channels);
  const int F = static_cast<int>(table.entries.size());
  std::vector<double> gathered(kGaTapCount);
  for (int f = 0; f < F; ++f) {
    const auto& e = table.entries[f];
    for (int o = 0; o < layer.out_channels; ++o) {
      double acc = layer.bias[o];
      for (int i = 0; i < layer.in_channels; ++i) {
        for (int t = 0; t < kGaTapCount; ++t) {
          if (e.counts[t] == 1) {
            gathered[t] = x.at_face(i, e.taps[t][0]);
          } else {
            double m = 0.0;
            for (int q = 0; q < 4; ++q) m += x.at_face(i, e.taps[t][q]);
            gathered[t] = m / 4.0;
          }
        }
        for (int t = 0; t < kGaTapCount; ++t) acc += static_cast<double>(layer.w(o, i, t)) * gathered[t];
      }
      y.at_face(o, f) = static_cast<T>(acc);
    }
  }
  return y;
}

template <typename T = float>
struct ConvGrads {
  SphereTensor<T> input;
  ConvLayer<T> layer;  // weight/bias gradients in layer shape
};

// Exact gradients of conv_forward. Vertex taps receive the quarter-summed
// gradient of their 4 distributed slots (chain rule through expand_kernel);
// halo contributions scatter back through the pad table.
template <typename T>
ConvGrads<T> conv_backward(const SphereTensor<T>& x, const ConvLayer<T>& layer, const SphereTensor<T>& upstream) {
  if (x.channels != layer.in_channels) throw ShapeError("conv_backward: input channel mismatch");
  if (upstream.channels != layer.out_channels) throw ShapeError("conv_backward: upstream channel mismatch");
  const LayoutMap& map = *x.layout;
  const EquivalentKernel<T> k = expand_kernel(layer);
  const PaddedTensor<T> px = pad(x);

  const int H = map.panel_height, W = map.panel_width;
  const int PW = map.padded_width();
  const size_t plane = px.plane();

  ConvGrads<T> g;
  g.layer = ConvLayer<T>(layer.in_channels, layer.out_channels);
  g.input = SphereTensor<T>(map, layer.in_channels);

  EquivalentKernel<double> dense_grad;
  dense_grad.in_channels = layer.in_channels;
  dense_grad.out_channels = layer.out_channels;
  dense_grad.dense.assign(k.dense.size(), 0.0);

  std::vector<double> grad_padded(static_cast<size_t>(layer.in_channels) * 5 * plane, 0.0);
  std::vector<double> grad_bias(layer.out_channels, 0.0);

  for (int o = 0; o < layer.out_channels; ++o)
    for (int p = 0; p < 5; ++p)
      for (int r = 0; r < H; ++r) {
        const int orient = r % 2;
        const T* up_row =
            upstream.values.data() + o * upstream.spatial_size() + (static_cast<size_t>(p) * H + r) * W;
        for (int c = 0; c < W; ++c) grad_bias[o] += up_row[c];
        for (int i = 0; i < layer.in_channels; ++i) {
          const T* base = px.values.data() + (static_cast<size_t>(i) * 5 + p) * plane;
          double* gbase = grad_padded.data() + (static_cast<size_t>(i) * 5 + p) * plane;
          for (int wr = 0; wr < kGaWindowRows; ++wr) {
            const T* row = base + static_cast<size_t>(r + wr) * PW;
            double* grow = gbase + static_cast<size_t>(r + wr) * PW;
            for (int wc = 0; wc < kGaWindowCols; ++wc) {
              const double kv = static_cast<double>(k.at(o, i, orient, wr, wc));
              double dsum = 0.0;
              if (kv != 0.0) {
                for (int c = 0; c < W; ++c) {
                  const double u = static_cast<double>(up_row[c]);
                  dsum += u * static_cast<double>(row[wc + c]);
                  grow[wc + c] += u * kv;
                }
              } else {
                for (int c = 0; c < W; ++c) dsum += static_cast<double>(up_row[c]) * static_cast<double>(row[wc + c]);
              }
              dense_grad.at(o, i, orient, wr, wc) += dsum;
            }
          }
        }
      }

  // Scatter padded-grid gradients back onto faces (interior plus halo).
  for (int i = 0; i < layer.in_channels; ++i) {
    T* dst = g.input.values.data() + static_cast<size_t>(i) * g.input.spatial_size();
    std::vector<double> dacc(g.input.spatial_size(), 0.0);
    const double* src = grad_padded.data() + static_cast<size_t>(i) * 5 * plane;
    for (size_t cell = 0; cell < map.pad_src.size(); ++cell) dacc[map.pad_src[cell]] += src[cell];
    for (size_t s = 0; s < dacc.size(); ++s) dst[s] = static_cast<T>(dacc[s]);
  }

  fold_kernel_grad(dense_grad, g.layer);
  for (int o = 0; o < layer.out_channels; ++o) g.layer.bias[o] = static_cast<T>(grad_bias[o]);
  return g;
}

}  // namespace icosr
