#pragma once

#include <Eigen/Dense>

#include <random>
#include <thread>
#include <vector>

#include "icosr/icosphere.hpp"
#include "icosr/image.hpp"
#include "icosr/projection.hpp"
#include "icosr/sphere_layout.hpp"

namespace icosr {

// sin/cos features at octave frequencies; writes 2*freq_count values
// (sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{L-1} pi x), cos(2^{L-1} pi x)).
// x is expected pre-scaled to [-1, 1].
template <typename T>
void posenc(double x, int freq_count, T* out) {
  double scale = kPi;
  for (int k = 0; k < freq_count; ++k) {
    out[2 * k] = static_cast<T>(std::sin(scale * x));
    out[2 * k + 1] = static_cast<T>(std::cos(scale * x));
    scale *= 2.0;
  }
}

// Concatenation of the 6 ring faces' feature vectors in vertex_ring order
// (clockwise from start_face), face-major.
template <typename T, typename U>
void gather_z(const SphereTensor<T>& features, const IcosphereGrid& grid, int vertex_id, int start_face, U* out) {
  const auto ring = grid.vertex_ring(vertex_id, start_face);
  const int C = features.channels;
  for (int s = 0; s < 6; ++s)
    for (int c = 0; c < C; ++c) out[s * C + c] = static_cast<U>(features.at_face(c, ring[s]));
}

// ---------------------------------------------------------------------------
// Decoder MLP. Fully-connected layers with max(0, .) between them (the
// rectifier can be disabled for linear test configurations); input is
// [z_j | posenc(r) | posenc(theta) | c_x, c_y].
// ---------------------------------------------------------------------------

template <typename T = float>
struct SliifDecoder {
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

  int feature_channels = 0;  // C
  int freq_count = 10;       // frequencies per encoded coordinate
  bool rectifier = true;
  std::vector<Matrix> weights;  // per layer, input x output
  std::vector<RowVector> biases;

  int input_width() const { return 6 * feature_channels + 4 * freq_count + 2; }
  int output_width() const { return weights.empty() ? 0 : static_cast<int>(weights.back().cols()); }

  // He-scaled random init: n_layers fully-connected layers, hidden wide,
  // 3 outputs.
  static SliifDecoder random_init(int feature_channels, int freq_count, int hidden, int n_layers,
                                  std::mt19937_64& rng) {
    SliifDecoder d;
    d.feature_channels = feature_channels;
    d.freq_count = freq_count;
    std::normal_distribution<double> nd(0.0, 1.0);
    int in = d.input_width();
    for (int l = 0; l < n_layers; ++l) {
      const int out = (l == n_layers - 1) ? 3 : hidden;
      Matrix w(in, out);
      const double s = std::sqrt(2.0 / in);
      for (int i = 0; i < in; ++i)
        for (int j = 0; j < out; ++j) w(i, j) = static_cast<T>(nd(rng) * s);
      d.weights.push_back(std::move(w));
      d.biases.push_back(RowVector::Zero(out));
      in = out;
    }
    return d;
  }

  size_t parameter_count() const {
    size_t n = 0;
    for (size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  struct Tape {
    std::vector<Matrix> inputs;  // layer inputs: X, A_1, ..., A_{n-1}
  };

  // Batched forward; rows are independent samples.
  Matrix forward(const Matrix& x, Tape* tape = nullptr) const {
    if (x.cols() != input_width()) throw ShapeError("decoder input width mismatch");
    Matrix a = x;
    if (tape) tape->inputs.clear();
    for (size_t l = 0; l < weights.size(); ++l) {
      if (tape) tape->inputs.push_back(a);
      Matrix z = (a * weights[l]).rowwise() + biases[l];
      if (rectifier && l + 1 < weights.size()) z = z.cwiseMax(T(0));
      a = std::move(z);
    }
    return a;
  }

  struct Grads {
    std::vector<Matrix> weights;
    std::vector<RowVector> biases;

    void init_like(const SliifDecoder& d) {
      weights.clear();
      biases.clear();
      for (size_t l = 0; l < d.weights.size(); ++l) {
        weights.push_back(Matrix::Zero(d.weights[l].rows(), d.weights[l].cols()));
        biases.push_back(RowVector::Zero(d.biases[l].cols()));
      }
    }
  };

  // Exact gradients; accumulates parameter grads and returns d(loss)/d(input).
  Matrix backward(const Tape& tape, const Matrix& dy, Grads& grads) const {
    Matrix delta = dy;
    Matrix dx;
    for (int l = static_cast<int>(weights.size()) - 1; l >= 0; --l) {
      const Matrix& a = tape.inputs[l];
      if (rectifier && l + 1 < static_cast<int>(weights.size())) {
        // The layer input a_{l+1} = relu(z_l); its positive support gates delta.
        const Matrix& gate = tape.inputs[l + 1];
        delta = (gate.array() > T(0)).template cast<T>() * delta.array();
      }
      grads.weights[l] += a.transpose() * delta;
      grads.biases[l] += delta.colwise().sum();
      if (l > 0)
        delta = delta * weights[l].transpose();
      else
        dx = delta * weights[l].transpose();
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Query construction: everything SLIIF needs to decode one output pixel.
// ---------------------------------------------------------------------------

inline constexpr double kVertexSnapEps = 1e-9;  // chart radius below which a query sits on a vertex

struct QueryPoint {
  SpherePoint p;
  int face = -1;                          // containing face f_s
  std::array<int32_t, 3> vertex_ids{};    // its corners
  std::array<double, 3> weights{};        // barycentric ensemble weights
  std::array<double, 3> r{};              // chart distance to each corner / edge_length_scale
  std::array<double, 3> theta{};          // signed angle from the corner->face-center direction
  std::array<CellDecoding, 3> cell{};     // sphere-oriented cell per reference vertex
  std::array<std::array<int32_t, 6>, 3> rings{};  // feature rings per reference vertex
};

// On-vertex queries are well-defined by convention: the ring starts at the
// vertex's lowest-id incident face, theta is 0, and the decoding frame points
// at that face's center. The ensemble weight concentrates on the vertex, so
// every choice of f_s yields the same value.
inline QueryPoint make_query(const IcosphereGrid& grid, const ProjectionSpec& spec, double x, double y,
                             int face_override = -1) {
  QueryPoint q;
  q.p = pixel_to_sphere(spec, x, y);
  q.face = face_override >= 0 ? face_override : grid.face_of_point(q.p.dir);
  const auto w = grid.barycentric(q.face, q.p.dir);
  for (int j = 0; j < 3; ++j) {
    q.vertex_ids[j] = grid.faces[q.face].v[j];
    q.weights[j] = w[j];
    const SpherePoint v = SpherePoint::from_dir(grid.vertices[q.vertex_ids[j]]);
    const Vec2 offset = chart_offset(q.p, v);
    const double r_chart = norm(offset);
    TangentFrame frame;
    if (r_chart < kVertexSnapEps) {
      const int canon = grid.ring_begin(q.vertex_ids[j])[0];
      q.rings[j] = grid.vertex_ring(q.vertex_ids[j], canon);
      q.r[j] = 0.0;
      q.theta[j] = 0.0;
      frame = frame_from_offset(chart_offset(SpherePoint::from_dir(grid.face_centers[canon]), v));
    } else {
      q.rings[j] = grid.vertex_ring(q.vertex_ids[j], q.face);
      q.r[j] = r_chart / grid.edge_length_scale;
      frame = frame_from_offset(offset);
      const Vec2 to_center = chart_offset(SpherePoint::from_dir(grid.face_centers[q.face]), v);
      q.theta[j] = std::atan2(cross(to_center, offset), dot(to_center, offset));
    }
    q.cell[j] = cell_decode_with_frame(spec, x, y, frame);
  }
  return q;
}

// Decoder input row for one (query, reference vertex) pair.
template <typename T, typename U>
void assemble_decoder_input(const SphereTensor<T>& features, const IcosphereGrid& grid, const QueryPoint& q,
                            int j, int freq_count, U* out) {
  const int C = features.channels;
  for (int s = 0; s < 6; ++s)
    for (int c = 0; c < C; ++c) out[s * C + c] = static_cast<U>(features.at_face(c, q.rings[j][s]));
  U* enc = out + 6 * C;
  const double r_scaled = std::clamp(q.r[j] / 2.0, 0.0, 1.0) * 2.0 - 1.0;
  posenc(r_scaled, freq_count, enc);
  posenc(q.theta[j] / kPi, freq_count, enc + 2 * freq_count);
  enc[4 * freq_count] = static_cast<U>(q.cell[j].cx);
  enc[4 * freq_count + 1] = static_cast<U>(q.cell[j].cy);
}

// Area-weighted ensemble of the three per-vertex decodings. Unclamped;
// clamping happens at image-write time.
template <typename T>
Vec3 eval_rgb(const SphereTensor<T>& features, const IcosphereGrid& grid, const QueryPoint& q,
              const SliifDecoder<T>& dec) {
  typename SliifDecoder<T>::Matrix x(3, dec.input_width());
  std::vector<T> row(dec.input_width());
  for (int j = 0; j < 3; ++j) {
    assemble_decoder_input(features, grid, q, j, dec.freq_count, row.data());
    for (int i = 0; i < dec.input_width(); ++i) x(j, i) = row[i];
  }
  const auto y = dec.forward(x);
  Vec3 rgb{0, 0, 0};
  for (int j = 0; j < 3; ++j) {
    rgb.x += q.weights[j] * y(j, 0);
    rgb.y += q.weights[j] * y(j, 1);
    rgb.z += q.weights[j] * y(j, 2);
  }
  return rgb;
}

// Full-image rendering. Deterministic for any thread count: each pixel is
// pure and written to its own slot.
template <typename T>
Image render(const SphereTensor<T>& features, const IcosphereGrid& grid, const ProjectionSpec& spec,
             const SliifDecoder<T>& dec, int threads = 1) {
  Image out(spec.height, spec.width, 3);
  const int in_w = dec.input_width();

  auto run_rows = [&](int y0, int y1) {
    const int batch_px = 512;
    typename SliifDecoder<T>::Matrix x(3 * batch_px, in_w);
    std::vector<QueryPoint> queries(batch_px);
    std::vector<T> row(in_w);
    std::vector<std::pair<int, int>> coords(batch_px);
    int pending = 0;
    auto flush = [&]() {
      if (pending == 0) return;
      const auto y = dec.forward(x.topRows(3 * pending));
      for (int k = 0; k < pending; ++k) {
        Vec3 rgb{0, 0, 0};
        for (int j = 0; j < 3; ++j) {
          rgb.x += queries[k].weights[j] * y(3 * k + j, 0);
          rgb.y += queries[k].weights[j] * y(3 * k + j, 1);
          rgb.z += queries[k].weights[j] * y(3 * k + j, 2);
        }
        out.at(coords[k].second, coords[k].first, 0) = static_cast<float>(rgb.x);
        out.at(coords[k].second, coords[k].first, 1) = static_cast<float>(rgb.y);
        out.at(coords[k].second, coords[k].first, 2) = static_cast<float>(rgb.z);
      }
      pending = 0;
    };
    for (int py = y0; py < y1; ++py)
      for (int px = 0; px < spec.width; ++px) {
        queries[pending] = make_query(grid, spec, px + 0.5, py + 0.5);
        for (int j = 0; j < 3; ++j) {
          assemble_decoder_input(features, grid, queries[pending], j, dec.freq_count, row.data());
          for (int i = 0; i < in_w; ++i) x(3 * pending + j, i) = row[i];
        }
        coords[pending] = {px, py};
        if (++pending == batch_px) flush();
      }
    flush();
  };

  if (threads <= 1) {
    run_rows(0, spec.height);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (spec.height + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int y0 = t * chunk, y1 = std::min(spec.height, (t + 1) * chunk);
      if (y0 < y1) pool.emplace_back(run_rows, y0, y1);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

// Feature conversion into a target projection: per pixel, the area-weighted
// average over the three vertex rings of each ring's mean face feature.
// Pure resampling; no decoder involved.
template <typename T>
Image convert_features(const SphereTensor<T>& features, const IcosphereGrid& grid, const ProjectionSpec& spec) {
  const int C = features.channels;
  Image out(spec.height, spec.width, C);
  for (int py = 0; py < spec.height; ++py)
    for (int px = 0; px < spec.width; ++px) {
      const SpherePoint p = pixel_to_sphere(spec, px + 0.5, py + 0.5);
      const int face = grid.face_of_point(p.dir);
      const auto w = grid.barycentric(face, p.dir);
      for (int j = 0; j < 3; ++j) {
        const auto ring = grid.vertex_ring(grid.faces[face].v[j], face);
        for (int c = 0; c < C; ++c) {
          double mean = 0.0;
          for (int s = 0; s < 6; ++s) mean += features.at_face(c, ring[s]);
          out.at(py, px, c) += static_cast<float>(w[j] * mean / 6.0);
        }
      }
    }
  return out;
}

// Sparse variant of convert_features used by training: precomputed gather
// coefficients for one target grid.
struct FeatureConversionPlan {
  int height = 0, width = 0;
  // Per pixel: 3 rings x 6 faces with a weight each (w_j / 6).
  std::vector<std::array<int32_t, 18>> faces;
  std::vector<std::array<float, 3>> ring_weights;
};

inline FeatureConversionPlan plan_feature_conversion(const IcosphereGrid& grid, const ProjectionSpec& spec) {
  FeatureConversionPlan plan;
  plan.height = spec.height;
  plan.width = spec.width;
  plan.faces.resize(static_cast<size_t>(spec.height) * spec.width);
  plan.ring_weights.resize(plan.faces.size());
  size_t k = 0;
  for (int py = 0; py < spec.height; ++py)
    for (int px = 0; px < spec.width; ++px, ++k) {
      const SpherePoint p = pixel_to_sphere(spec, px + 0.5, py + 0.5);
      const int face = grid.face_of_point(p.dir);
      const auto w = grid.barycentric(face, p.dir);
      for (int j = 0; j < 3; ++j) {
        const auto ring = grid.vertex_ring(grid.faces[face].v[j], face);
        for (int s = 0; s < 6; ++s) plan.faces[k][6 * j + s] = ring[s];
        plan.ring_weights[k][j] = static_cast<float>(w[j]);
      }
    }
  return plan;
}

// Keeps the scalar type of the features so 64-bit gradient checks see a
// 64-bit loss surface.
template <typename T>
std::vector<T> convert_features_planned_values(const SphereTensor<T>& features, const FeatureConversionPlan& plan) {
  const int C = features.channels;
  std::vector<T> out(plan.faces.size() * C, T(0));
  for (size_t k = 0; k < plan.faces.size(); ++k) {
    T* dst = out.data() + k * C;
    for (int j = 0; j < 3; ++j) {
      const double wj = plan.ring_weights[k][j] / 6.0;
      for (int s = 0; s < 6; ++s) {
        const int f = plan.faces[k][6 * j + s];
        for (int c = 0; c < C; ++c) dst[c] += static_cast<T>(wj * features.at_face(c, f));
      }
    }
  }
  return out;
}

template <typename T>
Image convert_features_planned(const SphereTensor<T>& features, const FeatureConversionPlan& plan) {
  const auto values = convert_features_planned_values(features, plan);
  Image out(plan.height, plan.width, features.channels);
  for (size_t i = 0; i < values.size(); ++i) out.data[i] = static_cast<float>(values[i]);
  return out;
}

}  // namespace icosr
