#pragma once

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "icosr/ga_conv.hpp"
#include "icosr/losses_metrics.hpp"
#include "icosr/sliif.hpp"

namespace icosr {

// ---------------------------------------------------------------------------
// Model: GA-conv residual feature extractor (EDSR-style head / R residual
// blocks of two convs with a skip / tail with a global skip) feeding the
// SLIIF decoder.
// ---------------------------------------------------------------------------

struct ModelConfig {
  int level = 4;
  int channels = 16;
  int res_blocks = 2;
  int freq_count = 10;
  int hidden = 256;
  int dec_layers = 5;
  int scale = 4;
};

template <typename T = float>
struct SrModel {
  ModelConfig cfg;
  uint32_t seed = 0;
  IcosphereGrid grid;
  LayoutMap layout;
  std::vector<ConvLayer<T>> convs;  // head, 2 per residual block, tail
  SliifDecoder<T> decoder;

  int conv_count() const { return 2 + 2 * cfg.res_blocks; }
  const ConvLayer<T>& head() const { return convs.front(); }
  const ConvLayer<T>& tail() const { return convs.back(); }

  size_t parameter_count() const {
    size_t n = decoder.parameter_count();
    for (const auto& c : convs) n += c.parameter_count();
    return n;
  }
};

template <typename T = float>
SrModel<T> make_sr_model(const ModelConfig& cfg, uint32_t seed) {
  SrModel<T> m;
  m.cfg = cfg;
  m.seed = seed;
  m.grid = IcosphereGrid::build(cfg.level);
  m.layout = build_layout(m.grid);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto init_conv = [&](int in_c, int out_c) {
    ConvLayer<T> layer(in_c, out_c);
    const double s = std::sqrt(2.0 / (in_c * kGaTapCount));
    for (auto& w : layer.weights) w = static_cast<T>(nd(rng) * s);
    return layer;
  };
  m.convs.push_back(init_conv(3, cfg.channels));
  for (int b = 0; b < cfg.res_blocks; ++b) {
    m.convs.push_back(init_conv(cfg.channels, cfg.channels));
    m.convs.push_back(init_conv(cfg.channels, cfg.channels));
  }
  m.convs.push_back(init_conv(cfg.channels, cfg.channels));
  m.decoder = SliifDecoder<T>::random_init(cfg.channels, cfg.freq_count, cfg.hidden, cfg.dec_layers, rng);
  return m;
}

// ---------------------------------------------------------------------------
// Backbone forward/backward
// ---------------------------------------------------------------------------

template <typename T>
struct BackboneTape {
  SphereTensor<T> input;
  SphereTensor<T> head_out;
  std::vector<SphereTensor<T>> block_in;   // residual-block inputs
  std::vector<SphereTensor<T>> block_mid;  // relu(conv1(block_in))
  SphereTensor<T> tail_in;
};

template <typename T>
void relu_inplace(SphereTensor<T>& x) {
  for (auto& v : x.values) v = std::max(v, T(0));
}

// Residual trunk on feature tensors: R blocks of conv-relu-conv with a block
// skip, then the tail conv and a global skip. Zero weights make it the
// identity.
template <typename T>
SphereTensor<T> trunk_forward(const SrModel<T>& m, const SphereTensor<T>& features, BackboneTape<T>* tape = nullptr) {
  SphereTensor<T> t = features;
  if (tape) {
    tape->head_out = features;
    tape->block_in.clear();
    tape->block_mid.clear();
  }
  for (int b = 0; b < m.cfg.res_blocks; ++b) {
    if (tape) tape->block_in.push_back(t);
    SphereTensor<T> u = conv_forward(t, m.convs[1 + 2 * b]);
    relu_inplace(u);
    if (tape) tape->block_mid.push_back(u);
    const SphereTensor<T> v = conv_forward(u, m.convs[2 + 2 * b]);
    for (size_t i = 0; i < t.values.size(); ++i) t.values[i] += v.values[i];
  }
  if (tape) tape->tail_in = t;
  SphereTensor<T> y = conv_forward(t, m.convs.back());
  for (size_t i = 0; i < y.values.size(); ++i) y.values[i] += features.values[i];
  return y;
}

template <typename T>
SphereTensor<T> backbone_forward(const SrModel<T>& m, const SphereTensor<T>& input, BackboneTape<T>* tape = nullptr) {
  if (tape) tape->input = input;
  const SphereTensor<T> x0 = conv_forward(input, m.convs.front());
  return trunk_forward(m, x0, tape);
}

template <typename T = float>
struct ModelGrads {
  std::vector<ConvLayer<T>> convs;
  typename SliifDecoder<T>::Grads decoder;

  void init_like(const SrModel<T>& m) {
    convs.clear();
    for (const auto& c : m.convs) convs.emplace_back(c.in_channels, c.out_channels);
    decoder.init_like(m.decoder);
  }
};

template <typename T>
void backbone_backward(const SrModel<T>& m, const BackboneTape<T>& tape, const SphereTensor<T>& grad_out,
                       ModelGrads<T>& grads) {
  // Global skip feeds the head output directly.
  auto tail_g = conv_backward(tape.tail_in, m.convs.back(), grad_out);
  grads.convs.back() = std::move(tail_g.layer);
  SphereTensor<T> gt = std::move(tail_g.input);
  for (int b = m.cfg.res_blocks - 1; b >= 0; --b) {
    auto c2 = conv_backward(tape.block_mid[b], m.convs[2 + 2 * b], gt);
    grads.convs[2 + 2 * b] = std::move(c2.layer);
    SphereTensor<T>& gmid = c2.input;
    for (size_t i = 0; i < gmid.values.size(); ++i)
      if (tape.block_mid[b].values[i] <= T(0)) gmid.values[i] = T(0);
    auto c1 = conv_backward(tape.block_in[b], m.convs[1 + 2 * b], gmid);
    grads.convs[1 + 2 * b] = std::move(c1.layer);
    for (size_t i = 0; i < gt.values.size(); ++i) gt.values[i] += c1.input.values[i];
  }
  for (size_t i = 0; i < gt.values.size(); ++i) gt.values[i] += grad_out.values[i];
  auto head_g = conv_backward(tape.input, m.convs.front(), gt);
  grads.convs.front() = std::move(head_g.layer);
}

// ---------------------------------------------------------------------------
// Full SR forward: LR ERP -> icosphere -> backbone -> SLIIF render.
// ---------------------------------------------------------------------------

template <typename T>
Image forward_sr(const SrModel<T>& m, const Image& lr_erp, const ProjectionSpec& spec, int threads = 1) {
  const auto input = sample_erp_to_sphere(lr_erp, m.grid, m.layout);
  SphereTensor<T> typed(m.layout, input.channels);
  for (size_t i = 0; i < input.values.size(); ++i) typed.values[i] = static_cast<T>(input.values[i]);
  const auto features = backbone_forward(m, typed);
  return render(features, m.grid, spec, m.decoder, threads);
}

// ---------------------------------------------------------------------------
// One training step's loss (and, optionally, exact gradients for every
// parameter): multi-scale L1 over sampled queries plus the masked feature
// loss. The query sample is part of the context so finite-difference checks
// can freeze it.
// ---------------------------------------------------------------------------

template <typename T>
struct StepContext {
  SphereTensor<T> input;                      // LR sampled onto the sphere
  const Image* hr = nullptr;                  // ground-truth ERP
  ProjectionSpec query_spec;                  // target grid the pixels refer to
  std::vector<std::pair<int, int>> pixels;    // sampled (x, y)
  double lambda = 0.0;
  const Image* proj_features = nullptr;       // feature-loss target
  const FeatureMask* mask = nullptr;
  const FeatureConversionPlan* plan = nullptr;
};

template <typename T>
double compute_loss(const SrModel<T>& m, const StepContext<T>& ctx, ModelGrads<T>* grads) {
  BackboneTape<T> tape;
  const SphereTensor<T> features = backbone_forward(m, ctx.input, grads ? &tape : nullptr);

  const int N = static_cast<int>(ctx.pixels.size());
  const int in_w = m.decoder.input_width();
  typename SliifDecoder<T>::Matrix x(3 * N, in_w);
  std::vector<QueryPoint> queries(N);
  std::vector<T> row(in_w);
  for (int k = 0; k < N; ++k) {
    queries[k] = make_query(m.grid, ctx.query_spec, ctx.pixels[k].first + 0.5, ctx.pixels[k].second + 0.5);
    for (int j = 0; j < 3; ++j) {
      assemble_decoder_input(features, m.grid, queries[k], j, m.decoder.freq_count, row.data());
      for (int i = 0; i < in_w; ++i) x(3 * k + j, i) = row[i];
    }
  }

  typename SliifDecoder<T>::Tape dec_tape;
  const auto y = m.decoder.forward(x, grads ? &dec_tape : nullptr);

  // Ground truth at the query directions, bilinear from the HR ERP.
  double l1 = 0.0;
  typename SliifDecoder<T>::Matrix dy;
  if (grads) dy = SliifDecoder<T>::Matrix::Zero(3 * N, 3);
  for (int k = 0; k < N; ++k) {
    const SpherePoint& p = queries[k].p;
    const double gy = p.theta / kPi * ctx.hr->height;
    const double gx = (p.phi + kPi) / (2.0 * kPi) * ctx.hr->width;
    for (int c = 0; c < 3; ++c) {
      double pred = 0.0;
      for (int j = 0; j < 3; ++j) pred += queries[k].weights[j] * y(3 * k + j, c);
      const double gt = bilinear_wrap(*ctx.hr, gy, gx, c);
      l1 += std::abs(pred - gt);
      if (grads) {
        const double sgn = (pred > gt) ? 1.0 : (pred < gt ? -1.0 : 0.0);
        for (int j = 0; j < 3; ++j)
          dy(3 * k + j, c) = static_cast<T>(sgn * queries[k].weights[j] / static_cast<double>(N));
      }
    }
  }
  l1 /= static_cast<double>(N);

  SphereTensor<T> grad_features;
  if (grads) {
    grad_features = SphereTensor<T>(m.layout, m.cfg.channels);
    const auto dx = m.decoder.backward(dec_tape, dy, grads->decoder);
    const int C = m.cfg.channels;
    for (int k = 0; k < N; ++k)
      for (int j = 0; j < 3; ++j)
        for (int s = 0; s < 6; ++s)
          for (int c = 0; c < C; ++c)
            grad_features.at_face(c, queries[k].rings[j][s]) += dx(3 * k + j, s * C + c);
  }

  double fl = 0.0;
  if (ctx.lambda > 0.0) {
    const std::vector<T> converted = convert_features_planned_values(features, *ctx.plan);
    const int C = m.cfg.channels;
    const double elems = static_cast<double>(ctx.plan->height) * ctx.plan->width * C;
    size_t k = 0;
    for (int yy = 0; yy < ctx.plan->height; ++yy)
      for (int xx = 0; xx < ctx.plan->width; ++xx, ++k) {
        const float sm = ctx.mask->spatial.at(yy, xx, 0);
        if (sm == 0.0f) continue;
        for (int c = 0; c < C; ++c) {
          const double d = static_cast<double>(converted[k * C + c]) - ctx.proj_features->at(yy, xx, c);
          fl += sm * ctx.mask->channel[c] * std::abs(d);
          if (!grads) continue;
          const double sgn = (d > 0) ? 1.0 : (d < 0 ? -1.0 : 0.0);
          const double g = ctx.lambda / elems * sm * ctx.mask->channel[c] * sgn;
          if (g == 0.0) continue;
          for (int j = 0; j < 3; ++j) {
            const double wj = ctx.plan->ring_weights[k][j] / 6.0;
            for (int s = 0; s < 6; ++s)
              grad_features.at_face(c, ctx.plan->faces[k][6 * j + s]) += static_cast<T>(g * wj);
          }
        }
      }
    fl /= elems;
  }

  if (grads) backbone_backward(m, tape, grad_features, *grads);
  return l1 + ctx.lambda * fl;
}

// ---------------------------------------------------------------------------
// Adam over flat parameter spans.
// ---------------------------------------------------------------------------

template <typename T>
struct ParamView {
  std::vector<T*> data;
  std::vector<size_t> sizes;

  size_t total() const {
    size_t n = 0;
    for (size_t s : sizes) n += s;
    return n;
  }
};

template <typename T>
ParamView<T> parameters_of(SrModel<T>& m) {
  ParamView<T> v;
  for (auto& c : m.convs) {
    v.data.push_back(c.weights.data());
    v.sizes.push_back(c.weights.size());
    v.data.push_back(c.bias.data());
    v.sizes.push_back(c.bias.size());
  }
  for (size_t l = 0; l < m.decoder.weights.size(); ++l) {
    v.data.push_back(m.decoder.weights[l].data());
    v.sizes.push_back(static_cast<size_t>(m.decoder.weights[l].size()));
    v.data.push_back(m.decoder.biases[l].data());
    v.sizes.push_back(static_cast<size_t>(m.decoder.biases[l].size()));
  }
  return v;
}

template <typename T>
ParamView<T> parameters_of(ModelGrads<T>& g) {
  ParamView<T> v;
  for (auto& c : g.convs) {
    v.data.push_back(c.weights.data());
    v.sizes.push_back(c.weights.size());
    v.data.push_back(c.bias.data());
    v.sizes.push_back(c.bias.size());
  }
  for (size_t l = 0; l < g.decoder.weights.size(); ++l) {
    v.data.push_back(g.decoder.weights[l].data());
    v.sizes.push_back(static_cast<size_t>(g.decoder.weights[l].size()));
    v.data.push_back(g.decoder.biases[l].data());
    v.sizes.push_back(static_cast<size_t>(g.decoder.biases[l].size()));
  }
  return v;
}

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  long step = 0;

  template <typename T>
  void update(ParamView<T> params, const ParamView<T>& grads, double lr) {
    if (m.empty()) {
      m.assign(params.total(), 0.0);
      v.assign(params.total(), 0.0);
    }
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    size_t off = 0;
    for (size_t chunk = 0; chunk < params.data.size(); ++chunk) {
      T* p = params.data[chunk];
      const T* g = grads.data[chunk];
      for (size_t i = 0; i < params.sizes[chunk]; ++i, ++off) {
        const double gi = static_cast<double>(g[i]);
        m[off] = beta1 * m[off] + (1 - beta1) * gi;
        v[off] = beta2 * v[off] + (1 - beta2) * gi * gi;
        p[i] -= static_cast<T>(lr * (m[off] / bc1) / (std::sqrt(v[off] / bc2) + eps));
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Checkpoints: "ISR1" | u32 version | model header | per-tensor element
// counts | float32 little-endian payload | CRC-32 of everything before it.
// ---------------------------------------------------------------------------

enum class CheckpointFault { bad_magic, bad_version, bad_crc, bad_dims };

struct CheckpointError : IoError {
  CheckpointFault fault;
  CheckpointError(CheckpointFault f, const std::string& msg) : IoError(msg), fault(f) {}
};

inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const std::string& buf, size_t off) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  return v;
}

inline void put_f32(std::string& buf, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(buf, v);
}

inline float get_f32(const std::string& buf, size_t off) {
  const uint32_t v = get_u32(buf, off);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const SrModel<T>& m, const std::string& path) {
  std::string buf = "ISR1";
  detail::put_u32(buf, kCheckpointVersion);
  for (uint32_t v : {static_cast<uint32_t>(m.cfg.level), static_cast<uint32_t>(m.cfg.channels),
                     static_cast<uint32_t>(m.cfg.res_blocks), static_cast<uint32_t>(m.cfg.freq_count),
                     static_cast<uint32_t>(m.cfg.hidden), static_cast<uint32_t>(m.cfg.dec_layers),
                     static_cast<uint32_t>(m.cfg.scale), m.seed})
    detail::put_u32(buf, v);

  auto params = parameters_of(const_cast<SrModel<T>&>(m));
  detail::put_u32(buf, static_cast<uint32_t>(params.sizes.size()));
  for (size_t s : params.sizes) detail::put_u32(buf, static_cast<uint32_t>(s));
  for (size_t chunk = 0; chunk < params.data.size(); ++chunk)
    for (size_t i = 0; i < params.sizes[chunk]; ++i) detail::put_f32(buf, static_cast<float>(params.data[chunk][i]));

  const uint32_t crc =
      static_cast<uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
  detail::put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed to write checkpoint: " + path);
}

inline SrModel<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  if (buf.size() < 4 || buf.substr(0, 4) != "ISR1")
    throw CheckpointError(CheckpointFault::bad_magic, "checkpoint magic mismatch");
  if (buf.size() < 48) throw CheckpointError(CheckpointFault::bad_dims, "checkpoint header truncated");
  if (detail::get_u32(buf, 4) != kCheckpointVersion)
    throw CheckpointError(CheckpointFault::bad_version, "unsupported checkpoint version");

  ModelConfig cfg;
  cfg.level = static_cast<int>(detail::get_u32(buf, 8));
  cfg.channels = static_cast<int>(detail::get_u32(buf, 12));
  cfg.res_blocks = static_cast<int>(detail::get_u32(buf, 16));
  cfg.freq_count = static_cast<int>(detail::get_u32(buf, 20));
  cfg.hidden = static_cast<int>(detail::get_u32(buf, 24));
  cfg.dec_layers = static_cast<int>(detail::get_u32(buf, 28));
  cfg.scale = static_cast<int>(detail::get_u32(buf, 32));
  const uint32_t seed = detail::get_u32(buf, 36);
  const uint32_t n_tensors = detail::get_u32(buf, 40);

  SrModel<float> m = make_sr_model<float>(cfg, seed);
  auto params = parameters_of(m);
  if (n_tensors != params.sizes.size())
    throw CheckpointError(CheckpointFault::bad_dims, "checkpoint tensor count mismatch");

  size_t off = 44;
  size_t payload = 0;
  for (size_t t = 0; t < n_tensors; ++t, off += 4) {
    const uint32_t n = detail::get_u32(buf, off);
    if (n != params.sizes[t]) throw CheckpointError(CheckpointFault::bad_dims, "checkpoint tensor size mismatch");
    payload += n;
  }
  if (buf.size() != off + 4 * payload + 4)
    throw CheckpointError(CheckpointFault::bad_dims, "checkpoint length mismatch");

  const uint32_t stored_crc = detail::get_u32(buf, buf.size() - 4);
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
  if (crc != stored_crc) throw CheckpointError(CheckpointFault::bad_crc, "checkpoint CRC mismatch");

  for (size_t chunk = 0; chunk < params.data.size(); ++chunk)
    for (size_t i = 0; i < params.sizes[chunk]; ++i, off += 4) params.data[chunk][i] = detail::get_f32(buf, off);
  return m;
}

// ---------------------------------------------------------------------------
// Datasets and training
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<Image> lr, hr;
};

// Directory with manifest.txt: one "lr.png hr.png" pair per line, '#' comments.
inline Dataset load_dataset(const std::string& dir) {
  const auto manifest = std::filesystem::path(dir) / "manifest.txt";
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open dataset manifest: " + manifest.string());
  Dataset ds;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string lr_name, hr_name;
    if (!(ls >> lr_name >> hr_name)) continue;
    ds.lr.push_back(read_png((std::filesystem::path(dir) / lr_name).string()));
    ds.hr.push_back(read_png((std::filesystem::path(dir) / hr_name).string()));
  }
  if (ds.lr.empty()) throw IoError("dataset manifest lists no pairs: " + manifest.string());
  return ds;
}

Image toy_feature_provider(const Image& erp, int out_channels, uint64_t seed);

struct TrainConfig {
  int epochs = 200;
  double lr = 1e-4;
  int lr_decay_epoch = 400;  // divide by 10 from this epoch on
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  LossConfig loss{0.3, 100, {2, 4}, 512};
  uint64_t seed = 0;
  int feature_height = 32, feature_width = 64;  // feature-loss target grid
  int mask_refresh_epochs = 20;
  int probe_height = 32, probe_width = 64;  // per-epoch WS-PSNR probe

  void validate() const {
    if (epochs < 1 || lr <= 0.0) throw InvalidInputError("train config: epochs and lr must be positive");
    loss.validate();
  }
};

struct TraceRow {
  int epoch;
  double loss;
  double ws_psnr;
};

// Single-threaded, deterministic training. Batch size 1; per step one image,
// one sampled scale, queries_per_step random query pixels.
template <typename T>
std::vector<TraceRow> train(SrModel<T>& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.lr.size() != data.hr.size() || data.lr.empty()) throw InvalidInputError("dataset is empty or mismatched");
  for (size_t i = 0; i < data.lr.size(); ++i) {
    if (data.lr[i].width != 2 * data.lr[i].height || data.hr[i].width != 2 * data.hr[i].height)
      throw InvalidInputError("ERP images must be 2:1");
    if (data.hr[i].height != data.lr[i].height * model.cfg.scale)
      throw InvalidInputError("HR size does not match the scale profile");
  }

  std::mt19937_64 rng(cfg.seed);

  // Per-image sphere inputs.
  std::vector<SphereTensor<T>> inputs;
  for (const auto& lr_img : data.lr) {
    const auto sampled = sample_erp_to_sphere(lr_img, model.grid, model.layout);
    SphereTensor<T> typed(model.layout, 3);
    for (size_t i = 0; i < sampled.values.size(); ++i) typed.values[i] = static_cast<T>(sampled.values[i]);
    inputs.push_back(std::move(typed));
  }

  std::vector<int> scales = cfg.loss.scales;
  scales.push_back(model.cfg.scale);

  // Feature-loss targets: fixed small feature images of the HR ground truth.
  const ProjectionSpec feat_spec = ProjectionSpec::erp(cfg.feature_height, cfg.feature_width);
  const auto plan = plan_feature_conversion(model.grid, feat_spec);
  std::vector<Image> proj_feats, gt_small;
  std::vector<FeatureMask> masks(data.hr.size());
  bool masks_ready = false;
  for (const auto& hr_img : data.hr) {
    Image small(cfg.feature_height, cfg.feature_width, 3);
    for (int y = 0; y < small.height; ++y)
      for (int x = 0; x < small.width; ++x)
        for (int c = 0; c < 3; ++c)
          small.at(y, x, c) = bilinear_wrap(hr_img, (y + 0.5) * hr_img.height / static_cast<double>(small.height),
                                            (x + 0.5) * hr_img.width / static_cast<double>(small.width), c);
    gt_small.push_back(small);
    proj_feats.push_back(toy_feature_provider(small, model.cfg.channels, 1234));
  }

  // Probe reference for the per-epoch WS-PSNR column.
  const ProjectionSpec probe_spec = ProjectionSpec::erp(cfg.probe_height, cfg.probe_width);
  Image probe_ref(cfg.probe_height, cfg.probe_width, 3);
  for (int y = 0; y < probe_ref.height; ++y)
    for (int x = 0; x < probe_ref.width; ++x)
      for (int c = 0; c < 3; ++c)
        probe_ref.at(y, x, c) =
            bilinear_wrap(data.hr[0], (y + 0.5) * data.hr[0].height / static_cast<double>(probe_ref.height),
                          (x + 0.5) * data.hr[0].width / static_cast<double>(probe_ref.width), c);

  Adam adam{cfg.beta1, cfg.beta2, cfg.eps};
  ModelGrads<T> grads;
  std::vector<TraceRow> trace;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lambda = cfg.loss.lambda_at(epoch);
    const double lr_now = epoch >= cfg.lr_decay_epoch ? cfg.lr / 10.0 : cfg.lr;

    if (lambda > 0.0 && (!masks_ready || epoch % cfg.mask_refresh_epochs == 0)) {
      for (size_t i = 0; i < data.hr.size(); ++i) {
        const auto features = backbone_forward(model, inputs[i]);
        const Image sr_small = render(features, model.grid, feat_spec, model.decoder);
        masks[i] = build_mask(sr_small, gt_small[i], proj_feats[i]);
      }
      masks_ready = true;
    }

    double epoch_loss = 0.0;
    for (size_t i = 0; i < data.lr.size(); ++i) {
      const int scale = scales[rng() % scales.size()];
      StepContext<T> ctx;
      ctx.input = inputs[i];
      ctx.hr = &data.hr[i];
      ctx.query_spec = ProjectionSpec::erp(data.lr[i].height * scale, data.lr[i].width * scale);
      ctx.pixels.resize(cfg.loss.queries_per_step);
      std::uniform_int_distribution<int> dx(0, ctx.query_spec.width - 1), dy(0, ctx.query_spec.height - 1);
      for (auto& px : ctx.pixels) px = {dx(rng), dy(rng)};
      ctx.lambda = lambda;
      ctx.proj_features = &proj_feats[i];
      ctx.mask = &masks[i];
      ctx.plan = &plan;

      grads.init_like(model);
      const double step_loss = compute_loss(model, ctx, &grads);
      if (!std::isfinite(step_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " image " << i;
        double wn = 0.0;
        for (const auto& c : model.convs)
          for (auto w : c.weights) wn += static_cast<double>(w) * w;
        msg << " (conv weight norm " << std::sqrt(wn) << ")";
        throw NumericError(msg.str());
      }
      epoch_loss += step_loss;

      auto pv = parameters_of(model);
      auto gv = parameters_of(grads);
      adam.update(pv, gv, lr_now);
    }
    epoch_loss /= static_cast<double>(data.lr.size());

    const auto probe = render(backbone_forward(model, inputs[0]), model.grid, probe_spec, model.decoder);
    Image probe_clamped = probe;
    for (auto& v : probe_clamped.data) v = std::clamp(v, 0.0f, 1.0f);
    trace.push_back({epoch, epoch_loss, ws_psnr(probe_ref, probe_clamped)});
  }
  return trace;
}

// Fixed-seed two-conv feature extractor standing in for a pretrained network:
// deterministic features of the right shape for the feature loss.
inline Image toy_feature_provider(const Image& erp, int out_channels, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  const int mid = 8;
  std::vector<float> k1(static_cast<size_t>(mid) * erp.channels * 9), k2(static_cast<size_t>(out_channels) * mid * 9);
  for (auto& v : k1) v = nd(rng) * 0.3f;
  for (auto& v : k2) v = nd(rng) * 0.3f;

  auto conv3 = [](const Image& in, const std::vector<float>& k, int out_c) {
    Image out(in.height, in.width, out_c);
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x)
        for (int o = 0; o < out_c; ++o) {
          double acc = 0.0;
          for (int c = 0; c < in.channels; ++c)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const int yy = std::clamp(y + dy, 0, in.height - 1);
                const int xx = ((x + dx) % in.width + in.width) % in.width;
                acc += in.at(yy, xx, c) * k[((o * in.channels + c) * 3 + dy + 1) * 3 + dx + 1];
              }
          out.at(y, x, o) = std::tanh(static_cast<float>(acc));
        }
    return out;
  };
  return conv3(conv3(erp, k1, mid), k2, out_channels);
}

}  // namespace icosr
