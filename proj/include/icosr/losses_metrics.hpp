#pragma once

#include <limits>
#include <vector>

#include "icosr/image.hpp"
#include "icosr/sliif.hpp"

namespace icosr {

// ---------------------------------------------------------------------------
// Training losses
// ---------------------------------------------------------------------------

struct LossConfig {
  double lambda = 0.3;         // feature-loss weight once active
  int lambda_start_epoch = 100;  // zero before this epoch
  std::vector<int> scales = {2, 4};
  int queries_per_step = 2048;

  double lambda_at(int epoch) const { return epoch < lambda_start_epoch ? 0.0 : lambda; }

  void validate() const {
    if (lambda < 0) throw InvalidInputError("feature-loss weight must be nonnegative");
    for (int s : scales)
      if (s < 1) throw InvalidInputError("sampling scales must be >= 1");
    if (queries_per_step < 1) throw InvalidInputError("queries_per_step must be >= 1");
  }
};

// Mean over queries of the per-query L1 over channels. Queries may come from
// several sampling scales; the estimator does not care which.
inline double l1_multiscale(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  if (pred.size() != gt.size()) throw ShapeError("l1_multiscale: query count mismatch");
  if (pred.empty()) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i)
    acc += std::abs(pred[i].x - gt[i].x) + std::abs(pred[i].y - gt[i].y) + std::abs(pred[i].z - gt[i].z);
  return acc / static_cast<double>(pred.size());
}

// Feature mask: spatial emphasis from the SR error, channel emphasis from
// global average pooling of the projected features. Applied as an outer
// product.
struct FeatureMask {
  Image spatial;               // H x W x 1 in [0,1]
  std::vector<float> channel;  // sums to 1
};

inline FeatureMask build_mask(const Image& sr, const Image& gt, const Image& proj_features) {
  if (sr.height != gt.height || sr.width != gt.width || sr.channels != gt.channels)
    throw ShapeError("build_mask: SR/GT shape mismatch");
  FeatureMask m;
  m.spatial = Image(sr.height, sr.width, 1);
  float max_err = 0.0f;
  for (int y = 0; y < sr.height; ++y)
    for (int x = 0; x < sr.width; ++x) {
      float e = 0.0f;
      for (int c = 0; c < sr.channels; ++c) e += std::abs(sr.at(y, x, c) - gt.at(y, x, c));
      e /= sr.channels;
      m.spatial.at(y, x, 0) = e;
      max_err = std::max(max_err, e);
    }
  if (max_err > 0.0f)
    for (auto& v : m.spatial.data) v /= max_err;

  const int C = proj_features.channels;
  std::vector<double> gap(C, 0.0);
  for (int y = 0; y < proj_features.height; ++y)
    for (int x = 0; x < proj_features.width; ++x)
      for (int c = 0; c < C; ++c) gap[c] += proj_features.at(y, x, c);
  const double count = static_cast<double>(proj_features.height) * proj_features.width;
  double max_gap = -1e300;
  for (int c = 0; c < C; ++c) {
    gap[c] /= count;
    max_gap = std::max(max_gap, gap[c]);
  }
  double z = 0.0;
  for (int c = 0; c < C; ++c) z += std::exp(gap[c] - max_gap);
  m.channel.resize(C);
  for (int c = 0; c < C; ++c) m.channel[c] = static_cast<float>(std::exp(gap[c] - max_gap) / z);
  return m;
}

// Masked L1 between an already-converted feature image and the target
// features, normalized by element count.
inline double feature_loss_on_converted(const Image& converted, const Image& proj_features,
                                        const FeatureMask& mask) {
  if (converted.height != proj_features.height || converted.width != proj_features.width ||
      converted.channels != proj_features.channels)
    throw ShapeError("feature_loss: converted/target feature shape mismatch");
  const int C = converted.channels;
  double acc = 0.0;
  for (int y = 0; y < converted.height; ++y)
    for (int x = 0; x < converted.width; ++x) {
      const float s = mask.spatial.at(y, x, 0);
      for (int c = 0; c < C; ++c)
        acc += s * mask.channel[c] * std::abs(converted.at(y, x, c) - proj_features.at(y, x, c));
    }
  return acc / (static_cast<double>(converted.height) * converted.width * C);
}

template <typename T>
double feature_loss(const SphereTensor<T>& sphere_features, const IcosphereGrid& grid,
                    const ProjectionSpec& spec, const Image& proj_features, const FeatureMask& mask) {
  return feature_loss_on_converted(convert_features(sphere_features, grid, spec), proj_features, mask);
}

// ---------------------------------------------------------------------------
// Quality metrics. Images are [0,1] floats; peak signal is 1.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_same_shape(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw ShapeError(std::string(what) + ": image shape mismatch");
}

inline double weighted_mse(const Image& ref, const Image& test, const std::vector<double>& row_w) {
  double num = 0.0, den = 0.0;
  for (int y = 0; y < ref.height; ++y) {
    const double w = row_w[y];
    double row = 0.0;
    for (int x = 0; x < ref.width; ++x)
      for (int c = 0; c < ref.channels; ++c) {
        const double d = static_cast<double>(ref.at(y, x, c)) - test.at(y, x, c);
        row += d * d;
      }
    num += w * row;
    den += w * ref.width * ref.channels;
  }
  return num / den;
}

// ERP row weights: cos of the row-center latitude.
inline std::vector<double> erp_row_weights(int height) {
  std::vector<double> w(height);
  for (int y = 0; y < height; ++y) w[y] = std::cos((y + 0.5 - height / 2.0) * kPi / height);
  return w;
}

// Per-channel mean SSIM map over the valid (fully-windowed) region, reduced
// with the given row weights. 11x11 Gaussian window, sigma 1.5, K1=0.01,
// K2=0.03.
inline double ssim_weighted(const Image& ref, const Image& test, const std::vector<double>& row_w) {
  constexpr int R = 5;
  std::array<double, 11> g;
  double gsum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5.0;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    gsum += g[i];
  }
  for (auto& v : g) v /= gsum;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  const int H = ref.height, W = ref.width, C = ref.channels;
  if (H < 11 || W < 11) throw InvalidInputError("ssim needs images of at least 11x11");
  double num = 0.0, den = 0.0;
  for (int y = R; y < H - R; ++y) {
    const double w = row_w[y];
    for (int x = R; x < W - R; ++x) {
      double map_val = 0.0;
      for (int c = 0; c < C; ++c) {
        double mu1 = 0, mu2 = 0, m11 = 0, m22 = 0, m12 = 0;
        for (int dy = -R; dy <= R; ++dy)
          for (int dx = -R; dx <= R; ++dx) {
            const double wg = g[dy + R] * g[dx + R];
            const double a = ref.at(y + dy, x + dx, c);
            const double b = test.at(y + dy, x + dx, c);
            mu1 += wg * a;
            mu2 += wg * b;
            m11 += wg * a * a;
            m22 += wg * b * b;
            m12 += wg * a * b;
          }
        const double s11 = m11 - mu1 * mu1, s22 = m22 - mu2 * mu2, s12 = m12 - mu1 * mu2;
        map_val += ((2 * mu1 * mu2 + c1) * (2 * s12 + c2)) / ((mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2));
      }
      num += w * map_val / C;
      den += w;
    }
  }
  return num / den;
}

}  // namespace detail

inline double weighted_psnr(const Image& ref, const Image& test, const std::vector<double>& row_weights) {
  detail::check_same_shape(ref, test, "weighted_psnr");
  const double mse = detail::weighted_mse(ref, test, row_weights);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

inline double psnr(const Image& ref, const Image& test) {
  return weighted_psnr(ref, test, std::vector<double>(ref.height, 1.0));
}

inline double ws_psnr(const Image& ref, const Image& test) {
  detail::check_same_shape(ref, test, "ws_psnr");
  return weighted_psnr(ref, test, detail::erp_row_weights(ref.height));
}

inline double ssim(const Image& ref, const Image& test) {
  detail::check_same_shape(ref, test, "ssim");
  return detail::ssim_weighted(ref, test, std::vector<double>(ref.height, 1.0));
}

inline double ws_ssim(const Image& ref, const Image& test) {
  detail::check_same_shape(ref, test, "ws_ssim");
  return detail::ssim_weighted(ref, test, detail::erp_row_weights(ref.height));
}

}  // namespace icosr
