#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "icosr/losses_metrics.hpp"

using namespace icosr;

namespace {

Image random_image(int h, int w, int c, unsigned seed) {
  Image img(h, w, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> ud(0.0f, 1.0f);
  for (auto& v : img.data) v = ud(rng);
  return img;
}

}  // namespace

TEST_CASE("multiscale L1: identity, constant offset, direct-sum oracle") {
  std::vector<Vec3> a = {{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}};
  REQUIRE(l1_multiscale(a, a) == 0.0);

  const double delta = 0.07;
  std::vector<Vec3> b;
  for (const auto& v : a) b.push_back({v.x + delta, v.y + delta, v.z + delta});
  REQUIRE(l1_multiscale(a, b) == Catch::Approx(3 * delta).margin(1e-12));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<Vec3> p, q;
  for (int i = 0; i < 257; ++i) {
    p.push_back({ud(rng), ud(rng), ud(rng)});
    q.push_back({ud(rng), ud(rng), ud(rng)});
  }
  double expect = 0.0;
  for (size_t i = 0; i < p.size(); ++i)
    expect += std::abs(p[i].x - q[i].x) + std::abs(p[i].y - q[i].y) + std::abs(p[i].z - q[i].z);
  expect /= p.size();
  REQUIRE(l1_multiscale(p, q) == Catch::Approx(expect).margin(1e-7));

  q.pop_back();
  REQUIRE_THROWS_AS(l1_multiscale(p, q), ShapeError);
}

TEST_CASE("feature mask: exact SR gives a zero mask, uniform features a flat channel mask") {
  const auto gt = random_image(12, 20, 3, 5);
  Image feats(12, 20, 4);
  std::fill(feats.data.begin(), feats.data.end(), 0.37f);

  const auto m0 = build_mask(gt, gt, feats);
  for (float v : m0.spatial.data) REQUIRE(v == 0.0f);
  for (float v : m0.channel) REQUIRE(v == Catch::Approx(0.25f).margin(1e-7));

  // And a zero spatial mask forces a zero feature loss.
  const auto converted = random_image(12, 20, 4, 7);
  REQUIRE(feature_loss_on_converted(converted, feats, m0) == 0.0);
}

TEST_CASE("feature mask and loss match a direct recomputation") {
  const auto sr = random_image(16, 24, 3, 11);
  const auto gt = random_image(16, 24, 3, 13);
  const auto feats = random_image(16, 24, 5, 17);
  const auto conv = random_image(16, 24, 5, 19);

  const auto mask = build_mask(sr, gt, feats);

  // Spatial: mean abs error over channels, max-normalized.
  float max_err = 0.0f;
  Image expect_spatial(16, 24, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 24; ++x) {
      float e = 0.0f;
      for (int c = 0; c < 3; ++c) e += std::abs(sr.at(y, x, c) - gt.at(y, x, c));
      expect_spatial.at(y, x, 0) = e / 3;
      max_err = std::max(max_err, e / 3);
    }
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 24; ++x)
      REQUIRE(mask.spatial.at(y, x, 0) == Catch::Approx(expect_spatial.at(y, x, 0) / max_err).margin(1e-7));

  // Channel: softmax of the per-channel means.
  std::array<double, 5> gap{};
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 24; ++x)
      for (int c = 0; c < 5; ++c) gap[c] += feats.at(y, x, c);
  double z = 0.0;
  for (auto& v : gap) {
    v /= 16.0 * 24.0;
    z += std::exp(v);
  }
  double channel_sum = 0.0;
  for (int c = 0; c < 5; ++c) {
    REQUIRE(mask.channel[c] == Catch::Approx(std::exp(gap[c]) / z).margin(1e-6));
    channel_sum += mask.channel[c];
  }
  REQUIRE(channel_sum == Catch::Approx(1.0).margin(1e-6));

  // Loss: masked L1 normalized by element count.
  double expect = 0.0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 24; ++x)
      for (int c = 0; c < 5; ++c)
        expect += mask.spatial.at(y, x, 0) * mask.channel[c] * std::abs(conv.at(y, x, c) - feats.at(y, x, c));
  expect /= 16.0 * 24.0 * 5.0;
  REQUIRE(feature_loss_on_converted(conv, feats, mask) == Catch::Approx(expect).margin(1e-7));

  REQUIRE_THROWS_AS(feature_loss_on_converted(random_image(8, 8, 5, 1), feats, mask), ShapeError);
}

TEST_CASE("feature loss via sphere features: identical conversion gives zero") {
  const auto g = IcosphereGrid::build(2);
  const auto map = build_layout(g);
  const auto feats = [&] {
    SphereTensor<float> t(map, 3);
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<float> ud(0.0f, 1.0f);
    for (auto& v : t.values) v = ud(rng);
    return t;
  }();
  const auto spec = ProjectionSpec::erp(32, 64);
  const auto target = convert_features(feats, g, spec);
  FeatureMask mask;
  mask.spatial = Image(32, 64, 1);
  std::fill(mask.spatial.data.begin(), mask.spatial.data.end(), 1.0f);
  mask.channel = {0.5f, 0.25f, 0.25f};
  REQUIRE(feature_loss(feats, g, spec, target, mask) == 0.0);
}

TEST_CASE("WS-PSNR: sentinel, constant-error closed form, uniform weights") {
  const auto img = random_image(64, 128, 3, 29);
  REQUIRE(std::isinf(ws_psnr(img, img)));
  REQUIRE(std::isinf(psnr(img, img)));

  // Constant 1/255 error: weights cancel, 20*log10(255) =~ 48.13 dB.
  Image off = img;
  for (auto& v : off.data) v += 1.0f / 255.0f;
  REQUIRE(ws_psnr(img, off) == Catch::Approx(20.0 * std::log10(255.0)).margin(0.01));
  REQUIRE(psnr(img, off) == Catch::Approx(20.0 * std::log10(255.0)).margin(0.01));

  // Uniform weights reduce WS-PSNR to plain PSNR.
  const auto test = random_image(64, 128, 3, 31);
  const double uniform = weighted_psnr(img, test, std::vector<double>(64, 1.0));
  REQUIRE(uniform == Catch::Approx(psnr(img, test)).margin(1e-9));

  REQUIRE_THROWS_AS(ws_psnr(img, random_image(32, 64, 3, 1)), ShapeError);
}

TEST_CASE("ERP row weights are symmetric and positive") {
  const int a = 64;
  const auto w = detail::erp_row_weights(a);
  for (int y = 0; y < a / 2; ++y) {
    REQUIRE(w[y] == Catch::Approx(w[a - 1 - y]).margin(1e-12));
    REQUIRE(w[y] > 0.0);
  }
}

TEST_CASE("SSIM family basics") {
  const auto img = random_image(32, 48, 3, 37);
  REQUIRE(ssim(img, img) == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(ws_ssim(img, img) == Catch::Approx(1.0).margin(1e-9));

  Image noisy = img;
  std::mt19937_64 rng(41);
  std::normal_distribution<float> nd(0.0f, 0.1f);
  for (auto& v : noisy.data) v = std::clamp(v + nd(rng), 0.0f, 1.0f);
  const double s = ssim(img, noisy);
  REQUIRE(s < 1.0);
  REQUIRE(s > 0.0);
  const double wss = ws_ssim(img, noisy);
  REQUIRE(wss < 1.0);
  REQUIRE(wss > 0.0);
}

TEST_CASE("loss config schedule and validation") {
  LossConfig cfg;
  cfg.lambda = 0.3;
  cfg.lambda_start_epoch = 100;
  cfg.validate();
  REQUIRE(cfg.lambda_at(0) == 0.0);
  REQUIRE(cfg.lambda_at(99) == 0.0);
  REQUIRE(cfg.lambda_at(100) == 0.3);
  cfg.lambda = -1.0;
  REQUIRE_THROWS_AS(cfg.validate(), InvalidInputError);
}
