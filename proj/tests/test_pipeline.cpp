#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "icosr/sr_pipeline.hpp"

using namespace icosr;

namespace {

Image synthetic_erp(int h, int w, unsigned seed) {
  Image img(h, w, 3);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(0.0, 2.0 * kPi);
  const double p1 = ud(rng), p2 = ud(rng), p3 = ud(rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double th = (y + 0.5) * kPi / h;
      const double ph = (x + 0.5) * 2.0 * kPi / w - kPi;
      img.at(y, x, 0) = static_cast<float>(0.5 + 0.25 * std::sin(3 * th + p1) + 0.15 * std::cos(2 * ph + p2));
      img.at(y, x, 1) = static_cast<float>(0.5 + 0.3 * std::cos(2 * th + p3) * std::sin(ph));
      img.at(y, x, 2) = static_cast<float>(0.5 + 0.2 * std::sin(4 * ph + p1) * std::sin(th));
    }
  return img;
}

Dataset micro_dataset(int n_images, int lr_h, int scale) {
  Dataset ds;
  for (int i = 0; i < n_images; ++i) {
    ds.lr.push_back(synthetic_erp(lr_h, 2 * lr_h, 100 + i));
    ds.hr.push_back(synthetic_erp(lr_h * scale, 2 * lr_h * scale, 100 + i));
  }
  return ds;
}

const ModelConfig kMicroConfig{/*level=*/2, /*channels=*/4, /*res_blocks=*/1, /*freq_count=*/2,
                               /*hidden=*/8, /*dec_layers=*/2, /*scale=*/4};

}  // namespace

TEST_CASE("zero-weight model renders its decoder bias for any projection") {
  auto m = make_sr_model<float>(kMicroConfig, 3);
  for (auto& c : m.convs) {
    std::fill(c.weights.begin(), c.weights.end(), 0.0f);
    std::fill(c.bias.begin(), c.bias.end(), 0.0f);
  }
  for (auto& w : m.decoder.weights) w.setZero();
  for (auto& b : m.decoder.biases) b.setZero();
  m.decoder.biases.back() << 0.3f, 0.6f, 0.9f;

  const auto lr_img = synthetic_erp(16, 32, 7);
  for (const auto& spec : {ProjectionSpec::erp(12, 24), ProjectionSpec::cubemap_face(10, 10, 0.2, 1.3, 0.0)}) {
    const auto out = forward_sr(m, lr_img, spec);
    for (float v : out.data) {
      const bool one_of = std::abs(v - 0.3f) < 1e-6 || std::abs(v - 0.6f) < 1e-6 || std::abs(v - 0.9f) < 1e-6;
      REQUIRE(one_of);
    }
  }
}

TEST_CASE("forward_sr is bit-deterministic") {
  const auto m = make_sr_model<float>(kMicroConfig, 11);
  const auto lr_img = synthetic_erp(16, 32, 9);
  const auto spec = ProjectionSpec::erp(24, 48);
  const auto a = forward_sr(m, lr_img, spec);
  const auto b = forward_sr(m, lr_img, spec);
  REQUIRE(a.data == b.data);
}

TEST_CASE("residual trunk with zero conv weights is the identity") {
  auto m = make_sr_model<float>(kMicroConfig, 13);
  for (auto& c : m.convs) {
    std::fill(c.weights.begin(), c.weights.end(), 0.0f);
    std::fill(c.bias.begin(), c.bias.end(), 0.0f);
  }
  SphereTensor<float> feats(m.layout, m.cfg.channels);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> ud(-1.0f, 1.0f);
  for (auto& v : feats.values) v = ud(rng);
  const auto out = trunk_forward(m, feats);
  REQUIRE(out.values == feats.values);
}

TEST_CASE("one Adam step reduces a quadratic") {
  std::vector<double> w = {1.0};
  std::vector<double> g = {2.0 * w[0]};
  ParamView<double> pv;
  pv.data = {w.data()};
  pv.sizes = {1};
  ParamView<double> gv;
  gv.data = {g.data()};
  gv.sizes = {1};
  Adam adam;
  adam.update(pv, gv, 0.1);
  REQUIRE(w[0] * w[0] < 1.0);
}

TEST_CASE("checkpoint round trip is bit-exact; corruption raises distinct faults") {
  const auto dir = std::filesystem::temp_directory_path() / "icosr_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "model.ckpt").string();

  auto m = make_sr_model<float>(kMicroConfig, 21);
  save_checkpoint(m, path);
  const auto loaded = load_checkpoint(path);

  auto pa = parameters_of(m);
  auto pb = parameters_of(const_cast<SrModel<float>&>(loaded));
  REQUIRE(pa.sizes == pb.sizes);
  for (size_t c = 0; c < pa.data.size(); ++c)
    for (size_t i = 0; i < pa.sizes[c]; ++i) REQUIRE(pa.data[c][i] == pb.data[c][i]);
  REQUIRE(loaded.cfg.level == m.cfg.level);
  REQUIRE(loaded.seed == m.seed);

  // Flipped byte in the body -> CRC fault.
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[bytes.size() / 2] ^= 0x40;
    std::ofstream out(path + ".crc", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_checkpoint(path + ".crc");
    FAIL("expected CRC fault");
  } catch (const CheckpointError& e) {
    REQUIRE(e.fault == CheckpointFault::bad_crc);
  }

  // Truncated file -> dimension fault.
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 64);
    std::ofstream out(path + ".trunc", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_checkpoint(path + ".trunc");
    FAIL("expected dimension fault");
  } catch (const CheckpointError& e) {
    REQUIRE(e.fault == CheckpointFault::bad_dims);
  }

  // Wrong magic.
  {
    std::ofstream out(path + ".magic", std::ios::binary);
    out << "NOPE" << std::string(64, '\0');
  }
  try {
    load_checkpoint(path + ".magic");
    FAIL("expected magic fault");
  } catch (const CheckpointError& e) {
    REQUIRE(e.fault == CheckpointFault::bad_magic);
  }

  // Wrong version.
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[4] = 9;
    std::ofstream out(path + ".ver", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_checkpoint(path + ".ver");
    FAIL("expected version fault");
  } catch (const CheckpointError& e) {
    REQUIRE(e.fault == CheckpointFault::bad_version);
  }
}

TEST_CASE("fixed-seed training is bit-reproducible") {
  const auto data = micro_dataset(2, 8, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 1e-3;
  cfg.loss.queries_per_step = 16;
  cfg.loss.lambda_start_epoch = 1;
  cfg.feature_height = 8;
  cfg.feature_width = 16;
  cfg.probe_height = 8;
  cfg.probe_width = 16;
  cfg.seed = 77;

  const auto dir = std::filesystem::temp_directory_path() / "icosr_train_test";
  std::filesystem::create_directories(dir);

  std::array<std::string, 2> paths;
  std::array<std::vector<TraceRow>, 2> traces;
  for (int run = 0; run < 2; ++run) {
    auto m = make_sr_model<float>(kMicroConfig, 5);
    traces[run] = train(m, data, cfg);
    paths[run] = (dir / ("run" + std::to_string(run) + ".ckpt")).string();
    save_checkpoint(m, paths[run]);
  }
  std::ifstream a(paths[0], std::ios::binary), b(paths[1], std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  REQUIRE(ba == bb);
  REQUIRE(traces[0].size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    REQUIRE(traces[0][i].loss == traces[1][i].loss);
    REQUIRE(std::isfinite(traces[0][i].ws_psnr));
  }
}

TEST_CASE("full-pipeline gradients match finite differences (micro model, 64-bit)") {
  auto m = make_sr_model<double>(kMicroConfig, 31);

  const auto lr_img = synthetic_erp(8, 16, 41);
  const auto hr_img = synthetic_erp(32, 64, 41);

  StepContext<double> ctx;
  const auto sampled = sample_erp_to_sphere(lr_img, m.grid, m.layout);
  ctx.input = SphereTensor<double>(m.layout, 3);
  for (size_t i = 0; i < sampled.values.size(); ++i) ctx.input.values[i] = sampled.values[i];
  ctx.hr = &hr_img;
  ctx.query_spec = ProjectionSpec::erp(32, 64);
  std::mt19937_64 rng(43);
  for (int k = 0; k < 12; ++k)
    ctx.pixels.push_back({static_cast<int>(rng() % 64), static_cast<int>(rng() % 32)});

  const ProjectionSpec feat_spec = ProjectionSpec::erp(8, 16);
  const auto plan = plan_feature_conversion(m.grid, feat_spec);
  Image gt_small(8, 16, 3);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) gt_small.at(y, x, c) = bilinear_wrap(hr_img, (y + 0.5) * 4.0, (x + 0.5) * 4.0, c);
  const Image proj_feats = toy_feature_provider(gt_small, m.cfg.channels, 99);
  Image sr_small = gt_small;
  for (auto& v : sr_small.data) v += 0.05f;
  const FeatureMask mask = build_mask(sr_small, gt_small, proj_feats);
  ctx.lambda = 0.3;
  ctx.proj_features = &proj_feats;
  ctx.mask = &mask;
  ctx.plan = &plan;

  ModelGrads<double> grads;
  grads.init_like(m);
  compute_loss(m, ctx, &grads);

  auto pv = parameters_of(m);
  auto gv = parameters_of(grads);
  const double h = 1e-5;
  int checked = 0;
  for (size_t chunk = 0; chunk < pv.data.size(); ++chunk) {
    const size_t stride = std::max<size_t>(1, pv.sizes[chunk] / 6);
    for (size_t i = 0; i < pv.sizes[chunk]; i += stride, ++checked) {
      const double orig = pv.data[chunk][i];
      pv.data[chunk][i] = orig + h;
      const double lp = compute_loss<double>(m, ctx, nullptr);
      pv.data[chunk][i] = orig - h;
      const double lm = compute_loss<double>(m, ctx, nullptr);
      pv.data[chunk][i] = orig;
      const double fd = (lp - lm) / (2 * h);
      REQUIRE(gv.data[chunk][i] == Catch::Approx(fd).epsilon(1e-3).margin(1e-9));
    }
  }
  REQUIRE(checked > 50);
}

TEST_CASE("dataset loading via manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "icosr_data_test";
  std::filesystem::create_directories(dir);
  const auto lr_img = synthetic_erp(8, 16, 1);
  const auto hr_img = synthetic_erp(32, 64, 1);
  write_png(lr_img, (dir / "a_lr.png").string());
  write_png(hr_img, (dir / "a_hr.png").string());
  {
    std::ofstream m(dir / "manifest.txt");
    m << "# pairs\n";
    m << "a_lr.png a_hr.png\n";
  }
  const auto ds = load_dataset(dir.string());
  REQUIRE(ds.lr.size() == 1);
  REQUIRE(ds.lr[0].height == 8);
  REQUIRE(ds.hr[0].height == 32);

  REQUIRE_THROWS_AS(load_dataset((dir / "missing").string()), IoError);
}

TEST_CASE("training rejects inconsistent datasets and aborts on non-finite loss") {
  auto m = make_sr_model<float>(kMicroConfig, 51);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.loss.queries_per_step = 4;
  cfg.probe_height = 8;
  cfg.probe_width = 16;

  Dataset bad = micro_dataset(1, 8, 2);  // HR is only x2 but the model is x4
  REQUIRE_THROWS_AS(train(m, bad, cfg), InvalidInputError);

  Dataset ok = micro_dataset(1, 8, 4);
  m.convs[0].weights[0] = std::numeric_limits<float>::infinity();
  REQUIRE_THROWS_AS(train(m, ok, cfg), NumericError);
}
