#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <sstream>

#include "icosr/sr_pipeline.hpp"

namespace {

using namespace icosr;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

struct ProjectionFlags {
  std::string kind = "erp";
  int width = 0, height = 0;  // 0 = derive a default
  double fov_h_deg = 0.0, fov_v_deg = 0.0;
  double yaw_deg = 0.0, pitch_deg = 0.0, roll_deg = 0.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--proj", kind, "Output projection: erp|perspective|fisheye|cubemap")
        ->check(CLI::IsMember({"erp", "perspective", "fisheye", "cubemap"}));
    cmd->add_option("--width", width, "Output width in pixels");
    cmd->add_option("--height", height, "Output height in pixels");
    cmd->add_option("--fov-h", fov_h_deg, "Horizontal FOV in degrees (perspective/fisheye)");
    cmd->add_option("--fov-v", fov_v_deg, "Vertical FOV in degrees (perspective/fisheye)");
    cmd->add_option("--yaw", yaw_deg, "Optical-axis yaw in degrees (rotation about the world z axis)");
    cmd->add_option("--pitch", pitch_deg,
                    "Optical-axis pitch in degrees (0 looks at the north pole, 90 at the equator)");
    cmd->add_option("--roll", roll_deg, "Roll about the optical axis, degrees");
  }

  ProjectionSpec build(int default_h, int default_w) const {
    const double d2r = kPi / 180.0;
    int h = height > 0 ? height : default_h;
    int w = width > 0 ? width : default_w;
    if (kind == "erp") return ProjectionSpec::erp(h, w);
    if (h == 0) h = 512;
    if (w == 0) w = 512;
    const double fh = fov_h_deg > 0 ? fov_h_deg : (kind == "fisheye" ? 180.0 : 90.0);
    const double fv = fov_v_deg > 0 ? fov_v_deg : (kind == "fisheye" ? 180.0 : 90.0);
    if (kind == "perspective")
      return ProjectionSpec::perspective(h, w, fh * d2r, fv * d2r, yaw_deg * d2r, pitch_deg * d2r, roll_deg * d2r);
    if (kind == "fisheye")
      return ProjectionSpec::fisheye(h, w, fh * d2r, fv * d2r, yaw_deg * d2r, pitch_deg * d2r, roll_deg * d2r);
    return ProjectionSpec::cubemap_face(h, w, yaw_deg * d2r, pitch_deg * d2r, roll_deg * d2r);
  }
};

void parse_level_range(const std::string& text, int& lo, int& hi) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    lo = hi = std::stoi(text);
    return;
  }
  lo = std::stoi(text.substr(0, dots));
  hi = std::stoi(text.substr(dots + 2));
  if (hi < lo) throw InvalidInputError("level range must be ascending: " + text);
}

int run_info(int level) {
  const auto grid = IcosphereGrid::build(level);
  const auto map = build_layout(grid);
  std::cout << "level=" << level << "\n"
            << "faces=" << grid.face_count() << "\n"
            << "vertices=" << grid.vertex_count() << "\n"
            << "edges=" << grid.edge_count() << "\n"
            << "panels=" << map.panels << "\n"
            << "panel_rows=" << map.panel_height << "\n"
            << "panel_cols=" << map.panel_width << "\n"
            << "edge_length_scale=" << std::setprecision(12) << grid.edge_length_scale << "\n";
  return kExitOk;
}

int run_convert(const std::string& in_path, const std::string& out_path, const ProjectionFlags& proj) {
  const Image src = read_png(in_path);
  if (src.width != 2 * src.height) throw InvalidInputError("convert expects a 2:1 ERP input image");
  const ProjectionSpec spec = proj.build(src.height, src.width);
  Image out(spec.height, spec.width, src.channels);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const SpherePoint s = pixel_to_sphere(spec, x + 0.5, y + 0.5);
      const double sy = s.theta / kPi * src.height;
      const double sx = (s.phi + kPi) / (2.0 * kPi) * src.width;
      for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = bilinear_wrap(src, sy, sx, c);
    }
  write_png(out, out_path);
  return kExitOk;
}

int run_sr(const std::string& ckpt, const std::string& in_path, const std::string& out_path,
           const ProjectionFlags& proj, int scale, int threads) {
  const auto model = load_checkpoint(ckpt);
  const Image lr_img = read_png(in_path);
  const int s = scale > 0 ? scale : model.cfg.scale;
  const ProjectionSpec spec = proj.build(lr_img.height * s, lr_img.width * s);
  Image out = forward_sr(model, lr_img, spec, threads);
  for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  write_png(out, out_path);
  return kExitOk;
}

int run_train(const std::string& data_dir, const std::string& out_ckpt, const std::string& trace_path,
              const ModelConfig& mcfg, TrainConfig tcfg) {
  const Dataset data = load_dataset(data_dir);
  auto model = make_sr_model<float>(mcfg, static_cast<uint32_t>(tcfg.seed));
  const auto trace = train(model, data, tcfg);
  save_checkpoint(model, out_ckpt);

  const std::string csv = trace_path.empty() ? out_ckpt + ".csv" : trace_path;
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write loss trace: " + csv);
  out << "epoch,loss,ws_psnr\n" << std::setprecision(10);
  for (const auto& row : trace) out << row.epoch << "," << row.loss << "," << row.ws_psnr << "\n";
  std::cout << "checkpoint=" << out_ckpt << "\n"
            << "trace=" << csv << "\n"
            << "final_loss=" << std::setprecision(10) << trace.back().loss << "\n";
  return kExitOk;
}

int run_metrics(const std::string& ref_path, const std::string& test_path, const std::string& metric) {
  const Image ref = read_png(ref_path);
  const Image test = read_png(test_path);
  double value = 0.0;
  if (metric == "ws-psnr")
    value = ws_psnr(ref, test);
  else if (metric == "psnr")
    value = psnr(ref, test);
  else if (metric == "ws-ssim")
    value = ws_ssim(ref, test);
  else
    value = ssim(ref, test);
  std::cout << metric << "=" << std::setprecision(10) << value << "\n";
  return kExitOk;
}

int run_bench_memory(const std::string& levels, int layers, int channels) {
  int lo = 0, hi = 0;
  parse_level_range(levels, lo, hi);
  std::cout << "level calltable_bytes layout_bytes\n";
  for (int level = lo; level <= hi; ++level) {
    const auto r = activation_memory_report(level, layers, channels);
    std::cout << level << " " << r.calltable_bytes << " " << r.layout_bytes << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icosr: icosphere-based 360-degree image super-resolution with arbitrary output projection"};
  app.require_subcommand(1);

  auto* info = app.add_subcommand("info", "Print grid counts and panel layout dimensions");
  int info_level = 4;
  info->add_option("--level", info_level, "Icosphere subdivision level")->required();
  info->set_config("--config", "", "Key=value config file; command-line flags override it");

  auto* convert = app.add_subcommand("convert", "Reproject an ERP image by bilinear sphere sampling (no model)");
  std::string conv_in, conv_out;
  ProjectionFlags conv_proj;
  convert->add_option("--in", conv_in, "Input ERP PNG (width = 2 x height)")->required();
  convert->add_option("--out", conv_out, "Output PNG path")->required();
  conv_proj.attach(convert);
  convert->set_config("--config", "", "Key=value config file; command-line flags override it");

  auto* sr = app.add_subcommand("sr", "Super-resolve an LR ERP image with a trained checkpoint");
  std::string sr_ckpt, sr_in, sr_out;
  ProjectionFlags sr_proj;
  int sr_scale = 0, sr_threads = 1;
  sr->add_option("--ckpt", sr_ckpt, "Model checkpoint")->required();
  sr->add_option("--in", sr_in, "Input LR ERP PNG")->required();
  sr->add_option("--out", sr_out, "Output PNG path")->required();
  sr->add_option("--scale", sr_scale, "Upscaling factor for ERP output size (default: checkpoint scale)");
  sr->add_option("--threads", sr_threads, "Render threads (output is identical for any count)");
  sr_proj.attach(sr);
  sr->set_config("--config", "", "Key=value config file; command-line flags override it");

  auto* tr = app.add_subcommand("train", "Train on a directory of LR/HR ERP pairs (manifest.txt)");
  std::string tr_data, tr_out, tr_trace;
  ModelConfig mcfg;
  TrainConfig tcfg;
  long tr_seed = 0;
  tr->add_option("--data", tr_data, "Dataset directory containing manifest.txt")->required();
  tr->add_option("--out", tr_out, "Output checkpoint path")->required();
  tr->add_option("--trace", tr_trace, "Loss-trace CSV path (default: <out>.csv)");
  tr->add_option("--scale", mcfg.scale, "SR scale factor");
  tr->add_option("--epochs", tcfg.epochs, "Training epochs");
  tr->add_option("--seed", tr_seed, "RNG seed (weights, sampling)");
  tr->add_option("--level", mcfg.level, "Icosphere level");
  tr->add_option("--channels", mcfg.channels, "Backbone feature channels");
  tr->add_option("--res-blocks", mcfg.res_blocks, "Residual blocks");
  tr->add_option("--hidden", mcfg.hidden, "Decoder hidden width");
  tr->add_option("--dec-layers", mcfg.dec_layers, "Decoder layer count");
  tr->add_option("--freq", mcfg.freq_count, "Positional-encoding frequency count");
  tr->add_option("--lr", tcfg.lr, "Learning rate");
  tr->add_option("--lr-decay-epoch", tcfg.lr_decay_epoch, "Epoch at which the rate drops 10x");
  tr->add_option("--queries", tcfg.loss.queries_per_step, "Query samples per step");
  tr->add_option("--lambda", tcfg.loss.lambda, "Feature-loss weight once active");
  tr->add_option("--lambda-start", tcfg.loss.lambda_start_epoch, "Epoch at which the feature loss turns on");
  tr->set_config("--config", "", "Key=value config file; command-line flags override it");

  auto* met = app.add_subcommand("metrics", "Compare two images and print metric=value");
  std::string met_ref, met_test, met_name = "ws-psnr";
  met->add_option("--ref", met_ref, "Reference PNG")->required();
  met->add_option("--test", met_test, "Test PNG")->required();
  met->add_option("--metric", met_name, "One of ws-psnr|ws-ssim|psnr|ssim")
      ->check(CLI::IsMember({"ws-psnr", "ws-ssim", "psnr", "ssim"}));
  met->set_config("--config", "", "Key=value config file; command-line flags override it");

  auto* bench = app.add_subcommand("bench-memory", "Analytic activation-memory comparison of the two data layouts");
  std::string bench_levels = "4..7";
  int bench_layers = 16, bench_channels = 32;
  bench->add_option("--levels", bench_levels, "Level or ascending range, e.g. 5 or 4..7");
  bench->add_option("--layers", bench_layers, "Convolution layer count");
  bench->add_option("--channels", bench_channels, "Feature channels");
  bench->set_config("--config", "", "Key=value config file; command-line flags override it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*info) return run_info(info_level);
    if (*convert) return run_convert(conv_in, conv_out, conv_proj);
    if (*sr) return run_sr(sr_ckpt, sr_in, sr_out, sr_proj, sr_scale, sr_threads);
    if (*tr) {
      tcfg.seed = static_cast<uint64_t>(tr_seed);
      return run_train(tr_data, tr_out, tr_trace, mcfg, tcfg);
    }
    if (*met) return run_metrics(met_ref, met_test, met_name);
    if (*bench) return run_bench_memory(bench_levels, bench_layers, bench_channels);
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const InvalidInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
