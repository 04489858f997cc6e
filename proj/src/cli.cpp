#include "nfps/cli.hpp"

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "nfps/datagen.hpp"
#include "nfps/io.hpp"
#include "nfps/pipeline.hpp"
#include "nfps/predict.hpp"
#include "nfps/scenes.hpp"

namespace nfps::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// JSON helpers. Every command reads a JSON object, applies flag overrides,
// converts it to typed settings and writes the fully resolved object back.

class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw Error(ErrorKind::invalid_config, where_ + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::invalid_config, where_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
    return &j_.at(key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.contains(item.key())) {
        throw Error(ErrorKind::invalid_config, where_ + ": unknown key '" + item.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json load_json(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config " + path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw Error(ErrorKind::invalid_config, path + ": expected a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::invalid_config, path + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

void read_camera(const json& j, const std::string& where, CameraIntrinsics& k) {
  Reader r(j, where);
  bool centered = !j.contains("u0") && !j.contains("v0");
  r.get("focal_px", k.focal_px);
  r.get("width", k.width);
  r.get("height", k.height);
  r.get("u0", k.u0);
  r.get("v0", k.v0);
  r.finish();
  if (centered) k = CameraIntrinsics::centered(k.width, k.height, k.focal_px);
  k.validate();
}

json dump_camera(const CameraIntrinsics& k) {
  return {{"focal_px", k.focal_px}, {"width", k.width}, {"height", k.height},
          {"u0", k.u0},             {"v0", k.v0}};
}

std::string to_string(IntegrationMode mode) {
  return mode == IntegrationMode::least_squares ? "least_squares" : "l1";
}

void read_integrator(const json& j, const std::string& where, IntegratorConfig& c) {
  Reader r(j, where);
  std::string mode = to_string(c.mode);
  r.get("mode", mode);
  if (mode == "least_squares") {
    c.mode = IntegrationMode::least_squares;
  } else if (mode == "l1") {
    c.mode = IntegrationMode::l1_admm;
  } else {
    throw Error(ErrorKind::invalid_config, r.path("mode") + ": expected least_squares or l1");
  }
  r.get("lambda", c.lambda);
  r.get("admm_penalty", c.admm_penalty);
  r.get("max_iters", c.max_iters);
  r.get("tol", c.tol);
  r.get("admm_max_iters", c.admm_max_iters);
  r.get("admm_tol", c.admm_tol);
  r.get("admm_inner_iters", c.admm_inner_iters);
  r.finish();
  c.validate();
}

json dump_integrator(const IntegratorConfig& c) {
  return {{"mode", to_string(c.mode)},        {"lambda", c.lambda},
          {"admm_penalty", c.admm_penalty},   {"max_iters", c.max_iters},
          {"tol", c.tol},                     {"admm_max_iters", c.admm_max_iters},
          {"admm_tol", c.admm_tol},           {"admm_inner_iters", c.admm_inner_iters}};
}

BrdfModel parse_model(const std::string& name, const std::string& where) {
  if (name == "lambertian") return BrdfModel::lambertian;
  if (name == "blinn_phong") return BrdfModel::blinn_phong;
  if (name == "mix") return BrdfModel::diffuse_specular_mix;
  throw Error(ErrorKind::invalid_config,
              where + ": unknown model '" + name + "' (lambertian, blinn_phong or mix)");
}

std::string model_name(BrdfModel m) {
  switch (m) {
    case BrdfModel::lambertian: return "lambertian";
    case BrdfModel::blinn_phong: return "blinn_phong";
    case BrdfModel::diffuse_specular_mix: return "mix";
  }
  return "unknown";
}

Material read_material(const json& j, const std::string& where, int channels) {
  if (j.is_string()) return material_preset(j.get<std::string>(), channels);
  Reader r(j, where);
  std::string model = "lambertian";
  json albedo = 0.5;
  Material m;
  r.get("model", model);
  r.get("albedo", albedo);
  r.get("specular_strength", m.specular_strength);
  r.get("shininess", m.shininess);
  r.get("metallic_mix", m.metallic_mix);
  r.finish();
  m.model = parse_model(model, r.path("model"));
  if (albedo.is_number()) {
    m.albedo = spectrum(channels, albedo.get<double>());
  } else if (albedo.is_array() && static_cast<int>(albedo.size()) == channels) {
    m.albedo = Spectrum(channels);
    for (int c = 0; c < channels; ++c) m.albedo[c] = albedo[static_cast<std::size_t>(c)].get<double>();
  } else {
    throw Error(ErrorKind::invalid_config,
                r.path("albedo") + ": expected a number or " + std::to_string(channels) + " numbers");
  }
  m.validate();
  return m;
}

json dump_material(const Material& m) {
  json albedo = json::array();
  for (Eigen::Index c = 0; c < m.albedo.size(); ++c) albedo.push_back(m.albedo[c]);
  return {{"model", model_name(m.model)},
          {"albedo", albedo},
          {"specular_strength", m.specular_strength},
          {"shininess", m.shininess},
          {"metallic_mix", m.metallic_mix}};
}

void read_interval(Reader& r, const std::string& key, Interval& iv) {
  std::vector<double> v{iv.lo, iv.hi};
  r.get(key, v);
  if (v.size() != 2) throw Error(ErrorKind::invalid_config, r.path(key) + ": expected [lo, hi]");
  iv = {v[0], v[1]};
}

LightRig load_rig(const std::string& path) { return path.empty() ? default_rig() : read_rig(path); }

std::string image_name(std::size_t m) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "image_%02zu.pfm", m);
  return buf;
}

void prepare_out(const std::string& out) {
  if (out.empty()) throw Error(ErrorKind::invalid_config, "--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + out + ": " + ec.message());
}

// A capture directory as written by render-synthetic.
struct Capture {
  CameraIntrinsics intrinsics;
  LightRig rig;
  Mask mask;
  std::vector<Image> images;
};

Capture read_capture(const fs::path& dir) {
  Capture c;
  json cam = load_json((dir / "camera.json").string());
  read_camera(cam, "camera.json", c.intrinsics);
  c.rig = read_rig(dir / "rig.txt");
  c.mask = read_mask(dir / "mask.pfm");
  if (c.mask.width() != c.intrinsics.width || c.mask.height() != c.intrinsics.height) {
    throw Error(ErrorKind::dimension, (dir / "mask.pfm").string() + ": does not match camera.json");
  }
  for (std::size_t m = 0; m < c.rig.size(); ++m) {
    const fs::path p = dir / image_name(m);
    Image img = read_pfm(p);
    if (img.width != c.intrinsics.width || img.height != c.intrinsics.height) {
      throw Error(ErrorKind::dimension, p.string() + ": does not match camera.json");
    }
    c.images.push_back(std::move(img));
  }
  return c;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON configuration file");
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config)");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--threads", c.threads, "OpenMP threads (0 = runtime default)")
      ->check(CLI::NonNegativeNumber);
}

// ---------------------------------------------------------------------------
// render-synthetic

struct RenderFlags {
  std::optional<std::string> shape, material, rig;
};

int cmd_render(const Common& common, const RenderFlags& flags) {
  json cfg = load_json(common.config);
  if (flags.shape) cfg["shape"] = *flags.shape;
  if (flags.material) cfg["material"] = *flags.material;
  if (flags.rig) cfg["rig"] = *flags.rig;
  if (common.seed) cfg["seed"] = *common.seed;

  Reader r(cfg, "config");
  SceneSpec spec;
  std::string shape = "sphere", rig_path;
  int channels = 1;
  r.get("shape", shape);
  r.get("channels", channels);
  if (channels != 1 && channels != 3) {
    throw Error(ErrorKind::invalid_config, "config.channels must be 1 or 3");
  }
  spec.shape = parse_scene_shape(shape);
  spec.material = material_preset("lambertian", channels);
  if (const json* cam = r.sub("camera")) read_camera(*cam, "config.camera", spec.intrinsics);
  if (const json* mat = r.sub("material")) spec.material = read_material(*mat, "config.material", channels);
  r.get("distance", spec.distance);
  r.get("radius", spec.radius);
  r.get("height", spec.height);
  r.get("bump_count", spec.bump_count);
  r.get("albedo_variation", spec.albedo_variation);
  r.get("noise_sigma", spec.noise_sigma);
  r.get("seed", spec.seed);
  r.get("rig", rig_path);
  r.finish();
  spec.validate();
  const LightRig rig = load_rig(rig_path);
  prepare_out(common.out);

  const RenderedScene rendered = render_synthetic(spec, rig);
  const fs::path out = common.out;
  for (std::size_t m = 0; m < rendered.images.size(); ++m) {
    write_pfm(out / image_name(m), rendered.images[m]);
  }
  write_depth(out / "depth.pfm", rendered.scene.depth);
  write_normals(out / "normals.pfm", rendered.scene.normals);
  write_mask(out / "mask.pfm", rendered.scene.depth.mask);
  write_rig(out / "rig.txt", rig);
  write_json(out / "camera.json", dump_camera(spec.intrinsics));
  write_json(out / "scene.json", {{"exposure", rendered.exposure},
                                  {"images", rendered.images.size()},
                                  {"masked_pixels", count(rendered.scene.depth.mask)}});
  write_json(out / "resolved_config.json",
             {{"shape", to_string(spec.shape)},
              {"channels", channels},
              {"camera", dump_camera(spec.intrinsics)},
              {"material", dump_material(spec.material)},
              {"distance", spec.distance},
              {"radius", spec.radius},
              {"height", spec.height},
              {"bump_count", spec.bump_count},
              {"albedo_variation", spec.albedo_variation},
              {"noise_sigma", spec.noise_sigma},
              {"seed", spec.seed},
              {"rig", rig_path}});
  std::cerr << "rendered " << rendered.images.size() << " images of " << to_string(spec.shape)
            << " (" << count(rendered.scene.depth.mask) << " pixels) to " << out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// generate-dataset

int cmd_generate(const Common& common, std::optional<std::uint64_t> count_flag) {
  json cfg = load_json(common.config);
  if (count_flag) cfg["count"] = *count_flag;
  if (common.seed) cfg["seed"] = *common.seed;

  DatagenConfig c = DatagenConfig::defaults();
  Reader r(cfg, "config");
  std::string rig_path;
  r.get("rig", rig_path);
  if (!rig_path.empty()) c.rig = read_rig(rig_path);
  if (const json* cam = r.sub("camera")) read_camera(*cam, "config.camera", c.intrinsics);
  std::vector<double> range{c.depth_range.near, c.depth_range.far};
  r.get("depth_range", range);
  if (range.size() != 2) throw Error(ErrorKind::invalid_config, "config.depth_range: expected [near, far]");
  c.depth_range = {range[0], range[1]};
  r.get("depth_sigma", c.depth_sigma);
  r.get("map_size", c.map_size);
  r.get("count", c.count);
  r.get("seed", c.seed);
  r.get("max_retries", c.max_retries);
  if (const json* m = r.sub("materials")) {
    Reader mr(*m, "config.materials");
    std::vector<std::string> models;
    for (BrdfModel b : c.materials.models) models.push_back(model_name(b));
    mr.get("models", models);
    c.materials.models.clear();
    for (const auto& name : models) c.materials.models.push_back(parse_model(name, mr.path("models")));
    read_interval(mr, "albedo", c.materials.albedo);
    read_interval(mr, "specular_strength", c.materials.specular_strength);
    read_interval(mr, "shininess", c.materials.shininess);
    read_interval(mr, "metallic_mix", c.materials.metallic_mix);
    mr.get("channels", c.materials.channels);
    mr.finish();
  }
  if (const json* a = r.sub("augmentation")) {
    Reader ar(*a, "config.augmentation");
    ar.get("cast_shadow_prob", c.aug.cast_shadow_prob);
    ar.get("shadow_factor_max", c.aug.shadow_factor_max);
    ar.get("ambient_max", c.aug.ambient_max);
    ar.get("self_reflection_max", c.aug.self_reflection_max);
    ar.get("noise_sigma", c.aug.noise_sigma);
    ar.finish();
  }
  r.finish();
  c.validate();
  prepare_out(common.out);

  const fs::path out = fs::path(common.out) / "dataset.bin";
  generate_dataset(c, out);

  json models = json::array();
  for (BrdfModel b : c.materials.models) models.push_back(model_name(b));
  auto iv = [](Interval i) { return json::array({i.lo, i.hi}); };
  write_json(fs::path(common.out) / "resolved_config.json",
             {{"rig", rig_path},
              {"camera", dump_camera(c.intrinsics)},
              {"depth_range", {c.depth_range.near, c.depth_range.far}},
              {"depth_sigma", c.depth_sigma},
              {"map_size", c.map_size},
              {"count", c.count},
              {"seed", c.seed},
              {"max_retries", c.max_retries},
              {"materials",
               {{"models", models},
                {"albedo", iv(c.materials.albedo)},
                {"specular_strength", iv(c.materials.specular_strength)},
                {"shininess", iv(c.materials.shininess)},
                {"metallic_mix", iv(c.materials.metallic_mix)},
                {"channels", c.materials.channels}}},
              {"augmentation",
               {{"cast_shadow_prob", c.aug.cast_shadow_prob},
                {"shadow_factor_max", c.aug.shadow_factor_max},
                {"ambient_max", c.aug.ambient_max},
                {"self_reflection_max", c.aug.self_reflection_max},
                {"noise_sigma", c.aug.noise_sigma}}}});
  std::cerr << "wrote " << c.count << " examples to " << out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
  std::optional<std::string> data;
  std::optional<int> epochs;
};

int cmd_train(const Common& common, const TrainFlags& flags) {
  json cfg = load_json(common.config);
  if (flags.data) cfg["data"] = *flags.data;
  if (flags.epochs) cfg["epochs"] = *flags.epochs;
  if (common.seed) cfg["seed"] = *common.seed;

  Reader r(cfg, "config");
  std::string data_path;
  TrainConfig tc;
  NetShape shape;
  r.get("data", data_path);
  r.get("batch_size", tc.batch_size);
  r.get("epochs", tc.epochs);
  r.get("learning_rate", tc.learning_rate);
  r.get("lr_decay_per_epoch", tc.lr_decay_per_epoch);
  r.get("decay_after_epoch", tc.decay_after_epoch);
  r.get("seed", tc.seed);
  if (const json* n = r.sub("net")) {
    Reader nr(*n, "config.net");
    nr.get("conv1", shape.conv1);
    nr.get("conv2", shape.conv2);
    nr.get("conv3", shape.conv3);
    nr.get("hidden", shape.hidden);
    nr.finish();
  }
  r.finish();
  if (data_path.empty()) throw Error(ErrorKind::invalid_config, "train: no dataset (--data)");
  tc.validate();
  prepare_out(common.out);

  const Dataset data = read_dataset(data_path);
  shape.map_size = data.map_size;
  shape.channels = data.channels;
  shape.validate();
  TinyNet<float> net(shape, tc.seed);
  const TrainReport report = train(net, data, tc, [](int epoch, double loss) {
    std::cerr << "epoch " << epoch << "  loss " << std::setprecision(6) << loss << '\n';
  });

  const fs::path out = common.out;
  write_checkpoint(out / "checkpoint.bin", net);
  write_json(out / "train_log.json", {{"epoch_loss", report.epoch_loss}, {"steps", report.steps}});
  write_json(out / "resolved_config.json",
             {{"data", data_path},
              {"batch_size", tc.batch_size},
              {"epochs", tc.epochs},
              {"learning_rate", tc.learning_rate},
              {"lr_decay_per_epoch", tc.lr_decay_per_epoch},
              {"decay_after_epoch", tc.decay_after_epoch},
              {"seed", tc.seed},
              {"net",
               {{"conv1", shape.conv1}, {"conv2", shape.conv2}, {"conv3", shape.conv3},
                {"hidden", shape.hidden}}}});
  return kOk;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructFlags {
  std::optional<std::string> input, predictor, checkpoint, gt;
  std::optional<int> iterations;
  std::optional<double> init_depth;
  bool naive = false;
};

json metrics_json(const IterationResult& it) {
  json j = {{"seconds", it.seconds},
            {"integration_converged", it.integration_converged},
            {"pixels", count(it.depth.mask)}};
  if (it.metrics) {
    j["mae_nfcnn_deg"] = it.metrics->mae_nfcnn;
    j["mae_nfs_deg"] = it.metrics->mae_nfs;
    j["depth_error_mm"] = it.metrics->depth_error_mm;
  }
  return j;
}

void write_result(const fs::path& dir, const IterationResult& it) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
  write_normals(dir / "normals.pfm", it.predicted);
  write_normals(dir / "normals_nfs.pfm", it.differentiated);
  write_depth(dir / "depth.pfm", it.depth);
  write_mask(dir / "mask.pfm", it.depth.mask);
}

int cmd_reconstruct(const Common& common, const ReconstructFlags& flags) {
  json cfg = load_json(common.config);
  if (flags.input) cfg["input"] = *flags.input;
  if (flags.predictor) cfg["predictor"] = *flags.predictor;
  if (flags.checkpoint) cfg["checkpoint"] = *flags.checkpoint;
  if (flags.gt) cfg["gt"] = *flags.gt;
  if (flags.iterations) cfg["iterations"] = *flags.iterations;
  if (flags.init_depth) cfg["init_depth"] = *flags.init_depth;
  if (flags.naive) cfg["naive"] = true;

  Reader r(cfg, "config");
  std::string input, predictor = "lambertian", checkpoint, gt;
  bool naive = false;
  int erode_px = 3;
  ReconstructionConfig rc;
  r.get("input", input);
  r.get("predictor", predictor);
  r.get("checkpoint", checkpoint);
  r.get("gt", gt);
  r.get("iterations", rc.iterations);
  r.get("init_depth", rc.init_depth);
  r.get("map_size", rc.map_size);
  r.get("naive", naive);
  r.get("erode", erode_px);
  if (const json* ic = r.sub("integrator")) read_integrator(*ic, "config.integrator", rc.integrator);
  r.finish();
  if (input.empty()) throw Error(ErrorKind::invalid_config, "reconstruct: no capture (--in)");
  if (erode_px < 0) throw Error(ErrorKind::invalid_config, "config.erode must be >= 0");

  if (predictor == "lambertian") {
    rc.predictor = std::make_shared<LambertianPredictor>();
  } else if (predictor == "net") {
    if (checkpoint.empty()) {
      throw Error(ErrorKind::invalid_config, "reconstruct: --predictor net needs --checkpoint");
    }
    if (!fs::exists(checkpoint)) throw Error(ErrorKind::io, "checkpoint not found: " + checkpoint);
    TinyNet<float> net = read_checkpoint(checkpoint);
    rc.map_size = net.shape().map_size;
    rc.predictor = std::make_shared<NetPredictor>(std::move(net));
  } else {
    throw Error(ErrorKind::invalid_config, "unknown predictor '" + predictor + "' (lambertian or net)");
  }
  rc.validate();
  prepare_out(common.out);

  const Capture cap = read_capture(input);
  std::optional<GroundTruth> truth;
  if (!gt.empty()) {
    const Mask gt_mask = read_mask(fs::path(gt) / "mask.pfm");
    truth = GroundTruth{read_depth(fs::path(gt) / "depth.pfm", gt_mask),
                        read_normals(fs::path(gt) / "normals.pfm", gt_mask), erode(gt_mask, erode_px)};
  }

  const GroundTruth* t = truth ? &*truth : nullptr;
  const ReconstructionReport report =
      naive ? naive_farfield_reconstruct(cap.images, cap.rig, cap.intrinsics, cap.mask, rc, t)
            : reconstruct(cap.images, cap.rig, cap.intrinsics, cap.mask, rc, t);

  const fs::path out = common.out;
  json iterations = json::array();
  for (std::size_t i = 0; i < report.iterations.size(); ++i) {
    write_result(out / ("iter_" + std::to_string(i + 1)), report.iterations[i]);
    iterations.push_back(metrics_json(report.iterations[i]));
  }
  write_result(out, report.final());
  write_json(out / "report.json", {{"wall_seconds", report.wall_seconds}, {"iterations", iterations}});
  write_json(out / "resolved_config.json",
             {{"input", input},
              {"predictor", predictor},
              {"checkpoint", checkpoint},
              {"gt", gt},
              {"iterations", rc.iterations},
              {"init_depth", rc.init_depth},
              {"map_size", rc.map_size},
              {"naive", naive},
              {"erode", erode_px},
              {"integrator", dump_integrator(rc.integrator)}});

  for (std::size_t i = 0; i < report.iterations.size(); ++i) {
    const IterationResult& it = report.iterations[i];
    std::cout << "iteration " << i + 1 << ": " << count(it.depth.mask) << " px, "
              << std::fixed << std::setprecision(2) << it.seconds << " s";
    if (it.metrics) {
      std::cout << ", MAE NfCNN " << it.metrics->mae_nfcnn << " deg, MAE NfS "
                << it.metrics->mae_nfs << " deg, depth " << it.metrics->depth_error_mm << " mm";
    }
    std::cout << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const Common& common, const std::vector<std::string>& est,
                 const std::vector<std::string>& gt, int erode_px) {
  if (est.empty() || est.size() != gt.size()) {
    throw Error(ErrorKind::invalid_config, "evaluate: give matching --est and --gt directories");
  }
  if (erode_px < 0) throw Error(ErrorKind::invalid_config, "evaluate: --erode must be >= 0");
  json rows = json::array();
  std::cout << std::left << std::setw(24) << "object" << std::right << std::setw(12)
            << "MAE NfCNN" << std::setw(12) << "MAE NfS" << std::setw(12) << "depth mm" << '\n';
  for (std::size_t i = 0; i < est.size(); ++i) {
    const fs::path e = est[i];
    const fs::path g = gt[i];
    const Mask gt_mask = read_mask(g / "mask.pfm");
    const DepthMap gt_depth = read_depth(g / "depth.pfm", gt_mask);
    const NormalMap gt_normals = read_normals(g / "normals.pfm", gt_mask);
    const Mask region = erode(gt_mask, erode_px);

    const Mask est_mask = fs::exists(e / "mask.pfm") ? read_mask(e / "mask.pfm") : gt_mask;
    const NormalMap nfcnn = read_normals(e / "normals.pfm", est_mask);
    const fs::path nfs_path = fs::exists(e / "normals_nfs.pfm") ? e / "normals_nfs.pfm" : e / "normals.pfm";
    const NormalMap nfs = read_normals(nfs_path, est_mask);
    const DepthMap depth = read_depth(e / "depth.pfm", est_mask);

    const double a = mae_degrees(nfcnn, gt_normals, &region);
    const double b = mae_degrees(nfs, gt_normals, &region);
    const double c = mean_depth_error_mm(depth, gt_depth, &region);
    std::string name = e.filename().string();
    if (name.empty()) name = e.parent_path().filename().string();
    std::cout << std::left << std::setw(24) << name << std::right << std::fixed
              << std::setprecision(2) << std::setw(12) << a << std::setw(12) << b
              << std::setw(12) << c << '\n';
    rows.push_back({{"object", name}, {"est", e.string()}, {"gt", g.string()},
                    {"mae_nfcnn_deg", a}, {"mae_nfs_deg", b}, {"depth_error_mm", c}});
  }
  if (!common.out.empty()) {
    prepare_out(common.out);
    write_json(fs::path(common.out) / "metrics.json", rows);
    write_json(fs::path(common.out) / "resolved_config.json",
               {{"est", est}, {"gt", gt}, {"erode", erode_px}});
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// integrate-normals

struct IntegrateFlags {
  std::optional<std::string> normals, mask, camera, prior;
  std::optional<double> init_depth;
};

int cmd_integrate(const Common& common, const IntegrateFlags& flags) {
  json cfg = load_json(common.config);
  if (flags.normals) cfg["normals"] = *flags.normals;
  if (flags.mask) cfg["mask"] = *flags.mask;
  if (flags.camera) cfg["camera"] = *flags.camera;
  if (flags.prior) cfg["prior"] = *flags.prior;
  if (flags.init_depth) cfg["init_depth"] = *flags.init_depth;

  Reader r(cfg, "config");
  std::string normals_path, mask_path, camera_path, prior_path;
  double init_depth = 0.15;
  IntegratorConfig ic;
  r.get("normals", normals_path);
  r.get("mask", mask_path);
  r.get("camera", camera_path);
  r.get("prior", prior_path);
  r.get("init_depth", init_depth);
  if (const json* j = r.sub("integrator")) read_integrator(*j, "config.integrator", ic);
  r.finish();
  if (normals_path.empty() || mask_path.empty() || camera_path.empty()) {
    throw Error(ErrorKind::invalid_config, "integrate-normals: needs --normals, --mask and --camera");
  }
  if (!(init_depth > 0.0)) throw Error(ErrorKind::invalid_config, "config.init_depth must be > 0");
  prepare_out(common.out);

  CameraIntrinsics k;
  read_camera(load_json(camera_path), camera_path, k);
  const Mask mask = read_mask(mask_path);
  const NormalMap normals = read_normals(normals_path, mask);
  const DepthMap prior =
      prior_path.empty() ? DepthMap::constant(mask, init_depth) : read_depth(prior_path, mask);

  const LogGradients g = normals_to_log_gradients(normals, k);
  const IntegrationResult res = integrate(g, prior, ic);
  const NormalMap nfs = depth_to_normals(res.depth, k);

  const fs::path out = common.out;
  write_depth(out / "depth.pfm", res.depth);
  write_normals(out / "normals_nfs.pfm", nfs);
  write_mask(out / "mask.pfm", res.depth.mask);
  write_json(out / "report.json", {{"converged", res.converged},
                                   {"iterations", res.iterations},
                                   {"residual", res.residual},
                                   {"pixels", count(res.depth.mask)}});
  write_json(out / "resolved_config.json",
             {{"normals", normals_path}, {"mask", mask_path}, {"camera", camera_path},
              {"prior", prior_path}, {"init_depth", init_depth},
              {"integrator", dump_integrator(ic)}});
  std::cout << "integrated " << count(res.depth.mask) << " px in " << res.iterations
            << " iterations" << (res.converged ? "" : " (not converged)") << '\n';
  return kOk;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_config:
    case ErrorKind::dimension:
      return kConfigError;
    case ErrorKind::io:
    case ErrorKind::parse:
      return kIoError;
    case ErrorKind::numerical:
    case ErrorKind::insufficient_data:
    case ErrorKind::degenerate_lighting:
    case ErrorKind::empty_mask:
    case ErrorKind::invalid_depth:
    case ErrorKind::degenerate_point:
    case ErrorKind::degenerate_light:
      return kNumericalError;
  }
  return kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Near-field photometric stereo: synthetic data, training and reconstruction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "nfps 0.1");

  Common common;
  auto* render = app.add_subcommand("render-synthetic", "Render a synthetic capture with ground truth");
  add_common(render, common);
  RenderFlags rflags;
  render->add_option("--shape", rflags.shape, "sphere, paraboloid, bumps or plane");
  render->add_option("--material", rflags.material,
                     "Preset: lambertian, dielectric, metallic or intermediate");
  render->add_option("--rig", rflags.rig, "Light-rig file (default: 15-LED ring)");

  auto* generate = app.add_subcommand("generate-dataset", "Generate a training dataset");
  add_common(generate, common);
  std::optional<std::uint64_t> count_flag;
  generate->add_option("--count", count_flag, "Number of examples");

  auto* trainer = app.add_subcommand("train", "Train the per-pixel network");
  add_common(trainer, common);
  TrainFlags tflags;
  trainer->add_option("--data", tflags.data, "Dataset file");
  trainer->add_option("--epochs", tflags.epochs, "Epochs");

  auto* recon = app.add_subcommand("reconstruct", "Reconstruct normals and depth from a capture");
  add_common(recon, common);
  ReconstructFlags cflags;
  recon->add_option("--in", cflags.input, "Capture directory");
  recon->add_option("--predictor", cflags.predictor, "lambertian or net");
  recon->add_option("--checkpoint", cflags.checkpoint, "Network checkpoint");
  recon->add_option("--gt", cflags.gt, "Ground-truth directory for metrics");
  recon->add_option("--iterations", cflags.iterations, "Refinement iterations");
  recon->add_option("--init-depth", cflags.init_depth, "Initial plane depth (m)");
  recon->add_flag("--naive", cflags.naive, "Far-field ablation (single pass, no compensation)");

  auto* eval = app.add_subcommand("evaluate", "Compare reconstructions against ground truth");
  add_common(eval, common);
  std::vector<std::string> est, gt;
  int erode_px = 3;
  eval->add_option("--est", est, "Reconstruction directories")->required();
  eval->add_option("--gt", gt, "Ground-truth directories, same order")->required();
  eval->add_option("--erode", erode_px, "Erode the GT mask by this many pixels");

  auto* integ = app.add_subcommand("integrate-normals", "Integrate a normal map into depth");
  add_common(integ, common);
  IntegrateFlags iflags;
  integ->add_option("--normals", iflags.normals, "3-channel normal PFM");
  integ->add_option("--mask", iflags.mask, "Mask PFM");
  integ->add_option("--camera", iflags.camera, "Camera JSON");
  integ->add_option("--prior", iflags.prior, "Prior depth PFM (default: plane at init_depth)");
  integ->add_option("--init-depth", iflags.init_depth, "Prior plane depth (m)");

  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (common.threads > 0) omp_set_num_threads(common.threads);
    if (render->parsed()) return cmd_render(common, rflags);
    if (generate->parsed()) return cmd_generate(common, count_flag);
    if (trainer->parsed()) return cmd_train(common, tflags);
    if (recon->parsed()) return cmd_reconstruct(common, cflags);
    if (eval->parsed()) return cmd_evaluate(common, est, gt, erode_px);
    if (integ->parsed()) return cmd_integrate(common, iflags);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace nfps::cli
