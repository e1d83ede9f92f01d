#include "nobox/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#ifndef NOBOX_VERSION
#define NOBOX_VERSION "unknown"
#endif

namespace nobox {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json range_json(PixelRange r) { return json::array({r.lo, r.hi}); }

PixelRange range_from(const json& j) {
  require(j.is_array() && j.size() == 2, "pixel_range must be [lo, hi]");
  return {j[0].get<float>(), j[1].get<float>()};
}

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  require(j.is_object(), where + " must be an object");
  for (const auto& [key, _] : j.items())
    require(known.count(key) > 0, "unknown key '" + key + "' in " + where);
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

json to_json(const ModelSpec& s) {
  return {{"model", nobox::to_json(s.model)},
          {"train", nobox::to_json(s.train)},
          {"init_seed", s.init_seed},
          {"data_seed", s.data_seed},
          {"train_images", s.train_images},
          {"val_images", s.val_images}};
}

ModelSpec model_spec_from_json(const json& j) {
  reject_unknown(j, {"model", "train", "init_seed", "data_seed", "train_images",
                     "val_images"},
                 "model spec");
  ModelSpec s;
  s.model = model_config_from_json(j.value("model", json::object()));
  s.train = train_config_from_json(j.value("train", json::object()));
  s.init_seed = j.value("init_seed", s.init_seed);
  s.data_seed = j.value("data_seed", s.data_seed);
  s.train_images = j.value("train_images", s.train_images);
  s.val_images = j.value("val_images", s.val_images);
  require(s.train_images >= 1 && s.val_images >= 1, "image counts must be positive");
  return s;
}

json to_json(const DenoiserSpec& s) {
  return {{"model", nobox::to_json(s.model)},
          {"train",
           {{"max_sigma", s.train.max_sigma},
            {"learning_rate", s.train.learning_rate},
            {"epochs", s.train.epochs},
            {"batch_size", s.train.batch_size},
            {"seed", s.train.seed}}},
          {"init_seed", s.init_seed},
          {"data_seed", s.data_seed},
          {"train_images", s.train_images}};
}

DenoiserSpec denoiser_spec_from_json(const json& j) {
  reject_unknown(j, {"model", "train", "init_seed", "data_seed", "train_images"},
                 "denoiser spec");
  DenoiserSpec s;
  s.model = denoiser_config_from_json(j.value("model", json::object()));
  const auto t = j.value("train", json::object());
  reject_unknown(t, {"max_sigma", "learning_rate", "epochs", "batch_size", "seed"},
                 "denoiser train config");
  s.train.max_sigma = t.value("max_sigma", s.train.max_sigma);
  s.train.learning_rate = t.value("learning_rate", s.train.learning_rate);
  s.train.epochs = t.value("epochs", s.train.epochs);
  s.train.batch_size = t.value("batch_size", s.train.batch_size);
  s.train.seed = t.value("seed", s.train.seed);
  s.init_seed = j.value("init_seed", s.init_seed);
  s.data_seed = j.value("data_seed", s.data_seed);
  s.train_images = j.value("train_images", s.train_images);
  require(s.train_images >= 1, "image counts must be positive");
  return s;
}

json to_json(const AttackSpec& a) {
  return {{"name", a.name},
          {"k", a.k},
          {"r", a.r},
          {"normalize", a.normalize},
          {"aggregation", std::string(to_string(a.aggregation))},
          {"gamma", a.gamma},
          {"max_iters", a.max_iters},
          {"t", a.t},
          {"steps_per_unit_t", a.steps_per_unit_t},
          {"sigma", a.sigma},
          {"crop_fraction", a.crop_fraction},
          {"mode", std::string(to_string(a.mode))},
          {"denoiser", a.denoiser}};
}

AttackSpec attack_spec_from_json(const json& j) {
  reject_unknown(j, {"name", "k", "r", "normalize", "aggregation", "gamma",
                     "max_iters", "t", "steps_per_unit_t", "sigma",
                     "crop_fraction", "mode", "denoiser"},
                 "attack");
  AttackSpec a;
  a.name = j.value("name", a.name);
  a.k = j.value("k", a.k);
  a.r = j.value("r", a.r);
  a.normalize = j.value("normalize", a.normalize);
  if (j.contains("aggregation"))
    a.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
  a.gamma = j.value("gamma", a.gamma);
  a.max_iters = j.value("max_iters", a.max_iters);
  a.t = j.value("t", a.t);
  a.steps_per_unit_t = j.value("steps_per_unit_t", a.steps_per_unit_t);
  a.sigma = j.value("sigma", a.sigma);
  a.crop_fraction = j.value("crop_fraction", a.crop_fraction);
  if (j.contains("mode")) a.mode = regen_mode_from_string(j.at("mode").get<std::string>());
  a.denoiser = j.value("denoiser", a.denoiser);
  return a;
}

const std::set<std::string>& attack_names() {
  static const std::set<std::string> names{"none",     "oft",      "opt_transfer",
                                           "regen",    "diffpure", "gaussian",
                                           "crop_resize"};
  return names;
}

bool uses_surrogates(const std::string& attack) {
  return attack == "oft" || attack == "opt_transfer";
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + file.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "write failed for " + file.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    fail(ErrorKind::kIo, "cannot create output directory " + dir.string());
}

// Per-process memo so that a sweep loads each checkpoint once.
std::mutex cache_mutex;
std::map<std::string, std::shared_ptr<WatermarkModel>> model_memo;
std::map<std::string, std::shared_ptr<Denoiser>> denoiser_memo;

}  // namespace

void ExperimentConfig::validate() const {
  require(width >= kMinImageSide && height >= kMinImageSide,
          "image sides must be at least 8");
  require(range.lo < range.hi, "pixel range must have lo < hi");
  require(n_images >= 1, "n_images must be at least 1");
  require(!victim.empty(), "no victim given");
  require(attack_names().count(attack.name) > 0, "unknown attack '" + attack.name + "'");
  require(fpr_budget > 0.0 && fpr_budget < 1.0, "FPR budget must lie in (0, 1)");
  if (uses_surrogates(attack.name)) {
    require(attack.k >= 1, "k must be at least 1");
    require(static_cast<std::size_t>(attack.k) <= surrogates.size(),
            "k exceeds the number of listed surrogates");
  }
  if (attack.name == "regen" || attack.name == "diffpure")
    require(!attack.denoiser.empty(), attack.name + " needs a denoiser");
}

json to_json(const ExperimentConfig& c) {
  json models = json::object();
  for (const auto& [name, spec] : c.models) models[name] = to_json(spec);
  json denoisers = json::object();
  for (const auto& [name, spec] : c.denoisers) denoisers[name] = to_json(spec);
  return {{"name", c.name},
          {"width", c.width},
          {"height", c.height},
          {"pixel_range", range_json(c.range)},
          {"n_images", c.n_images},
          {"seed", c.seed},
          {"test_data_seed", c.test_data_seed},
          {"test_data_dir", c.test_data_dir.string()},
          {"models", models},
          {"denoisers", denoisers},
          {"victim", c.victim},
          {"surrogates", c.surrogates},
          {"attack", to_json(c.attack)},
          {"fpr_budget", c.fpr_budget},
          {"tails", std::string(to_string(c.tails))},
          {"cache_dir", c.cache_dir.string()},
          {"output_dir", c.output_dir.string()}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  reject_unknown(j, {"name", "width", "height", "pixel_range", "n_images", "seed",
                     "test_data_seed", "test_data_dir", "models", "denoisers",
                     "victim", "surrogates", "attack", "fpr_budget", "tails",
                     "cache_dir", "output_dir"},
                 "experiment config");
  ExperimentConfig c;
  try {
    c.name = j.value("name", c.name);
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    if (j.contains("pixel_range")) c.range = range_from(j.at("pixel_range"));
    c.n_images = j.value("n_images", c.n_images);
    c.seed = j.value("seed", c.seed);
    c.test_data_seed = j.value("test_data_seed", c.test_data_seed);
    c.test_data_dir = j.value("test_data_dir", std::string());
    const json models = j.value("models", json::object());
    for (const auto& [name, spec] : models.items()) c.models[name] = model_spec_from_json(spec);
    const json denoisers = j.value("denoisers", json::object());
    for (const auto& [name, spec] : denoisers.items())
      c.denoisers[name] = denoiser_spec_from_json(spec);
    c.victim = j.value("victim", c.victim);
    c.surrogates = j.value("surrogates", c.surrogates);
    c.attack = attack_spec_from_json(j.value("attack", json::object()));
    c.fpr_budget = j.value("fpr_budget", c.fpr_budget);
    if (j.contains("tails")) c.tails = tails_from_string(j.at("tails").get<std::string>());
    c.cache_dir = j.value("cache_dir", c.cache_dir.string());
    c.output_dir = j.value("output_dir", c.output_dir.string());
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidArgument, std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& file) {
  auto cfg = experiment_config_from_json(read_json_file(file));
  // Relative directories are taken relative to the config file.
  const auto base = file.parent_path();
  auto anchor = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  anchor(cfg.cache_dir);
  anchor(cfg.output_dir);
  anchor(cfg.test_data_dir);
  return cfg;
}

std::string json_hash(const json& j) {
  const auto text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& cfg) {
  auto j = to_json(cfg);
  j.erase("cache_dir");
  j.erase("output_dir");
  j.erase("name");
  return json_hash(j);
}

fs::path model_cache_path(const ExperimentConfig& cfg, const std::string& name) {
  const auto it = cfg.models.find(name);
  require(it != cfg.models.end(), "no model spec named '" + name + "'");
  return cfg.cache_dir / (name + "-" + json_hash(to_json(it->second)));
}

std::shared_ptr<WatermarkModel> resolve_model(const ExperimentConfig& cfg,
                                              const std::string& ref) {
  const auto it = cfg.models.find(ref);
  const fs::path dir = it != cfg.models.end() ? model_cache_path(cfg, ref) : fs::path(ref);
  const auto key = fs::absolute(dir).lexically_normal().string();
  std::lock_guard lock(cache_mutex);
  if (auto m = model_memo.find(key); m != model_memo.end()) return m->second;

  if (!is_checkpoint_dir(dir)) {
    if (it == cfg.models.end())
      fail(ErrorKind::kIo, "'" + ref + "' is neither a model spec nor a checkpoint");
    const auto& spec = it->second;
    auto model = build_model(spec.model, spec.init_seed);
    const auto data =
        ingest_dataset(SyntheticSource{spec.data_seed}, spec.model.width,
                       spec.model.height, spec.train_images + spec.val_images,
                       spec.model.pixel_range);
    TrainReport report;
    const double seconds = time_attack([&] {
      report = train(model, data.slice(0, spec.train_images),
                     data.slice(spec.train_images, spec.val_images), spec.train);
    });
    const auto tmp = fs::path(dir.string() + ".partial");
    fs::remove_all(tmp);
    save_checkpoint(model, tmp);
    write_json_file(tmp / "train_report.json", to_json(report));
    write_json_file(tmp / "spec.json", to_json(spec));
    write_json_file(tmp / "timing.json", {{"train_seconds", seconds}});
    fs::remove_all(dir);
    fs::rename(tmp, dir);
  }
  // Always serve the on-disk weights so fresh and cached runs agree.
  auto loaded = std::make_shared<WatermarkModel>(load_checkpoint(dir));
  model_memo[key] = loaded;
  return loaded;
}

std::shared_ptr<Denoiser> resolve_denoiser(const ExperimentConfig& cfg,
                                           const std::string& ref) {
  const auto it = cfg.denoisers.find(ref);
  const fs::path dir =
      it != cfg.denoisers.end()
          ? cfg.cache_dir / (ref + "-" + json_hash(to_json(it->second)))
          : fs::path(ref);
  const auto key = fs::absolute(dir).lexically_normal().string();
  std::lock_guard lock(cache_mutex);
  if (auto d = denoiser_memo.find(key); d != denoiser_memo.end()) return d->second;

  if (!fs::is_regular_file(dir / "manifest.json")) {
    if (it == cfg.denoisers.end())
      fail(ErrorKind::kIo, "'" + ref + "' is neither a denoiser spec nor a checkpoint");
    const auto& spec = it->second;
    Denoiser d(spec.model, spec.init_seed);
    const auto data = ingest_dataset(SyntheticSource{spec.data_seed}, spec.model.width,
                                     spec.model.height, spec.train_images,
                                     spec.model.pixel_range);
    const auto losses = train_denoiser(d, data, spec.train);
    const auto tmp = fs::path(dir.string() + ".partial");
    fs::remove_all(tmp);
    save_denoiser(d, tmp);
    write_json_file(tmp / "train_losses.json", losses);
    fs::remove_all(dir);
    fs::rename(tmp, dir);
  }
  auto loaded = std::make_shared<Denoiser>(load_denoiser(dir));
  denoiser_memo[key] = loaded;
  return loaded;
}

RunRecord run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunRecord rec;
  rec.started_at = utc_now();
  rec.code_version = NOBOX_VERSION;
  rec.config = to_json(cfg);
  rec.config_hash = config_hash(cfg);

  const auto victim = resolve_model(cfg, cfg.victim);
  require(victim->width() == cfg.width && victim->height() == cfg.height &&
              victim->pixel_range() == cfg.range,
          "victim dimensions or pixel range differ from the experiment");
  const auto ell = victim->secret_length();
  rec.policy = calibrate_threshold(ell, cfg.fpr_budget, cfg.tails);
  if (!rec.policy.feasible)
    fail(ErrorKind::kInfeasible,
         "no threshold meets the FPR budget for secret length " + std::to_string(ell));

  const DatasetSource source =
      cfg.test_data_dir.empty() ? DatasetSource{SyntheticSource{cfg.test_data_seed}}
                                : DatasetSource{DirectorySource{cfg.test_data_dir}};
  const auto test = ingest_dataset(source, cfg.width, cfg.height, cfg.n_images, cfg.range);
  const auto secrets = random_secret_batch(cfg.n_images, ell, mix(cfg.seed, 1));
  const auto x_wm = victim->embed(test.images, secrets);

  SurrogateEnsemble ens;
  ens.aggregation = cfg.attack.aggregation;
  if (uses_surrogates(cfg.attack.name))
    for (std::int64_t i = 0; i < cfg.attack.k; ++i)
      ens.models.push_back(resolve_model(cfg, cfg.surrogates[static_cast<std::size_t>(i)]));
  std::shared_ptr<Denoiser> denoiser;
  if (!cfg.attack.denoiser.empty() &&
      (cfg.attack.name == "regen" || cfg.attack.name == "diffpure"))
    denoiser = resolve_denoiser(cfg, cfg.attack.denoiser);

  const auto& a = cfg.attack;
  const auto attack_seed = mix(cfg.seed, 2);
  torch::Tensor x_a;
  const double seconds = time_attack([&] {
    if (a.name == "none") {
      x_a = x_wm.clone();
    } else if (a.name == "oft") {
      x_a = oft_attack(x_wm, ens, AttackBudget{a.r, a.normalize}, cfg.range);
    } else if (a.name == "opt_transfer") {
      TransferOptConfig tc;
      tc.r = a.r;
      tc.gamma = a.gamma;
      tc.max_iters = a.max_iters;
      x_a = opt_transfer_attack(x_wm, ens, tc, cfg.range).images;
    } else if (a.name == "regen") {
      auto gen = make_generator(attack_seed);
      const double level = a.sigma;
      ImageMap denoise = [&](const torch::Tensor& t) { return denoiser->denoise(t, level); };
      ImageMap identity = [](const torch::Tensor& t) { return t; };
      x_a = regenerate(x_wm, a.mode, a.sigma, denoise, identity, cfg.range, gen);
    } else if (a.name == "diffpure") {
      DiffPureConfig dc;
      dc.t = a.t;
      dc.denoiser = denoiser;
      dc.steps_per_unit_t = a.steps_per_unit_t;
      x_a = diffpure_attack(x_wm, dc, cfg.range, attack_seed);
    } else {
      NoiseLayerSpec spec;
      spec.kind = a.name == "gaussian" ? NoiseKind::kGaussian : NoiseKind::kCropResize;
      spec.sigma = a.sigma;
      spec.crop_fraction = a.crop_fraction;
      x_a = distortion_attack(x_wm, spec, cfg.range, attack_seed);
    }
  });

  auto& out = rec.outcome;
  out.method = a.name;
  out.k = uses_surrogates(a.name) ? a.k : 0;
  out.r = a.r;
  out.normalize = a.normalize;
  out.seed = cfg.seed;
  out.secret_length = ell;
  out.wall_seconds = seconds;

  torch::Tensor matched;
  {
    torch::NoGradGuard no_grad;
    matched = matched_bits_rows(victim->decode_bits(x_a), secrets);
  }
  const auto* mb = matched.data_ptr<std::int64_t>();
  for (std::int64_t i = 0; i < cfg.n_images; ++i) {
    const auto wm = ImageTensor::from_tensor(x_wm[i].contiguous(), cfg.range);
    const auto att = ImageTensor::from_tensor(x_a[i].contiguous(), cfg.range);
    ImageOutcome im;
    im.matched_bits = mb[i];
    im.ba = static_cast<double>(mb[i]) / static_cast<double>(ell);
    im.detected = rec.policy.detects(mb[i]);
    im.linf = linf_distance(att, wm);
    im.ssim = ssim(att, wm);
    out.images.push_back(im);
  }
  out.aggregate();
  rec.finished_at = utc_now();
  return rec;
}

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{
      "k",     "r",        "t",          "sigma",    "gamma",  "max_iters",
      "crop_fraction", "aggregation", "normalize", "attack", "n_images",
      "seed",  "victim",   "surrogates", "fpr_budget"};
  return axes;
}

ExperimentConfig with_axis_value(const ExperimentConfig& cfg, const std::string& axis,
                                 const json& value) {
  const auto& axes = sweep_axes();
  require(std::find(axes.begin(), axes.end(), axis) != axes.end(),
          "unknown sweep axis '" + axis + "'");
  auto j = to_json(cfg);
  static const std::set<std::string> attack_fields{
      "k", "r", "t", "sigma", "gamma", "max_iters", "crop_fraction", "aggregation",
      "normalize"};
  if (attack_fields.count(axis)) j["attack"][axis] = value;
  else if (axis == "attack") j["attack"]["name"] = value;
  else j[axis] = value;
  auto out = experiment_config_from_json(j);
  out.cache_dir = cfg.cache_dir;
  out.output_dir = cfg.output_dir;
  out.test_data_dir = cfg.test_data_dir;
  return out;
}

std::vector<RunRecord> sweep(const ExperimentConfig& cfg, const std::string& axis,
                             const std::vector<json>& values) {
  require(!values.empty(), "sweep needs at least one value");
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) configs.push_back(with_axis_value(cfg, axis, v));
  std::vector<RunRecord> records;
  for (const auto& c : configs) records.push_back(run_experiment(c));
  return records;
}

json run_json(const RunRecord& r) {
  auto j = aggregate_json(r.outcome);
  j["secret_length"] = r.outcome.secret_length;
  j["n_images"] = r.outcome.images.size();
  j["tau"] = r.policy.tau;
  j["detector_fpr"] = r.policy.fpr;
  j["tails"] = std::string(to_string(r.policy.tails));
  j["config_hash"] = r.config_hash;
  j["code_version"] = r.code_version;
  j["config"] = r.config;
  return j;
}

std::vector<json> comparison_order(std::vector<json> aggregates) {
  std::stable_sort(aggregates.begin(), aggregates.end(), [](const json& a, const json& b) {
    const auto ma = a.at("method").get<std::string>();
    const auto mb = b.at("method").get<std::string>();
    if (ma != mb) return ma < mb;
    const auto ka = a.at("k").get<std::int64_t>();
    const auto kb = b.at("k").get<std::int64_t>();
    if (ka != kb) return ka < kb;
    return a.value("config_hash", std::string()) < b.value("config_hash", std::string());
  });
  return aggregates;
}

std::string comparison_table_csv(const std::vector<json>& aggregates) {
  std::ostringstream os;
  os << "attack,k,r,normalize,evasion_rate,avg_ba,mean_linf,mean_ssim,"
        "wall_seconds,config_hash\n";
  char buf[256];
  for (const auto& a : comparison_order(aggregates)) {
    std::snprintf(buf, sizeof(buf), "%s,%lld,%.6g,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%s\n",
                  a.at("method").get<std::string>().c_str(),
                  static_cast<long long>(a.at("k").get<std::int64_t>()),
                  a.at("r").get<double>(), a.at("normalize").get<bool>() ? 1 : 0,
                  a.at("evasion_rate").get<double>(), a.at("avg_ba").get<double>(),
                  a.at("mean_linf").get<double>(), a.at("mean_ssim").get<double>(),
                  a.at("wall_seconds").get<double>(),
                  a.value("config_hash", std::string()).c_str());
    os << buf;
  }
  return os.str();
}

namespace {

// Minimal SVG charts: one polyline per attack over k, or one bar per run.
struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b"};

std::string svg_lines(const std::string& title, const std::string& ylabel,
                      const std::vector<Series>& series, double ymin, double ymax) {
  const double W = 480, H = 320, L = 60, R = 20, T = 40, B = 50;
  double xmin = 1e300, xmax = -1e300;
  for (const auto& s : series)
    for (const auto& [x, _] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
    }
  if (xmin > xmax) xmin = 0, xmax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
                "font-family=\"sans-serif\" font-size=\"12\">\n",
                W, H);
  os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\">" << title << "</text>\n";
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                L, H - B, W - R, H - B, L, T, L, H - B);
  os << buf;
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.2f</text>\n", L - 6,
                  py(y) + 4, y);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">k</text>\n"
                "<text x=\"14\" y=\"%g\" transform=\"rotate(-90 14 %g)\" "
                "text-anchor=\"middle\">%s</text>\n",
                (L + W - R) / 2, H - 12, (T + H - B) / 2, (T + H - B) / 2, ylabel.c_str());
  os << buf;
  std::set<double> ticks;
  for (const auto& s : series)
    for (const auto& [x, _] : s.points) ticks.insert(x);
  for (double x : ticks) {
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%g</text>\n", px(x),
                  H - B + 16, x);
    os << buf;
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[i].points) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(x), py(y));
      os << buf;
    }
    os << "\"/>\n";
    for (const auto& [x, y] : series[i].points) {
      std::snprintf(buf, sizeof(buf),
                    "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n", px(x),
                    py(y), color);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"%g\" fill=\"%s\">%s</text>\n", W - R - 110,
                  T + 14.0 * static_cast<double>(i + 1), color,
                  series[i].label.c_str());
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_bars(const std::string& title,
                     const std::vector<std::pair<std::string, double>>& bars) {
  const double W = 480, H = 320, L = 60, R = 20, T = 40, B = 70;
  double vmax = 0.0;
  for (const auto& [_, v] : bars) vmax = std::max(vmax, v);
  if (vmax <= 0.0) vmax = 1.0;
  const double slot = (W - L - R) / static_cast<double>(std::max<std::size_t>(1, bars.size()));
  std::ostringstream os;
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
                "font-family=\"sans-serif\" font-size=\"11\">\n",
                W, H);
  os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\">" << title << "</text>\n";
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L,
                H - B, W - R, H - B);
  os << buf;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = bars[i].second / vmax * (H - T - B);
    const double x = L + slot * static_cast<double>(i) + slot * 0.15;
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" "
                  "fill=\"%s\"/>\n<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\">"
                  "%.3gs</text>\n<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\">%s</text>\n",
                  x, H - B - h, slot * 0.7, h, kPalette[i % std::size(kPalette)],
                  x + slot * 0.35, H - B - h - 4, bars[i].second, x + slot * 0.35,
                  H - B + 16, bars[i].first.c_str());
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace

ReportFiles write_summary(const std::vector<json>& aggregates, const fs::path& dir) {
  require(!aggregates.empty(), "report needs at least one record");
  ensure_dir(dir);
  ReportFiles files;
  files.table = dir / "comparison.csv";
  write_text(files.table, comparison_table_csv(aggregates));

  std::map<std::string, Series> ev, ba;
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& a : comparison_order(aggregates)) {
    const auto method = a.at("method").get<std::string>();
    const auto k = a.at("k").get<std::int64_t>();
    ev[method].label = method;
    ev[method].points.emplace_back(static_cast<double>(k), a.at("evasion_rate").get<double>());
    ba[method].label = method;
    ba[method].points.emplace_back(static_cast<double>(k), a.at("avg_ba").get<double>());
    bars.emplace_back(method + (k ? " k=" + std::to_string(k) : ""),
                      a.at("wall_seconds").get<double>());
  }
  auto values = [](const std::map<std::string, Series>& m) {
    std::vector<Series> v;
    for (const auto& [_, s] : m) v.push_back(s);
    return v;
  };
  const auto p1 = dir / "evasion_vs_k.svg";
  const auto p2 = dir / "ba_vs_k.svg";
  const auto p3 = dir / "runtime.svg";
  write_text(p1, svg_lines("Evasion rate vs k", "evasion rate", values(ev), 0.0, 1.0));
  write_text(p2, svg_lines("Bit-wise accuracy vs k", "average BA", values(ba), 0.0, 1.0));
  write_text(p3, svg_bars("Attack runtime", bars));
  files.plots = {p1, p2, p3};
  return files;
}

ReportFiles emit_report(std::vector<RunRecord>& records, const fs::path& dir) {
  require(!records.empty(), "report needs at least one record");
  ensure_dir(dir);

  ReportFiles files;
  for (auto& r : records) {
    const auto json_path = dir / (r.config_hash + ".json");
    const auto csv_path = dir / (r.config_hash + ".csv");
    write_text(json_path, run_json(r).dump(2) + "\n");
    write_text(csv_path, per_image_csv(r.outcome));
    write_json_file(dir / (r.config_hash + ".run.json"),
                    {{"config_hash", r.config_hash},
                     {"started_at", r.started_at},
                     {"finished_at", r.finished_at},
                     {"code_version", r.code_version},
                     {"csv", csv_path.filename().string()}});
    r.csv_path = csv_path;
    files.json.push_back(json_path);
    files.csv.push_back(csv_path);
  }
  std::vector<json> aggregates;
  for (const auto& r : records) aggregates.push_back(run_json(r));
  const auto summary = write_summary(aggregates, dir);
  files.table = summary.table;
  files.plots = summary.plots;
  return files;
}

std::vector<json> read_report(const fs::path& dir) {
  require(fs::is_directory(dir), "report directory does not exist: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.path().extension() == ".json" && name.find(".run.") == std::string::npos)
      paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<json> out;
  for (const auto& p : paths) out.push_back(read_json_file(p));
  return out;
}

}  // namespace nobox
