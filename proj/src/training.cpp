#include "nobox/training.hpp"

#include <cmath>
#include <sstream>

namespace nobox {

namespace F = torch::nn::functional;
using nlohmann::json;

void TrainConfig::validate() const {
  require(encoder_loss_weight >= 0 && decoder_loss_weight >= 0 &&
              critic_loss_weight >= 0,
          "loss weights must be nonnegative");
  require(learning_rate > 0, "learning rate must be positive");
  require(epochs >= 0, "epoch count must be nonnegative");
  require(batch_size >= 1, "batch size must be positive");
  require(image_loss_ramp_epochs >= 0, "image loss ramp must be nonnegative");
  for (const auto& n : noise_layers) n.validate();
}

namespace {

void check_finite(double v, const char* what, std::int64_t epoch) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "training diverged: non-finite " << what << " in epoch " << epoch;
    fail(ErrorKind::kDivergence, os.str());
  }
}

std::vector<torch::Tensor> parameters_of(std::initializer_list<torch::nn::Module*> mods) {
  std::vector<torch::Tensor> out;
  for (auto* m : mods)
    for (auto& p : m->parameters()) out.push_back(p);
  return out;
}

}  // namespace

TrainReport train(WatermarkModel& model, const ImageSet& train_set,
                  const ImageSet& val_set, const TrainConfig& cfg,
                  const EpochObserver& observer) {
  cfg.validate();
  require(train_set.size() > 0, "training set is empty");
  require(val_set.size() > 0, "validation set is empty");
  require(train_set.images.size(2) == model.width() &&
              train_set.images.size(3) == model.height(),
          "training images do not match the model dimensions");
  require(train_set.range == model.pixel_range(),
          "training images use a different pixel range");

  const bool use_critic = cfg.critic_loss_weight > 0.0;
  require(!use_critic || model.has_critic(),
          "critic loss requested but the model has no critic");

  auto gen = make_generator(cfg.seed);
  torch::optim::Adam opt(
      parameters_of({&model.encoder(), &model.decoder()}),
      torch::optim::AdamOptions(cfg.learning_rate));
  std::unique_ptr<torch::optim::Adam> critic_opt;
  if (use_critic) {
    critic_opt = std::make_unique<torch::optim::Adam>(
        parameters_of({&model.critic()}),
        torch::optim::AdamOptions(cfg.learning_rate));
  }

  const auto n = train_set.size();
  const auto ell = model.secret_length();
  const auto range = model.pixel_range();
  std::vector<NoiseLayerSpec> noises = cfg.noise_layers;
  if (noises.empty()) noises.push_back({});

  TrainReport report;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.cosine_decay) {
      const double lr = 0.5 * cfg.learning_rate *
                        (1.0 + std::cos(M_PI * static_cast<double>(epoch) /
                                        static_cast<double>(cfg.epochs)));
      for (auto& group : opt.param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
    const double w_enc =
        epoch < cfg.image_loss_ramp_epochs
            ? cfg.encoder_loss_weight * static_cast<double>(epoch) /
                  static_cast<double>(cfg.image_loss_ramp_epochs)
            : cfg.encoder_loss_weight;
    model.set_training(true);
    auto order = torch::randperm(n, gen, torch::kInt64);
    double msg_sum = 0.0, mse_sum = 0.0;
    std::int64_t batches = 0;
    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      const auto count = std::min(cfg.batch_size, n - start);
      if (count < 2) break;  // batch norm needs more than one sample
      auto x = train_set.images.index_select(0, order.narrow(0, start, count));
      auto s = torch::randint(0, 2, {count, ell}, gen, torch::kFloat32);
      const auto pick = torch::randint(
          0, static_cast<std::int64_t>(noises.size()), {1}, gen, torch::kInt64);
      const auto& noise = noises[static_cast<std::size_t>(pick.item<std::int64_t>())];

      auto x_wm = model.encoder().forward(x, s);
      auto noised = apply_noise_layer(noise, x_wm, range, gen);
      auto head = model.decoder().forward(noised);
      auto image_loss = F::mse_loss(x_wm, x);
      // The head read on the message scale: 0.5 * head + 0.5 is 1/2 at the
      // decision boundary head = 0.
      auto message_loss = F::mse_loss(0.5 * head + 0.5, s);
      auto loss = w_enc * image_loss +
                  cfg.decoder_loss_weight * message_loss;

      if (use_critic) {
        critic_opt->zero_grad();
        auto real = model.critic().forward(x);
        auto fake = model.critic().forward(x_wm.detach());
        auto critic_loss =
            F::binary_cross_entropy_with_logits(real, torch::zeros_like(real)) +
            F::binary_cross_entropy_with_logits(fake, torch::ones_like(fake));
        critic_loss.backward();
        critic_opt->step();
        auto judged = model.critic().forward(x_wm);
        loss = loss + cfg.critic_loss_weight *
                          F::binary_cross_entropy_with_logits(
                              judged, torch::zeros_like(judged));
      }

      opt.zero_grad();
      loss.backward();
      opt.step();

      const double lv = loss.item<double>();
      check_finite(lv, "loss", epoch);
      msg_sum += message_loss.item<double>();
      mse_sum += image_loss.item<double>();
      ++batches;
    }
    model.set_training(false);

    EpochStats stats;
    stats.message_loss = batches ? msg_sum / batches : 0.0;
    stats.image_mse = batches ? mse_sum / batches : 0.0;
    const auto fid = evaluate_fidelity(model, val_set, cfg.seed ^ 0x5eedull);
    stats.val_ba = fid.ba;
    stats.val_mse = fid.mse;
    report.epochs.push_back(stats);
    if (observer) observer(epoch, stats);
  }

  const auto fid = evaluate_fidelity(model, val_set, cfg.seed ^ 0x5eedull);
  report.final_val_ba = fid.ba;
  report.final_val_mse = fid.mse;

  auto meta = model.meta();
  meta.dataset_id = train_set.id;
  meta.seed = cfg.seed;
  meta.epochs += cfg.epochs;
  meta.optimizer = "adam";
  model.set_meta(meta);
  return report;
}

Fidelity evaluate_fidelity(const Watermarker& model, const ImageSet& set,
                           std::uint64_t seed) {
  require(set.size() > 0, "evaluation set is empty");
  const auto secrets = random_secret_batch(set.size(), model.secret_length(), seed);
  constexpr std::int64_t kChunk = 256;
  double matched = 0.0, sq = 0.0;
  for (std::int64_t start = 0; start < set.size(); start += kChunk) {
    const auto count = std::min(kChunk, set.size() - start);
    auto x = set.images.narrow(0, start, count);
    auto s = secrets.narrow(0, start, count);
    auto x_wm = model.embed(x, s);
    matched += matched_bits_rows(model.decode_bits(x_wm), s).sum().item<double>();
    sq += (x_wm - x).pow(2).sum().item<double>();
  }
  Fidelity out;
  out.ba = matched / static_cast<double>(set.size() * model.secret_length());
  out.mse = sq / static_cast<double>(set.images.numel());
  return out;
}

std::size_t select_grid_winner(const std::vector<GridCandidate>& candidates) {
  require(!candidates.empty(), "grid is empty");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& f = candidates[i].fidelity;
    if (!(f.mse < kMaxWatermarkMse)) continue;
    if (!best || f.ba > candidates[*best].fidelity.ba) best = i;
  }
  if (!best)
    fail(ErrorKind::kInfeasible,
         "no feasible configuration: every candidate has watermark MSE >= 0.02");
  return *best;
}

GridSearchResult grid_search(const std::function<WatermarkModel()>& factory,
                             const ImageSet& train_set, const ImageSet& val_set,
                             const std::vector<TrainConfig>& grid) {
  require(!grid.empty(), "grid is empty");
  GridSearchResult result;
  for (const auto& cfg : grid) {
    auto model = factory();
    const auto report = train(model, train_set, val_set, cfg);
    result.candidates.push_back({cfg, {report.final_val_ba, report.final_val_mse}});
  }
  result.best = select_grid_winner(result.candidates);
  return result;
}

std::vector<TrainConfig> hidden_loss_weight_grid(const TrainConfig& base) {
  std::vector<TrainConfig> grid;
  for (double enc : {0.7, 0.35, 0.175, 0.0875}) {
    for (double dec : {1.0, 2.0, 4.0, 8.0}) {
      auto cfg = base;
      cfg.encoder_loss_weight = enc;
      cfg.decoder_loss_weight = dec;
      grid.push_back(cfg);
    }
  }
  return grid;
}

std::vector<double> train_denoiser(Denoiser& denoiser, const ImageSet& train_set,
                                   const DenoiserTrainConfig& cfg) {
  require(train_set.size() > 0, "training set is empty");
  require(cfg.max_sigma >= 0 && cfg.epochs >= 0 && cfg.batch_size >= 1,
          "invalid denoiser training config");
  auto gen = make_generator(cfg.seed);
  auto& net = denoiser.net();
  torch::optim::Adam opt(net.parameters(),
                         torch::optim::AdamOptions(cfg.learning_rate));
  const auto n = train_set.size();
  std::vector<double> losses;
  net.train();
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = torch::randperm(n, gen, torch::kInt64);
    double sum = 0.0;
    std::int64_t batches = 0;
    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      const auto count = std::min(cfg.batch_size, n - start);
      auto x = train_set.images.index_select(0, order.narrow(0, start, count));
      auto sigma = torch::rand({count}, gen, torch::kFloat32) * cfg.max_sigma;
      auto noisy = x + sigma.view({-1, 1, 1, 1}) *
                           torch::randn(x.sizes(), gen, x.options());
      auto loss = F::mse_loss(net.forward(noisy, sigma), x);
      opt.zero_grad();
      loss.backward();
      opt.step();
      const double lv = loss.item<double>();
      check_finite(lv, "denoiser loss", epoch);
      sum += lv;
      ++batches;
    }
    losses.push_back(batches ? sum / batches : 0.0);
  }
  net.eval();
  return losses;
}

json to_json(const TrainConfig& cfg) {
  json noise = json::array();
  for (const auto& n : cfg.noise_layers) {
    noise.push_back({{"kind", std::string(to_string(n.kind))},
                     {"sigma", n.sigma},
                     {"crop_fraction", n.crop_fraction}});
  }
  return {{"encoder_loss_weight", cfg.encoder_loss_weight},
          {"decoder_loss_weight", cfg.decoder_loss_weight},
          {"critic_loss_weight", cfg.critic_loss_weight},
          {"learning_rate", cfg.learning_rate},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"cosine_decay", cfg.cosine_decay},
          {"image_loss_ramp_epochs", cfg.image_loss_ramp_epochs},
          {"noise_layers", noise},
          {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.encoder_loss_weight = j.value("encoder_loss_weight", cfg.encoder_loss_weight);
  cfg.decoder_loss_weight = j.value("decoder_loss_weight", cfg.decoder_loss_weight);
  cfg.critic_loss_weight = j.value("critic_loss_weight", cfg.critic_loss_weight);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.cosine_decay = j.value("cosine_decay", cfg.cosine_decay);
  cfg.image_loss_ramp_epochs = j.value("image_loss_ramp_epochs", cfg.image_loss_ramp_epochs);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("noise_layers")) {
    for (const auto& n : j.at("noise_layers")) {
      NoiseLayerSpec spec;
      spec.kind = noise_kind_from_string(n.at("kind").get<std::string>());
      spec.sigma = n.value("sigma", 0.0);
      spec.crop_fraction = n.value("crop_fraction", 1.0);
      cfg.noise_layers.push_back(spec);
    }
  }
  cfg.validate();
  return cfg;
}

json to_json(const TrainReport& report) {
  json epochs = json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"message_loss", e.message_loss},
                      {"image_mse", e.image_mse},
                      {"val_ba", e.val_ba},
                      {"val_mse", e.val_mse}});
  }
  return {{"epochs", epochs},
          {"final_val_ba", report.final_val_ba},
          {"final_val_mse", report.final_val_mse}};
}

TrainReport train_report_from_json(const json& j) {
  TrainReport r;
  for (const auto& e : j.at("epochs")) {
    r.epochs.push_back({e.at("message_loss").get<double>(),
                        e.at("image_mse").get<double>(),
                        e.at("val_ba").get<double>(),
                        e.at("val_mse").get<double>()});
  }
  r.final_val_ba = j.at("final_val_ba").get<double>();
  r.final_val_mse = j.at("final_val_mse").get<double>();
  return r;
}

}  // namespace nobox
