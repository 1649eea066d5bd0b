#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "saferoad/classifier.hpp"
#include "saferoad/error.hpp"

namespace saferoad::classifier {

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (optimizer_name != "adam" && optimizer_name != "sgd") {
    throw Error(ErrorCode::InvalidArgument, "optimizer must be adam or sgd");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"optimizer_name", c.optimizer_name},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed},
          {"augmentation", {{"hflip", c.augment_hflip}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.optimizer_name = j.value("optimizer_name", c.optimizer_name);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  if (j.contains("augmentation")) c.augment_hflip = j.at("augmentation").value("hflip", c.augment_hflip);
  return c;
}

nlohmann::json to_json(const TrainingLog& log) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : log.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"train_accuracy", e.train_accuracy}});
  }
  return {{"epochs", epochs}, {"nondeterminism", log.nondeterminism}, {"seconds", log.seconds}};
}

namespace {

nn::Tensor hflip(const nn::Tensor& t) {
  const nn::Shape s = t.shape();
  nn::Tensor out(s);
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) out.at(c, y, x) = t.at(c, y, s.w - 1 - x);
  return out;
}

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const std::vector<nn::Tensor*>& params) : cfg_(cfg) {
    for (const auto* p : params) {
      m_.emplace_back(p->dims());
      v_.emplace_back(p->dims());
    }
  }

  void step(const std::vector<nn::Tensor*>& params, const std::vector<nn::Tensor>& grads, double scale) {
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      nn::Tensor& p = *params[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = grads[k][i] * scale + cfg_.weight_decay * p[i];
        if (cfg_.optimizer_name == "adam") {
          m_[k][i] = b1 * m_[k][i] + (1 - b1) * g;
          v_[k][i] = b2 * v_[k][i] + (1 - b2) * g * g;
          p[i] -= cfg_.learning_rate * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps);
        } else {
          m_[k][i] = cfg_.momentum * m_[k][i] + g;
          p[i] -= cfg_.learning_rate * m_[k][i];
        }
      }
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<nn::Tensor> m_, v_;
  int t_ = 0;
};

}  // namespace

TrainingLog train(ClassifierModel& model, std::span<const LabeledSample> samples, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "no training samples");
  bool has_hot = false, has_cold = false;
  for (const auto& s : samples) (s.label == kHotspot ? has_hot : has_cold) = true;
  if (!has_hot || !has_cold) throw Error(ErrorCode::SingleClassDataset, "training data must contain both classes");

  const auto start = std::chrono::steady_clock::now();
  TrainingLog log;
  log.nondeterminism = "none: single-threaded double-precision arithmetic, fixed-seed shuffling and augmentation";

  const auto params = model.parameters();
  Optimizer opt(config, params);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      auto grads = nn::zeros_like(params);
      for (std::size_t k = begin; k < end; ++k) {
        const auto& s = samples[order[k]];
        const bool flip = config.augment_hflip && (rng() & 1u);
        const auto trace = model.forward_trace(flip ? hflip(s.input) : s.input);
        const auto probs = nn::softmax(trace.logits());
        loss_sum += -std::log(std::max(probs[static_cast<std::size_t>(s.label)], 1e-300));
        if ((probs[kHotspot] >= 0.5) == (s.label == kHotspot)) ++correct;
        std::vector<double> g = probs;
        g[static_cast<std::size_t>(s.label)] -= 1.0;
        model.backward(trace, g, &grads);
      }
      for (const auto& g : grads) {
        if (!g.all_finite()) throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient during training");
      }
      opt.step(params, grads, 1.0 / static_cast<double>(end - begin));
    }
    EpochLog e{epoch, loss_sum / static_cast<double>(samples.size()),
               static_cast<double>(correct) / static_cast<double>(samples.size())};
    log.epochs.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

std::vector<LabeledSample> load_samples(const ClassifierModel& model, const imagery::DatasetManifest& manifest,
                                        imagery::Split split, const std::filesystem::path& root) {
  std::vector<LabeledSample> out;
  for (const auto* r : manifest.split(split)) {
    if (r->label() == imagery::Label::Unlabeled) continue;
    out.push_back({model.preprocess(read_image(root / r->file_path)),
                   r->label() == imagery::Label::Hotspot ? kHotspot : kNonHotspot});
  }
  return out;
}

TrainingLog train(ClassifierModel& model, const imagery::DatasetManifest& manifest, const std::filesystem::path& root,
                  const TrainConfig& config) {
  const auto samples = load_samples(model, manifest, imagery::Split::Train, root);
  return train(model, samples, config);
}

}  // namespace saferoad::classifier
