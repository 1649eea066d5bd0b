#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "saferoad/classifier.hpp"
#include "saferoad/error.hpp"
#include "saferoad/image.hpp"
#include "saferoad/util.hpp"
#include "toy.hpp"

using namespace saferoad;
using namespace saferoad::classifier;

namespace {

ModelSpec small(Backbone b, int input = 32) {
  ModelSpec s;
  s.backbone = b;
  s.input_size = input;
  s.width_multiplier = 0.25;
  s.init_seed = 3;
  return s;
}

Image noise_image(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img(size, size);
  for (auto& v : img.bytes()) v = static_cast<std::uint8_t>(rng() & 255);
  return img;
}

}  // namespace

TEST(Backbones, EveryBackboneProducesTwoProbabilities) {
  for (auto b : {Backbone::TinyCnn, Backbone::SqueezeNet, Backbone::ResNet18, Backbone::Vgg, Backbone::DenseNet}) {
    for (bool abm : {false, true}) {
      auto spec = small(b);
      spec.abm_enabled = abm;
      const auto m = build_model(spec);
      const auto p = m->probabilities(m->preprocess(noise_image(40, 1)));
      ASSERT_EQ(p.size(), 2u) << backbone_name(b);
      EXPECT_NEAR(p[0] + p[1], 1.0, 1e-6);
      EXPECT_EQ(m->node_name(m->node_count() - 1), "fc");
      EXPECT_EQ(m->attention() != nullptr, abm);
      EXPECT_NO_THROW(m->node_index(m->default_cam_layer()));
    }
  }
}

TEST(Backbones, NamesAndUnknown) {
  for (const char* n : {"squeezenet", "resnet18", "vgg", "densenet", "tinycnn"}) {
    EXPECT_EQ(backbone_name(backbone_from_name(n)), n);
  }
  try {
    backbone_from_name("alexnet");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownBackbone);
  }
}

TEST(Backbones, TinyCnnShape) {
  const auto m = build_model(toy::tinycnn_spec());
  const auto t = m->forward_trace(m->preprocess(noise_image(64, 2)));
  EXPECT_EQ(t.logits().size(), 2u);
  EXPECT_EQ(t.outputs[m->node_index("block3")].shape(), (nn::Shape{32, 16, 16}));
}

TEST(Abm, IdentityGatesReproduceBackboneOnlyLogits) {
  for (auto b : {Backbone::TinyCnn, Backbone::SqueezeNet}) {
    auto plain_spec = small(b);
    auto abm_spec = plain_spec;
    abm_spec.abm_enabled = true;
    const auto plain = build_model(plain_spec);
    const auto with_abm = build_model(abm_spec);
    with_abm->attention()->init_identity();
    const auto x = plain->preprocess(noise_image(32, 3));
    const auto a = plain->logits(x), c = with_abm->logits(x);
    EXPECT_NEAR(a[0], c[0], 1e-12);
    EXPECT_NEAR(a[1], c[1], 1e-12);
  }
}

TEST(Abm, SpecIdentityInitFlag) {
  auto plain_spec = small(Backbone::TinyCnn);
  auto abm_spec = plain_spec;
  abm_spec.abm_enabled = true;
  abm_spec.abm.identity_init = true;
  const auto x = build_model(plain_spec)->preprocess(noise_image(32, 4));
  EXPECT_EQ(build_model(plain_spec)->logits(x), build_model(abm_spec)->logits(x));
}

TEST(Metrics, HandConfusion) {
  const auto m = metrics_from_confusion({3, 1, 1, 5});
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.75);
  EXPECT_DOUBLE_EQ(m.f1, 0.75);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.8);
  const auto perfect = metrics_from_confusion({4, 0, 0, 6});
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);
  const auto none = metrics_from_confusion({0, 0, 0, 0});
  EXPECT_EQ(none.accuracy, 0.0);
  EXPECT_EQ(none.f1, 0.0);
}

TEST(Metrics, RandomMatricesAndHarmonicIdentity) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> u(0, 60);
  for (int i = 0; i < 50; ++i) {
    const Confusion c{u(rng) + 1, u(rng), u(rng), u(rng)};
    const auto m = metrics_from_confusion(c);
    const double p = static_cast<double>(c.tp) / (c.tp + c.fp);
    const double r = static_cast<double>(c.tp) / (c.tp + c.fn);
    EXPECT_EQ(m.precision, p);
    EXPECT_EQ(m.recall, r);
    EXPECT_EQ(m.accuracy, static_cast<double>(c.tp + c.tn) / c.total());
    EXPECT_NEAR(m.f1, 2 * p * r / (p + r), 1e-12);
    EXPECT_NEAR(1 / m.f1, 0.5 * (1 / p + 1 / r), 1e-12);
  }
}

TEST(Metrics, JsonAndCsv) {
  const auto m = metrics_from_confusion({3, 1, 1, 5});
  EXPECT_EQ(to_json(m).at("confusion").at("tp"), 3);
  EXPECT_NE(metrics_csv(m).find("accuracy"), std::string::npos);
}

TEST(Training, EmptyAndSingleClass) {
  auto m = build_model(small(Backbone::TinyCnn));
  try {
    train(*m, std::vector<LabeledSample>{}, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == ErrorCode::EmptyDataset || e.code() == ErrorCode::SingleClassDataset);
  }
  std::vector<LabeledSample> one{{m->preprocess(noise_image(32, 1)), kHotspot}};
  try {
    train(*m, one, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleClassDataset);
  }
}

TEST(Training, DeterministicForFixedSeed) {
  const auto data = synth::make_toy_dataset(24, 9, 32);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.seed = 4;
  auto run = [&] {
    auto m = build_model(small(Backbone::TinyCnn));
    const auto log = train(*m, synth::to_samples(*m, data), tc);
    return std::make_pair(log.epochs.back().mean_loss, m->logits(m->preprocess(data[0].image)));
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Training, ConfigValidation) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.optimizer_name = "lbfgs";
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.optimizer_name = "sgd";
  EXPECT_NO_THROW(c.validate());
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(back.optimizer_name, "sgd");
  EXPECT_EQ(back.augment_hflip, c.augment_hflip);
}

TEST(ToyModel, SeparatesRedDisks) {
  const auto& t = toy::trained();
  const auto test = synth::to_samples(*t.model, t.test);
  const auto m = evaluate(*t.model, test);
  EXPECT_GE(m.accuracy, 0.95);
  EXPECT_EQ(m.confusion.total(), t.test.size());
}

TEST(ToyModel, ConfidentOnRedDiskAndDeterministic) {
  const auto& t = toy::trained();
  const auto hot = toy::test_hotspots(1).front();
  const double p = predict_proba(*t.model, hot.image);
  EXPECT_GT(p, 0.9);
  EXPECT_EQ(p, predict_proba(*t.model, hot.image));
  EXPECT_EQ(p, predict_proba(*t.model, encode_png(hot.image)));
  EXPECT_THROW(predict_proba(*t.model, Bytes{0, 1, 2}), Error);
}

TEST(InputGradient, MatchesCentralDifferences) {
  auto spec = toy::tinycnn_spec(11);
  spec.input_size = 12;
  const auto m = build_model(spec);
  const auto x0 = m->preprocess(noise_image(12, 6));
  const auto trace = m->forward_trace(x0);
  const std::vector<double> g{0.0, 1.0};
  const auto grads = m->backward(trace, g);
  const double h = 1e-6;
  double num = 0, den_a = 0, den_b = 0;
  auto x = x0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = m->logits(x)[kHotspot];
    x[i] = keep - h;
    const double fm = m->logits(x)[kHotspot];
    x[i] = keep;
    const double fd = (fp - fm) / (2 * h);
    num += (grads.input[i] - fd) * (grads.input[i] - fd);
    den_a += grads.input[i] * grads.input[i];
    den_b += fd * fd;
  }
  EXPECT_LT(std::sqrt(num) / std::max(std::sqrt(den_a), std::sqrt(den_b)), 1e-3);
}

TEST(Checkpoint, RoundTripAndMismatch) {
  const auto dir = toy::scratch_dir("ckpt");
  auto spec = small(Backbone::SqueezeNet);
  spec.abm_enabled = true;
  auto m = build_model(spec);
  CheckpointInfo info{spec, TrainConfig{}, "abc", {{"note", "x"}}};
  save_checkpoint(dir / "m.ckpt", *m, info);
  CheckpointInfo back;
  const auto loaded = load_checkpoint(dir / "m.ckpt", &back);
  const auto x = m->preprocess(noise_image(32, 7));
  EXPECT_EQ(loaded->logits(x), m->logits(x));
  EXPECT_EQ(back.manifest_hash, "abc");
  EXPECT_EQ(back.spec.backbone, Backbone::SqueezeNet);

  const auto text = read_file(dir / "m.ckpt.json");
  auto side = nlohmann::json::parse(text.begin(), text.end());
  side["model_spec"]["width_multiplier"] = 0.5;
  write_file_atomic(dir / "m.ckpt.json", side.dump());
  try {
    load_checkpoint(dir / "m.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CheckpointMismatch);
  }
}

TEST(Preprocess, ScalesToUnitRangeChw) {
  const auto m = build_model(small(Backbone::TinyCnn, 2));
  Image img(2, 2, {255, 0, 51});
  const auto t = m->preprocess(img);
  EXPECT_EQ(t.shape(), (nn::Shape{3, 2, 2}));
  EXPECT_DOUBLE_EQ(t.at(0, 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(t.at(1, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(t.at(2, 0, 1), 0.2);
}
