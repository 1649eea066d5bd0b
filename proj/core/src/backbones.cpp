#include <cmath>

#include "saferoad/classifier.hpp"
#include "saferoad/error.hpp"

namespace saferoad::classifier {

namespace {

using nn::BasicBlock;
using nn::BatchNorm2d;
using nn::Conv2d;
using nn::DenseLayer;
using nn::Fire;
using nn::MaxPool2d;
using nn::ReLU;
using nn::Sequential;

struct Builder {
  double width;
  std::vector<Node> nodes;

  int ch(int reference) const { return std::max(1, static_cast<int>(std::lround(reference * width))); }

  void stage(std::string name, std::unique_ptr<Sequential> seq) { nodes.push_back({std::move(name), std::move(seq)}); }
};

// Three conv blocks; sized for desk-scale experiments.
std::vector<Node> tinycnn(Builder b, int& out) {
  const int c1 = b.ch(8), c2 = b.ch(16), c3 = b.ch(32);
  auto s1 = std::make_unique<Sequential>();
  s1->emplace<Conv2d>(3, c1, 3, 1, 1).emplace<ReLU>().emplace<MaxPool2d>(2, 2);
  auto s2 = std::make_unique<Sequential>();
  s2->emplace<Conv2d>(c1, c2, 3, 1, 1).emplace<ReLU>().emplace<MaxPool2d>(2, 2);
  auto s3 = std::make_unique<Sequential>();
  s3->emplace<Conv2d>(c2, c3, 3, 1, 1).emplace<ReLU>();
  b.stage("block1", std::move(s1));
  b.stage("block2", std::move(s2));
  b.stage("block3", std::move(s3));
  out = c3;
  return std::move(b.nodes);
}

// VGG-11 feature extractor.
std::vector<Node> vgg(Builder b, int& out) {
  const std::vector<std::vector<int>> blocks = {{64}, {128}, {256, 256}, {512, 512}, {512, 512}};
  int in = 3;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto s = std::make_unique<Sequential>();
    for (int c : blocks[i]) {
      s->emplace<Conv2d>(in, b.ch(c), 3, 1, 1).emplace<ReLU>();
      in = b.ch(c);
    }
    s->emplace<MaxPool2d>(2, 2);
    b.stage("block" + std::to_string(i + 1), std::move(s));
  }
  out = in;
  return std::move(b.nodes);
}

std::vector<Node> resnet18(Builder b, int& out) {
  const int c0 = b.ch(64);
  auto stem = std::make_unique<Sequential>();
  stem->emplace<Conv2d>(3, c0, 7, 2, 3, false).emplace<BatchNorm2d>(c0).emplace<ReLU>().emplace<MaxPool2d>(3, 2, 1);
  b.stage("stem", std::move(stem));
  int in = c0;
  const int widths[] = {64, 128, 256, 512};
  for (int i = 0; i < 4; ++i) {
    const int c = b.ch(widths[i]);
    auto layer = std::make_unique<Sequential>();
    layer->emplace<BasicBlock>(in, c, i == 0 ? 1 : 2).emplace<BasicBlock>(c, c, 1);
    b.stage("layer" + std::to_string(i + 1), std::move(layer));
    in = c;
  }
  out = in;
  return std::move(b.nodes);
}

// SqueezeNet 1.1 feature extractor.
std::vector<Node> squeezenet(Builder b, int& out) {
  auto fire = [&](Sequential& s, int in, int sq, int ex) {
    s.emplace<Fire>(in, b.ch(sq), b.ch(ex), b.ch(ex));
    return 2 * b.ch(ex);
  };
  const int c0 = b.ch(64);
  auto stem = std::make_unique<Sequential>();
  stem->emplace<Conv2d>(3, c0, 3, 2).emplace<ReLU>().emplace<MaxPool2d>(3, 2, 0, true);
  b.stage("stem", std::move(stem));

  auto f1 = std::make_unique<Sequential>();
  int c = fire(*f1, c0, 16, 64);
  c = fire(*f1, c, 16, 64);
  f1->emplace<MaxPool2d>(3, 2, 0, true);
  b.stage("fire1", std::move(f1));

  auto f2 = std::make_unique<Sequential>();
  c = fire(*f2, c, 32, 128);
  c = fire(*f2, c, 32, 128);
  f2->emplace<MaxPool2d>(3, 2, 0, true);
  b.stage("fire2", std::move(f2));

  auto f3 = std::make_unique<Sequential>();
  c = fire(*f3, c, 48, 192);
  c = fire(*f3, c, 48, 192);
  c = fire(*f3, c, 64, 256);
  c = fire(*f3, c, 64, 256);
  b.stage("fire3", std::move(f3));
  out = c;
  return std::move(b.nodes);
}

// DenseNet-121 feature extractor.
std::vector<Node> densenet(Builder b, int& out) {
  const int growth = b.ch(32);
  int c = b.ch(64);
  auto stem = std::make_unique<Sequential>();
  stem->emplace<Conv2d>(3, c, 7, 2, 3, false).emplace<BatchNorm2d>(c).emplace<ReLU>().emplace<MaxPool2d>(3, 2, 1);
  b.stage("stem", std::move(stem));
  const int layers[] = {6, 12, 24, 16};
  for (int i = 0; i < 4; ++i) {
    auto block = std::make_unique<Sequential>();
    for (int l = 0; l < layers[i]; ++l) {
      block->emplace<DenseLayer>(c, growth);
      c += growth;
    }
    b.stage("dense" + std::to_string(i + 1), std::move(block));
    if (i < 3) {
      auto trans = std::make_unique<Sequential>();
      trans->emplace<BatchNorm2d>(c).emplace<ReLU>().emplace<Conv2d>(c, c / 2, 1, 1, 0, false).emplace<nn::AvgPool2d>(2, 2);
      c /= 2;
      b.stage("transition" + std::to_string(i + 1), std::move(trans));
    }
  }
  auto final_norm = std::make_unique<Sequential>();
  final_norm->emplace<BatchNorm2d>(c).emplace<ReLU>();
  b.stage("features", std::move(final_norm));
  out = c;
  return std::move(b.nodes);
}

}  // namespace

std::vector<Node> make_backbone(const ModelSpec& spec, int& out_channels) {
  Builder b{spec.width_multiplier, {}};
  switch (spec.backbone) {
    case Backbone::TinyCnn: return tinycnn(std::move(b), out_channels);
    case Backbone::Vgg: return vgg(std::move(b), out_channels);
    case Backbone::ResNet18: return resnet18(std::move(b), out_channels);
    case Backbone::SqueezeNet: return squeezenet(std::move(b), out_channels);
    case Backbone::DenseNet: return densenet(std::move(b), out_channels);
  }
  throw Error(ErrorCode::UnknownBackbone, "unknown backbone");
}

}  // namespace saferoad::classifier
