#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saferoad/image.hpp"
#include "saferoad/imagery.hpp"
#include "saferoad/nn/blocks.hpp"
#include "saferoad/nn/layers.hpp"

namespace saferoad::classifier {

// Output index of each class. Hotspot is the positive class everywhere.
inline constexpr int kNonHotspot = 0;
inline constexpr int kHotspot = 1;
inline constexpr int kNumClasses = 2;

enum class Backbone { SqueezeNet, ResNet18, Vgg, DenseNet, TinyCnn };
std::string backbone_name(Backbone b);
// Throws UnknownBackbone.
Backbone backbone_from_name(const std::string& name);

struct AbmSpec {
  int channel_reduction = 4;
  int spatial_kernel = 7;
  bool identity_init = false;
};

struct ModelSpec {
  Backbone backbone = Backbone::TinyCnn;
  bool abm_enabled = false;
  AbmSpec abm;
  int input_size = 64;
  int num_classes = kNumClasses;
  // Scales every channel count of the backbone (1.0 = reference widths).
  double width_multiplier = 1.0;
  std::uint64_t init_seed = 0;

  void validate() const;
};

nlohmann::json to_json(const ModelSpec& s);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// A named stage of the network. CAM layers are addressed by these names.
struct Node {
  std::string name;
  nn::LayerPtr layer;
};

// Backbone stages followed by the optional attention block ("abm"), global
// average pooling ("pool") and the two-output fully connected head ("fc").
// Weights are read-only during forward/backward, so concurrent inference on
// one model is safe.
class ClassifierModel {
 public:
  ClassifierModel(ModelSpec spec, std::vector<Node> nodes, std::size_t backbone_stages);
  ClassifierModel(const ClassifierModel& other);
  ClassifierModel& operator=(const ClassifierModel&) = delete;
  ClassifierModel(ClassifierModel&&) = delete;

  const ModelSpec& spec() const noexcept { return spec_; }

  std::size_t node_count() const noexcept { return nodes_.size(); }
  const std::string& node_name(std::size_t i) const { return nodes_.at(i).name; }
  const nn::Layer& node(std::size_t i) const { return *nodes_.at(i).layer; }
  // Throws LayerNotFound.
  std::size_t node_index(const std::string& name) const;
  // Names of the backbone stages, input to output.
  std::vector<std::string> backbone_layers() const;
  // Last convolutional stage of the backbone.
  std::string default_cam_layer() const;

  nn::AttentionBlock* attention();
  const nn::AttentionBlock* attention() const;

  // RGB image resized to input_size, scaled to [0,1], CHW.
  nn::Tensor preprocess(const Image& image) const;

  struct Trace {
    nn::Tensor input;
    std::vector<nn::Tensor> outputs;  // outputs[i] = output of node i
    std::vector<nn::Cache> caches;
    std::vector<double> logits() const;
  };
  Trace forward_trace(const nn::Tensor& input) const;
  std::vector<double> logits(const nn::Tensor& input) const;
  std::vector<double> probabilities(const nn::Tensor& input) const;
  // Runs nodes after `node` on a substituted output of `node`.
  std::vector<double> forward_from(std::size_t node, const nn::Tensor& activation) const;

  struct Gradients {
    nn::Tensor input;                  // dL/d(input)
    std::vector<nn::Tensor> outputs;   // dL/d(outputs[i])
  };
  // Backpropagates dL/d(logits). When `param_grads` is non-null, parameter
  // gradients are accumulated into it (ordered like parameters()).
  Gradients backward(const Trace& trace, std::span<const double> grad_logits,
                     std::vector<nn::Tensor>* param_grads = nullptr) const;

  std::vector<nn::Tensor*> parameters();
  std::vector<const nn::Tensor*> parameters() const;
  std::vector<nn::Tensor*> buffers();

  // Number of backward passes run so far (instrumentation for
  // gradient-free code paths).
  std::size_t backward_calls() const noexcept { return backward_calls_.load(); }

 private:
  ModelSpec spec_;
  std::vector<Node> nodes_;
  std::size_t backbone_stages_;
  mutable std::atomic<std::size_t> backward_calls_{0};
};

// Throws UnknownBackbone, InvalidArgument.
std::unique_ptr<ClassifierModel> build_model(const ModelSpec& spec);

// Backbone stages for a spec; returns the channel count of the last stage.
std::vector<Node> make_backbone(const ModelSpec& spec, int& out_channels);

double predict_proba(const ClassifierModel& model, const Image& image);
// Decodes first; throws UndecodableImage.
double predict_proba(const ClassifierModel& model, std::span<const std::uint8_t> encoded);

// ---- metrics ----------------------------------------------------------------

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const noexcept { return tp + fp + fn + tn; }
};

struct EvalMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Confusion confusion;
};

// Zero denominators yield 0.
EvalMetrics metrics_from_confusion(const Confusion& c);
nlohmann::json to_json(const EvalMetrics& m);
std::string metrics_csv(const EvalMetrics& m);

struct LabeledSample {
  nn::Tensor input;
  int label = kNonHotspot;
};

// Prediction is hotspot when p(hotspot) >= 0.5.
EvalMetrics evaluate(const ClassifierModel& model, std::span<const LabeledSample> test);

// ---- training ---------------------------------------------------------------

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 3e-3;
  std::string optimizer_name = "adam";  // adam | sgd
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool augment_hflip = true;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  std::string nondeterminism;
  double seconds = 0.0;
};

nlohmann::json to_json(const TrainingLog& log);

// Minibatch training with softmax cross-entropy. Deterministic for a fixed
// seed. Throws EmptyDataset or SingleClassDataset.
TrainingLog train(ClassifierModel& model, std::span<const LabeledSample> samples, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Loads the manifest's images (paths relative to `root`) into samples.
std::vector<LabeledSample> load_samples(const ClassifierModel& model, const imagery::DatasetManifest& manifest,
                                        imagery::Split split, const std::filesystem::path& root);

// Trains on the manifest's train split.
TrainingLog train(ClassifierModel& model, const imagery::DatasetManifest& manifest, const std::filesystem::path& root,
                  const TrainConfig& config);

// ---- checkpoints ------------------------------------------------------------

struct CheckpointInfo {
  ModelSpec spec;
  std::optional<TrainConfig> train_config;
  std::string manifest_hash;
  nlohmann::json extra = nlohmann::json::object();
};

// Writes weights to `path` and a JSON sidecar to `path` + ".json".
void save_checkpoint(const std::filesystem::path& path, ClassifierModel& model, const CheckpointInfo& info);
// Rebuilds the architecture from the sidecar spec and loads the weights.
// Throws CheckpointMismatch.
std::unique_ptr<ClassifierModel> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

}  // namespace saferoad::classifier
