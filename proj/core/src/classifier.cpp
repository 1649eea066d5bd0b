#include "saferoad/classifier.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "saferoad/error.hpp"

namespace saferoad::classifier {

std::string backbone_name(Backbone b) {
  switch (b) {
    case Backbone::SqueezeNet: return "squeezenet";
    case Backbone::ResNet18: return "resnet18";
    case Backbone::Vgg: return "vgg";
    case Backbone::DenseNet: return "densenet";
    case Backbone::TinyCnn: return "tinycnn";
  }
  return "tinycnn";
}

Backbone backbone_from_name(const std::string& name) {
  for (auto b : {Backbone::SqueezeNet, Backbone::ResNet18, Backbone::Vgg, Backbone::DenseNet, Backbone::TinyCnn}) {
    if (backbone_name(b) == name) return b;
  }
  throw Error(ErrorCode::UnknownBackbone, "unknown backbone '" + name + "'");
}

void ModelSpec::validate() const {
  if (num_classes != kNumClasses) throw Error(ErrorCode::InvalidArgument, "num_classes must be 2");
  if (input_size <= 0) throw Error(ErrorCode::InvalidArgument, "input_size must be > 0");
  if (!(width_multiplier > 0.0)) throw Error(ErrorCode::InvalidArgument, "width_multiplier must be > 0");
  if (abm_enabled) {
    if (abm.channel_reduction < 1) throw Error(ErrorCode::InvalidArgument, "channel_reduction must be >= 1");
    if (abm.spatial_kernel < 1 || abm.spatial_kernel % 2 == 0) {
      throw Error(ErrorCode::InvalidArgument, "spatial_kernel must be odd");
    }
  }
}

nlohmann::json to_json(const ModelSpec& s) {
  return {{"backbone", backbone_name(s.backbone)},
          {"abm_enabled", s.abm_enabled},
          {"abm",
           {{"channel_reduction", s.abm.channel_reduction},
            {"spatial_kernel", s.abm.spatial_kernel},
            {"gate", "sigmoid"},
            {"identity_init", s.abm.identity_init}}},
          {"input_size", s.input_size},
          {"num_classes", s.num_classes},
          {"width_multiplier", s.width_multiplier},
          {"init_seed", s.init_seed}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.backbone = backbone_from_name(j.at("backbone").get<std::string>());
  s.abm_enabled = j.value("abm_enabled", false);
  if (j.contains("abm")) {
    const auto& a = j.at("abm");
    s.abm.channel_reduction = a.value("channel_reduction", 4);
    s.abm.spatial_kernel = a.value("spatial_kernel", 7);
    s.abm.identity_init = a.value("identity_init", false);
  }
  s.input_size = j.value("input_size", 64);
  s.num_classes = j.value("num_classes", kNumClasses);
  s.width_multiplier = j.value("width_multiplier", 1.0);
  s.init_seed = j.value("init_seed", std::uint64_t{0});
  return s;
}

// ---- model -----------------------------------------------------------------

ClassifierModel::ClassifierModel(ModelSpec spec, std::vector<Node> nodes, std::size_t backbone_stages)
    : spec_(std::move(spec)), nodes_(std::move(nodes)), backbone_stages_(backbone_stages) {}

ClassifierModel::ClassifierModel(const ClassifierModel& other)
    : spec_(other.spec_), backbone_stages_(other.backbone_stages_) {
  for (const auto& n : other.nodes_) nodes_.push_back({n.name, n.layer->clone()});
}

std::size_t ClassifierModel::node_index(const std::string& name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name == name) return i;
  }
  throw Error(ErrorCode::LayerNotFound, "no layer named '" + name + "'");
}

std::vector<std::string> ClassifierModel::backbone_layers() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < backbone_stages_; ++i) out.push_back(nodes_[i].name);
  return out;
}

std::string ClassifierModel::default_cam_layer() const { return nodes_.at(backbone_stages_ - 1).name; }

nn::AttentionBlock* ClassifierModel::attention() {
  for (auto& n : nodes_) {
    if (auto* a = dynamic_cast<nn::AttentionBlock*>(n.layer.get())) return a;
  }
  return nullptr;
}

const nn::AttentionBlock* ClassifierModel::attention() const {
  return const_cast<ClassifierModel*>(this)->attention();
}

nn::Tensor ClassifierModel::preprocess(const Image& image) const {
  const Image resized = resize_bilinear(image, spec_.input_size, spec_.input_size);
  nn::Tensor t(nn::Shape{3, spec_.input_size, spec_.input_size});
  for (int y = 0; y < resized.height(); ++y)
    for (int x = 0; x < resized.width(); ++x) {
      const Rgb c = resized.at(x, y);
      t.at(0, y, x) = c.r / 255.0;
      t.at(1, y, x) = c.g / 255.0;
      t.at(2, y, x) = c.b / 255.0;
    }
  return t;
}

std::vector<double> ClassifierModel::Trace::logits() const {
  const auto& out = outputs.back();
  return {out.values().begin(), out.values().end()};
}

ClassifierModel::Trace ClassifierModel::forward_trace(const nn::Tensor& input) const {
  Trace t;
  t.input = input;
  t.outputs.reserve(nodes_.size());
  t.caches.resize(nodes_.size());
  const nn::Tensor* cur = &input;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    t.outputs.push_back(nodes_[i].layer->forward(*cur, &t.caches[i]));
    cur = &t.outputs.back();
  }
  return t;
}

std::vector<double> ClassifierModel::logits(const nn::Tensor& input) const {
  nn::Tensor cur = input;
  for (const auto& n : nodes_) cur = n.layer->forward(cur, nullptr);
  return {cur.values().begin(), cur.values().end()};
}

std::vector<double> ClassifierModel::probabilities(const nn::Tensor& input) const {
  return nn::softmax(logits(input));
}

std::vector<double> ClassifierModel::forward_from(std::size_t node, const nn::Tensor& activation) const {
  nn::Tensor cur = activation;
  for (std::size_t i = node + 1; i < nodes_.size(); ++i) cur = nodes_[i].layer->forward(cur, nullptr);
  return {cur.values().begin(), cur.values().end()};
}

ClassifierModel::Gradients ClassifierModel::backward(const Trace& trace, std::span<const double> grad_logits,
                                                     std::vector<nn::Tensor>* param_grads) const {
  ++backward_calls_;
  std::vector<std::size_t> offsets(nodes_.size() + 1, 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) offsets[i + 1] = offsets[i] + nodes_[i].layer->parameter_count();

  std::vector<nn::Tensor> scratch;
  if (!param_grads) scratch = nn::zeros_like(parameters());
  std::vector<nn::Tensor>& pg = param_grads ? *param_grads : scratch;

  Gradients g;
  g.outputs.resize(nodes_.size());
  nn::Tensor cur(trace.outputs.back().dims());
  if (grad_logits.size() != cur.size()) throw Error(ErrorCode::DimensionMismatch, "grad_logits size");
  std::copy(grad_logits.begin(), grad_logits.end(), cur.data());
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    g.outputs[i] = cur;
    cur = nodes_[i].layer->backward(
        cur, trace.caches[i], std::span<nn::Tensor>(pg).subspan(offsets[i], offsets[i + 1] - offsets[i]));
  }
  g.input = std::move(cur);
  return g;
}

std::vector<nn::Tensor*> ClassifierModel::parameters() {
  std::vector<nn::Tensor*> out;
  for (auto& n : nodes_) {
    auto ps = n.layer->parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::vector<const nn::Tensor*> ClassifierModel::parameters() const {
  auto ps = const_cast<ClassifierModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::vector<nn::Tensor*> ClassifierModel::buffers() {
  std::vector<nn::Tensor*> out;
  for (auto& n : nodes_) {
    auto bs = n.layer->buffers();
    out.insert(out.end(), bs.begin(), bs.end());
  }
  return out;
}

std::unique_ptr<ClassifierModel> build_model(const ModelSpec& spec) {
  spec.validate();
  int channels = 0;
  std::vector<Node> nodes = make_backbone(spec, channels);
  const std::size_t backbone_stages = nodes.size();
  std::mt19937_64 rng(spec.init_seed);
  for (auto& n : nodes) n.layer->init(rng);

  // The head is drawn before the attention block so that models differing
  // only in abm_enabled share backbone and head weights for a given seed.
  auto fc = std::make_unique<nn::Linear>(channels, kNumClasses);
  fc->init(rng);
  if (spec.abm_enabled) {
    auto abm = std::make_unique<nn::AttentionBlock>(channels, spec.abm.channel_reduction, spec.abm.spatial_kernel);
    abm->init(rng);
    if (spec.abm.identity_init) abm->init_identity();
    nodes.push_back({"abm", std::move(abm)});
  }
  nodes.push_back({"pool", std::make_unique<nn::GlobalAvgPool>()});
  nodes.push_back({"fc", std::move(fc)});

  // Reject inputs too small for the backbone's downsampling.
  nn::Shape s{3, spec.input_size, spec.input_size};
  try {
    for (const auto& n : nodes) s = n.layer->output_shape(s);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidArgument, "input_size " + std::to_string(spec.input_size) + " too small for " +
                                                backbone_name(spec.backbone) + ": " + e.what());
  }
  return std::make_unique<ClassifierModel>(spec, std::move(nodes), backbone_stages);
}

double predict_proba(const ClassifierModel& model, const Image& image) {
  if (image.empty()) throw Error(ErrorCode::UndecodableImage, "empty image");
  return model.probabilities(model.preprocess(image))[kHotspot];
}

double predict_proba(const ClassifierModel& model, std::span<const std::uint8_t> encoded) {
  return predict_proba(model, decode_image(encoded));
}

// ---- metrics ---------------------------------------------------------------

EvalMetrics metrics_from_confusion(const Confusion& c) {
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  EvalMetrics m;
  m.confusion = c;
  m.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  m.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  m.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  m.f1 = (m.precision > 0.0 && m.recall > 0.0) ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

nlohmann::json to_json(const EvalMetrics& m) {
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"positive_class", "hotspot"},
          {"confusion", {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}}}};
}

std::string metrics_csv(const EvalMetrics& m) {
  std::ostringstream out;
  out << "accuracy,precision,recall,f1,tp,fp,fn,tn\n"
      << m.accuracy << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',' << m.confusion.tp << ','
      << m.confusion.fp << ',' << m.confusion.fn << ',' << m.confusion.tn << '\n';
  return out.str();
}

EvalMetrics evaluate(const ClassifierModel& model, std::span<const LabeledSample> test) {
  if (test.empty()) throw Error(ErrorCode::EmptyDataset, "test split is empty");
  Confusion c;
  for (const auto& s : test) {
    const bool predicted_hot = model.probabilities(s.input)[kHotspot] >= 0.5;
    const bool actual_hot = s.label == kHotspot;
    if (predicted_hot && actual_hot) ++c.tp;
    else if (predicted_hot) ++c.fp;
    else if (actual_hot) ++c.fn;
    else ++c.tn;
  }
  return metrics_from_confusion(c);
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'R', 'C', 'K', 'P', 'T', '0', '1'};

std::vector<nn::Tensor*> state_tensors(ClassifierModel& model) {
  auto ps = model.parameters();
  auto bs = model.buffers();
  ps.insert(ps.end(), bs.begin(), bs.end());
  return ps;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const Bytes& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorCode::CheckpointMismatch, "truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, ClassifierModel& model, const CheckpointInfo& info) {
  std::string out(kMagic, sizeof(kMagic));
  const auto tensors = state_tensors(model);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto* t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t->dims().size()));
    for (int d : t->dims()) put<std::int32_t>(out, d);
    out.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(double));
  }
  write_file_atomic(path, out);

  nlohmann::json side{{"model_spec", to_json(model.spec())},
                      {"manifest_hash", info.manifest_hash},
                      {"weights_sha256", sha256_hex(out)},
                      {"extra", info.extra}};
  side["train_config"] = info.train_config ? to_json(*info.train_config) : nlohmann::json(nullptr);
  auto side_path = path;
  side_path += ".json";
  write_file_atomic(side_path, side.dump(2));
}

std::unique_ptr<ClassifierModel> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  auto side_path = path;
  side_path += ".json";
  nlohmann::json side;
  try {
    const auto text = read_file(side_path);
    side = nlohmann::json::parse(text.begin(), text.end());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::CheckpointMismatch, "cannot read checkpoint sidecar " + side_path.string() + ": " + e.what());
  }
  CheckpointInfo ci;
  ci.spec = model_spec_from_json(side.at("model_spec"));
  ci.manifest_hash = side.value("manifest_hash", "");
  if (side.contains("train_config") && side.at("train_config").is_object()) {
    ci.train_config = train_config_from_json(side.at("train_config"));
  }
  if (side.contains("extra")) ci.extra = side.at("extra");

  auto model = build_model(ci.spec);
  const Bytes bytes = read_file(path);
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::CheckpointMismatch, "not a checkpoint file: " + path.string());
  }
  std::size_t pos = sizeof(kMagic);
  const auto tensors = state_tensors(*model);
  const auto count = take<std::uint32_t>(bytes, pos);
  if (count != tensors.size()) throw Error(ErrorCode::CheckpointMismatch, "tensor count does not match the spec");
  for (auto* t : tensors) {
    const auto ndim = take<std::uint32_t>(bytes, pos);
    std::vector<int> dims(ndim);
    for (auto& d : dims) d = take<std::int32_t>(bytes, pos);
    if (dims != t->dims()) throw Error(ErrorCode::CheckpointMismatch, "tensor shape does not match the spec");
    const std::size_t n = t->size() * sizeof(double);
    if (pos + n > bytes.size()) throw Error(ErrorCode::CheckpointMismatch, "truncated checkpoint");
    std::memcpy(t->data(), bytes.data() + pos, n);
    pos += n;
  }
  if (info) *info = std::move(ci);
  return model;
}

}  // namespace saferoad::classifier
