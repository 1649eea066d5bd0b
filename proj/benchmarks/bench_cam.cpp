#include <benchmark/benchmark.h>

#include <random>

#include "saferoad/apcam.hpp"
#include "saferoad/classifier.hpp"
#include "saferoad/synth.hpp"

using namespace saferoad;

namespace {

struct Fixture {
  std::unique_ptr<classifier::ClassifierModel> model;
  nn::Tensor input;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    classifier::ModelSpec spec;
    spec.backbone = classifier::Backbone::TinyCnn;
    spec.input_size = 64;
    Fixture out;
    out.model = classifier::build_model(spec);
    std::mt19937_64 rng(9);
    out.input = out.model->preprocess(synth::make_toy_image(classifier::kHotspot, rng, 64).image);
    return out;
  }();
  return f;
}

void BM_Forward(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(f.model->logits(f.input));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto& f = fixture();
  const std::vector<double> g{0.0, 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(f.model->backward(f.model->forward_trace(f.input), g));
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_Cam(benchmark::State& state) {
  const auto& f = fixture();
  apcam::CamRequest r;
  r.method = static_cast<apcam::CamMethod>(state.range(0));
  state.SetLabel(apcam::method_name(r.method));
  for (auto _ : state) benchmark::DoNotOptimize(apcam::compute_cam_detailed(*f.model, f.input, r));
}
BENCHMARK(BM_Cam)
    ->Arg(static_cast<int>(apcam::CamMethod::GradCam))
    ->Arg(static_cast<int>(apcam::CamMethod::GradCamPlusPlus))
    ->Arg(static_cast<int>(apcam::CamMethod::ScoreCam))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
