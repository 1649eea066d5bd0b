#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "saferoad/classifier.hpp"
#include "saferoad/image.hpp"
#include "saferoad/maskkit.hpp"
#include "saferoad/workspace.hpp"

namespace saferoad::synth {

// Toy street-view stand-in: hotspot images contain a saturated red disk on a
// noisy gray background; non-hotspot images are the background alone, or
// (with distractors) carry a blue or green disk half of the time.
struct ToyImage {
  Image image;
  int label = classifier::kNonHotspot;
  int cx = 0, cy = 0, radius = 0;  // radius 0: no disk

  // Inclusive pixel bounds of the disk.
  int x0() const noexcept { return cx - radius; }
  int y0() const noexcept { return cy - radius; }
  int x1() const noexcept { return cx + radius; }
  int y1() const noexcept { return cy + radius; }
  maskkit::BinaryMask disk_mask(double extra_radius = 0.0) const;
};

ToyImage make_toy_image(int label, std::mt19937_64& rng, int size = 64, bool distractors = false);

// Alternating labels, starting with hotspot.
std::vector<ToyImage> make_toy_dataset(std::size_t n, std::uint64_t seed, int size = 64, bool distractors = false);

std::vector<classifier::LabeledSample> to_samples(const classifier::ClassifierModel& model,
                                                  const std::vector<ToyImage>& images);

struct DemoCorpus {
  std::filesystem::path events_csv;
  std::filesystem::path fixture_dir;
  std::size_t hotspots = 0;
  std::size_t views = 0;
};

// Writes `<dir>/events.csv` (NYC column names) with `hotspots` tight event
// clusters plus scattered noise, and renders one toy image per view that
// plan_dataset() will request under `config` into `<dir>/fixtures/`.
DemoCorpus write_demo_corpus(const std::filesystem::path& dir, std::size_t hotspots, std::uint64_t seed,
                             const WorkspaceConfig& config, int image_size = 128);

}  // namespace saferoad::synth
