#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "vsl/tensor.hpp"
#include "vsl/types.hpp"

namespace vsl {

// Jitter applied per exemplar. Kept mild so the (category, property) signal
// dominates the rendered pixels.
struct JitterSpec {
  double position_px = 2.0;     // max |translation| per axis
  double scale_fraction = 0.1;  // max relative scale change
  double noise_amplitude = 0.05;
};

struct CorpusSpec {
  std::uint32_t num_categories = 12;
  std::uint32_t num_properties = 8;
  std::uint32_t exemplars_per_cell = 6;
  std::uint32_t image_size = 24;  // square
  std::uint32_t channels = 3;
  JitterSpec jitter;
  // Fraction of property ids assigned to hue transforms; the remainder are
  // rotation transforms shared by every glyph family.
  double hue_fraction = 0.5;
  double rotation_max_deg = 40.0;
  std::uint64_t seed = 1;
};

void validate(const CorpusSpec& spec);

struct LabeledImage {
  Tensor pixels;  // channels x H x W, values in [0,1], quantized to k/255
  std::uint32_t category_id = 0;
  std::uint32_t property_id = 0;
  std::uint32_t exemplar_id = 0;
  std::uint64_t render_seed = 0;
};

class Corpus {
 public:
  Corpus(CorpusSpec spec, std::vector<LabeledImage> images);

  const CorpusSpec& spec() const { return spec_; }
  std::size_t size() const { return images_.size(); }

  ImageRef ref(std::uint32_t category, std::uint32_t property, std::uint32_t exemplar) const;
  const LabeledImage& image(ImageRef r) const { return images_.at(r); }
  const LabeledImage& at(std::uint32_t category, std::uint32_t property,
                         std::uint32_t exemplar) const {
    return images_[ref(category, property, exemplar)];
  }

  // All exemplar refs of one (category, property) cell.
  std::vector<ImageRef> cell(std::uint32_t category, std::uint32_t property) const;

  bool operator==(const Corpus& other) const;

 private:
  CorpusSpec spec_;
  std::vector<LabeledImage> images_;
};

// Renders one image as a pure function of (spec.seed, category, property,
// exemplar_seed). The exemplar seed drives jitter only; category selects the
// glyph, property selects hue or rotation.
LabeledImage render_image(const CorpusSpec& spec, std::uint32_t category_id,
                          std::uint32_t property_id, std::uint32_t exemplar_seed);

// Full grid: num_categories x num_properties x exemplars_per_cell images in
// (c, p, e) lexicographic order.
Corpus generate_corpus(const CorpusSpec& spec);

// --- splits ---------------------------------------------------------------

struct SplitSpec {
  std::set<std::uint32_t> unseen_category_ids;
  std::set<AnalogyType> heldout_analogy_types;
  std::uint64_t seed = 0;
};

// Draws n_unseen categories and n_heldout analogy types (over the remaining
// training categories) uniformly from the given seed.
SplitSpec make_split_spec(const CorpusSpec& corpus_spec, std::uint32_t n_unseen,
                          std::uint32_t n_heldout, std::uint64_t seed);

// Canonical split seed derived from the corpus seed, so training and
// evaluation commands agree on the same splits without extra state.
std::uint64_t default_split_seed(std::uint64_t corpus_seed);

struct SplitResult {
  std::vector<ImageRef> train_pool;    // no image with an unseen category
  std::vector<ImageRef> unseen_pool;   // images of unseen categories only
  std::vector<std::uint32_t> train_categories;
  std::vector<std::uint32_t> unseen_categories;
  std::set<AnalogyType> heldout_types;  // banned from training positives
};

SplitResult make_splits(const Corpus& corpus, const SplitSpec& split_spec);

// Per-channel pixel means over a pool of images. Training uses the train
// pool only; the same means preprocess every image fed to the encoder.
std::array<double, 3> channel_means(const Corpus& corpus, const std::vector<ImageRef>& pool);

Tensor preprocess(const LabeledImage& image, const std::array<double, 3>& means);

// --- VSLC file format -------------------------------------------------------

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace vsl
