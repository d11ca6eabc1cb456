#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vsl/corpus.hpp"
#include "vsl/rng.hpp"
#include "vsl/types.hpp"

namespace vsl {

struct ImageLabels {
  std::uint32_t category;
  std::uint32_t property;
};

// True iff the four labels form [ (c_i,p_1) : (c_i,p_2) :: (c_o,p_1) : (c_o,p_2) ]
// with c_i != c_o and p_1 != p_2.
bool is_valid_analogy(const std::array<ImageLabels, 4>& labels);

// Number of ordered positive analogy quadruples with one exemplar per cell:
// C(categories,2) * C(properties,2) * 4.
std::uint64_t count_positive_analogies(std::uint64_t num_categories,
                                       std::uint64_t num_properties);

struct Quadruple {
  ImageRef i1, i2, i3, i4;
  int label;  // 1 = correct analogy, 0 = violation
  AnalogyType type;  // meaningful for positives and hard negatives
};

// Draws training quadruples from the train pool. Positives never use an
// analogy type from the held-out registry. One sampler per worker; the
// sampler owns its RNG state.
class QuadrupleSampler {
 public:
  QuadrupleSampler(const Corpus& corpus, const SplitResult& splits, std::uint64_t seed);

  // Uniform admissible analogy type, then one exemplar per slot.
  Quadruple sample_positive();

  // Four uniform pool images, rejected until they violate the validity rule.
  Quadruple sample_negative_random();

  // A positive with slot i3 or i4 replaced by an image that keeps either
  // the slot's category or its property, breaking the analogy.
  Quadruple sample_negative_hard();

  // round(size * pos_fraction) positives; the remaining negatives split
  // hard_fraction hard vs random; order shuffled.
  std::vector<Quadruple> sample_batch(std::size_t size, double pos_fraction,
                                      double hard_fraction);

  const std::array<ImageLabels, 4> labels_of(const Quadruple& q) const;

 private:
  AnalogyType sample_admissible_type();
  ImageRef sample_exemplar(std::uint32_t category, std::uint32_t property);

  const Corpus* corpus_;
  const SplitResult* splits_;
  Rng rng_;
  std::uint64_t admissible_type_count_;
};

// CSV dump of batches for debugging: columns i1,i2,i3,i4,y.
std::string quadruples_to_csv(const std::vector<Quadruple>& quads);

}  // namespace vsl
