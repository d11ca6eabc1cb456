#include "vsl/quadruples.hpp"

#include <algorithm>
#include <cmath>

namespace vsl {

bool is_valid_analogy(const std::array<ImageLabels, 4>& l) {
  return l[0].category == l[1].category && l[2].category == l[3].category &&
         l[0].category != l[2].category && l[0].property == l[2].property &&
         l[1].property == l[3].property && l[0].property != l[1].property;
}

std::uint64_t count_positive_analogies(std::uint64_t num_categories,
                                       std::uint64_t num_properties) {
  if (num_categories < 2 || num_properties < 2) {
    throw ValidationError("count_positive_analogies: counts must be >= 2");
  }
  const std::uint64_t cat_pairs = num_categories * (num_categories - 1) / 2;
  const std::uint64_t prop_pairs = num_properties * (num_properties - 1) / 2;
  return cat_pairs * prop_pairs * 4;
}

QuadrupleSampler::QuadrupleSampler(const Corpus& corpus, const SplitResult& splits,
                                   std::uint64_t seed)
    : corpus_(&corpus), splits_(&splits), rng_(seed) {
  const std::uint64_t tc = splits.train_categories.size();
  const std::uint64_t tp = corpus.spec().num_properties;
  const std::uint64_t total = tc >= 2 && tp >= 2 ? tc * (tc - 1) * tp * (tp - 1) : 0;
  const std::uint64_t banned = splits.heldout_types.size();
  admissible_type_count_ = total > banned ? total - banned : 0;
}

const std::array<ImageLabels, 4> QuadrupleSampler::labels_of(const Quadruple& q) const {
  auto lab = [&](ImageRef r) {
    const LabeledImage& img = corpus_->image(r);
    return ImageLabels{img.category_id, img.property_id};
  };
  return {lab(q.i1), lab(q.i2), lab(q.i3), lab(q.i4)};
}

AnalogyType QuadrupleSampler::sample_admissible_type() {
  if (splits_->train_categories.size() < 2 || corpus_->spec().num_properties < 2) {
    throw ValidationError("sampler: positives need two training categories and properties");
  }
  if (admissible_type_count_ == 0) {
    throw ExhaustionError("sampler: every analogy type is held out");
  }
  const auto& cats = splits_->train_categories;
  const std::uint64_t tp = corpus_->spec().num_properties;
  // Rejection is exact and fast unless the registry covers almost all types;
  // fall back to full enumeration in that regime.
  for (int attempt = 0; attempt < 128; ++attempt) {
    AnalogyType t;
    t.c_in = cats[rng_.uniform_index(cats.size())];
    do {
      t.c_out = cats[rng_.uniform_index(cats.size())];
    } while (t.c_out == t.c_in);
    t.p_first = static_cast<std::uint32_t>(rng_.uniform_index(tp));
    do {
      t.p_second = static_cast<std::uint32_t>(rng_.uniform_index(tp));
    } while (t.p_second == t.p_first);
    if (!splits_->heldout_types.count(t)) return t;
  }
  std::vector<AnalogyType> admissible;
  for (std::uint32_t ci : cats) {
    for (std::uint32_t co : cats) {
      if (ci == co) continue;
      for (std::uint32_t p1 = 0; p1 < tp; ++p1) {
        for (std::uint32_t p2 = 0; p2 < tp; ++p2) {
          if (p1 == p2) continue;
          AnalogyType t{ci, co, p1, p2};
          if (!splits_->heldout_types.count(t)) admissible.push_back(t);
        }
      }
    }
  }
  if (admissible.empty()) throw ExhaustionError("sampler: every analogy type is held out");
  return admissible[rng_.uniform_index(admissible.size())];
}

ImageRef QuadrupleSampler::sample_exemplar(std::uint32_t category, std::uint32_t property) {
  const std::uint32_t e =
      static_cast<std::uint32_t>(rng_.uniform_index(corpus_->spec().exemplars_per_cell));
  return corpus_->ref(category, property, e);
}

Quadruple QuadrupleSampler::sample_positive() {
  const AnalogyType t = sample_admissible_type();
  Quadruple q;
  q.type = t;
  q.i1 = sample_exemplar(t.c_in, t.p_first);
  q.i2 = sample_exemplar(t.c_in, t.p_second);
  q.i3 = sample_exemplar(t.c_out, t.p_first);
  q.i4 = sample_exemplar(t.c_out, t.p_second);
  q.label = 1;
  return q;
}

Quadruple QuadrupleSampler::sample_negative_random() {
  const auto& pool = splits_->train_pool;
  if (pool.empty()) throw ValidationError("sampler: empty train pool");
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Quadruple q;
    q.i1 = pool[rng_.uniform_index(pool.size())];
    q.i2 = pool[rng_.uniform_index(pool.size())];
    q.i3 = pool[rng_.uniform_index(pool.size())];
    q.i4 = pool[rng_.uniform_index(pool.size())];
    q.label = 0;
    if (!is_valid_analogy(labels_of(q))) return q;
  }
  // With >= 2 categories or properties a uniform draw is valid with
  // probability well under 1%, so reaching this indicates a broken pool.
  throw NumericalError("sampler: rejection sampling failed to produce a negative");
}

Quadruple QuadrupleSampler::sample_negative_hard() {
  const auto& cats = splits_->train_categories;
  const std::uint64_t tp = corpus_->spec().num_properties;
  const bool category_substitutable = cats.size() > 2;
  const bool property_substitutable = tp > 2;
  if (!category_substitutable && !property_substitutable) {
    throw ExhaustionError(
        "sampler: hard negatives need more than two categories or two properties");
  }

  Quadruple q = sample_positive();
  const AnalogyType t = q.type;
  const bool replace_i3 = rng_.bernoulli(0.5);
  bool substitute_property = rng_.bernoulli(0.5);
  if (substitute_property && !property_substitutable) substitute_property = false;
  if (!substitute_property && !category_substitutable) substitute_property = true;

  const std::uint32_t slot_property = replace_i3 ? t.p_first : t.p_second;
  ImageRef replacement;
  if (substitute_property) {
    // keep the slot's category c_out, pick p* outside {p_1, p_2}
    std::uint32_t p_new;
    do {
      p_new = static_cast<std::uint32_t>(rng_.uniform_index(tp));
    } while (p_new == t.p_first || p_new == t.p_second);
    replacement = sample_exemplar(t.c_out, p_new);
  } else {
    // keep the slot's property, pick c* outside {c_in, c_out}
    std::uint32_t c_new;
    do {
      c_new = cats[rng_.uniform_index(cats.size())];
    } while (c_new == t.c_in || c_new == t.c_out);
    replacement = sample_exemplar(c_new, slot_property);
  }
  (replace_i3 ? q.i3 : q.i4) = replacement;
  q.label = 0;
  return q;
}

std::vector<Quadruple> QuadrupleSampler::sample_batch(std::size_t size, double pos_fraction,
                                                      double hard_fraction) {
  if (size < 1) throw ValidationError("sample_batch: size must be >= 1");
  if (pos_fraction < 0 || pos_fraction > 1 || hard_fraction < 0 || hard_fraction > 1) {
    throw ValidationError("sample_batch: fractions must be in [0,1]");
  }
  const std::size_t n_pos =
      static_cast<std::size_t>(std::min<double>(static_cast<double>(size),
                                                std::floor(pos_fraction * size + 0.5)));
  const std::size_t n_neg = size - n_pos;
  const std::size_t n_hard =
      static_cast<std::size_t>(std::min<double>(static_cast<double>(n_neg),
                                                std::floor(hard_fraction * n_neg + 0.5)));
  std::vector<Quadruple> batch;
  batch.reserve(size);
  for (std::size_t i = 0; i < n_pos; ++i) batch.push_back(sample_positive());
  for (std::size_t i = 0; i < n_hard; ++i) batch.push_back(sample_negative_hard());
  for (std::size_t i = 0; i + n_hard < n_neg; ++i) batch.push_back(sample_negative_random());
  // Fisher-Yates shuffle with the sampler's own stream.
  for (std::size_t i = batch.size(); i > 1; --i) {
    std::swap(batch[i - 1], batch[rng_.uniform_index(i)]);
  }
  return batch;
}

std::string quadruples_to_csv(const std::vector<Quadruple>& quads) {
  std::string out = "i1,i2,i3,i4,y\n";
  for (const Quadruple& q : quads) {
    out += std::to_string(q.i1) + "," + std::to_string(q.i2) + "," + std::to_string(q.i3) +
           "," + std::to_string(q.i4) + "," + std::to_string(q.label) + "\n";
  }
  return out;
}

}  // namespace vsl
