#include "vsl/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <thread>

#include "vsl/rng.hpp"

namespace vsl {

namespace {

constexpr std::uint64_t kQuestionStream = 0x55;

std::uint64_t fnv1a(std::uint64_t hash, std::uint64_t word) {
  for (int i = 0; i < 8; ++i) {
    hash ^= (word >> (8 * i)) & 0xff;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

// Runs fn(i) for i in [0, n) across the requested number of workers.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

double score(const Tensor& x12, const Tensor& x3i) {
  require_same_shape(x12, x3i, "score");
  const double n1 = x12.l2_norm();
  const double n2 = x3i.l2_norm();
  if (n1 < kEpsNorm || n2 < kEpsNorm) {
    throw DegeneratePair("score: embedding norm below eps");
  }
  return x12.dot(x3i) / (n1 * n2);
}

FeatureCache::FeatureCache(const Corpus& corpus, const EncoderParams& params,
                           const std::array<double, 3>& means, std::size_t threads) {
  features_.resize(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    features_[i] = encode(preprocess(corpus.image(static_cast<ImageRef>(i)), means), params);
  });
}

EmbeddingScorer::EmbeddingScorer(std::shared_ptr<const FeatureCache> features)
    : features_(std::move(features)) {}

void EmbeddingScorer::score_candidates(const AnalogyQuestion& question,
                                       const std::vector<ImageRef>& candidates,
                                       std::vector<double>& out) {
  // The query pair is strict: a degenerate (I1, I2) voids the question.
  const Tensor x12 =
      embed_pair(features_->feature(question.i1), features_->feature(question.i2),
                 NormMode::strict);
  const Tensor& f3 = features_->feature(question.i3);
  out.resize(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Tensor& fc = features_->feature(candidates[i]);
    Tensor diff(f3.shape());
    for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = f3[j] - fc[j];
    const double norm = diff.l2_norm();
    if (norm < kEpsNorm) {
      // Degenerate candidate pair: demoted to the bottom, never fatal.
      out[i] = std::numeric_limits<double>::quiet_NaN();
      ++degenerate_count_;
      continue;
    }
    diff *= 1.0 / norm;
    out[i] = score(x12, diff);
  }
}

void RandomScorer::score_candidates(const AnalogyQuestion& question,
                                    const std::vector<ImageRef>& candidates,
                                    std::vector<double>& out) {
  out.resize(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    Rng rng(mix_seed(mix_seed(seed_, question.question_id), candidates[i]));
    out[i] = rng.uniform();
  }
}

namespace {

struct QuestionSpace {
  std::vector<AnalogyType> heldout_list;   // unseen/heldout draws
  std::vector<std::uint32_t> categories;   // type categories (seen / unseen-cat mode)
  const std::vector<ImageRef>* eval_pool;
  std::vector<ImageRef> full_pool;         // backing store when pool = whole corpus
  bool use_heldout = false;
  bool use_categories = false;
  std::uint64_t triple_space = 0;
};

QuestionSpace question_space(const Corpus& corpus, const SplitResult& splits, Regime regime,
                             UnseenMode mode) {
  QuestionSpace space;
  const std::uint64_t props = corpus.spec().num_properties;
  const std::uint64_t exemplars = corpus.spec().exemplars_per_cell;
  if (regime == Regime::seen) {
    if (splits.train_categories.size() < 2) {
      throw ValidationError("build_questions: need two training categories");
    }
    space.categories = splits.train_categories;
    space.use_categories = true;
    space.eval_pool = &splits.train_pool;
    const std::uint64_t tc = splits.train_categories.size();
    std::uint64_t heldout_in_train = 0;
    for (const AnalogyType& t : splits.heldout_types) {
      const auto& cats = splits.train_categories;
      if (std::binary_search(cats.begin(), cats.end(), t.c_in) &&
          std::binary_search(cats.begin(), cats.end(), t.c_out)) {
        ++heldout_in_train;
      }
    }
    space.triple_space = (tc * (tc - 1) * props * (props - 1) - heldout_in_train) *
                         exemplars * exemplars * exemplars;
    return space;
  }

  const bool heldout_available = !splits.heldout_types.empty();
  const bool categories_available = splits.unseen_categories.size() >= 2;
  space.use_heldout =
      heldout_available && (mode == UnseenMode::heldout_types || mode == UnseenMode::both);
  space.use_categories = categories_available && (mode == UnseenMode::unseen_categories ||
                                                  mode == UnseenMode::both);
  if (!space.use_heldout && !space.use_categories) {
    throw ValidationError(
        "build_questions: unseen regime needs held-out types or >= 2 unseen categories");
  }
  if (space.use_heldout) {
    space.heldout_list.assign(splits.heldout_types.begin(), splits.heldout_types.end());
    space.triple_space += splits.heldout_types.size() * exemplars * exemplars * exemplars;
  }
  if (space.use_categories) {
    space.categories = splits.unseen_categories;
    const std::uint64_t uc = splits.unseen_categories.size();
    space.triple_space += uc * (uc - 1) * props * (props - 1) * exemplars * exemplars * exemplars;
  }
  if (space.use_categories) {
    // Unseen-category questions rank against the whole corpus so distractor
    // sets are not capped by the small unseen pool.
    space.full_pool.resize(corpus.size());
    for (ImageRef r = 0; r < corpus.size(); ++r) space.full_pool[r] = r;
    space.eval_pool = &space.full_pool;
  } else {
    space.eval_pool = &splits.train_pool;
  }
  return space;
}

}  // namespace

std::vector<AnalogyQuestion> build_questions(const Corpus& corpus, const SplitResult& splits,
                                             Regime regime, UnseenMode mode,
                                             std::size_t n_questions,
                                             std::size_t distractor_size, std::uint64_t seed) {
  if (n_questions == 0) throw ValidationError("build_questions: n_questions must be >= 1");
  QuestionSpace space = question_space(corpus, splits, regime, mode);
  const std::uint64_t props = corpus.spec().num_properties;
  const std::uint32_t exemplars = corpus.spec().exemplars_per_cell;
  Rng rng(mix_seed(seed, kQuestionStream));

  const bool dedupe = space.triple_space >= n_questions;
  std::set<std::array<ImageRef, 3>> used;

  // Scratch for distractor draws: eligible refs get partially shuffled.
  std::vector<ImageRef> eligible;
  std::vector<char> excluded(corpus.size(), 0);

  std::vector<AnalogyQuestion> questions;
  questions.reserve(n_questions);
  for (std::size_t qi = 0; qi < n_questions; ++qi) {
    AnalogyQuestion q;
    q.question_id = static_cast<std::uint32_t>(qi);
    q.regime = regime;

    for (int attempt = 0;; ++attempt) {
      if (attempt > 5000) {
        throw ExhaustionError("build_questions: could not find an unused (i1,i2,i3) triple");
      }
      // choose the analogy type
      bool from_heldout = space.use_heldout;
      if (space.use_heldout && space.use_categories) from_heldout = rng.bernoulli(0.5);
      if (from_heldout) {
        q.type = space.heldout_list[rng.uniform_index(space.heldout_list.size())];
      } else {
        const auto& cats = space.categories;
        q.type.c_in = cats[rng.uniform_index(cats.size())];
        do {
          q.type.c_out = cats[rng.uniform_index(cats.size())];
        } while (q.type.c_out == q.type.c_in);
        q.type.p_first = static_cast<std::uint32_t>(rng.uniform_index(props));
        do {
          q.type.p_second = static_cast<std::uint32_t>(rng.uniform_index(props));
        } while (q.type.p_second == q.type.p_first);
        if (regime == Regime::seen && splits.heldout_types.count(q.type)) continue;
      }
      q.i1 = corpus.ref(q.type.c_in, q.type.p_first,
                        static_cast<std::uint32_t>(rng.uniform_index(exemplars)));
      q.i2 = corpus.ref(q.type.c_in, q.type.p_second,
                        static_cast<std::uint32_t>(rng.uniform_index(exemplars)));
      q.i3 = corpus.ref(q.type.c_out, q.type.p_first,
                        static_cast<std::uint32_t>(rng.uniform_index(exemplars)));
      if (!dedupe) break;
      if (used.insert({q.i1, q.i2, q.i3}).second) break;
    }

    q.positives = corpus.cell(q.type.c_out, q.type.p_second);

    // distractors: uniform without replacement, excluding positives + query
    std::fill(excluded.begin(), excluded.end(), 0);
    for (ImageRef r : q.positives) excluded[r] = 1;
    excluded[q.i1] = excluded[q.i2] = excluded[q.i3] = 1;
    eligible.clear();
    for (ImageRef r : *space.eval_pool) {
      if (!excluded[r]) eligible.push_back(r);
    }
    if (eligible.size() < distractor_size) {
      throw ExhaustionError("build_questions: evaluation pool too small for " +
                            std::to_string(distractor_size) + " distractors");
    }
    for (std::size_t i = 0; i < distractor_size; ++i) {
      const std::size_t at = i + rng.uniform_index(eligible.size() - i);
      std::swap(eligible[i], eligible[at]);
    }
    q.distractors.assign(eligible.begin(),
                         eligible.begin() + static_cast<std::ptrdiff_t>(distractor_size));
    std::sort(q.distractors.begin(), q.distractors.end());
    questions.push_back(std::move(q));
  }
  return questions;
}

std::vector<RankedCandidate> rank_candidates(const AnalogyQuestion& question, Scorer& scorer) {
  std::vector<ImageRef> candidates;
  candidates.reserve(question.positives.size() + question.distractors.size());
  candidates.insert(candidates.end(), question.positives.begin(), question.positives.end());
  candidates.insert(candidates.end(), question.distractors.begin(), question.distractors.end());
  // Canonical candidate order makes the ranking independent of input order.
  std::sort(candidates.begin(), candidates.end());

  std::vector<double> scores;
  scorer.score_candidates(question, candidates, scores);

  std::vector<RankedCandidate> ranked(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    ranked[i] = {candidates[i], scores[i], std::isnan(scores[i])};
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.degenerate != b.degenerate) return b.degenerate;
    if (!a.degenerate && a.score != b.score) return a.score > b.score;
    return a.ref < b.ref;
  });
  return ranked;
}

int recall_at_k(const std::vector<RankedCandidate>& ranking,
                const std::vector<ImageRef>& positives, std::size_t k) {
  if (k < 1 || k > ranking.size()) {
    throw ValidationError("recall_at_k: k out of range (1.." +
                          std::to_string(ranking.size()) + ")");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (std::binary_search(positives.begin(), positives.end(), ranking[i].ref)) return 1;
  }
  return 0;
}

EvalResult evaluate(const std::vector<AnalogyQuestion>& questions, Scorer& scorer,
                    const std::vector<std::size_t>& ks, std::size_t threads) {
  if (questions.empty()) throw ValidationError("evaluate: no questions");
  if (ks.empty()) throw ValidationError("evaluate: no ks");

  std::vector<std::size_t> first_positive(questions.size(), 0);
  parallel_for(questions.size(), threads, [&](std::size_t qi) {
    const AnalogyQuestion& q = questions[qi];
    std::vector<ImageRef> sorted_pos = q.positives;
    std::sort(sorted_pos.begin(), sorted_pos.end());
    const std::vector<RankedCandidate> ranking = rank_candidates(q, scorer);
    std::size_t rank = ranking.size();  // positives exist, so this gets overwritten
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      if (std::binary_search(sorted_pos.begin(), sorted_pos.end(), ranking[i].ref)) {
        rank = i + 1;
        break;
      }
    }
    first_positive[qi] = rank;
  });

  EvalResult result;
  result.curve.ks = ks;
  result.curve.question_count = questions.size();
  result.curve.distractor_count = questions.front().distractors.size();
  result.curve.recall.resize(ks.size(), 0.0);
  result.audit.reserve(questions.size());
  for (std::size_t qi = 0; qi < questions.size(); ++qi) {
    result.audit.push_back({questions[qi].question_id, first_positive[qi]});
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      const std::size_t n_candidates =
          questions[qi].positives.size() + questions[qi].distractors.size();
      if (ks[ki] < 1 || ks[ki] > n_candidates) {
        throw ValidationError("evaluate: k=" + std::to_string(ks[ki]) +
                              " out of range for " + std::to_string(n_candidates) +
                              " candidates");
      }
      if (first_positive[qi] <= ks[ki]) result.curve.recall[ki] += 1.0;
    }
  }
  for (double& r : result.curve.recall) r /= static_cast<double>(questions.size());
  return result;
}

double chance_recall(std::size_t n_distractors, std::size_t n_positives, std::size_t k) {
  if (n_positives == 0) throw ValidationError("chance_recall: need at least one positive");
  if (k > n_distractors) return 1.0;
  // 1 - C(n,k)/C(n+p,k) computed as 1 - prod_{i<k} (n-i)/(n+p-i)
  double miss = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    miss *= static_cast<double>(n_distractors - i) /
            static_cast<double>(n_distractors + n_positives - i);
  }
  return 1.0 - miss;
}

AblationReport run_ablation(const AblationConfig& config, const AblationProgress& progress) {
  const Corpus corpus = generate_corpus(config.corpus_spec);
  const SplitSpec split_spec =
      make_split_spec(config.corpus_spec, config.unseen_categories, config.heldout_types,
                      default_split_seed(config.corpus_spec.seed));
  const SplitResult splits = make_splits(corpus, split_spec);

  const std::uint64_t q_seed = mix_seed(config.corpus_spec.seed, kQuestionStream);
  const auto questions_seen =
      build_questions(corpus, splits, Regime::seen, config.unseen_mode, config.n_questions,
                      config.distractor_size, q_seed);
  const auto questions_unseen =
      build_questions(corpus, splits, Regime::unseen, config.unseen_mode, config.n_questions,
                      config.distractor_size, mix_seed(q_seed, 1));

  auto hash_questions = [](const std::vector<AnalogyQuestion>& qs) {
    std::uint64_t h = kFnvOffset;
    for (const AnalogyQuestion& q : qs) {
      h = fnv1a(h, q.i1);
      h = fnv1a(h, q.i2);
      h = fnv1a(h, q.i3);
      for (ImageRef r : q.positives) h = fnv1a(h, r);
      for (ImageRef r : q.distractors) h = fnv1a(h, r);
    }
    return h;
  };

  AblationReport report;
  report.question_hash_seen = hash_questions(questions_seen);
  report.question_hash_unseen = hash_questions(questions_unseen);
  {
    std::uint64_t h = kFnvOffset;
    h = fnv1a(h, config.corpus_spec.seed);
    h = fnv1a(h, config.corpus_spec.num_categories);
    h = fnv1a(h, config.corpus_spec.num_properties);
    h = fnv1a(h, config.corpus_spec.exemplars_per_cell);
    h = fnv1a(h, config.unseen_categories);
    h = fnv1a(h, config.heldout_types);
    h = fnv1a(h, config.hyper.steps);
    h = fnv1a(h, config.hyper.batch_size);
    h = fnv1a(h, static_cast<std::uint64_t>(config.hyper.learning_rate * 1e9));
    h = fnv1a(h, static_cast<std::uint64_t>(config.hyper.momentum * 1e9));
    h = fnv1a(h, config.n_questions);
    h = fnv1a(h, config.distractor_size);
    h = fnv1a(h, report.question_hash_seen);
    h = fnv1a(h, report.question_hash_unseen);
    report.shared_config_hash = h;
  }

  const LossMode losses[2] = {LossMode::single, LossMode::double_margin};
  const FreezeMode freezes[2] = {FreezeMode::fc_only, FreezeMode::fc_plus_lastconv};

  for (std::uint64_t seed : config.seeds) {
    ClassifierHyperparams cls = config.classifier_hyper;
    cls.seed = seed;
    if (progress) progress("seed " + std::to_string(seed) + ": pretraining classifier init");
    const ClassifierResult pretrained = pretrain_classifier(corpus, splits, cls);

    for (LossMode loss : losses) {
      for (FreezeMode freeze : freezes) {
        Hyperparams hyper = config.hyper;
        hyper.loss_mode = loss;
        hyper.freeze_mode = freeze;
        hyper.seed = seed;
        if (progress) {
          progress("seed " + std::to_string(seed) + ": training " +
                   std::string(to_string(loss)) + " / " + to_string(freeze));
        }
        const TrainResult trained =
            train(corpus, splits, hyper, {}, &pretrained.params);

        const auto features = std::make_shared<FeatureCache>(
            corpus, trained.params, channel_means(corpus, splits.train_pool));
        EmbeddingScorer scorer(features);
        for (Regime regime : {Regime::seen, Regime::unseen}) {
          const auto& questions = regime == Regime::seen ? questions_seen : questions_unseen;
          const EvalResult eval = evaluate(questions, scorer, config.ks);
          for (std::size_t ki = 0; ki < config.ks.size(); ++ki) {
            report.rows.push_back({regime, loss, freeze, seed, config.ks[ki],
                                   config.distractor_size, eval.curve.recall[ki]});
          }
        }
      }
    }
  }
  return report;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::string out = "regime,loss_mode,freeze_mode,seed,k,n_distractors,recall\n";
  char buf[200];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%llu,%zu,%zu,%.17g\n", to_string(r.regime),
                  to_string(r.loss_mode), to_string(r.freeze_mode),
                  static_cast<unsigned long long>(r.seed), r.k, r.n_distractors, r.recall);
    out += buf;
  }
  return out;
}

std::string audit_to_csv(const std::vector<AuditRow>& rows) {
  std::string out = "question_id,rank_of_first_positive\n";
  for (const AuditRow& r : rows) {
    out += std::to_string(r.question_id) + "," + std::to_string(r.rank_of_first_positive) + "\n";
  }
  return out;
}

const char* to_string(Regime regime) { return regime == Regime::seen ? "seen" : "unseen"; }

const char* to_string(LossMode mode) {
  return mode == LossMode::single ? "single" : "double";
}

const char* to_string(FreezeMode mode) {
  switch (mode) {
    case FreezeMode::fc_only: return "fc_only";
    case FreezeMode::fc_plus_lastconv: return "fc_plus_lastconv";
    case FreezeMode::all: return "all";
  }
  return "?";
}

}  // namespace vsl
