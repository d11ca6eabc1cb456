#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vsl/corpus.hpp"
#include "vsl/model.hpp"
#include "vsl/types.hpp"

namespace vsl {

enum class Regime { seen, unseen };

// Which flavor of "unseen" a question set probes: analogy types withheld
// from training, categories never trained on, or a mix of both.
enum class UnseenMode { heldout_types, unseen_categories, both };

struct AnalogyQuestion {
  std::uint32_t question_id = 0;
  ImageRef i1, i2, i3;
  std::vector<ImageRef> positives;    // category of i3 and property of i2
  std::vector<ImageRef> distractors;  // uniform without replacement
  AnalogyType type;
  Regime regime = Regime::seen;
};

struct RecallCurve {
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // mean over questions, per k
  std::size_t question_count = 0;
  std::size_t distractor_count = 0;
};

struct AuditRow {
  std::uint32_t question_id;
  std::size_t rank_of_first_positive;  // 1-based
};

// Cosine of two pair embeddings. Both inputs are unit length already; the
// renormalization is an identity kept for robustness.
double score(const Tensor& x12, const Tensor& x3i);

// Precomputed encoder features for every corpus image under fixed params
// and channel means. threads > 1 fans the forward passes out; results are
// stored by index so the cache is identical for any thread count.
class FeatureCache {
 public:
  FeatureCache(const Corpus& corpus, const EncoderParams& params,
               const std::array<double, 3>& means, std::size_t threads = 1);

  const Tensor& feature(ImageRef r) const { return features_[r]; }

 private:
  std::vector<Tensor> features_;
};

// Candidate scoring interface: the embedding scorer implements the ranking
// rule; the random scorer is the chance arm.
class Scorer {
 public:
  virtual ~Scorer() = default;
  // Scores every candidate for one question. A candidate whose pair
  // embedding is degenerate receives NaN (ranked last, warning counted).
  virtual void score_candidates(const AnalogyQuestion& question,
                                const std::vector<ImageRef>& candidates,
                                std::vector<double>& out) = 0;
};

class EmbeddingScorer : public Scorer {
 public:
  explicit EmbeddingScorer(std::shared_ptr<const FeatureCache> features);
  void score_candidates(const AnalogyQuestion& question,
                        const std::vector<ImageRef>& candidates,
                        std::vector<double>& out) override;

  std::size_t degenerate_count() const { return degenerate_count_.load(); }

 private:
  std::shared_ptr<const FeatureCache> features_;
  std::atomic<std::size_t> degenerate_count_{0};
};

// Uniform score per (question, candidate), derived from the seed so the
// result is independent of evaluation order.
class RandomScorer : public Scorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
  void score_candidates(const AnalogyQuestion& question,
                        const std::vector<ImageRef>& candidates,
                        std::vector<double>& out) override;

 private:
  std::uint64_t seed_;
};

// Builds n_questions questions for the regime. Seen questions use analogy
// types available to training; unseen questions use held-out types and/or
// unseen categories per `mode`. Distractors are drawn uniformly without
// replacement from the evaluation pool, excluding positives and the three
// query images. Duplicate (i1,i2,i3) triples appear only when the eligible
// triple space is smaller than n_questions.
std::vector<AnalogyQuestion> build_questions(const Corpus& corpus, const SplitResult& splits,
                                             Regime regime, UnseenMode mode,
                                             std::size_t n_questions,
                                             std::size_t distractor_size, std::uint64_t seed);

struct RankedCandidate {
  ImageRef ref;
  double score;
  bool degenerate;
};

// Descending score; ties by ascending reference index; degenerate last.
std::vector<RankedCandidate> rank_candidates(const AnalogyQuestion& question, Scorer& scorer);

// 1 if any positive is within the top k ranked candidates, else 0.
int recall_at_k(const std::vector<RankedCandidate>& ranking,
                const std::vector<ImageRef>& positives, std::size_t k);

struct EvalResult {
  RecallCurve curve;
  std::vector<AuditRow> audit;
};

// Mean recall@k over the questions for each k, plus per-question audit rows.
// threads > 1 evaluates questions concurrently; the reduction order is fixed
// by question index so results are thread-count invariant.
EvalResult evaluate(const std::vector<AnalogyQuestion>& questions, Scorer& scorer,
                    const std::vector<std::size_t>& ks, std::size_t threads = 1);

// Expected recall@k of a random ranking with n distractors and p positives:
// 1 - C(n,k)/C(n+p,k). With one positive this reduces to k/(n+1).
double chance_recall(std::size_t n_distractors, std::size_t n_positives, std::size_t k);

// --- ablation ----------------------------------------------------------------

struct AblationConfig {
  CorpusSpec corpus_spec;
  std::uint32_t unseen_categories = 2;
  std::uint32_t heldout_types = 6;
  Hyperparams hyper;                       // loss_mode/freeze_mode ignored (grid axes)
  ClassifierHyperparams classifier_hyper;  // shared pretrained init per seed
  UnseenMode unseen_mode = UnseenMode::heldout_types;
  std::size_t n_questions = 200;
  std::size_t distractor_size = 100;
  std::vector<std::size_t> ks = {1, 5, 10};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

struct AblationRow {
  Regime regime;
  LossMode loss_mode;
  FreezeMode freeze_mode;
  std::uint64_t seed;
  std::size_t k;
  std::size_t n_distractors;
  double recall;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  // FNV-1a hashes proving every arm saw identical data.
  std::uint64_t question_hash_seen = 0;
  std::uint64_t question_hash_unseen = 0;
  std::uint64_t shared_config_hash = 0;
};

using AblationProgress = std::function<void(const std::string&)>;

// Grid over {single, double} x {fc_only, fc_plus_lastconv} x {seen, unseen}.
// Every arm of one seed starts from the same classifier-pretrained encoder
// and sees identical question sets.
AblationReport run_ablation(const AblationConfig& config, const AblationProgress& progress = {});

// Results CSV: regime,loss_mode,freeze_mode,seed,k,n_distractors,recall.
std::string ablation_to_csv(const std::vector<AblationRow>& rows);

std::string audit_to_csv(const std::vector<AuditRow>& rows);

const char* to_string(Regime regime);
const char* to_string(LossMode mode);
const char* to_string(FreezeMode mode);

}  // namespace vsl
