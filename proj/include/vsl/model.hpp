#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vsl/corpus.hpp"
#include "vsl/layers.hpp"
#include "vsl/quadruples.hpp"
#include "vsl/tensor.hpp"

namespace vsl {

// Encoder shape: conv -> relu -> pool -> conv -> relu -> pool -> dense ->
// relu -> dense. Image size must be divisible by 4 (two 2x2 pools).
struct Architecture {
  std::uint32_t channels = 3;
  std::uint32_t image_size = 24;
  std::uint32_t conv1_kernels = 8;
  std::uint32_t conv2_kernels = 16;
  std::uint32_t kernel_size = 3;
  std::uint32_t dense1_units = 64;
  std::uint32_t embed_dim = 32;

  std::uint32_t pooled_size() const { return image_size / 4; }
  std::uint32_t flat_dim() const { return conv2_kernels * pooled_size() * pooled_size(); }
};

struct LayerParams {
  std::string name;
  Tensor weights;
  Tensor bias;
  Tensor weight_velocity;
  Tensor bias_velocity;
  bool frozen = false;
};

struct EncoderParams {
  Architecture arch;
  LayerParams conv1, conv2, dense1, dense2;

  std::array<LayerParams*, 4> layers() { return {&conv1, &conv2, &dense1, &dense2}; }
  std::array<const LayerParams*, 4> layers() const {
    return {&conv1, &conv2, &dense1, &dense2};
  }
};

// Gradient accumulator mirroring EncoderParams shapes.
struct LayerGradients {
  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
  Tensor dense1_w, dense1_b;
  Tensor dense2_w, dense2_b;

  explicit LayerGradients(const EncoderParams& params);
  void zero();
  void scale(double factor);
  void add(const LayerGradients& other);
};

enum class LossMode { single, double_margin };
enum class FreezeMode { fc_only, fc_plus_lastconv, all };

struct Hyperparams {
  LossMode loss_mode = LossMode::double_margin;
  double margin = 0.4;         // m, single-margin mode
  double margin_positive = 0.2;  // m_P
  double margin_negative = 0.4;  // m_N
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t steps = 5000;
  double pos_fraction = 0.5;
  double hard_fraction = 0.5;
  FreezeMode freeze_mode = FreezeMode::all;
  std::uint64_t seed = 1;
};

void validate(const Hyperparams& hyper);

// Halves the base rate at each quarter of the schedule.
double scheduled_learning_rate(const Hyperparams& hyper, std::size_t step);

// Gaussian init with std sqrt(2 / fan_in), zero biases, zero velocities.
EncoderParams init_params(const Architecture& arch, std::uint64_t seed);

void apply_freeze_mode(EncoderParams& params, FreezeMode mode);

// --- forward / backward -----------------------------------------------------

// Activations cached by a traced forward pass, consumed by encode_backward.
struct EncodeTrace {
  Tensor input;
  Tensor conv1_pre;
  Tensor pool1_out;
  std::vector<std::size_t> pool1_argmax;
  std::vector<std::size_t> relu1_shape;
  Tensor conv2_pre;
  Tensor pool2_out;
  std::vector<std::size_t> pool2_argmax;
  std::vector<std::size_t> relu2_shape;
  Tensor flat;
  Tensor dense1_pre;
  Tensor feature;
};

// Deterministic forward pass; `image` must already be mean-subtracted.
Tensor encode(const Tensor& image, const EncoderParams& params);
EncodeTrace encode_traced(const Tensor& image, const EncoderParams& params);

// Backpropagates dfeature through one branch, accumulating parameter
// gradients into grads. Returns nothing; input gradients are not needed.
void encode_backward(const EncodeTrace& trace, const EncoderParams& params,
                     const Tensor& dfeature, LayerGradients& grads);

// Unit-length direction of the feature difference: (a - b) / ||a - b||.
Tensor embed_pair(const Tensor& feature_a, const Tensor& feature_b,
                  NormMode mode = NormMode::clamp);

// --- contrastive losses ------------------------------------------------------

// y * d + (1-y) * max(m - d, 0) with d = ||x12 - x34||.
double loss_single_margin(const Tensor& x12, const Tensor& x34, int y, double m);

// y * max(d - m_P, 0) + (1-y) * max(m_N - d, 0); requires 0 <= m_P <= m_N.
double loss_double_margin(const Tensor& x12, const Tensor& x34, int y, double m_pos,
                          double m_neg);

struct LossGrads {
  double value;
  Tensor dx12;
  Tensor dx34;
};

// Loss value plus gradients w.r.t. both pair embeddings, in the mode chosen
// by hyper. Subgradient 0 at every max kink and at zero distance.
LossGrads contrastive_loss(const Tensor& x12, const Tensor& x34, int y,
                           const Hyperparams& hyper);

// --- training ----------------------------------------------------------------

// Preprocessed-image cache: train-pool channel means applied to the whole
// corpus so branches can fetch encoder inputs by reference.
struct PreprocessedCorpus {
  std::array<double, 3> means;
  std::vector<Tensor> images;

  PreprocessedCorpus(const Corpus& corpus, const std::vector<ImageRef>& mean_pool);
  const Tensor& operator[](ImageRef r) const { return images[r]; }
};

// SGD with momentum over every unfrozen layer:
//   velocity <- momentum * velocity - lr * grad;  param <- param + velocity.
// Frozen layers are left bit-identical, velocities included.
void sgd_update(EncoderParams& params, const LayerGradients& grads, double learning_rate,
                double momentum);

struct TrainStepResult {
  double mean_loss;
  double positive_distance_mean;  // over y=1 quadruples in the batch
  double negative_distance_mean;  // over y=0 quadruples in the batch
};

// One shared-parameter four-branch step: forwards every quadruple, sums the
// branch gradients of the mean batch loss, applies one SGD update.
TrainStepResult train_step(const std::vector<Quadruple>& batch,
                           const PreprocessedCorpus& inputs, EncoderParams& params,
                           const Hyperparams& hyper, double learning_rate);

// Gradient of the mean batch loss without applying an update; used by the
// gradient-certification oracle and by train_step.
double batch_loss_and_gradients(const std::vector<Quadruple>& batch,
                                const PreprocessedCorpus& inputs,
                                const EncoderParams& params, const Hyperparams& hyper,
                                LayerGradients& grads, TrainStepResult* stats = nullptr);

struct TrainLogRow {
  std::size_t step;
  double loss;
  double pos_dist_mean;
  double neg_dist_mean;
};

struct TrainResult {
  EncoderParams params;
  std::vector<TrainLogRow> log;
};

using ProgressSink = std::function<void(const TrainLogRow&)>;

// Full training run: hyper.steps batches from a QuadrupleSampler seeded by
// hyper.seed. Deterministic given (corpus, splits, hyper). `initial`, when
// given, seeds the encoder (classifier-pretrained fine-tuning); otherwise
// the encoder starts from init_params.
TrainResult train(const Corpus& corpus, const SplitResult& splits, const Hyperparams& hyper,
                  const ProgressSink& progress = {},
                  const EncoderParams* initial = nullptr);

// --- classifier-pretraining baseline -----------------------------------------

struct ClassifierHyperparams {
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t steps = 1500;
  std::uint64_t seed = 1;
};

struct ClassifierLogRow {
  std::size_t step;
  double cross_entropy;
};

struct ClassifierResult {
  EncoderParams params;  // encoder body; checkpoints never include the head
  LayerParams head;      // kept in memory so tests can probe accuracy
  std::vector<ClassifierLogRow> log;
};

// Trains the same encoder body plus a temporary softmax head to classify
// property ids over the train pool. The head starts at zero, so the first
// logged cross-entropy is exactly ln(num_properties).
ClassifierResult pretrain_classifier(const Corpus& corpus, const SplitResult& splits,
                                     const ClassifierHyperparams& hyper);

// Property-classification top-1 accuracy of an encoder + fresh linear probe;
// used by tests. Evaluates `head` logits produced by the given parameters.
double classifier_accuracy(const EncoderParams& params, const LayerParams& head,
                           const Corpus& corpus, const PreprocessedCorpus& inputs,
                           const std::vector<ImageRef>& pool);

// --- VSLG checkpoint format ---------------------------------------------------

void save_checkpoint(const EncoderParams& params, const std::string& path);

// Reads a checkpoint and validates every layer against `arch`, naming the
// offending layer on mismatch.
EncoderParams load_checkpoint(const std::string& path, const Architecture& arch);

// Training log CSV: step,loss,pos_dist_mean,neg_dist_mean.
std::string train_log_to_csv(const std::vector<TrainLogRow>& log);

}  // namespace vsl
