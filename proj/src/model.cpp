#include "vsl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "vsl/binio.hpp"
#include "vsl/rng.hpp"

namespace vsl {

namespace {

constexpr char kCheckpointMagic[4] = {'V', 'S', 'L', 'G'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Sub-stream tags for deriving independent RNG streams from one run seed.
constexpr std::uint64_t kInitStream = 0x11;
constexpr std::uint64_t kSamplerStream = 0x22;
constexpr std::uint64_t kClassifierStream = 0x33;

Tensor gaussian_tensor(std::vector<std::size_t> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

Architecture arch_for_corpus(const CorpusSpec& spec) {
  Architecture arch;
  arch.channels = spec.channels;
  arch.image_size = spec.image_size;
  return arch;
}

}  // namespace

LayerGradients::LayerGradients(const EncoderParams& params)
    : conv1_w(params.conv1.weights.shape()),
      conv1_b(params.conv1.bias.shape()),
      conv2_w(params.conv2.weights.shape()),
      conv2_b(params.conv2.bias.shape()),
      dense1_w(params.dense1.weights.shape()),
      dense1_b(params.dense1.bias.shape()),
      dense2_w(params.dense2.weights.shape()),
      dense2_b(params.dense2.bias.shape()) {}

void LayerGradients::zero() {
  for (Tensor* t : {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense1_w, &dense1_b, &dense2_w,
                    &dense2_b}) {
    t->fill(0.0);
  }
}

void LayerGradients::scale(double factor) {
  for (Tensor* t : {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense1_w, &dense1_b, &dense2_w,
                    &dense2_b}) {
    *t *= factor;
  }
}

void LayerGradients::add(const LayerGradients& other) {
  conv1_w += other.conv1_w;
  conv1_b += other.conv1_b;
  conv2_w += other.conv2_w;
  conv2_b += other.conv2_b;
  dense1_w += other.dense1_w;
  dense1_b += other.dense1_b;
  dense2_w += other.dense2_w;
  dense2_b += other.dense2_b;
}

void validate(const Hyperparams& hyper) {
  if (hyper.loss_mode == LossMode::single && hyper.margin <= 0) {
    throw ValidationError("hyper: single-margin m must be > 0");
  }
  if (hyper.margin_positive < 0 || hyper.margin_positive > hyper.margin_negative) {
    throw ValidationError("hyper: margins must satisfy 0 <= m_P <= m_N");
  }
  if (hyper.learning_rate <= 0) throw ValidationError("hyper: learning rate must be > 0");
  if (hyper.momentum < 0 || hyper.momentum >= 1) {
    throw ValidationError("hyper: momentum must be in [0, 1)");
  }
  if (hyper.batch_size < 1) throw ValidationError("hyper: batch size must be >= 1");
  if (hyper.pos_fraction < 0 || hyper.pos_fraction > 1 || hyper.hard_fraction < 0 ||
      hyper.hard_fraction > 1) {
    throw ValidationError("hyper: fractions must be in [0,1]");
  }
}

double scheduled_learning_rate(const Hyperparams& hyper, std::size_t step) {
  if (hyper.steps == 0) return hyper.learning_rate;
  const std::size_t quarter = step * 4 / hyper.steps;
  return hyper.learning_rate * std::pow(0.5, static_cast<double>(std::min<std::size_t>(quarter, 3)));
}

EncoderParams init_params(const Architecture& arch, std::uint64_t seed) {
  if (arch.image_size % 4 != 0) {
    throw ValidationError("architecture: image size must be divisible by 4");
  }
  Rng rng(mix_seed(seed, kInitStream));
  const std::size_t r = arch.kernel_size;
  EncoderParams p;
  p.arch = arch;

  const double conv1_std = std::sqrt(2.0 / (arch.channels * r * r));
  p.conv1.name = "conv1";
  p.conv1.weights = gaussian_tensor({arch.conv1_kernels, arch.channels, r, r}, conv1_std, rng);
  p.conv1.bias = Tensor({arch.conv1_kernels});

  const double conv2_std = std::sqrt(2.0 / (arch.conv1_kernels * r * r));
  p.conv2.name = "conv2";
  p.conv2.weights =
      gaussian_tensor({arch.conv2_kernels, arch.conv1_kernels, r, r}, conv2_std, rng);
  p.conv2.bias = Tensor({arch.conv2_kernels});

  const double dense1_std = std::sqrt(2.0 / arch.flat_dim());
  p.dense1.name = "dense1";
  p.dense1.weights = gaussian_tensor({arch.dense1_units, arch.flat_dim()}, dense1_std, rng);
  p.dense1.bias = Tensor({arch.dense1_units});

  const double dense2_std = std::sqrt(2.0 / arch.dense1_units);
  p.dense2.name = "dense2";
  p.dense2.weights = gaussian_tensor({arch.embed_dim, arch.dense1_units}, dense2_std, rng);
  p.dense2.bias = Tensor({arch.embed_dim});

  for (LayerParams* layer : p.layers()) {
    layer->weight_velocity = Tensor(layer->weights.shape());
    layer->bias_velocity = Tensor(layer->bias.shape());
    layer->frozen = false;
  }
  return p;
}

void apply_freeze_mode(EncoderParams& params, FreezeMode mode) {
  params.conv1.frozen = mode != FreezeMode::all;
  params.conv2.frozen = mode == FreezeMode::fc_only;
  params.dense1.frozen = false;
  params.dense2.frozen = false;
}

Tensor encode(const Tensor& image, const EncoderParams& params) {
  const Tensor c1 = conv2d(image, params.conv1.weights, params.conv1.bias);
  const MaxPoolResult p1 = maxpool2d(relu(c1));
  const Tensor c2 = conv2d(p1.out, params.conv2.weights, params.conv2.bias);
  const MaxPoolResult p2 = maxpool2d(relu(c2));
  Tensor flat({p2.out.size()}, p2.out.values());
  const Tensor d1 = dense(flat, params.dense1.weights, params.dense1.bias);
  return dense(relu(d1), params.dense2.weights, params.dense2.bias);
}

EncodeTrace encode_traced(const Tensor& image, const EncoderParams& params) {
  EncodeTrace t;
  t.input = image;
  t.conv1_pre = conv2d(image, params.conv1.weights, params.conv1.bias);
  Tensor relu1 = relu(t.conv1_pre);
  t.relu1_shape = relu1.shape();
  MaxPoolResult p1 = maxpool2d(relu1);
  t.pool1_out = std::move(p1.out);
  t.pool1_argmax = std::move(p1.argmax);
  t.conv2_pre = conv2d(t.pool1_out, params.conv2.weights, params.conv2.bias);
  Tensor relu2 = relu(t.conv2_pre);
  t.relu2_shape = relu2.shape();
  MaxPoolResult p2 = maxpool2d(relu2);
  t.pool2_argmax = std::move(p2.argmax);
  t.pool2_out = std::move(p2.out);
  t.flat = Tensor({t.pool2_out.size()}, t.pool2_out.values());
  t.dense1_pre = dense(t.flat, params.dense1.weights, params.dense1.bias);
  t.feature = dense(relu(t.dense1_pre), params.dense2.weights, params.dense2.bias);
  return t;
}

void encode_backward(const EncodeTrace& trace, const EncoderParams& params,
                     const Tensor& dfeature, LayerGradients& grads) {
  const Tensor relu_d1 = relu(trace.dense1_pre);
  DenseGrads g2 = dense_backward(relu_d1, params.dense2.weights, dfeature);
  grads.dense2_w += g2.dweights;
  grads.dense2_b += g2.dbias;

  const Tensor d_relu_d1 = relu_backward(trace.dense1_pre, g2.dx);
  DenseGrads g1 = dense_backward(trace.flat, params.dense1.weights, d_relu_d1);
  grads.dense1_w += g1.dweights;
  grads.dense1_b += g1.dbias;

  // Both conv layers frozen: their gradients are never used, stop here.
  if (params.conv1.frozen && params.conv2.frozen) return;

  Tensor d_pool2(trace.pool2_out.shape(), g1.dx.values());
  const Tensor d_relu2 = maxpool2d_backward(trace.relu2_shape, trace.pool2_argmax, d_pool2);
  const Tensor d_conv2 = relu_backward(trace.conv2_pre, d_relu2);
  Conv2dGrads c2 = conv2d_backward(trace.pool1_out, params.conv2.weights, d_conv2);
  grads.conv2_w += c2.dkernels;
  grads.conv2_b += c2.dbias;

  if (params.conv1.frozen) return;

  const Tensor d_relu1 = maxpool2d_backward(trace.relu1_shape, trace.pool1_argmax, c2.dx);
  const Tensor d_conv1 = relu_backward(trace.conv1_pre, d_relu1);
  Conv2dGrads c1 = conv2d_backward(trace.input, params.conv1.weights, d_conv1);
  grads.conv1_w += c1.dkernels;
  grads.conv1_b += c1.dbias;
}

Tensor embed_pair(const Tensor& feature_a, const Tensor& feature_b, NormMode mode) {
  require_same_shape(feature_a, feature_b, "embed_pair");
  Tensor diff(feature_a.shape());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = feature_a[i] - feature_b[i];
  return l2_normalize(diff, mode);
}

namespace {

double pair_distance(const Tensor& x12, const Tensor& x34) {
  double sum = 0.0;
  for (std::size_t i = 0; i < x12.size(); ++i) {
    const double d = x12[i] - x34[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace

double loss_single_margin(const Tensor& x12, const Tensor& x34, int y, double m) {
  if (m <= 0) throw ValidationError("loss_single_margin: m must be > 0");
  require_same_shape(x12, x34, "loss_single_margin");
  const double d = pair_distance(x12, x34);
  return y ? d : std::max(m - d, 0.0);
}

double loss_double_margin(const Tensor& x12, const Tensor& x34, int y, double m_pos,
                          double m_neg) {
  if (m_pos < 0 || m_pos > m_neg) {
    throw ValidationError("loss_double_margin: margins must satisfy 0 <= m_P <= m_N");
  }
  require_same_shape(x12, x34, "loss_double_margin");
  const double d = pair_distance(x12, x34);
  return y ? std::max(d - m_pos, 0.0) : std::max(m_neg - d, 0.0);
}

LossGrads contrastive_loss(const Tensor& x12, const Tensor& x34, int y,
                           const Hyperparams& hyper) {
  require_same_shape(x12, x34, "contrastive_loss");
  const double d = pair_distance(x12, x34);

  double value = 0.0;
  double coeff = 0.0;  // gradient of the loss w.r.t. d
  if (hyper.loss_mode == LossMode::single) {
    if (hyper.margin <= 0) throw ValidationError("contrastive_loss: m must be > 0");
    if (y) {
      value = d;
      coeff = d > 0 ? 1.0 : 0.0;
    } else {
      value = std::max(hyper.margin - d, 0.0);
      coeff = (hyper.margin - d > 0 && d > 0) ? -1.0 : 0.0;
    }
  } else {
    if (hyper.margin_positive < 0 || hyper.margin_positive > hyper.margin_negative) {
      throw ValidationError("contrastive_loss: margins must satisfy 0 <= m_P <= m_N");
    }
    if (y) {
      value = std::max(d - hyper.margin_positive, 0.0);
      coeff = (d - hyper.margin_positive > 0) ? 1.0 : 0.0;
    } else {
      value = std::max(hyper.margin_negative - d, 0.0);
      coeff = (hyper.margin_negative - d > 0 && d > 0) ? -1.0 : 0.0;
    }
  }

  LossGrads out{value, Tensor(x12.shape()), Tensor(x34.shape())};
  if (coeff != 0.0 && d > 0) {
    const double scale = coeff / d;
    for (std::size_t i = 0; i < x12.size(); ++i) {
      const double diff = x12[i] - x34[i];
      out.dx12[i] = scale * diff;
      out.dx34[i] = -scale * diff;
    }
  }
  return out;
}

PreprocessedCorpus::PreprocessedCorpus(const Corpus& corpus,
                                       const std::vector<ImageRef>& mean_pool)
    : means(channel_means(corpus, mean_pool)) {
  images.reserve(corpus.size());
  for (ImageRef r = 0; r < corpus.size(); ++r) {
    images.push_back(preprocess(corpus.image(r), means));
  }
}

void sgd_update(EncoderParams& params, const LayerGradients& grads, double learning_rate,
                double momentum) {
  const std::array<const Tensor*, 8> gs = {&grads.conv1_w,  &grads.conv1_b, &grads.conv2_w,
                                           &grads.conv2_b,  &grads.dense1_w, &grads.dense1_b,
                                           &grads.dense2_w, &grads.dense2_b};
  std::size_t gi = 0;
  for (LayerParams* layer : params.layers()) {
    const Tensor& gw = *gs[gi++];
    const Tensor& gb = *gs[gi++];
    if (layer->frozen) continue;
    require_same_shape(layer->weights, gw, "sgd_update weights");
    require_same_shape(layer->bias, gb, "sgd_update bias");
    for (std::size_t i = 0; i < layer->weights.size(); ++i) {
      layer->weight_velocity[i] =
          momentum * layer->weight_velocity[i] - learning_rate * gw[i];
      layer->weights[i] += layer->weight_velocity[i];
    }
    for (std::size_t i = 0; i < layer->bias.size(); ++i) {
      layer->bias_velocity[i] = momentum * layer->bias_velocity[i] - learning_rate * gb[i];
      layer->bias[i] += layer->bias_velocity[i];
    }
  }
}

double batch_loss_and_gradients(const std::vector<Quadruple>& batch,
                                const PreprocessedCorpus& inputs,
                                const EncoderParams& params, const Hyperparams& hyper,
                                LayerGradients& grads, TrainStepResult* stats) {
  if (batch.empty()) throw ValidationError("train_step: batch must be nonempty");
  grads.zero();
  double loss_sum = 0.0;
  double pos_dist_sum = 0.0, neg_dist_sum = 0.0;
  std::size_t pos_count = 0, neg_count = 0;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (const Quadruple& q : batch) {
    const EncodeTrace t1 = encode_traced(inputs[q.i1], params);
    const EncodeTrace t2 = encode_traced(inputs[q.i2], params);
    const EncodeTrace t3 = encode_traced(inputs[q.i3], params);
    const EncodeTrace t4 = encode_traced(inputs[q.i4], params);

    Tensor v12(t1.feature.shape());
    Tensor v34(t3.feature.shape());
    for (std::size_t i = 0; i < v12.size(); ++i) {
      v12[i] = t1.feature[i] - t2.feature[i];
      v34[i] = t3.feature[i] - t4.feature[i];
    }
    const Tensor x12 = l2_normalize(v12, NormMode::clamp);
    const Tensor x34 = l2_normalize(v34, NormMode::clamp);

    const LossGrads lg = contrastive_loss(x12, x34, q.label, hyper);
    if (!std::isfinite(lg.value)) {
      throw NumericalError("train_step: non-finite loss on quadruple (" +
                           std::to_string(q.i1) + "," + std::to_string(q.i2) + "," +
                           std::to_string(q.i3) + "," + std::to_string(q.i4) + ")");
    }
    loss_sum += lg.value;
    const double d = pair_distance(x12, x34);
    if (q.label) {
      pos_dist_sum += d;
      ++pos_count;
    } else {
      neg_dist_sum += d;
      ++neg_count;
    }

    // d(mean loss)/dx -> through the pair normalization -> four branches.
    Tensor dx12 = lg.dx12;
    Tensor dx34 = lg.dx34;
    dx12 *= inv_batch;
    dx34 *= inv_batch;
    const Tensor dv12 = l2_normalize_backward(v12, dx12, NormMode::clamp);
    const Tensor dv34 = l2_normalize_backward(v34, dx34, NormMode::clamp);
    Tensor neg_dv12 = dv12;
    neg_dv12 *= -1.0;
    Tensor neg_dv34 = dv34;
    neg_dv34 *= -1.0;
    encode_backward(t1, params, dv12, grads);
    encode_backward(t2, params, neg_dv12, grads);
    encode_backward(t3, params, dv34, grads);
    encode_backward(t4, params, neg_dv34, grads);
  }

  if (!testhook::corrupt_backward_layer.empty()) {
    Tensor* target = nullptr;
    if (testhook::corrupt_backward_layer == "conv1") target = &grads.conv1_w;
    if (testhook::corrupt_backward_layer == "conv2") target = &grads.conv2_w;
    if (testhook::corrupt_backward_layer == "dense1") target = &grads.dense1_w;
    if (testhook::corrupt_backward_layer == "dense2") target = &grads.dense2_w;
    if (target) {
      *target *= 1.5;
      for (double& v : target->values()) v += 0.01;
    }
  }

  if (stats) {
    stats->mean_loss = loss_sum * inv_batch;
    stats->positive_distance_mean = pos_count ? pos_dist_sum / pos_count : 0.0;
    stats->negative_distance_mean = neg_count ? neg_dist_sum / neg_count : 0.0;
  }
  return loss_sum * inv_batch;
}

TrainStepResult train_step(const std::vector<Quadruple>& batch,
                           const PreprocessedCorpus& inputs, EncoderParams& params,
                           const Hyperparams& hyper, double learning_rate) {
  TrainStepResult stats{};
  LayerGradients grads(params);
  batch_loss_and_gradients(batch, inputs, params, hyper, grads, &stats);
  sgd_update(params, grads, learning_rate, hyper.momentum);
  return stats;
}

TrainResult train(const Corpus& corpus, const SplitResult& splits, const Hyperparams& hyper,
                  const ProgressSink& progress, const EncoderParams* initial) {
  validate(hyper);
  TrainResult result;
  if (initial) {
    result.params = *initial;
  } else {
    result.params = init_params(arch_for_corpus(corpus.spec()), hyper.seed);
  }
  apply_freeze_mode(result.params, hyper.freeze_mode);

  const PreprocessedCorpus inputs(corpus, splits.train_pool);
  QuadrupleSampler sampler(corpus, splits, mix_seed(hyper.seed, kSamplerStream));
  result.log.reserve(hyper.steps);
  for (std::size_t step = 0; step < hyper.steps; ++step) {
    const std::vector<Quadruple> batch =
        sampler.sample_batch(hyper.batch_size, hyper.pos_fraction, hyper.hard_fraction);
    const double lr = scheduled_learning_rate(hyper, step);
    const TrainStepResult stats = train_step(batch, inputs, result.params, hyper, lr);
    const TrainLogRow row{step, stats.mean_loss, stats.positive_distance_mean,
                          stats.negative_distance_mean};
    result.log.push_back(row);
    if (progress) progress(row);
  }
  return result;
}

ClassifierResult pretrain_classifier(const Corpus& corpus, const SplitResult& splits,
                                     const ClassifierHyperparams& hyper) {
  if (splits.train_pool.empty()) {
    throw ValidationError("pretrain_classifier: empty train pool");
  }
  const std::uint32_t n_props = corpus.spec().num_properties;
  ClassifierResult result;
  result.params = init_params(arch_for_corpus(corpus.spec()), hyper.seed);
  apply_freeze_mode(result.params, FreezeMode::all);

  // Temporary softmax head; zero init gives uniform logits on the first
  // batch, so the first logged cross-entropy is ln(num_properties).
  result.head.name = "property_head";
  result.head.weights = Tensor({n_props, result.params.arch.embed_dim});
  result.head.bias = Tensor({n_props});
  result.head.weight_velocity = Tensor(result.head.weights.shape());
  result.head.bias_velocity = Tensor(result.head.bias.shape());

  const PreprocessedCorpus inputs(corpus, splits.train_pool);
  Rng rng(mix_seed(hyper.seed, kClassifierStream));
  LayerGradients grads(result.params);
  result.log.reserve(hyper.steps);

  for (std::size_t step = 0; step < hyper.steps; ++step) {
    grads.zero();
    Tensor head_wgrad(result.head.weights.shape());
    Tensor head_bgrad(result.head.bias.shape());
    double ce_sum = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(hyper.batch_size);

    for (std::size_t b = 0; b < hyper.batch_size; ++b) {
      const ImageRef r = splits.train_pool[rng.uniform_index(splits.train_pool.size())];
      const std::uint32_t target = corpus.image(r).property_id;
      const EncodeTrace trace = encode_traced(inputs[r], result.params);
      const Tensor logits = dense(trace.feature, result.head.weights, result.head.bias);

      // softmax cross-entropy, numerically stabilized
      double max_logit = logits[0];
      for (std::size_t i = 1; i < logits.size(); ++i) max_logit = std::max(max_logit, logits[i]);
      double z = 0.0;
      for (std::size_t i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - max_logit);
      const double log_z = std::log(z) + max_logit;
      ce_sum += log_z - logits[target];

      Tensor dlogits({logits.size()});
      for (std::size_t i = 0; i < logits.size(); ++i) {
        dlogits[i] = (std::exp(logits[i] - log_z) - (i == target ? 1.0 : 0.0)) * inv_batch;
      }
      DenseGrads hg = dense_backward(trace.feature, result.head.weights, dlogits);
      head_wgrad += hg.dweights;
      head_bgrad += hg.dbias;
      encode_backward(trace, result.params, hg.dx, grads);
    }

    const double ce = ce_sum * inv_batch;
    if (!std::isfinite(ce)) throw NumericalError("pretrain_classifier: non-finite loss");
    result.log.push_back({step, ce});

    const double lr = hyper.learning_rate *
                      std::pow(0.5, static_cast<double>(std::min<std::size_t>(
                                        hyper.steps ? step * 4 / hyper.steps : 0, 3)));
    sgd_update(result.params, grads, lr, hyper.momentum);
    for (std::size_t i = 0; i < result.head.weights.size(); ++i) {
      result.head.weight_velocity[i] =
          hyper.momentum * result.head.weight_velocity[i] - lr * head_wgrad[i];
      result.head.weights[i] += result.head.weight_velocity[i];
    }
    for (std::size_t i = 0; i < result.head.bias.size(); ++i) {
      result.head.bias_velocity[i] =
          hyper.momentum * result.head.bias_velocity[i] - lr * head_bgrad[i];
      result.head.bias[i] += result.head.bias_velocity[i];
    }
  }
  return result;
}

double classifier_accuracy(const EncoderParams& params, const LayerParams& head,
                           const Corpus& corpus, const PreprocessedCorpus& inputs,
                           const std::vector<ImageRef>& pool) {
  if (pool.empty()) throw ValidationError("classifier_accuracy: empty pool");
  std::size_t correct = 0;
  for (ImageRef r : pool) {
    const Tensor feature = encode(inputs[r], params);
    const Tensor logits = dense(feature, head.weights, head.bias);
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    if (best == corpus.image(r).property_id) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pool.size());
}

void save_checkpoint(const EncoderParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  const auto layers = params.layers();
  write_u32(out, static_cast<std::uint32_t>(layers.size()));
  for (const LayerParams* layer : layers) {
    write_u32(out, static_cast<std::uint32_t>(layer->name.size()));
    out.write(layer->name.data(), static_cast<std::streamsize>(layer->name.size()));
    write_u32(out, static_cast<std::uint32_t>(layer->weights.rank()));
    for (std::size_t d : layer->weights.shape()) write_u32(out, static_cast<std::uint32_t>(d));
    for (double v : layer->weights.values()) write_f64(out, v);
    for (double v : layer->bias.values()) write_f64(out, v);
  }
  if (!out) throw IoError("write failed: " + path);
}

EncoderParams load_checkpoint(const std::string& path, const Architecture& arch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint file: " + path);
  char magic[4];
  read_exact(in, magic, 4, "checkpoint magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path);
  }
  const std::uint32_t version = read_u32(in, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t layer_count = read_u32(in, "layer count");
  if (layer_count != 4) {
    throw FormatError("checkpoint must hold 4 layers, found " + std::to_string(layer_count));
  }

  EncoderParams params = init_params(arch, 0);
  const std::size_t r = arch.kernel_size;
  const std::vector<std::vector<std::size_t>> expected = {
      {arch.conv1_kernels, arch.channels, r, r},
      {arch.conv2_kernels, arch.conv1_kernels, r, r},
      {arch.dense1_units, arch.flat_dim()},
      {arch.embed_dim, arch.dense1_units}};

  std::size_t li = 0;
  for (LayerParams* layer : params.layers()) {
    const std::uint32_t name_len = read_u32(in, "layer name length");
    if (name_len > 4096) throw FormatError("unreasonable layer name length");
    std::string name(name_len, '\0');
    read_exact(in, name.data(), name_len, "layer name");
    if (name != layer->name) {
      throw FormatError("unexpected layer '" + name + "' (expected '" + layer->name + "')");
    }
    const std::uint32_t rank = read_u32(in, "layer rank");
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = read_u32(in, "layer dim");
    if (dims != expected[li]) {
      throw ShapeError("checkpoint layer '" + name + "' has mismatched dimensions");
    }
    for (double& v : layer->weights.values()) v = read_f64(in, "layer weights");
    for (double& v : layer->bias.values()) v = read_f64(in, "layer bias");
    layer->weight_velocity.fill(0.0);
    layer->bias_velocity.fill(0.0);
    layer->frozen = false;
    ++li;
  }
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) throw FormatError("trailing bytes after checkpoint payload: " + path);
  return params;
}

std::string train_log_to_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "step,loss,pos_dist_mean,neg_dist_mean\n";
  char buf[160];
  for (const TrainLogRow& row : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", row.step, row.loss,
                  row.pos_dist_mean, row.neg_dist_mean);
    out += buf;
  }
  return out;
}

}  // namespace vsl
