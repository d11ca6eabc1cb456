#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "vsl/grad_check.hpp"
#include "vsl/model.hpp"
#include "vsl/rng.hpp"

using namespace vsl;

namespace {

CorpusSpec tiny_spec() {
  CorpusSpec spec;
  spec.num_categories = 4;
  spec.num_properties = 4;
  spec.exemplars_per_cell = 2;
  spec.image_size = 12;
  spec.seed = 5;
  return spec;
}

Architecture tiny_arch() {
  Architecture arch;
  arch.channels = 3;
  arch.image_size = 12;
  arch.conv1_kernels = 4;
  arch.conv2_kernels = 6;
  arch.dense1_units = 12;
  arch.embed_dim = 8;
  return arch;
}

// Zero weights everywhere plus a fixed dense2 bias: every image maps to the
// same feature vector.
EncoderParams constant_encoder(const Architecture& arch) {
  EncoderParams params = init_params(arch, 1);
  for (LayerParams* layer : params.layers()) {
    layer->weights.fill(0.0);
    layer->bias.fill(0.0);
  }
  params.dense2.bias[0] = 0.7;
  params.dense2.bias[1] = -0.3;
  return params;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("vsl_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_SUITE("model") {

TEST_CASE("encode produces the configured embedding dimension") {
  const Corpus corpus = generate_corpus(tiny_spec());
  const SplitResult splits = make_splits(corpus, SplitSpec{});
  const PreprocessedCorpus inputs(corpus, splits.train_pool);
  const EncoderParams params = init_params(tiny_arch(), 3);
  const Tensor feature = encode(inputs[0], params);
  CHECK(feature.shape() == std::vector<std::size_t>{8});

  Architecture default_arch;
  default_arch.image_size = 24;
  const EncoderParams default_params = init_params(default_arch, 3);
  CHECK(default_params.dense2.weights.dim(0) == 32);
}

TEST_CASE("zero weights map the zero image to the zero feature") {
  Architecture arch = tiny_arch();
  EncoderParams params = init_params(arch, 1);
  for (LayerParams* layer : params.layers()) {
    layer->weights.fill(0.0);
    layer->bias.fill(0.0);
  }
  const Tensor zero_image({3, 12, 12});
  const Tensor feature = encode(zero_image, params);
  for (std::size_t i = 0; i < feature.size(); ++i) CHECK(feature[i] == 0.0);
}

TEST_CASE("encode is deterministic and matches its traced variant") {
  const Corpus corpus = generate_corpus(tiny_spec());
  const SplitResult splits = make_splits(corpus, SplitSpec{});
  const PreprocessedCorpus inputs(corpus, splits.train_pool);
  const EncoderParams params = init_params(tiny_arch(), 9);
  const Tensor a = encode(inputs[5], params);
  const Tensor b = encode(inputs[5], params);
  CHECK(a == b);
  CHECK(a == encode_traced(inputs[5], params).feature);
}

TEST_CASE("embed_pair matches hand arithmetic and is antisymmetric") {
  const Tensor x12 = embed_pair(Tensor::of({2, 0}), Tensor::of({0, 0}));
  CHECK(x12[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(x12[1] == 0.0);

  const Tensor diag = embed_pair(Tensor::of({1, 1}), Tensor::of({0, 0}));
  CHECK(diag[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(diag[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));

  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    Tensor a({6}), b({6});
    for (std::size_t j = 0; j < 6; ++j) {
      a[j] = rng.normal();
      b[j] = rng.normal();
    }
    const Tensor ab = embed_pair(a, b, NormMode::strict);
    const Tensor ba = embed_pair(b, a, NormMode::strict);
    for (std::size_t j = 0; j < 6; ++j) REQUIRE(ab[j] == -ba[j]);
    REQUIRE(std::abs(ab.l2_norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("embed_pair is invariant to positive scaling of both features") {
  Rng rng(17);
  for (double scale : {0.5, 2.0, 731.0}) {
    Tensor a({5}), b({5});
    for (std::size_t j = 0; j < 5; ++j) {
      a[j] = rng.normal();
      b[j] = rng.normal();
    }
    Tensor sa = a, sb = b;
    sa *= scale;
    sb *= scale;
    const Tensor base = embed_pair(a, b, NormMode::strict);
    const Tensor scaled = embed_pair(sa, sb, NormMode::strict);
    for (std::size_t j = 0; j < 5; ++j) {
      REQUIRE(scaled[j] == doctest::Approx(base[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("embed_pair strict mode rejects identical features") {
  const Tensor a = Tensor::of({1, 2, 3});
  CHECK_THROWS_AS(embed_pair(a, a, NormMode::strict), DegeneratePair);
  // clamp mode returns a vector with norm <= 1 instead
  const Tensor clamped = embed_pair(a, a, NormMode::clamp);
  CHECK(clamped.l2_norm() == 0.0);
}

TEST_CASE("single-margin loss matches the hand-derived values") {
  const Tensor x12 = Tensor::of({1.0, 0.0});
  const Tensor x34 = Tensor::of({0.8, 0.6});
  // distance sqrt(0.4); margin 1.0
  CHECK(loss_single_margin(x12, x34, 0, 1.0) ==
        doctest::Approx(1.0 - std::sqrt(0.4)).epsilon(1e-12));
  CHECK(loss_single_margin(x12, x34, 0, 1.0) == doctest::Approx(0.36754).epsilon(1e-4));
  CHECK(loss_single_margin(x12, x12, 1, 1.0) == 0.0);
  // margin satisfied: zero loss
  CHECK(loss_single_margin(x12, x34, 0, 0.4) == 0.0);
  CHECK_THROWS_AS(loss_single_margin(x12, x34, 0, 0.0), ValidationError);
}

TEST_CASE("double-margin loss matches the hand-derived values") {
  const Tensor x12 = Tensor::of({1.0, 0.0});
  const Tensor x34 = Tensor::of({0.8, 0.6});
  CHECK(loss_double_margin(x12, x34, 1, 0.2, 0.4) ==
        doctest::Approx(std::sqrt(0.4) - 0.2).epsilon(1e-12));
  CHECK(loss_double_margin(x12, x34, 1, 0.2, 0.4) == doctest::Approx(0.43246).epsilon(1e-4));
  // positive within m_P
  CHECK(loss_double_margin(x12, x34, 1, 0.7, 0.8) == 0.0);
  // negative beyond m_N = 0.4 < sqrt(0.4)
  CHECK(loss_double_margin(x12, x34, 0, 0.2, 0.4) == 0.0);
  CHECK_THROWS_AS(loss_double_margin(x12, x34, 1, 0.5, 0.4), ValidationError);
  CHECK_THROWS_AS(loss_double_margin(x12, x34, 1, -0.1, 0.4), ValidationError);
}

TEST_CASE("double margin with m_P = 0 reduces to the single margin loss") {
  Rng rng(19);
  for (int i = 0; i < 10000; ++i) {
    Tensor a({4}), b({4});
    for (std::size_t j = 0; j < 4; ++j) {
      a[j] = rng.uniform(-1, 1);
      b[j] = rng.uniform(-1, 1);
    }
    const int y = rng.bernoulli(0.5) ? 1 : 0;
    const double m = rng.uniform(0.01, 2.0);
    REQUIRE(loss_double_margin(a, b, y, 0.0, m) == loss_single_margin(a, b, y, m));
  }
}

TEST_CASE("losses are nonnegative everywhere") {
  Rng rng(23);
  for (int i = 0; i < 5000; ++i) {
    Tensor a({3}), b({3});
    for (std::size_t j = 0; j < 3; ++j) {
      a[j] = rng.uniform(-2, 2);
      b[j] = rng.uniform(-2, 2);
    }
    const int y = rng.bernoulli(0.5) ? 1 : 0;
    REQUIRE(loss_single_margin(a, b, y, 0.7) >= 0.0);
    REQUIRE(loss_double_margin(a, b, y, 0.2, 0.4) >= 0.0);
  }
}

TEST_CASE("a constant encoder zeroes the single-margin loss on positives") {
  const Corpus corpus = generate_corpus(tiny_spec());
  const SplitResult splits = make_splits(corpus, SplitSpec{});
  const PreprocessedCorpus inputs(corpus, splits.train_pool);
  const EncoderParams params = constant_encoder(tiny_arch());
  QuadrupleSampler sampler(corpus, splits, 61);

  Hyperparams hyper;
  hyper.loss_mode = LossMode::single;
  hyper.margin = 0.4;
  double total = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Quadruple q = sampler.sample_positive();
    const Tensor x12 = embed_pair(encode(inputs[q.i1], params), encode(inputs[q.i2], params));
    const Tensor x34 = embed_pair(encode(inputs[q.i3], params), encode(inputs[q.i4], params));
    total += loss_single_margin(x12, x34, 1, hyper.margin);
  }
  CHECK(total == 0.0);  // collapse: positives alone cannot constrain the encoder
}

TEST_CASE("sgd_update follows the momentum recurrence") {
  Architecture arch = tiny_arch();
  EncoderParams params = init_params(arch, 2);
  params.dense2.weights.fill(0.0);
  LayerGradients grads(params);
  grads.zero();
  grads.dense2_w.fill(1.0);

  // momentum 0, lr 0.1, grad 1 on zero weights -> every weight at -0.1
  sgd_update(params, grads, 0.1, 0.0);
  for (double v : params.dense2.weights.values()) CHECK(v == doctest::Approx(-0.1));

  // zero grads with momentum: velocity decays, weights keep drifting
  grads.zero();
  sgd_update(params, grads, 0.1, 0.5);
  for (double v : params.dense2.weight_velocity.values()) {
    CHECK(v == doctest::Approx(-0.05));
  }
  for (double v : params.dense2.weights.values()) CHECK(v == doctest::Approx(-0.15));
}

TEST_CASE("frozen layers stay bit-identical under nonzero gradients") {
  EncoderParams params = init_params(tiny_arch(), 7);
  apply_freeze_mode(params, FreezeMode::fc_only);
  CHECK(params.conv1.frozen);
  CHECK(params.conv2.frozen);
  CHECK_FALSE(params.dense1.frozen);

  const Tensor conv1_before = params.conv1.weights;
  const Tensor conv2_before = params.conv2.weights;
  LayerGradients grads(params);
  grads.zero();
  grads.conv1_w.fill(3.0);
  grads.conv2_w.fill(-2.0);
  grads.dense1_w.fill(1.0);
  sgd_update(params, grads, 0.1, 0.9);
  CHECK(params.conv1.weights == conv1_before);
  CHECK(params.conv2.weights == conv2_before);
  CHECK_FALSE(params.dense1.weights == init_params(tiny_arch(), 7).dense1.weights);

  apply_freeze_mode(params, FreezeMode::fc_plus_lastconv);
  CHECK(params.conv1.frozen);
  CHECK_FALSE(params.conv2.frozen);
  apply_freeze_mode(params, FreezeMode::all);
  CHECK_FALSE(params.conv1.frozen);
}

TEST_CASE("train_step gradient matches finite differences on a small batch") {
  const Corpus corpus = generate_corpus(tiny_spec());
  const SplitResult splits = make_splits(corpus, SplitSpec{});
  const PreprocessedCorpus inputs(corpus, splits.train_pool);
  QuadrupleSampler sampler(corpus, splits, 67);
  const std::vector<Quadruple> batch{sampler.sample_positive(),
                                     sampler.sample_negative_hard()};

  for (LossMode mode : {LossMode::single, LossMode::double_margin}) {
    Hyperparams hyper;
    hyper.loss_mode = mode;
    EncoderParams params = init_params(tiny_arch(), 71);
    LayerGradients grads(params);
    batch_loss_and_gradients(batch, inputs, params, hyper, grads);

    const std::array<const Tensor*, 8> gs = {&grads.conv1_w,  &grads.conv1_b,
                                             &grads.conv2_w,  &grads.conv2_b,
                                             &grads.dense1_w, &grads.dense1_b,
                                             &grads.dense2_w, &grads.dense2_b};
    for (std::size_t li = 0; li < 4; ++li) {
      for (const bool check_weights : {true, false}) {
        const Tensor& analytic = *gs[li * 2 + (check_weights ? 0 : 1)];
        EncoderParams probe = params;
        const auto f = [&](const std::vector<double>& v) {
          LayerParams* probe_layer = probe.layers()[li];
          Tensor* slot = check_weights ? &probe_layer->weights : &probe_layer->bias;
          *slot = Tensor(slot->shape(), v);
          LayerGradients scratch(probe);
          return batch_loss_and_gradients(batch, inputs, probe, hyper, scratch);
        };
        const LayerParams* layer = params.layers()[li];
        const Tensor& point = check_weights ? layer->weights : layer->bias;
        const GradCheckReport report = grad_check(f, point.values(), analytic.values(), 1e-6);
        REQUIRE(report.max_rel_error < 1e-4);
      }
    }
  }
}

TEST_CASE("an all-positive batch inside the positive margin leaves params unchanged") {
  const Corpus corpus = generate_corpus(tiny_spec());
  const SplitResult splits = make_splits(corpus, SplitSpec{});
  const PreprocessedCorpus inputs(corpus, splits.train_pool);
  QuadrupleSampler sampler(corpus, splits, 73);

  // constant encoder: every pair embedding collapses to zero, so every
  // positive sits at distance 0 <= m_P
  EncoderParams params = constant_encoder(tiny_arch());
  const EncoderParams before = params;
  Hyperparams hyper;
  hyper.loss_mode = LossMode::double_margin;
  std::vector<Quadruple> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(sampler.sample_positive());
  const TrainStepResult stats = train_step(batch, inputs, params, hyper, 0.05);
  CHECK(stats.mean_loss == 0.0);
  for (int li = 0; li < 4; ++li) {
    CHECK(params.layers()[li]->weights == before.layers()[li]->weights);
    CHECK(params.layers()[li]->bias == before.layers()[li]->bias);
  }
}

TEST_CASE("training overfits a fixed batch of eight quadruples") {
  const Corpus corpus = generate_corpus(tiny_spec());
  const SplitResult splits = make_splits(corpus, SplitSpec{});
  const PreprocessedCorpus inputs(corpus, splits.train_pool);
  QuadrupleSampler sampler(corpus, splits, 79);
  std::vector<Quadruple> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(sampler.sample_positive());
  for (int i = 0; i < 2; ++i) batch.push_back(sampler.sample_negative_hard());
  for (int i = 0; i < 2; ++i) batch.push_back(sampler.sample_negative_random());

  Hyperparams hyper;
  hyper.loss_mode = LossMode::double_margin;
  EncoderParams params = init_params(tiny_arch(), 83);
  apply_freeze_mode(params, FreezeMode::all);
  double loss = 1e9;
  for (int step = 0; step < 500; ++step) {
    loss = train_step(batch, inputs, params, hyper, 0.05).mean_loss;
  }
  CHECK(loss < 0.05);
}

TEST_CASE("train is deterministic and logs one row per step") {
  const Corpus corpus = generate_corpus(tiny_spec());
  const SplitSpec split_spec = make_split_spec(tiny_spec(), 1, 2, 3);
  const SplitResult splits = make_splits(corpus, split_spec);
  Hyperparams hyper;
  hyper.steps = 12;
  hyper.batch_size = 4;
  hyper.seed = 91;

  const TrainResult a = train(corpus, splits, hyper);
  const TrainResult b = train(corpus, splits, hyper);
  CHECK(a.log.size() == 12);
  for (int li = 0; li < 4; ++li) {
    REQUIRE(a.params.layers()[li]->weights == b.params.layers()[li]->weights);
    REQUIRE(a.params.layers()[li]->bias == b.params.layers()[li]->bias);
  }
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].step == i);
    CHECK(a.log[i].loss == b.log[i].loss);
  }
}

TEST_CASE("contrastive training pulls positives together and pushes negatives apart") {
  const Corpus corpus = generate_corpus(tiny_spec());
  const SplitResult splits = make_splits(corpus, SplitSpec{});
  Hyperparams hyper;
  hyper.steps = 250;
  hyper.batch_size = 8;
  hyper.seed = 97;
  const TrainResult result = train(corpus, splits, hyper);

  auto window_mean = [&](std::size_t from, std::size_t to, bool positive) {
    double sum = 0.0;
    for (std::size_t i = from; i < to; ++i) {
      sum += positive ? result.log[i].pos_dist_mean : result.log[i].neg_dist_mean;
    }
    return sum / static_cast<double>(to - from);
  };
  // averaged over windows to smooth batch noise
  CHECK(window_mean(240, 250, true) < window_mean(0, 10, true));
  // negatives end up separated: past the positive margin and well above the
  // positive distances
  CHECK(window_mean(240, 250, false) > hyper.margin_positive);
  CHECK(window_mean(240, 250, false) > 2.0 * window_mean(240, 250, true));
  CHECK(result.log.back().loss < result.log.front().loss);
}

TEST_CASE("scheduled learning rate halves each quarter") {
  Hyperparams hyper;
  hyper.learning_rate = 0.08;
  hyper.steps = 100;
  CHECK(scheduled_learning_rate(hyper, 0) == 0.08);
  CHECK(scheduled_learning_rate(hyper, 24) == 0.08);
  CHECK(scheduled_learning_rate(hyper, 25) == doctest::Approx(0.04));
  CHECK(scheduled_learning_rate(hyper, 50) == doctest::Approx(0.02));
  CHECK(scheduled_learning_rate(hyper, 99) == doctest::Approx(0.01));
}

TEST_CASE("hyperparameter validation enforces the margin ordering") {
  Hyperparams hyper;
  hyper.margin_positive = 0.5;
  hyper.margin_negative = 0.4;
  CHECK_THROWS_AS(validate(hyper), ValidationError);
  hyper = Hyperparams{};
  hyper.loss_mode = LossMode::single;
  hyper.margin = 0.0;
  CHECK_THROWS_AS(validate(hyper), ValidationError);
}

TEST_CASE("classifier pretraining starts at ln(P) and beats chance on unseen categories") {
  const Corpus corpus = generate_corpus(tiny_spec());
  const SplitSpec split_spec = make_split_spec(tiny_spec(), 1, 0, 13);
  const SplitResult splits = make_splits(corpus, split_spec);

  ClassifierHyperparams hyper;
  hyper.steps = 160;
  hyper.batch_size = 16;
  hyper.seed = 101;
  const ClassifierResult result = pretrain_classifier(corpus, splits, hyper);

  // zero-initialized head -> uniform logits -> exact ln(num_properties)
  CHECK(result.log.front().cross_entropy ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(result.log.size() == 160);
  CHECK(result.log.back().cross_entropy < result.log.front().cross_entropy);

  const PreprocessedCorpus inputs(corpus, splits.train_pool);
  const double accuracy =
      classifier_accuracy(result.params, result.head, corpus, inputs, splits.unseen_pool);
  CHECK(accuracy > 1.0 / 4.0);
}

TEST_CASE("checkpoints round-trip to bit-identical features") {
  const Corpus corpus = generate_corpus(tiny_spec());
  const SplitResult splits = make_splits(corpus, SplitSpec{});
  const PreprocessedCorpus inputs(corpus, splits.train_pool);
  const EncoderParams params = init_params(tiny_arch(), 103);
  TempFile file("ckpt.vslg");
  save_checkpoint(params, file.path);
  const EncoderParams loaded = load_checkpoint(file.path, tiny_arch());
  for (ImageRef r = 0; r < 8; ++r) {
    REQUIRE(encode(inputs[r], params) == encode(inputs[r], loaded));
  }
}

TEST_CASE("checkpoint corruption errors are distinct") {
  const EncoderParams params = init_params(tiny_arch(), 107);
  TempFile file("ckpt_err.vslg");
  save_checkpoint(params, file.path);

  SUBCASE("bad magic") {
    std::fstream f(file.path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(file.path, tiny_arch()), FormatError);
  }
  SUBCASE("future version") {
    std::fstream f(file.path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v9[4] = {9, 0, 0, 0};
    f.write(v9, 4);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(file.path, tiny_arch()), VersionError);
  }
  SUBCASE("truncation") {
    std::ifstream in(file.path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(file.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 16));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(file.path, tiny_arch()), TruncationError);
  }
  SUBCASE("architecture mismatch names the layer") {
    Architecture other = tiny_arch();
    other.conv2_kernels = 5;
    try {
      load_checkpoint(file.path, other);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("conv2") != std::string::npos);
    }
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint("no_such.vslg", tiny_arch()), IoError);
  }
}

TEST_CASE("training log CSV has the documented columns") {
  std::vector<TrainLogRow> log{{0, 0.5, 0.1, 0.9}};
  const std::string csv = train_log_to_csv(log);
  CHECK(csv.rfind("step,loss,pos_dist_mean,neg_dist_mean\n0,", 0) == 0);
}

TEST_CASE("shared parameters: one weight perturbation shifts all four branches") {
  const Corpus corpus = generate_corpus(tiny_spec());
  const SplitResult splits = make_splits(corpus, SplitSpec{});
  const PreprocessedCorpus inputs(corpus, splits.train_pool);
  QuadrupleSampler sampler(corpus, splits, 109);
  const Quadruple q = sampler.sample_positive();

  EncoderParams params = init_params(tiny_arch(), 113);
  const std::array<Tensor, 4> before = {encode(inputs[q.i1], params),
                                        encode(inputs[q.i2], params),
                                        encode(inputs[q.i3], params),
                                        encode(inputs[q.i4], params)};
  // the final bias reaches every branch unconditionally (no dead-unit risk)
  params.dense2.bias[0] += 0.25;
  const std::array<Tensor, 4> after = {encode(inputs[q.i1], params),
                                       encode(inputs[q.i2], params),
                                       encode(inputs[q.i3], params),
                                       encode(inputs[q.i4], params)};
  for (int branch = 0; branch < 4; ++branch) {
    CHECK_FALSE(before[branch] == after[branch]);
  }
}

}  // TEST_SUITE
