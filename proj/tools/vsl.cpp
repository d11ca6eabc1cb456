#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "vsl/config.hpp"
#include "vsl/corpus.hpp"
#include "vsl/grad_check.hpp"
#include "vsl/model.hpp"
#include "vsl/quadruples.hpp"
#include "vsl/retrieval.hpp"
#include "vsl/rng.hpp"
#include "vsl/svg.hpp"

namespace fs = std::filesystem;
using namespace vsl;

namespace {

constexpr std::uint64_t kRandomScorerStream = 0x77;

struct CliState {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::string run_name;
};

RunConfig resolve_config(const CliState& cli) {
  RunConfig config;
  if (!cli.config_path.empty()) config = load_config_file(cli.config_path);
  for (const auto& [key, value] : cli.overrides) apply_config_entry(config, key, value);
  validate(config);
  return config;
}

fs::path make_run_dir(const RunConfig& config, const CliState& cli, const std::string& command) {
  std::string name = cli.run_name;
  if (name.empty()) {
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::localtime(&now));
    name = std::string(stamp) + "-" + command;
  }
  fs::path dir = fs::path(config.out_dir) / name;
  if (cli.run_name.empty()) {
    int suffix = 1;
    fs::path candidate = dir;
    while (fs::exists(candidate)) candidate = dir.string() + "-" + std::to_string(++suffix);
    dir = candidate;
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  std::ofstream echo(dir / "config.txt");
  if (!echo) throw IoError("cannot write resolved config in " + dir.string());
  echo << config_to_string(config);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

SplitResult splits_for(const Corpus& corpus, const RunConfig& config) {
  const SplitSpec spec = make_split_spec(corpus.spec(), config.unseen_categories,
                                         config.heldout_types,
                                         default_split_seed(corpus.spec().seed));
  return make_splits(corpus, spec);
}

Corpus load_corpus_checked(const RunConfig& config) {
  if (!fs::exists(config.corpus_path)) {
    throw IoError("corpus file not found: " + config.corpus_path +
                  " (generate it with `vsl gen-corpus`)");
  }
  return load_corpus(config.corpus_path);
}

int cmd_gen_corpus(const CliState& cli) {
  const RunConfig config = resolve_config(cli);
  make_run_dir(config, cli, "gen-corpus");
  const Corpus corpus = generate_corpus(corpus_spec_from(config));
  save_corpus(corpus, config.corpus_path);
  std::cout << "wrote " << corpus.size() << " images (" << config.categories << " categories x "
            << config.properties << " properties x " << config.exemplars << " exemplars) to "
            << config.corpus_path << "\n";
  return kExitOk;
}

int cmd_train(const CliState& cli) {
  const RunConfig config = resolve_config(cli);
  const fs::path run_dir = make_run_dir(config, cli, "train");
  const Corpus corpus = load_corpus_checked(config);
  const SplitResult splits = splits_for(corpus, config);
  const Hyperparams hyper = hyperparams_from(config);

  EncoderParams initial;
  const EncoderParams* initial_ptr = nullptr;
  if (config.init == "classifier") {
    std::cout << "pretraining classifier initialization (" << config.classifier_steps
              << " steps)\n";
    initial = pretrain_classifier(corpus, splits, classifier_hyperparams_from(config)).params;
    initial_ptr = &initial;
  }

  std::size_t next_report = 0;
  const ProgressSink progress = [&](const TrainLogRow& row) {
    if (row.step == next_report || row.step + 1 == hyper.steps) {
      std::printf("step %6zu  loss %.5f  pos_dist %.4f  neg_dist %.4f\n", row.step, row.loss,
                  row.pos_dist_mean, row.neg_dist_mean);
      next_report += hyper.steps >= 20 ? hyper.steps / 20 : 1;
    }
  };
  const TrainResult result = train(corpus, splits, hyper, progress, initial_ptr);

  const fs::path ckpt = run_dir / "checkpoint.vslg";
  save_checkpoint(result.params, ckpt.string());
  write_text(run_dir / "train_log.csv", train_log_to_csv(result.log));
  std::cout << "checkpoint: " << ckpt.string() << "\n";
  return kExitOk;
}

std::vector<Regime> regimes_for(const RunConfig& config) {
  if (config.regime == "seen") return {Regime::seen};
  if (config.regime == "unseen") return {Regime::unseen};
  return {Regime::seen, Regime::unseen};
}

int cmd_eval(const CliState& cli, const std::string& checkpoint, const std::string& baseline) {
  const RunConfig config = resolve_config(cli);
  const fs::path run_dir = make_run_dir(config, cli, "eval");
  const Corpus corpus = load_corpus_checked(config);
  const SplitResult splits = splits_for(corpus, config);

  std::unique_ptr<Scorer> scorer;
  std::string arm_label;
  if (baseline == "random") {
    scorer = std::make_unique<RandomScorer>(mix_seed(config.seed, kRandomScorerStream));
    arm_label = "random";
  } else {
    EncoderParams params;
    if (baseline == "classifier") {
      std::cout << "pretraining classifier baseline (" << config.classifier_steps
                << " steps)\n";
      params = pretrain_classifier(corpus, splits, classifier_hyperparams_from(config)).params;
      arm_label = "classifier";
    } else {
      if (checkpoint.empty()) {
        throw ValidationError("eval: --checkpoint is required unless --baseline is given");
      }
      Architecture arch;
      arch.channels = corpus.spec().channels;
      arch.image_size = corpus.spec().image_size;
      params = load_checkpoint(checkpoint, arch);
      arm_label = config.loss;
    }
    auto features = std::make_shared<FeatureCache>(
        corpus, params, channel_means(corpus, splits.train_pool), config.threads);
    scorer = std::make_unique<EmbeddingScorer>(std::move(features));
  }

  std::string results = "regime,loss_mode,freeze_mode,seed,k,n_distractors,recall\n";
  for (Regime regime : regimes_for(config)) {
    SvgLinePlot plot("recall@k, " + std::string(to_string(regime)) + " regime (" + arm_label +
                         ")",
                     "k", "mean recall");
    for (std::uint32_t n_distractors : config.distractor_sizes) {
      const std::uint64_t q_seed =
          mix_seed(mix_seed(config.seed, static_cast<std::uint64_t>(regime)), n_distractors);
      const auto questions =
          build_questions(corpus, splits, regime, unseen_mode_from(config), config.n_questions,
                          n_distractors, q_seed);
      std::vector<std::size_t> ks(config.ks.begin(), config.ks.end());
      const EvalResult eval = evaluate(questions, *scorer, ks, config.threads);
      std::vector<double> xs, ys;
      for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%llu,%zu,%u,%.17g\n", to_string(regime),
                      arm_label.c_str(), config.freeze.c_str(),
                      static_cast<unsigned long long>(config.seed), ks[ki], n_distractors,
                      eval.curve.recall[ki]);
        results += buf;
        xs.push_back(static_cast<double>(ks[ki]));
        ys.push_back(eval.curve.recall[ki]);
      }
      plot.add_series("n=" + std::to_string(n_distractors), xs, ys);
      write_text(run_dir / ("audit_" + std::string(to_string(regime)) + "_n" +
                            std::to_string(n_distractors) + ".csv"),
                 audit_to_csv(eval.audit));
    }
    plot.write((run_dir / ("recall_" + std::string(to_string(regime)) + ".svg")).string());
  }
  write_text(run_dir / "results.csv", results);
  std::cout << "results: " << (run_dir / "results.csv").string() << "\n";
  return kExitOk;
}

int cmd_ablate(const CliState& cli) {
  const RunConfig config = resolve_config(cli);
  const fs::path run_dir = make_run_dir(config, cli, "ablate");

  AblationConfig ab;
  ab.corpus_spec = corpus_spec_from(config);
  ab.unseen_categories = config.unseen_categories;
  ab.heldout_types = config.heldout_types;
  ab.hyper = hyperparams_from(config);
  ab.classifier_hyper = classifier_hyperparams_from(config);
  ab.unseen_mode = unseen_mode_from(config);
  ab.n_questions = config.ablation_questions;
  ab.distractor_size = config.distractor_sizes.front();
  ab.ks.assign(config.ks.begin(), config.ks.end());
  ab.seeds = config.ablation_seeds;

  const AblationReport report =
      run_ablation(ab, [](const std::string& msg) { std::cout << msg << "\n"; });

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "question_hash_seen=%016llx question_hash_unseen=%016llx "
                "shared_config_hash=%016llx (identical across every arm)\n",
                static_cast<unsigned long long>(report.question_hash_seen),
                static_cast<unsigned long long>(report.question_hash_unseen),
                static_cast<unsigned long long>(report.shared_config_hash));
  std::cout << buf;

  write_text(run_dir / "ablation.csv", ablation_to_csv(report.rows));

  // per-regime plot: one polyline per (loss, freeze) arm, recall averaged
  // over seeds
  for (Regime regime : {Regime::seen, Regime::unseen}) {
    SvgLinePlot plot("margin ablation, " + std::string(to_string(regime)) + " regime", "k",
                     "mean recall");
    for (LossMode loss : {LossMode::single, LossMode::double_margin}) {
      for (FreezeMode freeze : {FreezeMode::fc_only, FreezeMode::fc_plus_lastconv}) {
        std::vector<double> xs, ys;
        for (std::size_t k : ab.ks) {
          double sum = 0.0;
          std::size_t count = 0;
          for (const AblationRow& row : report.rows) {
            if (row.regime == regime && row.loss_mode == loss && row.freeze_mode == freeze &&
                row.k == k) {
              sum += row.recall;
              ++count;
            }
          }
          xs.push_back(static_cast<double>(k));
          ys.push_back(count ? sum / static_cast<double>(count) : 0.0);
        }
        plot.add_series(std::string(to_string(loss)) + " / " + to_string(freeze), xs, ys);
      }
    }
    plot.write((run_dir / ("ablation_" + std::string(to_string(regime)) + ".svg")).string());
  }
  std::cout << "report: " << (run_dir / "ablation.csv").string() << "\n";
  return kExitOk;
}

// --- selfcheck ---------------------------------------------------------------

struct SelfCheck {
  int failures = 0;

  void check(bool ok, const std::string& name, const std::string& detail = "") {
    std::printf("[%s] %s%s%s\n", ok ? "ok" : "FAIL", name.c_str(),
                detail.empty() ? "" : ": ", detail.c_str());
    if (!ok) ++failures;
  }
};

// Flattens every unfrozen parameter of `params` into one vector; setter maps
// the vector back. Used to gradient-check the full composition layer by
// layer so a failure names the layer.
std::vector<double> layer_weights(const EncoderParams& params, int layer_index) {
  const LayerParams* layer = params.layers()[static_cast<std::size_t>(layer_index)];
  std::vector<double> flat(layer->weights.values());
  flat.insert(flat.end(), layer->bias.values().begin(), layer->bias.values().end());
  return flat;
}

void set_layer_weights(EncoderParams& params, int layer_index, const std::vector<double>& flat) {
  LayerParams* layer = params.layers()[static_cast<std::size_t>(layer_index)];
  const std::size_t nw = layer->weights.size();
  for (std::size_t i = 0; i < nw; ++i) layer->weights[i] = flat[i];
  for (std::size_t i = 0; i < layer->bias.size(); ++i) layer->bias[i] = flat[nw + i];
}

int cmd_selfcheck() {
  SelfCheck sc;

  if (const char* corrupt = std::getenv("VSL_CORRUPT_BACKWARD")) {
    testhook::corrupt_backward_layer = corrupt;
    std::printf("test hook active: corrupting backward pass of '%s'\n", corrupt);
  }

  // 1. loss identities and the two hand-derived values
  {
    Rng rng(7);
    bool identity_ok = true;
    for (int i = 0; i < 1000 && identity_ok; ++i) {
      Tensor a({4}), b({4});
      for (std::size_t j = 0; j < 4; ++j) {
        a[j] = rng.uniform(-1, 1);
        b[j] = rng.uniform(-1, 1);
      }
      const int y = rng.bernoulli(0.5) ? 1 : 0;
      const double m = rng.uniform(0.05, 1.0);
      identity_ok = loss_double_margin(a, b, y, 0.0, m) == loss_single_margin(a, b, y, m);
    }
    sc.check(identity_ok, "double margin with m_P=0 equals single margin");

    const Tensor x12 = Tensor::of({1.0, 0.0});
    const Tensor x34 = Tensor::of({0.8, 0.6});
    const double single = loss_single_margin(x12, x34, 0, 1.0);
    const double dbl = loss_double_margin(x12, x34, 1, 0.2, 0.4);
    sc.check(std::abs(single - 0.36754) < 1e-5, "single-margin spot value",
             std::to_string(single));
    sc.check(std::abs(dbl - 0.43246) < 1e-5, "double-margin spot value", std::to_string(dbl));
  }

  // 2. full-composition gradient check, one layer block at a time
  {
    CorpusSpec spec;
    spec.num_categories = 3;
    spec.num_properties = 3;
    spec.exemplars_per_cell = 2;
    spec.image_size = 8;
    spec.seed = 11;
    const Corpus corpus = generate_corpus(spec);
    const SplitResult splits = make_splits(corpus, SplitSpec{});
    const PreprocessedCorpus inputs(corpus, splits.train_pool);
    QuadrupleSampler sampler(corpus, splits, 13);
    std::vector<Quadruple> batch{sampler.sample_positive(), sampler.sample_negative_hard()};

    Hyperparams hyper;
    hyper.loss_mode = LossMode::double_margin;
    EncoderParams params = init_params(
        Architecture{3, 8, 4, 6, 3, 24, 16}, 17);

    LayerGradients grads(params);
    batch_loss_and_gradients(batch, inputs, params, hyper, grads);
    const std::vector<const Tensor*> ws = {&grads.conv1_w, &grads.conv2_w, &grads.dense1_w,
                                           &grads.dense2_w};
    const std::vector<const Tensor*> bs = {&grads.conv1_b, &grads.conv2_b, &grads.dense1_b,
                                           &grads.dense2_b};
    for (int li = 0; li < 4; ++li) {
      std::vector<double> analytic(ws[li]->values());
      analytic.insert(analytic.end(), bs[li]->values().begin(), bs[li]->values().end());
      const std::vector<double> point = layer_weights(params, li);
      EncoderParams probe = params;
      const auto f = [&](const std::vector<double>& x) {
        set_layer_weights(probe, li, x);
        LayerGradients scratch(probe);
        return batch_loss_and_gradients(batch, inputs, probe, hyper, scratch);
      };
      const GradCheckReport report = grad_check(f, point, analytic, 1e-5);
      const std::string layer_name = params.layers()[static_cast<std::size_t>(li)]->name;
      sc.check(report.max_rel_error < 1e-4, "gradient check through " + layer_name,
               "max rel err " + std::to_string(report.max_rel_error));
    }
  }

  // 3. sampler sweeps
  {
    CorpusSpec spec;
    spec.seed = 5;
    const Corpus corpus = generate_corpus(spec);
    const SplitSpec split_spec = make_split_spec(spec, 2, 6, 5);
    const SplitResult splits = make_splits(corpus, split_spec);
    QuadrupleSampler sampler(corpus, splits, 23);
    bool pos_ok = true, leak_ok = true, neg_ok = true, hard_ok = true;
    for (int i = 0; i < 20000; ++i) {
      const Quadruple p = sampler.sample_positive();
      pos_ok = pos_ok && is_valid_analogy(sampler.labels_of(p));
      leak_ok = leak_ok && !splits.heldout_types.count(p.type);
      neg_ok = neg_ok && !is_valid_analogy(sampler.labels_of(sampler.sample_negative_random()));
      hard_ok = hard_ok && !is_valid_analogy(sampler.labels_of(sampler.sample_negative_hard()));
    }
    sc.check(pos_ok, "positive samples satisfy the validity predicate");
    sc.check(leak_ok, "no held-out analogy type among training positives");
    sc.check(neg_ok, "random negatives violate the validity predicate");
    sc.check(hard_ok, "hard negatives violate the validity predicate");
  }

  // 4. embedding invariants
  {
    Rng rng(29);
    bool norm_ok = true, anti_ok = true;
    for (int i = 0; i < 2000; ++i) {
      Tensor a({8}), b({8});
      for (std::size_t j = 0; j < 8; ++j) {
        a[j] = rng.normal();
        b[j] = rng.normal();
      }
      const Tensor e1 = embed_pair(a, b, NormMode::strict);
      const Tensor e2 = embed_pair(b, a, NormMode::strict);
      norm_ok = norm_ok && std::abs(e1.l2_norm() - 1.0) < 1e-12;
      for (std::size_t j = 0; j < 8; ++j) anti_ok = anti_ok && e1[j] == -e2[j];
    }
    sc.check(norm_ok, "pair embeddings have unit norm");
    sc.check(anti_ok, "pair embedding antisymmetry");
  }

  std::printf("%s (%d failure%s)\n", sc.failures ? "SELF-CHECK FAILED" : "self-check passed",
              sc.failures, sc.failures == 1 ? "" : "s");
  return sc.failures ? kExitNumerical : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visual-analogy embedding laboratory"};
  app.require_subcommand(1);

  CliState cli;
  std::string checkpoint, baseline;

  auto add_shared = [&cli](CLI::App* sub) {
    sub->add_option("--config", cli.config_path, "config file (key = value lines)");
    sub->add_option("--run-name", cli.run_name, "run directory name (default: timestamp)");
    auto add_override = [&cli, sub](const std::string& flag, const std::string& key,
                                    const std::string& help) {
      sub->add_option_function<std::string>(
          flag, [&cli, key](const std::string& v) { cli.overrides.emplace_back(key, v); },
          help);
    };
    add_override("--seed", "seed", "master seed");
    add_override("--out", "out_dir", "output directory");
    add_override("--threads", "threads", "worker cap (default 1, bit-reproducible)");
    add_override("--corpus", "corpus_path", "corpus file path");
    return add_override;
  };

  CLI::App* gen = app.add_subcommand("gen-corpus", "render the labeled glyph corpus");
  {
    auto add_override = add_shared(gen);
    add_override("--categories", "categories", "number of categories");
    add_override("--properties", "properties", "number of properties");
    add_override("--exemplars", "exemplars", "exemplars per (category, property) cell");
  }

  CLI::App* train_cmd = app.add_subcommand("train", "train the four-branch encoder");
  {
    auto add_override = add_shared(train_cmd);
    add_override("--loss", "loss", "single | double");
    add_override("--m", "margin", "single-margin m");
    add_override("--mp", "margin_pos", "double-margin m_P");
    add_override("--mn", "margin_neg", "double-margin m_N");
    add_override("--steps", "steps", "training steps");
    add_override("--freeze", "freeze", "fc_only | fc_plus_lastconv | all");
    add_override("--init", "init", "random | classifier");
  }

  CLI::App* eval_cmd = app.add_subcommand("eval", "answer analogy questions by retrieval");
  {
    auto add_override = add_shared(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint (.vslg)");
    eval_cmd->add_option("--baseline", baseline,
                         "evaluate a baseline instead: classifier | random")
        ->check(CLI::IsMember({"classifier", "random"}));
    add_override("--questions", "n_questions", "questions per regime");
    add_override("--distractors", "distractor_sizes", "comma list of distractor set sizes");
    add_override("--regime", "regime", "seen | unseen | both");
  }

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "margin x fine-tune-depth ablation grid");
  {
    auto add_override = add_shared(ablate_cmd);
    add_override("--steps", "steps", "training steps per arm");
    add_override("--ablation-seeds", "ablation_seeds", "comma list of seeds");
    add_override("--questions", "ablation_questions", "questions per regime");
  }

  CLI::App* selfcheck_cmd =
      app.add_subcommand("selfcheck", "gradient, loss and sampler certification");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_corpus(cli);
    if (train_cmd->parsed()) return cmd_train(cli);
    if (eval_cmd->parsed()) return cmd_eval(cli, checkpoint, baseline);
    if (ablate_cmd->parsed()) return cmd_ablate(cli);
    if (selfcheck_cmd->parsed()) return cmd_selfcheck();
    return kExitValidation;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
