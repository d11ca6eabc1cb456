#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vsl/corpus.hpp"
#include "vsl/model.hpp"
#include "vsl/retrieval.hpp"

namespace vsl {

// Flat key = value run configuration. Every key has a default; a config file
// overrides defaults and CLI flags override the file.
struct RunConfig {
  // corpus
  std::uint32_t categories = 12;
  std::uint32_t properties = 8;
  std::uint32_t exemplars = 6;
  std::uint32_t image_size = 24;
  double jitter_pos_px = 2.0;
  double jitter_scale = 0.1;
  double jitter_noise = 0.05;
  double hue_fraction = 0.5;
  double rotation_max_deg = 40.0;
  std::string corpus_path = "corpus.vslc";

  // splits
  std::uint32_t unseen_categories = 2;
  std::uint32_t heldout_types = 6;

  // training
  std::string loss = "double";  // single | double
  double margin = 0.4;
  double margin_pos = 0.2;
  double margin_neg = 0.4;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint32_t batch_size = 32;
  std::uint32_t steps = 5000;
  double pos_fraction = 0.5;
  double hard_fraction = 0.5;
  std::string freeze = "all";  // fc_only | fc_plus_lastconv | all
  std::string init = "random";  // random | classifier
  std::uint32_t classifier_steps = 1500;
  double classifier_lr = 0.05;

  // evaluation
  std::uint32_t n_questions = 1000;
  std::vector<std::uint32_t> distractor_sizes = {100};
  std::vector<std::uint32_t> ks = {1, 2, 5, 10, 20, 50};
  std::string regime = "both";       // seen | unseen | both
  std::string unseen_mode = "heldout_types";  // heldout_types | unseen_categories | both

  // ablation
  std::vector<std::uint64_t> ablation_seeds = {1, 2, 3};
  std::uint32_t ablation_questions = 200;

  // run
  std::uint64_t seed = 1;
  std::string out_dir = "runs";
  std::uint32_t threads = 1;
};

// Parses `key = value` lines; '#' starts a comment; blank lines ignored.
// Unknown keys and malformed values raise ValidationError.
RunConfig load_config_file(const std::string& path, RunConfig base = {});

// Applies one key/value pair (shared by the file parser and flag overrides).
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);

void validate(const RunConfig& config);

// The resolved configuration, echoed into every run directory.
std::string config_to_string(const RunConfig& config);

CorpusSpec corpus_spec_from(const RunConfig& config);
Hyperparams hyperparams_from(const RunConfig& config);
ClassifierHyperparams classifier_hyperparams_from(const RunConfig& config);
UnseenMode unseen_mode_from(const RunConfig& config);

}  // namespace vsl
