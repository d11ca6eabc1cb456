#include "vsl/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace vsl {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config: key '" + key + "' expects a number, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config: key '" + key + "' expects an unsigned integer, got '" +
                          value + "'");
  }
}

std::uint32_t parse_u32(const std::string& key, const std::string& value) {
  const std::uint64_t v = parse_u64(key, value);
  if (v > 0xffffffffULL) throw ValidationError("config: key '" + key + "' value too large");
  return static_cast<std::uint32_t>(v);
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value,
                          T (*parse)(const std::string&, const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ValidationError("config: key '" + key + "' has an empty element");
    out.push_back(parse(key, item));
  }
  if (out.empty()) throw ValidationError("config: key '" + key + "' expects a list");
  return out;
}

void require_choice(const std::string& key, const std::string& value,
                    std::initializer_list<const char*> choices) {
  for (const char* c : choices) {
    if (value == c) return;
  }
  std::string allowed;
  for (const char* c : choices) {
    if (!allowed.empty()) allowed += " | ";
    allowed += c;
  }
  throw ValidationError("config: key '" + key + "' must be one of {" + allowed + "}, got '" +
                        value + "'");
}

}  // namespace

void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "categories") c.categories = parse_u32(key, value);
  else if (key == "properties") c.properties = parse_u32(key, value);
  else if (key == "exemplars") c.exemplars = parse_u32(key, value);
  else if (key == "image_size") c.image_size = parse_u32(key, value);
  else if (key == "jitter_pos_px") c.jitter_pos_px = parse_double(key, value);
  else if (key == "jitter_scale") c.jitter_scale = parse_double(key, value);
  else if (key == "jitter_noise") c.jitter_noise = parse_double(key, value);
  else if (key == "hue_fraction") c.hue_fraction = parse_double(key, value);
  else if (key == "rotation_max_deg") c.rotation_max_deg = parse_double(key, value);
  else if (key == "corpus_path") c.corpus_path = value;
  else if (key == "unseen_categories") c.unseen_categories = parse_u32(key, value);
  else if (key == "heldout_types") c.heldout_types = parse_u32(key, value);
  else if (key == "loss") { require_choice(key, value, {"single", "double"}); c.loss = value; }
  else if (key == "margin") c.margin = parse_double(key, value);
  else if (key == "margin_pos") c.margin_pos = parse_double(key, value);
  else if (key == "margin_neg") c.margin_neg = parse_double(key, value);
  else if (key == "learning_rate") c.learning_rate = parse_double(key, value);
  else if (key == "momentum") c.momentum = parse_double(key, value);
  else if (key == "batch_size") c.batch_size = parse_u32(key, value);
  else if (key == "steps") c.steps = parse_u32(key, value);
  else if (key == "pos_fraction") c.pos_fraction = parse_double(key, value);
  else if (key == "hard_fraction") c.hard_fraction = parse_double(key, value);
  else if (key == "freeze") {
    require_choice(key, value, {"fc_only", "fc_plus_lastconv", "all"});
    c.freeze = value;
  } else if (key == "init") {
    require_choice(key, value, {"random", "classifier"});
    c.init = value;
  }
  else if (key == "classifier_steps") c.classifier_steps = parse_u32(key, value);
  else if (key == "classifier_lr") c.classifier_lr = parse_double(key, value);
  else if (key == "n_questions") c.n_questions = parse_u32(key, value);
  else if (key == "distractor_sizes") c.distractor_sizes = parse_list(key, value, parse_u32);
  else if (key == "ks") c.ks = parse_list(key, value, parse_u32);
  else if (key == "regime") { require_choice(key, value, {"seen", "unseen", "both"}); c.regime = value; }
  else if (key == "unseen_mode") {
    require_choice(key, value, {"heldout_types", "unseen_categories", "both"});
    c.unseen_mode = value;
  }
  else if (key == "ablation_seeds") c.ablation_seeds = parse_list(key, value, parse_u64);
  else if (key == "ablation_questions") c.ablation_questions = parse_u32(key, value);
  else if (key == "seed") c.seed = parse_u64(key, value);
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "threads") c.threads = parse_u32(key, value);
  else throw ValidationError("config: unknown key '" + key + "'");
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config: line " + std::to_string(line_no) +
                            " is not 'key = value': " + line);
    }
    apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

void validate(const RunConfig& config) {
  validate(corpus_spec_from(config));
  validate(hyperparams_from(config));
  if (config.unseen_categories + 2 > config.categories) {
    throw ValidationError("config: unseen_categories leaves fewer than two training categories");
  }
  if (config.threads < 1) throw ValidationError("config: threads must be >= 1");
  if (config.n_questions < 1) throw ValidationError("config: n_questions must be >= 1");
  for (std::uint32_t k : config.ks) {
    if (k < 1) throw ValidationError("config: ks entries must be >= 1");
  }
  for (std::uint32_t d : config.distractor_sizes) {
    if (d < 1) throw ValidationError("config: distractor sizes must be >= 1");
  }
}

std::string config_to_string(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  auto list_u32 = [](const std::vector<std::uint32_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  auto list_u64 = [](const std::vector<std::uint64_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  out << "categories = " << c.categories << "\n"
      << "properties = " << c.properties << "\n"
      << "exemplars = " << c.exemplars << "\n"
      << "image_size = " << c.image_size << "\n"
      << "jitter_pos_px = " << c.jitter_pos_px << "\n"
      << "jitter_scale = " << c.jitter_scale << "\n"
      << "jitter_noise = " << c.jitter_noise << "\n"
      << "hue_fraction = " << c.hue_fraction << "\n"
      << "rotation_max_deg = " << c.rotation_max_deg << "\n"
      << "corpus_path = " << c.corpus_path << "\n"
      << "unseen_categories = " << c.unseen_categories << "\n"
      << "heldout_types = " << c.heldout_types << "\n"
      << "loss = " << c.loss << "\n"
      << "margin = " << c.margin << "\n"
      << "margin_pos = " << c.margin_pos << "\n"
      << "margin_neg = " << c.margin_neg << "\n"
      << "learning_rate = " << c.learning_rate << "\n"
      << "momentum = " << c.momentum << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "steps = " << c.steps << "\n"
      << "pos_fraction = " << c.pos_fraction << "\n"
      << "hard_fraction = " << c.hard_fraction << "\n"
      << "freeze = " << c.freeze << "\n"
      << "init = " << c.init << "\n"
      << "classifier_steps = " << c.classifier_steps << "\n"
      << "classifier_lr = " << c.classifier_lr << "\n"
      << "n_questions = " << c.n_questions << "\n"
      << "distractor_sizes = " << list_u32(c.distractor_sizes) << "\n"
      << "ks = " << list_u32(c.ks) << "\n"
      << "regime = " << c.regime << "\n"
      << "unseen_mode = " << c.unseen_mode << "\n"
      << "ablation_seeds = " << list_u64(c.ablation_seeds) << "\n"
      << "ablation_questions = " << c.ablation_questions << "\n"
      << "seed = " << c.seed << "\n"
      << "out_dir = " << c.out_dir << "\n"
      << "threads = " << c.threads << "\n";
  return out.str();
}

CorpusSpec corpus_spec_from(const RunConfig& c) {
  CorpusSpec spec;
  spec.num_categories = c.categories;
  spec.num_properties = c.properties;
  spec.exemplars_per_cell = c.exemplars;
  spec.image_size = c.image_size;
  spec.jitter.position_px = c.jitter_pos_px;
  spec.jitter.scale_fraction = c.jitter_scale;
  spec.jitter.noise_amplitude = c.jitter_noise;
  spec.hue_fraction = c.hue_fraction;
  spec.rotation_max_deg = c.rotation_max_deg;
  spec.seed = c.seed;
  return spec;
}

Hyperparams hyperparams_from(const RunConfig& c) {
  Hyperparams h;
  h.loss_mode = c.loss == "single" ? LossMode::single : LossMode::double_margin;
  h.margin = c.margin;
  h.margin_positive = c.margin_pos;
  h.margin_negative = c.margin_neg;
  h.learning_rate = c.learning_rate;
  h.momentum = c.momentum;
  h.batch_size = c.batch_size;
  h.steps = c.steps;
  h.pos_fraction = c.pos_fraction;
  h.hard_fraction = c.hard_fraction;
  if (c.freeze == "fc_only") h.freeze_mode = FreezeMode::fc_only;
  else if (c.freeze == "fc_plus_lastconv") h.freeze_mode = FreezeMode::fc_plus_lastconv;
  else h.freeze_mode = FreezeMode::all;
  h.seed = c.seed;
  return h;
}

ClassifierHyperparams classifier_hyperparams_from(const RunConfig& c) {
  ClassifierHyperparams h;
  h.learning_rate = c.classifier_lr;
  h.momentum = c.momentum;
  h.batch_size = c.batch_size;
  h.steps = c.classifier_steps;
  h.seed = c.seed;
  return h;
}

UnseenMode unseen_mode_from(const RunConfig& c) {
  if (c.unseen_mode == "unseen_categories") return UnseenMode::unseen_categories;
  if (c.unseen_mode == "both") return UnseenMode::both;
  return UnseenMode::heldout_types;
}

}  // namespace vsl
