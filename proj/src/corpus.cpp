#include "vsl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "vsl/binio.hpp"
#include "vsl/rng.hpp"

namespace vsl {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
constexpr char kCorpusMagic[4] = {'V', 'S', 'L', 'C'};
constexpr std::uint32_t kCorpusVersion = 1;

double wrap_angle(double a, double period) {
  double r = std::fmod(a, period);
  if (r < 0) r += period;
  return r;
}

// Glyph families cycle with category id; the quotient picks the family
// parameter so every category id renders a distinct shape.
enum class Glyph { polygon, star, disk, cross };

struct GlyphSpec {
  Glyph family;
  std::uint32_t order;  // family parameter
};

GlyphSpec glyph_for_category(std::uint32_t category_id) {
  return {static_cast<Glyph>(category_id % 4), category_id / 4};
}

// Property ids are split between hue transforms and rotation transforms.
struct PropertyVisual {
  double rgb[3];
  double rotation_rad;
};

std::uint32_t hue_property_count(const CorpusSpec& spec) {
  const auto n = static_cast<std::uint32_t>(
      std::lround(spec.hue_fraction * static_cast<double>(spec.num_properties)));
  return std::min(n, spec.num_properties);
}

void hsv_to_rgb(double h_deg, double s, double v, double out[3]) {
  const double h = wrap_angle(h_deg, 360.0) / 60.0;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s);
  const double q = v * (1 - s * f);
  const double t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: out[0] = v; out[1] = t; out[2] = p; break;
    case 1: out[0] = q; out[1] = v; out[2] = p; break;
    case 2: out[0] = p; out[1] = v; out[2] = t; break;
    case 3: out[0] = p; out[1] = q; out[2] = v; break;
    case 4: out[0] = t; out[1] = p; out[2] = v; break;
    default: out[0] = v; out[1] = p; out[2] = q; break;
  }
}

PropertyVisual property_visual(const CorpusSpec& spec, std::uint32_t property_id) {
  PropertyVisual vis{};
  const std::uint32_t n_hue = hue_property_count(spec);
  if (property_id < n_hue) {
    hsv_to_rgb(360.0 * property_id / n_hue, 0.9, 0.95, vis.rgb);
    vis.rotation_rad = 0.0;
  } else {
    // Rotation properties share one neutral color. Angles stay inside
    // [0, rotation_max_deg) so no glyph's rotational symmetry aliases them.
    vis.rgb[0] = vis.rgb[1] = vis.rgb[2] = 0.82;
    const std::uint32_t n_rot = spec.num_properties - n_hue;
    const std::uint32_t j = property_id - n_hue;
    vis.rotation_rad = spec.rotation_max_deg * kPi / 180.0 * j / n_rot;
  }
  return vis;
}

// Inside-glyph predicate in glyph-local coordinates (already unrotated and
// scaled so the nominal outer radius is `radius`).
bool inside_glyph(const GlyphSpec& glyph, double u, double v, double radius) {
  const double r = std::hypot(u, v);
  switch (glyph.family) {
    case Glyph::polygon: {
      const double sides = 3.0 + glyph.order;
      if (r < 1e-12) return true;
      const double sector = kTwoPi / sides;
      const double phi = wrap_angle(std::atan2(v, u), sector) - sector / 2.0;
      const double boundary = radius * std::cos(kPi / sides) / std::cos(phi);
      return r <= boundary;
    }
    case Glyph::star: {
      const double points = 5.0 + glyph.order;
      if (r < 1e-12) return true;
      const double sector = kTwoPi / points;
      const double t = wrap_angle(std::atan2(v, u), sector) / sector;
      const double inner = 0.45 * radius;
      const double boundary = inner + (radius - inner) * std::abs(1.0 - 2.0 * t);
      return r <= boundary;
    }
    case Glyph::disk: {
      // Washer with an off-center hole; the hole position makes rotation
      // visible for this otherwise symmetric family.
      if (r > radius) return false;
      const double hole_r = radius * (0.28 + 0.07 * (glyph.order % 4));
      const double hole_cx = radius * 0.45;
      return std::hypot(u - hole_cx, v) > hole_r;
    }
    case Glyph::cross: {
      const double half_w = radius * (0.22 + 0.06 * (glyph.order % 4));
      const double au = std::abs(u), av = std::abs(v);
      return (au <= radius && av <= half_w) || (av <= radius && au <= half_w);
    }
  }
  return false;
}

}  // namespace

void validate(const CorpusSpec& spec) {
  if (spec.num_categories < 2) throw ValidationError("corpus: num_categories must be >= 2");
  if (spec.num_properties < 2) throw ValidationError("corpus: num_properties must be >= 2");
  if (spec.exemplars_per_cell < 1) throw ValidationError("corpus: exemplars_per_cell must be >= 1");
  if (spec.channels != 3) throw ValidationError("corpus: channels must be 3");
  if (spec.image_size < 8 || spec.image_size % 4 != 0) {
    throw ValidationError("corpus: image_size must be >= 8 and divisible by 4");
  }
  if (spec.hue_fraction < 0.0 || spec.hue_fraction > 1.0) {
    throw ValidationError("corpus: hue_fraction must be in [0,1]");
  }
  if (spec.rotation_max_deg <= 0.0 || spec.rotation_max_deg > 90.0) {
    throw ValidationError("corpus: rotation_max_deg must be in (0, 90]");
  }
  if (spec.jitter.position_px < 0 || spec.jitter.scale_fraction < 0 ||
      spec.jitter.scale_fraction >= 1.0 || spec.jitter.noise_amplitude < 0) {
    throw ValidationError("corpus: jitter values out of range");
  }
}

LabeledImage render_image(const CorpusSpec& spec, std::uint32_t category_id,
                          std::uint32_t property_id, std::uint32_t exemplar_seed) {
  if (category_id >= spec.num_categories) throw ValidationError("render_image: category id out of range");
  if (property_id >= spec.num_properties) throw ValidationError("render_image: property id out of range");

  const std::uint64_t render_seed =
      mix_seed(mix_seed(mix_seed(spec.seed, category_id), property_id), exemplar_seed);
  Rng rng(render_seed);

  const double size = spec.image_size;
  const double jitter_x = rng.uniform(-spec.jitter.position_px, spec.jitter.position_px);
  const double jitter_y = rng.uniform(-spec.jitter.position_px, spec.jitter.position_px);
  const double scale = 1.0 + rng.uniform(-spec.jitter.scale_fraction, spec.jitter.scale_fraction);

  const GlyphSpec glyph = glyph_for_category(category_id);
  const PropertyVisual vis = property_visual(spec, property_id);
  const double radius = 0.34 * size * scale;
  const double cx = size / 2.0 + jitter_x;
  const double cy = size / 2.0 + jitter_y;
  const double cos_r = std::cos(vis.rotation_rad);
  const double sin_r = std::sin(vis.rotation_rad);

  LabeledImage img;
  img.pixels = Tensor({spec.channels, spec.image_size, spec.image_size});
  img.category_id = category_id;
  img.property_id = property_id;
  img.exemplar_id = exemplar_seed;
  img.render_seed = render_seed;

  const std::size_t hw = static_cast<std::size_t>(spec.image_size) * spec.image_size;
  double* pix = img.pixels.data();
  constexpr int kSub = 3;  // 3x3 supersampling per pixel
  for (std::uint32_t py = 0; py < spec.image_size; ++py) {
    for (std::uint32_t px = 0; px < spec.image_size; ++px) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double x = px + (sx + 0.5) / kSub - cx;
          const double y = py + (sy + 0.5) / kSub - cy;
          // rotate the sample by -rotation to rotate the glyph by +rotation
          const double u = x * cos_r + y * sin_r;
          const double v = -x * sin_r + y * cos_r;
          if (inside_glyph(glyph, u, v, radius)) ++hits;
        }
      }
      const double coverage = static_cast<double>(hits) / (kSub * kSub);
      const std::size_t at = static_cast<std::size_t>(py) * spec.image_size + px;
      for (std::uint32_t c = 0; c < spec.channels; ++c) {
        double background = 0.10;
        if (spec.jitter.noise_amplitude > 0) {
          background += rng.uniform(-spec.jitter.noise_amplitude, spec.jitter.noise_amplitude);
        }
        double value = coverage * vis.rgb[c] + (1.0 - coverage) * background;
        value = std::min(1.0, std::max(0.0, value));
        // Quantize to the u8 grid so the on-disk format round-trips exactly.
        pix[c * hw + at] = std::round(value * 255.0) / 255.0;
      }
    }
  }
  return img;
}

Corpus::Corpus(CorpusSpec spec, std::vector<LabeledImage> images)
    : spec_(spec), images_(std::move(images)) {
  const std::size_t expected = static_cast<std::size_t>(spec_.num_categories) *
                               spec_.num_properties * spec_.exemplars_per_cell;
  if (images_.size() != expected) {
    throw ValidationError("corpus: image count does not match the grid");
  }
}

ImageRef Corpus::ref(std::uint32_t category, std::uint32_t property,
                     std::uint32_t exemplar) const {
  if (category >= spec_.num_categories || property >= spec_.num_properties ||
      exemplar >= spec_.exemplars_per_cell) {
    throw ValidationError("corpus: (c,p,e) index out of range");
  }
  return static_cast<ImageRef>((static_cast<std::size_t>(category) * spec_.num_properties +
                                property) *
                                   spec_.exemplars_per_cell +
                               exemplar);
}

std::vector<ImageRef> Corpus::cell(std::uint32_t category, std::uint32_t property) const {
  std::vector<ImageRef> refs;
  refs.reserve(spec_.exemplars_per_cell);
  for (std::uint32_t e = 0; e < spec_.exemplars_per_cell; ++e) {
    refs.push_back(ref(category, property, e));
  }
  return refs;
}

bool Corpus::operator==(const Corpus& other) const {
  // Compares everything the VSLC format preserves: the grid, the seed, and
  // every image's labels, render seed and pixels. Render-only knobs (jitter,
  // hue split) are not stored on disk and are excluded on purpose.
  if (spec_.num_categories != other.spec_.num_categories ||
      spec_.num_properties != other.spec_.num_properties ||
      spec_.exemplars_per_cell != other.spec_.exemplars_per_cell ||
      spec_.image_size != other.spec_.image_size || spec_.channels != other.spec_.channels ||
      spec_.seed != other.spec_.seed || images_.size() != other.images_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < images_.size(); ++i) {
    const LabeledImage& a = images_[i];
    const LabeledImage& b = other.images_[i];
    if (a.category_id != b.category_id || a.property_id != b.property_id ||
        a.exemplar_id != b.exemplar_id || a.render_seed != b.render_seed ||
        !(a.pixels == b.pixels)) {
      return false;
    }
  }
  return true;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  validate(spec);
  std::vector<LabeledImage> images;
  images.reserve(static_cast<std::size_t>(spec.num_categories) * spec.num_properties *
                 spec.exemplars_per_cell);
  for (std::uint32_t c = 0; c < spec.num_categories; ++c) {
    for (std::uint32_t p = 0; p < spec.num_properties; ++p) {
      for (std::uint32_t e = 0; e < spec.exemplars_per_cell; ++e) {
        images.push_back(render_image(spec, c, p, e));
      }
    }
  }
  return Corpus(spec, std::move(images));
}

std::uint64_t default_split_seed(std::uint64_t corpus_seed) {
  return mix_seed(corpus_seed, 0x44);
}

SplitSpec make_split_spec(const CorpusSpec& corpus_spec, std::uint32_t n_unseen,
                          std::uint32_t n_heldout, std::uint64_t seed) {
  validate(corpus_spec);
  if (n_unseen + 2 > corpus_spec.num_categories) {
    throw ValidationError("splits: at least two categories must remain for training");
  }
  SplitSpec split;
  split.seed = seed;
  Rng rng(mix_seed(seed, 0x51D17ULL));

  std::vector<std::uint32_t> cats(corpus_spec.num_categories);
  for (std::uint32_t i = 0; i < corpus_spec.num_categories; ++i) cats[i] = i;
  for (std::uint32_t i = 0; i < n_unseen; ++i) {
    const std::size_t at = i + rng.uniform_index(cats.size() - i);
    std::swap(cats[i], cats[at]);
    split.unseen_category_ids.insert(cats[i]);
  }
  std::vector<std::uint32_t> train_cats(cats.begin() + n_unseen, cats.end());
  std::sort(train_cats.begin(), train_cats.end());

  const std::uint64_t tc = train_cats.size();
  const std::uint64_t tp = corpus_spec.num_properties;
  const std::uint64_t total_types = tc * (tc - 1) * tp * (tp - 1);
  if (n_heldout >= total_types) {
    throw ValidationError("splits: cannot hold out every analogy type");
  }
  while (split.heldout_analogy_types.size() < n_heldout) {
    AnalogyType t;
    t.c_in = train_cats[rng.uniform_index(tc)];
    do {
      t.c_out = train_cats[rng.uniform_index(tc)];
    } while (t.c_out == t.c_in);
    t.p_first = static_cast<std::uint32_t>(rng.uniform_index(tp));
    do {
      t.p_second = static_cast<std::uint32_t>(rng.uniform_index(tp));
    } while (t.p_second == t.p_first);
    split.heldout_analogy_types.insert(t);
  }
  return split;
}

SplitResult make_splits(const Corpus& corpus, const SplitSpec& split_spec) {
  const CorpusSpec& spec = corpus.spec();
  for (std::uint32_t c : split_spec.unseen_category_ids) {
    if (c >= spec.num_categories) {
      throw ValidationError("splits: unseen category id out of range");
    }
  }
  if (split_spec.unseen_category_ids.size() + 2 > spec.num_categories) {
    throw ValidationError("splits: at least two categories must remain for training");
  }
  for (const AnalogyType& t : split_spec.heldout_analogy_types) {
    if (t.c_in >= spec.num_categories || t.c_out >= spec.num_categories ||
        t.p_first >= spec.num_properties || t.p_second >= spec.num_properties) {
      throw ValidationError("splits: held-out analogy type references invalid ids");
    }
    if (t.c_in == t.c_out || t.p_first == t.p_second) {
      throw ValidationError("splits: held-out analogy type is not a valid type");
    }
  }

  SplitResult result;
  result.heldout_types = split_spec.heldout_analogy_types;
  for (std::uint32_t c = 0; c < spec.num_categories; ++c) {
    if (split_spec.unseen_category_ids.count(c)) {
      result.unseen_categories.push_back(c);
    } else {
      result.train_categories.push_back(c);
    }
  }
  for (ImageRef r = 0; r < corpus.size(); ++r) {
    const bool unseen = split_spec.unseen_category_ids.count(corpus.image(r).category_id) > 0;
    (unseen ? result.unseen_pool : result.train_pool).push_back(r);
  }
  return result;
}

std::array<double, 3> channel_means(const Corpus& corpus, const std::vector<ImageRef>& pool) {
  if (pool.empty()) throw ValidationError("channel_means: empty pool");
  std::array<double, 3> means{0.0, 0.0, 0.0};
  const std::size_t hw = static_cast<std::size_t>(corpus.spec().image_size) *
                         corpus.spec().image_size;
  for (ImageRef r : pool) {
    const Tensor& pix = corpus.image(r).pixels;
    for (std::size_t c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < hw; ++i) sum += pix[c * hw + i];
      means[c] += sum / static_cast<double>(hw);
    }
  }
  for (double& m : means) m /= static_cast<double>(pool.size());
  return means;
}

Tensor preprocess(const LabeledImage& image, const std::array<double, 3>& means) {
  Tensor out = image.pixels;
  const std::size_t hw = out.size() / 3;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] -= means[c];
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  const CorpusSpec& spec = corpus.spec();
  out.write(kCorpusMagic, 4);
  write_u32(out, kCorpusVersion);
  write_u32(out, spec.num_categories);
  write_u32(out, spec.num_properties);
  write_u32(out, spec.exemplars_per_cell);
  write_u32(out, spec.image_size);
  write_u32(out, spec.image_size);
  write_u32(out, spec.channels);
  write_u64(out, spec.seed);
  std::vector<unsigned char> bytes;
  for (ImageRef r = 0; r < corpus.size(); ++r) {
    const LabeledImage& img = corpus.image(r);
    write_u64(out, img.render_seed);
    bytes.resize(img.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      bytes[i] = static_cast<unsigned char>(std::lround(img.pixels[i] * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw IoError("write failed: " + path);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  char magic[4];
  read_exact(in, magic, 4, "corpus magic");
  if (std::memcmp(magic, kCorpusMagic, 4) != 0) {
    throw FormatError("not a corpus file (bad magic): " + path);
  }
  const std::uint32_t version = read_u32(in, "corpus version");
  if (version != kCorpusVersion) {
    throw VersionError("unsupported corpus version " + std::to_string(version) +
                       " (expected " + std::to_string(kCorpusVersion) + ")");
  }
  CorpusSpec spec;
  spec.num_categories = read_u32(in, "num_categories");
  spec.num_properties = read_u32(in, "num_properties");
  spec.exemplars_per_cell = read_u32(in, "exemplars_per_cell");
  const std::uint32_t height = read_u32(in, "image height");
  const std::uint32_t width = read_u32(in, "image width");
  spec.channels = read_u32(in, "channels");
  if (height != width) throw FormatError("corpus images must be square");
  spec.image_size = height;
  spec.seed = read_u64(in, "corpus seed");
  validate(spec);

  const std::size_t count = static_cast<std::size_t>(spec.num_categories) *
                            spec.num_properties * spec.exemplars_per_cell;
  const std::size_t pixel_count =
      static_cast<std::size_t>(spec.channels) * height * width;
  std::vector<LabeledImage> images;
  images.reserve(count);
  std::vector<unsigned char> bytes(pixel_count);
  for (std::uint32_t c = 0; c < spec.num_categories; ++c) {
    for (std::uint32_t p = 0; p < spec.num_properties; ++p) {
      for (std::uint32_t e = 0; e < spec.exemplars_per_cell; ++e) {
        LabeledImage img;
        img.category_id = c;
        img.property_id = p;
        img.exemplar_id = e;
        img.render_seed = read_u64(in, "image render seed");
        read_exact(in, bytes.data(), bytes.size(), "image pixels");
        img.pixels = Tensor({spec.channels, height, width});
        for (std::size_t i = 0; i < pixel_count; ++i) {
          img.pixels[i] = static_cast<double>(bytes[i]) / 255.0;
        }
        images.push_back(std::move(img));
      }
    }
  }
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) throw FormatError("trailing bytes after corpus payload: " + path);
  return Corpus(spec, std::move(images));
}

}  // namespace vsl
