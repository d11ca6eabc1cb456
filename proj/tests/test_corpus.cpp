#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "vsl/corpus.hpp"
#include "vsl/rng.hpp"

using namespace vsl;

namespace {

CorpusSpec small_spec() {
  CorpusSpec spec;
  spec.num_categories = 4;
  spec.num_properties = 4;
  spec.exemplars_per_cell = 2;
  spec.image_size = 16;
  spec.seed = 77;
  return spec;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("vsl_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("render_image is a pure function of its arguments") {
  const CorpusSpec spec = small_spec();
  const LabeledImage a = render_image(spec, 1, 2, 0);
  const LabeledImage b = render_image(spec, 1, 2, 0);
  CHECK(a.pixels == b.pixels);
  CHECK(a.render_seed == b.render_seed);

  // different exemplar seed: same labels, different pixels
  const LabeledImage c = render_image(spec, 1, 2, 1);
  CHECK(c.category_id == a.category_id);
  CHECK(c.property_id == a.property_id);
  CHECK_FALSE(c.pixels == a.pixels);
}

TEST_CASE("render_image rejects out-of-range ids") {
  const CorpusSpec spec = small_spec();
  CHECK_THROWS_AS(render_image(spec, 4, 0, 0), ValidationError);
  CHECK_THROWS_AS(render_image(spec, 0, 4, 0), ValidationError);
}

TEST_CASE("pixels stay in [0,1] across many renders") {
  CorpusSpec spec = small_spec();
  spec.jitter.noise_amplitude = 0.2;  // push the clamping paths
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const auto img = render_image(spec, static_cast<std::uint32_t>(rng.uniform_index(4)),
                                  static_cast<std::uint32_t>(rng.uniform_index(4)),
                                  static_cast<std::uint32_t>(rng.uniform_index(1000)));
    double lo = 1e300, hi = -1e300;
    for (double v : img.pixels.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    REQUIRE(lo >= 0.0);
    REQUIRE(hi <= 1.0);
  }
}

TEST_CASE("distinct categories and properties change the rendering") {
  const CorpusSpec spec = small_spec();
  const LabeledImage base = render_image(spec, 0, 0, 0);
  for (std::uint32_t c = 1; c < spec.num_categories; ++c) {
    CHECK_FALSE(render_image(spec, c, 0, 0).pixels == base.pixels);
  }
  for (std::uint32_t p = 1; p < spec.num_properties; ++p) {
    CHECK_FALSE(render_image(spec, 0, p, 0).pixels == base.pixels);
  }
}

TEST_CASE("generate_corpus fills the whole grid deterministically") {
  CorpusSpec spec = small_spec();
  const Corpus corpus = generate_corpus(spec);
  CHECK(corpus.size() == 4 * 4 * 2);

  const Corpus again = generate_corpus(spec);
  CHECK(corpus == again);

  for (std::uint32_t c = 0; c < 4; ++c) {
    for (std::uint32_t p = 0; p < 4; ++p) {
      const auto cell = corpus.cell(c, p);
      CHECK(cell.size() == 2);
      for (ImageRef r : cell) {
        CHECK(corpus.image(r).category_id == c);
        CHECK(corpus.image(r).property_id == p);
      }
    }
  }

  spec.seed = 78;
  CHECK_FALSE(generate_corpus(spec) == corpus);
}

TEST_CASE("spec validation rejects degenerate grids") {
  CorpusSpec spec = small_spec();
  spec.num_categories = 1;
  CHECK_THROWS_AS(validate(spec), ValidationError);
  spec = small_spec();
  spec.num_properties = 1;
  CHECK_THROWS_AS(validate(spec), ValidationError);
  spec = small_spec();
  spec.exemplars_per_cell = 0;
  CHECK_THROWS_AS(validate(spec), ValidationError);
  spec = small_spec();
  spec.image_size = 10;  // not divisible by 4
  CHECK_THROWS_AS(validate(spec), ValidationError);
}

TEST_CASE("make_splits removes unseen categories from the train pool") {
  CorpusSpec spec = small_spec();
  const Corpus corpus = generate_corpus(spec);
  const SplitSpec split_spec = make_split_spec(spec, 1, 3, 5);
  CHECK(split_spec.unseen_category_ids.size() == 1);
  CHECK(split_spec.heldout_analogy_types.size() == 3);

  const SplitResult splits = make_splits(corpus, split_spec);
  CHECK(splits.train_pool.size() == 3 * 4 * 2);
  CHECK(splits.unseen_pool.size() == 1 * 4 * 2);
  CHECK(splits.train_categories.size() == 3);
  for (ImageRef r : splits.train_pool) {
    CHECK_FALSE(split_spec.unseen_category_ids.count(corpus.image(r).category_id));
  }
  // held-out types are drawn over training categories only
  for (const AnalogyType& t : splits.heldout_types) {
    CHECK_FALSE(split_spec.unseen_category_ids.count(t.c_in));
    CHECK_FALSE(split_spec.unseen_category_ids.count(t.c_out));
    CHECK(t.c_in != t.c_out);
    CHECK(t.p_first != t.p_second);
  }
}

TEST_CASE("empty split spec keeps the full corpus as the train pool") {
  const Corpus corpus = generate_corpus(small_spec());
  const SplitResult splits = make_splits(corpus, SplitSpec{});
  CHECK(splits.train_pool.size() == corpus.size());
  CHECK(splits.unseen_pool.empty());
  CHECK(splits.heldout_types.empty());
}

TEST_CASE("make_splits rejects inconsistent specs") {
  const Corpus corpus = generate_corpus(small_spec());
  SplitSpec bad;
  bad.unseen_category_ids = {9};
  CHECK_THROWS_AS(make_splits(corpus, bad), ValidationError);

  SplitSpec bad_type;
  bad_type.heldout_analogy_types.insert(AnalogyType{0, 0, 1, 2});  // c_in == c_out
  CHECK_THROWS_AS(make_splits(corpus, bad_type), ValidationError);

  SplitSpec too_many;
  too_many.unseen_category_ids = {0, 1, 2};
  CHECK_THROWS_AS(make_splits(corpus, too_many), ValidationError);

  CHECK_THROWS_AS(make_split_spec(small_spec(), 3, 0, 1), ValidationError);
}

TEST_CASE("channel means come from the pool and preprocessing subtracts them") {
  const Corpus corpus = generate_corpus(small_spec());
  const SplitResult all = make_splits(corpus, SplitSpec{});
  const auto means = channel_means(corpus, all.train_pool);
  for (double m : means) {
    CHECK(m > 0.0);
    CHECK(m < 1.0);
  }
  const Tensor pre = preprocess(corpus.image(0), means);
  const std::size_t hw = pre.size() / 3;
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(pre[c * hw] == corpus.image(0).pixels[c * hw] - means[c]);
  }
}

TEST_CASE("corpus file round-trips field for field") {
  const Corpus corpus = generate_corpus(small_spec());
  TempFile file("roundtrip.vslc");
  save_corpus(corpus, file.path);
  const Corpus loaded = load_corpus(file.path);
  CHECK(corpus == loaded);
  CHECK(loaded.spec().seed == corpus.spec().seed);
}

TEST_CASE("corpus load rejects corrupted magic") {
  const Corpus corpus = generate_corpus(small_spec());
  TempFile file("badmagic.vslc");
  save_corpus(corpus, file.path);
  {
    std::fstream f(file.path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("NOPE", 4);
  }
  CHECK_THROWS_AS(load_corpus(file.path), FormatError);
}

TEST_CASE("corpus load rejects newer versions") {
  const Corpus corpus = generate_corpus(small_spec());
  TempFile file("badver.vslc");
  save_corpus(corpus, file.path);
  {
    std::fstream f(file.path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v2[4] = {2, 0, 0, 0};
    f.write(v2, 4);
  }
  CHECK_THROWS_AS(load_corpus(file.path), VersionError);
}

TEST_CASE("corpus load reports truncation") {
  const Corpus corpus = generate_corpus(small_spec());
  TempFile file("trunc.vslc");
  save_corpus(corpus, file.path);
  std::ifstream in(file.path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::ofstream out(file.path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  out.close();
  CHECK_THROWS_AS(load_corpus(file.path), TruncationError);
}

TEST_CASE("missing corpus file raises IoError") {
  CHECK_THROWS_AS(load_corpus("does_not_exist.vslc"), IoError);
}

}  // TEST_SUITE
