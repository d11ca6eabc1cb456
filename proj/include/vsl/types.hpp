#pragma once

#include <cstdint>
#include <tuple>

namespace vsl {

// Index of an image inside a Corpus, in (category, property, exemplar)
// lexicographic order.
using ImageRef = std::uint32_t;

// Ordered label template (c_i, c_o, p_1, p_2) naming a family of analogy
// quadruples: category c_i transforms p_1 -> p_2, replicated by c_o.
struct AnalogyType {
  std::uint32_t c_in = 0;
  std::uint32_t c_out = 0;
  std::uint32_t p_first = 0;
  std::uint32_t p_second = 0;

  friend bool operator==(const AnalogyType& a, const AnalogyType& b) {
    return a.c_in == b.c_in && a.c_out == b.c_out && a.p_first == b.p_first &&
           a.p_second == b.p_second;
  }
  friend bool operator<(const AnalogyType& a, const AnalogyType& b) {
    return std::tie(a.c_in, a.c_out, a.p_first, a.p_second) <
           std::tie(b.c_in, b.c_out, b.p_first, b.p_second);
  }
};

}  // namespace vsl
