#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cae/tensor.hpp"
#include "cae/text_data.hpp"

namespace cae::testing {

// Template grammar for the synthetic style-transfer benchmark: every
// sentence is "[the] NOUN VERB ADVERB MARKER" with Zipf-weighted slot draws.
// The content slots are shared between the two styles while the marker
// inventories are disjoint, so a faithful rewrite only has to swap the
// marker: the style is fully decided by one word and BLEU against the source
// measures how much content survived.

inline const std::vector<std::string>& synthetic_nouns() {
  static const std::vector<std::string> words{"cat",  "dog",   "bird", "horse", "fish", "mouse",
                                              "lion", "tiger", "bear", "wolf",  "fox",  "deer"};
  return words;
}

inline const std::vector<std::string>& synthetic_verbs() {
  static const std::vector<std::string> words{"sees",    "likes",   "finds",
                                              "follows", "watches", "greets"};
  return words;
}

inline const std::vector<std::string>& synthetic_adverbs() {
  static const std::vector<std::string> words{"quickly", "slowly",  "calmly",
                                              "happily", "quietly", "bravely"};
  return words;
}

inline const std::vector<std::string>& synthetic_markers(StyleLabel style) {
  static const std::vector<std::string> s1{"somber", "gloomy", "bleak", "dreary", "mournful"};
  static const std::vector<std::string> s2{"cheerful", "sunny", "bright", "joyful", "gleeful"};
  return style == StyleLabel::s1 ? s1 : s2;
}

// Zipf-weighted draw: the k-th word of a slot gets weight 1/(k+1). The
// skewed marginals are what make the benchmark solvable: each word's
// frequency is a fingerprint shared by both corpora, so matching the other
// style's latent distribution singles out the content-preserving rewrite.
// Under uniform slots every permutation of a slot's words would match the
// distribution equally well and the adversaries could not pin content down.
inline const std::string& zipf_pick(const std::vector<std::string>& words, std::uint64_t& state) {
  double total = 0.0;
  for (std::size_t k = 0; k < words.size(); ++k) total += 1.0 / static_cast<double>(k + 1);
  double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * total;
  for (std::size_t k = 0; k < words.size(); ++k) {
    u -= 1.0 / static_cast<double>(k + 1);
    if (u < 0.0) return words[k];
  }
  return words.back();
}

// One sentence: "the" with probability 1/2, then one Zipf draw per slot.
inline std::string synthetic_sentence(StyleLabel style, std::uint64_t& state) {
  std::string line;
  if (splitmix64(state) & 1) line += "the ";
  line += zipf_pick(synthetic_nouns(), state);
  line += ' ';
  line += zipf_pick(synthetic_verbs(), state);
  line += ' ';
  line += zipf_pick(synthetic_adverbs(), state);
  line += ' ';
  line += zipf_pick(synthetic_markers(style), state);
  return line;
}

inline std::vector<std::string> synthetic_corpus(StyleLabel style, std::size_t count,
                                                 std::uint64_t seed) {
  std::uint64_t state = seed;
  std::vector<std::string> lines;
  lines.reserve(count);
  for (std::size_t i = 0; i < count; ++i) lines.push_back(synthetic_sentence(style, state));
  return lines;
}

}  // namespace cae::testing
