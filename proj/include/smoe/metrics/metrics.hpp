#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace smoe::metrics {

using Tokens = std::vector<std::string>;

Tokens split_whitespace(std::string_view text);

struct EditAlignment {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
};

struct WerResult {
  double rate = 0.0;
  EditAlignment alignment;
};

// (S + D + I) / N over a minimum-cost alignment with unit costs. Among
// optimal alignments the backtrace prefers substitution, then insertion, then
// deletion; the rate itself does not depend on that choice.
WerResult wer(const Tokens& reference, const Tokens& hypothesis);

struct BleuOptions {
  int max_n = 4;
  // Add-k smoothing on orders >= 2; 0 disables smoothing.
  double smooth_k = 0.0;
};

struct BleuResult {
  double score = 0.0;  // 0..100
  std::vector<double> precisions;
  double brevity_penalty = 1.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
  bool empty_hypothesis = false;
};

// Sentence BLEU: geometric mean of clipped n-gram precisions times
// exp(min(0, 1 - r/h)), r being the closest reference length (shorter on ties).
BleuResult bleu(const std::vector<Tokens>& references, const Tokens& hypothesis,
                const BleuOptions& options = {});

// Fraction of reference positions whose token is reproduced at the same
// position, normalised by the longer of the two sequences.
double token_accuracy(const Tokens& reference, const Tokens& hypothesis);

}  // namespace smoe::metrics
