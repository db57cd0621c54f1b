#include "smoe/metrics/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>

#include "smoe/error.hpp"

namespace smoe::metrics {

Tokens split_whitespace(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

WerResult wer(const Tokens& reference, const Tokens& hypothesis) {
  if (reference.empty()) throw ContractError("WER is undefined for an empty reference");
  const auto n = reference.size(), m = hypothesis.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      d[i][j] = std::min({sub, d[i][j - 1] + 1, d[i - 1][j] + 1});
    }
  }
  WerResult out;
  out.alignment.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1)) {
      if (reference[i - 1] != hypothesis[j - 1]) ++out.alignment.substitutions;
      --i;
      --j;
    } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
      ++out.alignment.insertions;
      --j;
    } else {
      ++out.alignment.deletions;
      --i;
    }
  }
  out.rate = static_cast<double>(d[n][m]) / static_cast<double>(n);
  return out;
}

namespace {

std::map<Tokens, std::size_t> ngram_counts(const Tokens& t, std::size_t order) {
  std::map<Tokens, std::size_t> counts;
  if (t.size() < order) return counts;
  for (std::size_t i = 0; i + order <= t.size(); ++i) {
    ++counts[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i),
                    t.begin() + static_cast<std::ptrdiff_t>(i + order))];
  }
  return counts;
}

}  // namespace

BleuResult bleu(const std::vector<Tokens>& references, const Tokens& hypothesis,
                const BleuOptions& options) {
  if (references.empty()) throw ContractError("BLEU needs at least one reference");
  if (options.max_n < 1) throw ConfigError("BLEU max_n must be >= 1");
  BleuResult out;
  out.hypothesis_length = hypothesis.size();
  const auto h = hypothesis.size();
  out.reference_length = references.front().size();
  for (const auto& r : references) {
    const auto diff = [&](std::size_t len) { return len > h ? len - h : h - len; };
    if (diff(r.size()) < diff(out.reference_length) ||
        (diff(r.size()) == diff(out.reference_length) && r.size() < out.reference_length)) {
      out.reference_length = r.size();
    }
  }
  if (h == 0) {
    out.empty_hypothesis = true;
    out.precisions.assign(static_cast<std::size_t>(options.max_n), 0.0);
    out.brevity_penalty = 0.0;
    return out;
  }

  double log_sum = 0.0;
  bool any_zero = false;
  for (int n = 1; n <= options.max_n; ++n) {
    const auto order = static_cast<std::size_t>(n);
    const auto hyp_counts = ngram_counts(hypothesis, order);
    std::map<Tokens, std::size_t> max_ref;
    for (const auto& r : references) {
      for (const auto& [gram, c] : ngram_counts(r, order)) max_ref[gram] = std::max(max_ref[gram], c);
    }
    double matched = 0.0, total = 0.0;
    for (const auto& [gram, c] : hyp_counts) {
      auto it = max_ref.find(gram);
      matched += static_cast<double>(std::min(c, it == max_ref.end() ? 0 : it->second));
      total += static_cast<double>(c);
    }
    if (options.smooth_k > 0.0 && n > 1) {
      matched += options.smooth_k;
      total += options.smooth_k;
    }
    const double p = total > 0.0 ? matched / total : 0.0;
    out.precisions.push_back(p);
    if (p <= 0.0) any_zero = true;
    else log_sum += std::log(p);
  }
  out.brevity_penalty =
      std::exp(std::min(0.0, 1.0 - static_cast<double>(out.reference_length) / static_cast<double>(h)));
  if (any_zero) return out;
  out.score = 100.0 * out.brevity_penalty * std::exp(log_sum / options.max_n);
  return out;
}

double token_accuracy(const Tokens& reference, const Tokens& hypothesis) {
  const auto denom = std::max(reference.size(), hypothesis.size());
  if (denom == 0) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(reference.size(), hypothesis.size()); ++i) {
    if (reference[i] == hypothesis[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(denom);
}

}  // namespace smoe::metrics
