#include "smoe/seqio/vocab.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::seqio {

namespace {

constexpr std::string_view kHeaderPrefix = "smoe-vocab v1 merges=";

std::string hex_escape(const std::string& bytes) {
  std::string out;
  for (unsigned char c : bytes) out += fmt::format("{:02x}", c);
  return out;
}

std::string hex_unescape(std::string_view hex) {
  if (hex.empty() || hex.size() % 2 != 0) throw FormatError(fmt::format("bad hex field `{}`", hex));
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    unsigned value = 0;
    for (std::size_t j = i; j < i + 2; ++j) {
      const char c = hex[j];
      value <<= 4;
      if (c >= '0' && c <= '9') value |= static_cast<unsigned>(c - '0');
      else if (c >= 'a' && c <= 'f') value |= static_cast<unsigned>(c - 'a' + 10);
      else if (c >= 'A' && c <= 'F') value |= static_cast<unsigned>(c - 'A' + 10);
      else throw FormatError(fmt::format("bad hex field `{}`", hex));
    }
    out += static_cast<char>(value);
  }
  return out;
}

// Merges the leftmost non-overlapping occurrences of (a, b) into `merged`.
void apply_merge(std::vector<TokenId>& seq, TokenId a, TokenId b, TokenId merged) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < seq.size(); ++r) {
    if (r + 1 < seq.size() && seq[r] == a && seq[r + 1] == b) {
      seq[w++] = merged;
      ++r;
    } else {
      seq[w++] = seq[r];
    }
  }
  seq.resize(w);
}

std::vector<TokenId> bytes_to_ids(std::string_view text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(kByteBase + c);
  return ids;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<Merge>{}) {}

Vocabulary::Vocabulary(std::vector<Merge> merges) : merges_(std::move(merges)) {
  pieces_.reserve(256 + merges_.size());
  std::map<std::string, TokenId> id_of_piece;
  for (int b = 0; b < 256; ++b) {
    pieces_.emplace_back(1, static_cast<char>(b));
    id_of_piece[pieces_.back()] = kByteBase + b;
  }
  for (std::size_t k = 0; k < merges_.size(); ++k) {
    const auto& [left, right] = merges_[k];
    auto l = id_of_piece.find(left);
    auto r = id_of_piece.find(right);
    if (l == id_of_piece.end() || r == id_of_piece.end()) {
      throw FormatError(fmt::format("merge {} refers to a piece not yet in the vocabulary", k));
    }
    const TokenId id = kMergeBase + static_cast<TokenId>(k);
    if (merge_ids_.count({l->second, r->second})) {
      throw FormatError(fmt::format("merge {} duplicates an earlier rule", k));
    }
    merge_ids_[{l->second, r->second}] = id;
    pieces_.push_back(left + right);
    id_of_piece.emplace(pieces_.back(), id);
  }
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  auto seq = bytes_to_ids(text);
  // Lowest-id merge first: merge ids grow with rank.
  while (seq.size() > 1) {
    TokenId best = std::numeric_limits<TokenId>::max();
    std::pair<TokenId, TokenId> best_pair;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      auto it = merge_ids_.find({seq[i], seq[i + 1]});
      if (it != merge_ids_.end() && it->second < best) {
        best = it->second;
        best_pair = it->first;
      }
    }
    if (best == std::numeric_limits<TokenId>::max()) break;
    apply_merge(seq, best_pair.first, best_pair.second, best);
  }
  return seq;
}

const std::string& Vocabulary::piece(TokenId id) const {
  if (id < kByteBase || static_cast<std::size_t>(id) >= size()) {
    throw IndexError(fmt::format("token id {} has no byte piece (vocabulary size {})", id, size()));
  }
  return pieces_[static_cast<std::size_t>(id - kByteBase)];
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (auto id : ids) {
    if (is_reserved(id)) continue;
    out += piece(id);
  }
  return out;
}

std::string Vocabulary::to_text() const {
  std::string out = fmt::format("{}{}\n", kHeaderPrefix, merges_.size());
  for (const auto& [l, r] : merges_) out += hex_escape(l) + "\t" + hex_escape(r) + "\n";
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind(kHeaderPrefix, 0) != 0) {
    throw FormatError("vocabulary: missing `smoe-vocab v1` header");
  }
  std::size_t expected = 0;
  try {
    expected = std::stoul(line.substr(kHeaderPrefix.size()));
  } catch (const std::exception&) {
    throw FormatError("vocabulary: bad merge count in header");
  }
  std::vector<Merge> merges;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("vocabulary: merge line without a tab");
    merges.emplace_back(hex_unescape(std::string_view(line).substr(0, tab)),
                        hex_unescape(std::string_view(line).substr(tab + 1)));
  }
  if (merges.size() != expected) {
    throw FormatError(fmt::format("vocabulary: header promises {} merges, found {}", expected,
                                  merges.size()));
  }
  return Vocabulary(std::move(merges));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path);
  out << to_text();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

Vocabulary train_bpe(const std::vector<std::string>& corpus, std::int64_t n_merges) {
  if (n_merges < 0) throw ConfigError(fmt::format("n_merges must be >= 0, got {}", n_merges));
  if (corpus.empty()) throw ConfigError("train_bpe: empty corpus");
  std::vector<std::vector<TokenId>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& s : corpus) seqs.push_back(bytes_to_ids(s));

  std::vector<std::string> pieces;
  for (int b = 0; b < 256; ++b) pieces.emplace_back(1, static_cast<char>(b));
  auto piece_of = [&](TokenId id) -> const std::string& {
    return pieces[static_cast<std::size_t>(id - kByteBase)];
  };

  std::vector<Vocabulary::Merge> merges;
  for (std::int64_t k = 0; k < n_merges; ++k) {
    std::map<std::pair<TokenId, TokenId>, std::size_t> counts;
    for (const auto& s : seqs) {
      for (std::size_t i = 0; i + 1 < s.size(); ++i) ++counts[{s[i], s[i + 1]}];
    }
    if (counts.empty()) break;
    const std::pair<TokenId, TokenId>* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [pair, count] : counts) {
      if (!best || count > best_count ||
          (count == best_count &&
           std::make_pair(piece_of(pair.first), piece_of(pair.second)) <
               std::make_pair(piece_of(best->first), piece_of(best->second)))) {
        best = &pair;
        best_count = count;
      }
    }
    const auto [a, b] = *best;
    const TokenId merged = kMergeBase + static_cast<TokenId>(merges.size());
    merges.emplace_back(piece_of(a), piece_of(b));
    pieces.push_back(piece_of(a) + piece_of(b));
    for (auto& s : seqs) apply_merge(s, a, b, merged);
  }
  return Vocabulary(std::move(merges));
}

}  // namespace smoe::seqio
