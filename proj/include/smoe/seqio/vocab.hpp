#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace smoe::seqio {

using TokenId = std::int32_t;

// Reserved ids. 7..15 are held back for future special tokens and are never
// emitted; byte b is id kByteBase + b; merge k is id kMergeBase + k.
enum class GuidingToken : TokenId {
  PAD = 0,
  BOS = 1,
  EOS = 2,
  TRANSCRIBE = 3,
  TRANSLATE = 4,
  LANG_EN = 5,
  LANG_KO = 6,
};

constexpr TokenId kReservedCount = 16;
constexpr TokenId kByteBase = kReservedCount;
constexpr TokenId kMergeBase = kByteBase + 256;

constexpr TokenId id_of(GuidingToken t) { return static_cast<TokenId>(t); }
constexpr bool is_reserved(TokenId id) { return id >= 0 && id < kReservedCount; }

// Byte-level BPE vocabulary: reserved ids, 256 byte ids, then merges in rank
// order. Immutable once built.
class Vocabulary {
 public:
  using Merge = std::pair<std::string, std::string>;

  Vocabulary();
  explicit Vocabulary(std::vector<Merge> merges);

  std::size_t size() const { return static_cast<std::size_t>(kMergeBase) + merges_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }

  std::vector<TokenId> encode(std::string_view text) const;
  // Reserved ids are skipped; ids beyond the vocabulary are an IndexError.
  std::string decode(std::span<const TokenId> ids) const;
  const std::string& piece(TokenId id) const;

  std::string to_text() const;
  static Vocabulary from_text(std::string_view text);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<Merge> merges_;
  std::vector<std::string> pieces_;  // indexed by id - kByteBase
  std::map<std::pair<TokenId, TokenId>, TokenId> merge_ids_;
};

// Greedy BPE: repeatedly merge the most frequent adjacent pair, ties broken by
// the lexicographic order of the pair's byte strings. Stops early when no
// pair is left.
Vocabulary train_bpe(const std::vector<std::string>& corpus, std::int64_t n_merges);

}  // namespace smoe::seqio
