#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smoe/moe/gating.hpp"
#include "smoe/seqio/vocab.hpp"

namespace smoe::seqio {

using moe::Task;

enum class Language { EN, KO };

std::string to_string(Language lang);
Language parse_language(const std::string& s);

TokenId task_tag(Task task);
TokenId language_tag(Language lang);

// [task tag, language tag, BOS] ++ text ids ++ [EOS].
struct TargetSequence {
  Task task = Task::ASR;
  Language language = Language::KO;
  std::vector<TokenId> ids;
};

constexpr std::size_t kGuidePrefixLength = 3;

std::vector<TokenId> guide_prefix(Task task, Language lang);

TargetSequence build_target_sequence(Task task, Language lang, std::string_view text,
                                     const Vocabulary& vocab);
// Same, with the language given as a label ("en" / "ko").
TargetSequence build_target_sequence(Task task, const std::string& lang, std::string_view text,
                                     const Vocabulary& vocab);

// Task named by the leading task tag; MalformedSequenceError otherwise.
Task task_of(std::span<const TokenId> ids);
inline Task task_of(const TargetSequence& seq) { return task_of(seq.ids); }

// Throws MalformedSequenceError unless the guiding layout holds.
void validate(const TargetSequence& seq);

// Drops every reserved (guiding) id.
std::vector<TokenId> strip_guides(std::span<const TokenId> ids);

}  // namespace smoe::seqio
