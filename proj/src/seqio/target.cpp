#include "smoe/seqio/target.hpp"

#include <algorithm>

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::seqio {

std::string to_string(Language lang) { return lang == Language::EN ? "en" : "ko"; }

Language parse_language(const std::string& s) {
  if (s == "en" || s == "EN") return Language::EN;
  if (s == "ko" || s == "KO") return Language::KO;
  throw ConfigError("unknown language label `" + s + "` (expected en or ko)");
}

TokenId task_tag(Task task) {
  return id_of(task == Task::ASR ? GuidingToken::TRANSCRIBE : GuidingToken::TRANSLATE);
}

TokenId language_tag(Language lang) {
  return id_of(lang == Language::EN ? GuidingToken::LANG_EN : GuidingToken::LANG_KO);
}

std::vector<TokenId> guide_prefix(Task task, Language lang) {
  return {task_tag(task), language_tag(lang), id_of(GuidingToken::BOS)};
}

TargetSequence build_target_sequence(Task task, Language lang, std::string_view text,
                                     const Vocabulary& vocab) {
  TargetSequence seq{task, lang, guide_prefix(task, lang)};
  const auto body = vocab.encode(text);
  seq.ids.insert(seq.ids.end(), body.begin(), body.end());
  seq.ids.push_back(id_of(GuidingToken::EOS));
  return seq;
}

TargetSequence build_target_sequence(Task task, const std::string& lang, std::string_view text,
                                     const Vocabulary& vocab) {
  return build_target_sequence(task, parse_language(lang), text, vocab);
}

Task task_of(std::span<const TokenId> ids) {
  if (ids.empty()) throw MalformedSequenceError("empty target sequence has no task tag");
  if (ids[0] == id_of(GuidingToken::TRANSCRIBE)) return Task::ASR;
  if (ids[0] == id_of(GuidingToken::TRANSLATE)) return Task::ST;
  throw MalformedSequenceError(fmt::format("sequence starts with id {}, not a task tag", ids[0]));
}

void validate(const TargetSequence& seq) {
  const auto& ids = seq.ids;
  if (ids.size() < kGuidePrefixLength + 1) {
    throw MalformedSequenceError("target sequence shorter than its guiding prefix plus EOS");
  }
  if (task_of(ids) != seq.task) throw MalformedSequenceError("task tag disagrees with task label");
  if (ids[1] != language_tag(seq.language)) {
    throw MalformedSequenceError("second id is not the language tag");
  }
  if (ids[2] != id_of(GuidingToken::BOS)) throw MalformedSequenceError("third id is not BOS");
  if (ids.back() != id_of(GuidingToken::EOS)) throw MalformedSequenceError("last id is not EOS");
  const auto pad = id_of(GuidingToken::PAD);
  if (std::find(ids.begin(), ids.end(), pad) != ids.end()) {
    throw MalformedSequenceError("PAD inside a target sequence");
  }
}

std::vector<TokenId> strip_guides(std::span<const TokenId> ids) {
  std::vector<TokenId> out;
  for (auto id : ids) {
    if (!is_reserved(id)) out.push_back(id);
  }
  return out;
}

}  // namespace smoe::seqio
