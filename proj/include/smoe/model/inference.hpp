#pragma once

#include <vector>

#include "smoe/model/model.hpp"

namespace smoe::model {

// Generated ids after the guiding prefix, EOS excluded.
struct Hypothesis {
  std::vector<TokenId> ids;
  bool truncated = false;  // max_len reached without EOS
};

struct DualHypothesis {
  Hypothesis asr;
  Hypothesis st;
};

struct DecodeRequest {
  Task task = Task::ASR;
  seqio::Language language = seqio::Language::KO;
};

// Greedy decoding of several prefixed rows against one utterance. Every row is
// advanced at every step until all rows have emitted EOS or produced max_len
// tokens; rows are routed to their task's decoder expert.
std::vector<Hypothesis> infer_batch(Model& model, const signal::FbankFeatures& features, Bandwidth bw,
                                    const std::vector<DecodeRequest>& rows, std::size_t max_len);

Hypothesis infer_single(Model& model, const signal::FbankFeatures& features, Bandwidth bw, Task task,
                        seqio::Language language, std::size_t max_len);

// Two-row batch: ASR primed with `asr_language`, ST with `st_language`.
DualHypothesis infer_dual(Model& model, const signal::FbankFeatures& features, Bandwidth bw,
                          std::size_t max_len, seqio::Language asr_language = seqio::Language::KO,
                          seqio::Language st_language = seqio::Language::EN);

}  // namespace smoe::model
