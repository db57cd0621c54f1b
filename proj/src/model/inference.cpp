#include "smoe/model/inference.hpp"

#include "smoe/error.hpp"
#include "smoe/numerics/tape.hpp"

namespace smoe::model {

namespace {

TokenId argmax_row(const Tensor& logits, std::size_t row) {
  const auto v = logits.cols();
  const auto data = logits.data().subspan(row * v, v);
  std::size_t best = 0;
  for (std::size_t j = 1; j < v; ++j) {
    if (data[j] > data[best]) best = j;
  }
  return static_cast<TokenId>(best);
}

}  // namespace

std::vector<Hypothesis> infer_batch(Model& model, const signal::FbankFeatures& features, Bandwidth bw,
                                    const std::vector<DecodeRequest>& rows, std::size_t max_len) {
  if (rows.empty()) throw ContractError("infer_batch: no rows requested");
  const auto limit = model.config().max_tgt_tokens;
  if (max_len == 0 || max_len + seqio::kGuidePrefixLength - 1 > limit) {
    throw LimitError("infer_batch: max_len must leave room for the guiding prefix within max_tgt_tokens");
  }
  num::NoGradScope no_grad;
  const auto ctx = ForwardContext::eval();
  const Bandwidth bws[] = {bw};
  const auto memory = model.encode({features.frames}, bws, ctx);

  std::vector<std::vector<TokenId>> seqs;
  std::vector<Task> tasks;
  for (const auto& r : rows) {
    seqs.push_back(seqio::guide_prefix(r.task, r.language));
    tasks.push_back(r.task);
  }
  const std::vector<std::size_t> memory_of_row(rows.size(), 0);
  std::vector<Hypothesis> out(rows.size());
  std::vector<bool> done(rows.size(), false);
  std::size_t n_done = 0;
  for (std::size_t step = 0; step < max_len && n_done < rows.size(); ++step) {
    const auto logits = model.decode(memory, memory_of_row, seqs, tasks, ctx);
    std::size_t offset = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      offset += seqs[r].size();
      const auto next = argmax_row(logits, offset - 1);
      seqs[r].push_back(next);
      if (done[r]) continue;
      if (next == seqio::id_of(seqio::GuidingToken::EOS)) {
        done[r] = true;
        ++n_done;
      } else {
        out[r].ids.push_back(next);
      }
    }
  }
  for (std::size_t r = 0; r < rows.size(); ++r) out[r].truncated = !done[r];
  return out;
}

Hypothesis infer_single(Model& model, const signal::FbankFeatures& features, Bandwidth bw, Task task,
                        seqio::Language language, std::size_t max_len) {
  return infer_batch(model, features, bw, {{task, language}}, max_len).front();
}

DualHypothesis infer_dual(Model& model, const signal::FbankFeatures& features, Bandwidth bw,
                          std::size_t max_len, seqio::Language asr_language, seqio::Language st_language) {
  auto rows = infer_batch(model, features, bw, {{Task::ASR, asr_language}, {Task::ST, st_language}}, max_len);
  return {std::move(rows[0]), std::move(rows[1])};
}

}  // namespace smoe::model
