#ifndef HNETPP_TRAINER_HPP
#define HNETPP_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hnetpp/checkpoint.hpp"
#include "hnetpp/config.hpp"
#include "hnetpp/curriculum.hpp"
#include "hnetpp/model.hpp"
#include "hnetpp/optim.hpp"
#include "hnetpp/utf8.hpp"

namespace hnetpp {

/// The window of `length` bytes at `offset` in `doc`, moved back to a
/// codepoint start and trimmed to whole codepoints, with gold offsets shifted
/// and ZWNJ flags recomputed on the cropped bytes. At least one codepoint is
/// always kept.
inline ByteSequence crop_document(const ByteSequence& doc, std::size_t offset, std::size_t length) {
  if (offset >= doc.size()) throw DataError("crop_document: offset past end of " + doc.doc_id);
  std::size_t begin = offset;
  while (begin > 0 && utf8::is_continuation(doc.bytes[begin])) --begin;
  std::size_t end = std::min(doc.size(), begin + length);
  while (end < doc.size() && end > begin && utf8::is_continuation(doc.bytes[end])) --end;
  if (end == begin) {
    end = begin + 1;
    while (end < doc.size() && utf8::is_continuation(doc.bytes[end])) ++end;
  }
  ByteSequence out;
  out.bytes.assign(doc.bytes.begin() + static_cast<std::ptrdiff_t>(begin), doc.bytes.begin() + static_cast<std::ptrdiff_t>(end));
  out.zwnj = zwnj_flags(out.bytes);
  out.doc_id = doc.doc_id;
  for (std::size_t g : doc.gold)
    if (g >= begin && g < end) out.gold.push_back(g - begin);
  return out;
}

/// Per-step record written to the metrics log.
struct StepMetrics {
  std::size_t step = 0;
  double lm = 0, kl = 0, morph = 0, aux = 0, total = 0;
  double lr = 0, tau = 0;
  double grad_norm = 0;
  std::size_t bytes = 0;
  std::vector<double> mean_chunk_len;

  nlohmann::json to_json() const {
    return {{"step", step}, {"lm", lm},   {"kl", kl},   {"morph", morph}, {"aux", aux},
            {"total", total}, {"lr", lr}, {"tau", tau}, {"mean_chunk_len", mean_chunk_len}};
  }
};

struct TrainerOptions {
  std::string out_dir;        // checkpoints; empty disables them
  std::string metrics_path;   // JSONL; empty disables the file
  bool fused_batch = false;   // one graph for the whole batch instead of per-document accumulation
  std::function<void(const StepMetrics&)> on_step;
};

/// Deterministic training loop: the batch, crops, Gumbel and latent noise and
/// dropout masks at step s are functions of (train.seed, s) only.
template <typename Real>
class Trainer {
 public:
  Trainer(const RunConfig& cfg, HNetModel<Real>& model, std::vector<ByteSequence> corpus, TrainerOptions opt = {})
      : cfg_(cfg), model_(model), corpus_(std::move(corpus)), opt_(std::move(opt)) {
    cfg_.validate();
    if (corpus_.empty()) throw DataError("train: corpus is empty");
    if (model_.router.size() != cfg_.model.levels) throw ConfigError("train: model and config disagree on levels");
    for (const auto& d : corpus_)
      if (d.empty()) throw DataError("train: empty document " + d.doc_id);
    adam_.init(model_.params);
  }

  std::size_t step() const { return step_; }
  const AdamState<Real>& adam() const { return adam_; }

  /// Continues from a checkpoint written by this trainer.
  void resume(const CheckpointFile& ck) {
    restore_parameters(ck, model_.params);
    if (!restore_adam(ck, model_.params, adam_)) adam_.init(model_.params);
    step_ = ck.step;
  }

  /// The documents of the batch at `step`, already cropped.
  std::vector<ByteSequence> batch(std::size_t step) const {
    const std::size_t n = cfg_.train.micro_batches * cfg_.train.docs_per_micro;
    const std::size_t length = curriculum_sample_length(step, cfg_.train.seed, cfg_.curriculum);
    std::vector<ByteSequence> out;
    out.reserve(n);
    for (std::size_t slot = 0; slot < n; ++slot) {
      Rng rng(derive_seed(cfg_.train.seed, {step, slot, 0xBA}));
      const ByteSequence& doc = corpus_[rng.below(corpus_.size())];
      if (doc.size() <= length) {
        out.push_back(doc);
      } else {
        out.push_back(crop_document(doc, rng.below(doc.size() - length + 1), length));
      }
    }
    return out;
  }

  /// Accumulates the gradient of the step-`step` objective into the
  /// parameters (which are zeroed first) and returns the loss breakdown.
  StepMetrics compute_gradients(std::size_t step) {
    const auto docs = batch(step);
    const double inv = 1.0 / static_cast<double>(docs.size());
    const double wkl = kl_weight(step, cfg_.loss.kl, cfg_.train.kl_warmup_steps);
    StepMetrics m;
    m.step = step;
    m.tau = cfg_.gumbel(step);
    m.lr = lr_schedule(step, cfg_.optim);
    m.mean_chunk_len.assign(cfg_.model.levels, 0.0);
    std::vector<double> positions(cfg_.model.levels, 0.0), chunks(cfg_.model.levels, 0.0);
    model_.params.zero_grad();

    ForwardOptions fo;
    fo.mode = cfg_.train.gate_mode == "soft" ? GateMode::Soft : GateMode::HardST;
    fo.train = true;
    fo.temperature = m.tau;
    fo.label_smoothing = cfg_.loss.label_smoothing;
    fo.aux = cfg_.aux;
    fo.compute_aux = cfg_.loss.aux != 0.0;

    auto document_loss = [&](Graph<Real>& g, std::size_t slot) {
      fo.seed = derive_seed(cfg_.train.seed, {step, slot, 0xF0});
      auto r = forward_document(g, model_, docs[slot], fo);
      Var<Real> total = total_loss(r.lm, r.kl, r.morph, r.aux, wkl, cfg_.loss.morph, cfg_.loss.aux);
      m.lm += static_cast<double>(r.lm.item()) * inv;
      m.kl += static_cast<double>(r.kl.item()) * inv;
      if (r.morph.valid()) m.morph += static_cast<double>(r.morph.item()) * inv;
      if (r.aux.valid()) m.aux += static_cast<double>(r.aux.item()) * inv;
      m.total += static_cast<double>(total.item()) * inv;
      m.bytes += docs[slot].size();
      for (std::size_t l = 0; l < r.hierarchy.chunks.size(); ++l) {
        positions[l] += static_cast<double>(r.hierarchy.chunks[l].input_length);
        chunks[l] += static_cast<double>(r.hierarchy.chunks[l].size());
      }
      return ad::scale(total, static_cast<Real>(inv));
    };

    if (opt_.fused_batch) {
      Graph<Real> g(0);
      Var<Real> sum;
      for (std::size_t slot = 0; slot < docs.size(); ++slot) {
        Var<Real> term = document_loss(g, slot);
        sum = sum.valid() ? sum + term : term;
      }
      g.backward(sum);
    } else {
      for (std::size_t slot = 0; slot < docs.size(); ++slot) {
        Graph<Real> g(0);
        g.backward(document_loss(g, slot));
      }
    }
    for (std::size_t l = 0; l < m.mean_chunk_len.size(); ++l) m.mean_chunk_len[l] = positions[l] / chunks[l];
    if (!std::isfinite(m.total)) throw NumericError("non-finite total loss at step " + std::to_string(step));
    return m;
  }

  /// One full optimizer step. On a numeric failure a crash checkpoint is
  /// written (when an output directory is set) before the error propagates.
  StepMetrics train_step() {
    StepMetrics m;
    try {
      m = compute_gradients(step_);
      m.grad_norm = clip_gradients(model_.params, cfg_.optim.clip_norm);
      adamw_step(model_.params, adam_, m.lr, cfg_.optim);
    } catch (const NumericError&) {
      if (!opt_.out_dir.empty()) {
        save_checkpoint(crash_path(), cfg_, step_, model_.params, &adam_, {{"crash", true}});
      }
      throw;
    }
    ++step_;
    return m;
  }

  /// Runs until `train.steps` steps have been taken in total.
  void run() {
    std::ofstream log;
    if (!opt_.metrics_path.empty()) {
      const std::filesystem::path p(opt_.metrics_path);
      if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
      log.open(opt_.metrics_path, step_ == 0 ? std::ios::trunc : std::ios::app);
      if (!log) throw DataError("cannot write metrics log " + opt_.metrics_path);
    }
    while (step_ < cfg_.train.steps) {
      const std::size_t s = step_;
      StepMetrics m = train_step();
      if (log.is_open() && s % cfg_.train.log_every == 0) {
        log << m.to_json().dump() << '\n';
        log.flush();
      }
      if (opt_.on_step) opt_.on_step(m);
      const std::size_t every = cfg_.train.checkpoint_every;
      if (!opt_.out_dir.empty() && every && step_ % every == 0 && step_ < cfg_.train.steps) {
        save(opt_.out_dir + "/step_" + std::to_string(step_) + ".ckpt");
      }
    }
    if (!opt_.out_dir.empty()) save(final_path());
  }

  void save(const std::string& path) const { save_checkpoint(path, cfg_, step_, model_.params, &adam_); }
  std::string final_path() const { return opt_.out_dir + "/final.ckpt"; }
  std::string crash_path() const { return opt_.out_dir + "/crash.ckpt"; }

 private:
  RunConfig cfg_;
  HNetModel<Real>& model_;
  std::vector<ByteSequence> corpus_;
  TrainerOptions opt_;
  AdamState<Real> adam_;
  std::size_t step_ = 0;
};

}  // namespace hnetpp

#endif  // HNETPP_TRAINER_HPP
