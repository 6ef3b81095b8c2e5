#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rtprobe/trace.hpp"

namespace rtprobe::synth {

/// Hidden states after consuming a token: h[0] is the embedding, h[l] layer l.
struct LayerStack {
  std::vector<Eigen::VectorXd> h;
};

/// Minimal causal LM interface used for trace export and information value.
class CausalModel {
 public:
  virtual ~CausalModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t num_layers() const = 0;
  virtual std::size_t hidden_dim() const = 0;
  virtual const std::string& token(std::size_t id) const = 0;
  virtual std::size_t eos_id() const = 0;
  /// True if the token opens a new unit (word-boundary marker or end of text).
  virtual bool starts_unit(std::size_t id) const = 0;
  /// State after the beginning-of-sequence token.
  virtual LayerStack begin() const = 0;
  virtual LayerStack step(const LayerStack& prev, std::size_t token) const = 0;
  /// Log next-token probabilities from the final head.
  virtual Eigen::VectorXd final_logprobs(const LayerStack& state) const = 0;
  /// Log probabilities from the unembedding applied directly to layer `layer`.
  virtual Eigen::VectorXd lens_logprobs(const LayerStack& state, int layer) const = 0;
};

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);

/// 1 - cos(a, b); 1 when either vector has zero norm.
double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct Continuation {
  std::vector<std::size_t> tokens;
  double probability = 1.0;
};

/// Stops before a token that opens a new unit (after the first token), at end
/// of text, or after `max_tokens` tokens.
Continuation sample_continuation(const CausalModel& model, const LayerStack& prefix,
                                 std::size_t max_tokens, std::mt19937_64& rng);

/// Every continuation the stop rule can produce, with its probability.
std::vector<Continuation> enumerate_continuations(const CausalModel& model, const LayerStack& prefix,
                                                  std::size_t max_tokens);

/// Mean over the continuation tokens of layer `layer`, run from `prefix`.
/// Zero vector for an empty continuation.
Eigen::VectorXd pooled_state(const CausalModel& model, const LayerStack& prefix,
                             const std::vector<std::size_t>& tokens, int layer);

struct ExportOptions {
  std::vector<int> layers;  // empty: 1..L
  std::size_t iv_samples = 50;
  std::size_t iv_max_tokens = 3;
  bool append_eos = false;
};

/// Runs the model over a unit-segmented token sequence and produces a trace
/// document: final and logit-lens surprisal, hidden states, and IV distance
/// samples per unit and layer.
trace::DocumentTrace export_document(const CausalModel& model, const std::string& doc_id,
                                     const std::vector<std::vector<std::size_t>>& units,
                                     const ExportOptions& options, std::mt19937_64& rng);

/// Syllable-vocabulary recurrent toy: layer l mixes layer l-1 at the current
/// and previous position through tanh.
struct ToyLmConfig {
  std::size_t num_layers = 6;
  std::size_t hidden_dim = 12;
  std::size_t syllables = 12;
  double gain = 2.5;
  double logit_scale = 2.0;
  std::string final_transform = "identity";  // or "layernorm"
};

class ToyLm final : public CausalModel {
 public:
  ToyLm(const ToyLmConfig& config, std::uint64_t seed);

  std::size_t vocab_size() const override { return vocab_.size(); }
  std::size_t num_layers() const override { return A_.size(); }
  std::size_t hidden_dim() const override { return static_cast<std::size_t>(embed_.cols()); }
  const std::string& token(std::size_t id) const override { return vocab_.at(id); }
  std::size_t eos_id() const override { return eos_; }
  bool starts_unit(std::size_t id) const override;
  LayerStack begin() const override;
  LayerStack step(const LayerStack& prev, std::size_t token) const override;
  Eigen::VectorXd final_logprobs(const LayerStack& state) const override;
  Eigen::VectorXd lens_logprobs(const LayerStack& state, int layer) const override;

  const std::vector<std::string>& syllables() const { return syllables_; }
  /// Token ids spelling a word given as syllable indices.
  std::vector<std::size_t> spell(const std::vector<std::size_t>& syllable_ids) const;
  const ToyLmConfig& config() const { return config_; }

 private:
  ToyLmConfig config_;
  std::vector<std::string> syllables_;
  std::vector<std::string> vocab_;
  std::size_t eos_ = 0;
  std::size_t bos_ = 0;
  Eigen::MatrixXd embed_;                // [V+1 x d], last row is BOS
  std::vector<Eigen::MatrixXd> A_, B_;   // per layer, [d x d]
  Eigen::MatrixXd W_;                    // [V x d]
  Eigen::VectorXd b_;                    // [V]
};

}  // namespace rtprobe::synth
