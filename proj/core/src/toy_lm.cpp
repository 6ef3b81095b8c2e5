#include "rtprobe/toy_lm.hpp"

#include <algorithm>
#include <cmath>

#include "rtprobe/error.hpp"

namespace rtprobe::synth {

namespace {

constexpr const char* kBoundary = "\xe2\x96\x81";  // "▁"

std::size_t draw(const Eigen::VectorXd& logp, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double r = unif(rng);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < logp.size(); ++k) {
    acc += std::exp(logp[k]);
    if (r < acc) return static_cast<std::size_t>(k);
  }
  Eigen::Index last = logp.size() - 1;
  while (last > 0 && !std::isfinite(logp[last])) --last;
  return static_cast<std::size_t>(last);
}

// Per-layer mean over the continuation's states, layers 0..L.
std::vector<Eigen::VectorXd> pooled_all(const CausalModel& model, const LayerStack& prefix,
                                        const std::vector<std::size_t>& tokens) {
  const auto d = static_cast<Eigen::Index>(model.hidden_dim());
  std::vector<Eigen::VectorXd> out(model.num_layers() + 1, Eigen::VectorXd::Zero(d));
  if (tokens.empty()) return out;
  LayerStack s = prefix;
  for (auto t : tokens) {
    s = model.step(s, t);
    for (std::size_t l = 0; l < out.size(); ++l) out[l] += s.h[l];
  }
  for (auto& v : out) v /= static_cast<double>(tokens.size());
  return out;
}

void expand(const CausalModel& model, const LayerStack& state, std::vector<std::size_t>& tokens,
            double prob, std::size_t max_tokens, std::vector<Continuation>& out) {
  const Eigen::VectorXd logp = model.final_logprobs(state);
  double stop = 0.0;
  for (Eigen::Index k = 0; k < logp.size(); ++k) {
    const double p = std::exp(logp[k]);
    if (p == 0.0) continue;
    const auto tok = static_cast<std::size_t>(k);
    if (tok == model.eos_id() || (!tokens.empty() && model.starts_unit(tok))) {
      stop += p;
      continue;
    }
    tokens.push_back(tok);
    if (tokens.size() >= max_tokens) {
      out.push_back({tokens, prob * p});
    } else {
      expand(model, model.step(state, tok), tokens, prob * p, max_tokens, out);
    }
    tokens.pop_back();
  }
  if (stop > 0.0) out.push_back({tokens, prob * stop});
}

}  // namespace

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return 1.0 - c;
}

Continuation sample_continuation(const CausalModel& model, const LayerStack& prefix,
                                 std::size_t max_tokens, std::mt19937_64& rng) {
  Continuation c;
  c.probability = 1.0;
  LayerStack s = prefix;
  while (c.tokens.size() < max_tokens) {
    const Eigen::VectorXd logp = model.final_logprobs(s);
    const std::size_t tok = draw(logp, rng);
    c.probability *= std::exp(logp[static_cast<Eigen::Index>(tok)]);
    if (tok == model.eos_id() || (!c.tokens.empty() && model.starts_unit(tok))) break;
    c.tokens.push_back(tok);
    if (c.tokens.size() < max_tokens) s = model.step(s, tok);
  }
  return c;
}

std::vector<Continuation> enumerate_continuations(const CausalModel& model, const LayerStack& prefix,
                                                  std::size_t max_tokens) {
  if (max_tokens == 0) return {{{}, 1.0}};
  std::vector<Continuation> out;
  std::vector<std::size_t> tokens;
  expand(model, prefix, tokens, 1.0, max_tokens, out);
  return out;
}

Eigen::VectorXd pooled_state(const CausalModel& model, const LayerStack& prefix,
                             const std::vector<std::size_t>& tokens, int layer) {
  if (layer < 0 || static_cast<std::size_t>(layer) > model.num_layers())
    throw ValidationError("layer " + std::to_string(layer) + " out of range");
  return pooled_all(model, prefix, tokens)[static_cast<std::size_t>(layer)];
}

trace::DocumentTrace export_document(const CausalModel& model, const std::string& doc_id,
                                     const std::vector<std::vector<std::size_t>>& units,
                                     const ExportOptions& options, std::mt19937_64& rng) {
  std::vector<int> layers = options.layers;
  if (layers.empty())
    for (std::size_t l = 1; l <= model.num_layers(); ++l) layers.push_back(static_cast<int>(l));
  for (int l : layers)
    if (l < 0 || static_cast<std::size_t>(l) > model.num_layers())
      throw ValidationError("layer " + std::to_string(l) + " out of range");
  if (units.empty()) throw ValidationError("empty document: " + doc_id);

  trace::DocumentTrace doc;
  doc.doc_id = doc_id;
  doc.layers = layers;
  doc.has_eos_row = options.append_eos;
  std::vector<std::size_t> ids;
  for (std::size_t u = 0; u < units.size(); ++u) {
    if (units[u].empty()) throw ValidationError("unit without tokens in " + doc_id);
    for (auto t : units[u]) {
      ids.push_back(t);
      doc.unit_index_of_token.push_back(static_cast<std::uint32_t>(u));
    }
  }
  if (options.append_eos) {
    ids.push_back(model.eos_id());
    doc.unit_index_of_token.push_back(static_cast<std::uint32_t>(units.size()));
  }

  const std::size_t T = ids.size(), L = layers.size(), d = model.hidden_dim();
  const std::size_t U = units.size(), N = options.iv_samples;
  doc.logitlens_surprisal = trace::Tensor::zeros({T, L});
  doc.hidden_states = trace::Tensor::zeros({T, L, d});
  doc.iv_distances = trace::Tensor::zeros({U, L, N});
  doc.final_surprisal.resize(T);

  LayerStack s = model.begin();
  std::vector<LayerStack> unit_prefix;
  std::size_t t = 0;
  std::vector<std::vector<Eigen::VectorXd>> observed(U);
  for (std::size_t u = 0; u <= U; ++u) {
    if (u == U && !options.append_eos) break;
    const std::vector<std::size_t> toks = u < U ? units[u] : std::vector<std::size_t>{model.eos_id()};
    if (u < U) unit_prefix.push_back(s);
    std::vector<Eigen::VectorXd> sum(model.num_layers() + 1, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)));
    for (auto tok : toks) {
      doc.tokens.push_back(model.token(tok));
      const Eigen::VectorXd logp = model.final_logprobs(s);
      doc.final_surprisal[t] = static_cast<float>(-logp[static_cast<Eigen::Index>(tok)]);
      for (std::size_t j = 0; j < L; ++j) {
        const Eigen::VectorXd lp = model.lens_logprobs(s, layers[j]);
        doc.logitlens_surprisal.values[t * L + j] = static_cast<float>(-lp[static_cast<Eigen::Index>(tok)]);
      }
      s = model.step(s, tok);
      for (std::size_t j = 0; j < L; ++j) {
        const auto& h = s.h[static_cast<std::size_t>(layers[j])];
        for (std::size_t k = 0; k < d; ++k)
          doc.hidden_states.values[(t * L + j) * d + k] = static_cast<float>(h[static_cast<Eigen::Index>(k)]);
      }
      for (std::size_t l = 0; l < sum.size(); ++l) sum[l] += s.h[l];
      ++t;
    }
    if (u < U) {
      for (auto& v : sum) v /= static_cast<double>(toks.size());
      observed[u] = std::move(sum);
    }
  }

  for (std::size_t u = 0; u < U; ++u) {
    for (std::size_t k = 0; k < N; ++k) {
      const Continuation c = sample_continuation(model, unit_prefix[u], options.iv_max_tokens, rng);
      const auto pooled = pooled_all(model, unit_prefix[u], c.tokens);
      for (std::size_t j = 0; j < L; ++j) {
        const auto l = static_cast<std::size_t>(layers[j]);
        doc.iv_distances.values[(u * L + j) * N + k] =
            static_cast<float>(cosine_distance(observed[u][l], pooled[l]));
      }
    }
  }
  return doc;
}

ToyLm::ToyLm(const ToyLmConfig& config, std::uint64_t seed) : config_(config) {
  if (config.num_layers < 1 || config.hidden_dim < 1 || config.syllables < 1)
    throw ConfigError("toy model needs at least one layer, dimension and syllable");
  if (config.final_transform != "identity" && config.final_transform != "layernorm")
    throw ConfigError("unknown final transform: " + config.final_transform);
  static const char* onsets[] = {"k", "r", "m", "t", "l", "s", "p", "v", "d", "g", "n", "f", "b", "h", "z", "j"};
  static const char* nuclei[] = {"a", "i", "o", "u", "e"};
  for (std::size_t i = 0; i < config.syllables; ++i)
    syllables_.push_back(std::string(onsets[i % 16]) + nuclei[(i / 16 + i) % 5] +
                         (i >= 80 ? std::to_string(i / 80) : ""));
  for (const auto& s : syllables_) vocab_.push_back(kBoundary + s);
  for (const auto& s : syllables_) vocab_.push_back(s);
  eos_ = vocab_.size();
  vocab_.push_back("</s>");
  bos_ = vocab_.size();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(rng);
    return m;
  };
  const auto d = static_cast<Eigen::Index>(config.hidden_dim);
  const auto V = static_cast<Eigen::Index>(vocab_.size());
  embed_ = gaussian(V + 1, d);
  const double scale = config.gain / std::sqrt(static_cast<double>(d));
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    A_.push_back(gaussian(d, d) * scale);
    B_.push_back(gaussian(d, d) * scale);
  }
  W_ = gaussian(V, d) * (config.logit_scale / std::sqrt(static_cast<double>(d)));
  b_ = gaussian(V, 1).col(0);
}

bool ToyLm::starts_unit(std::size_t id) const { return id < syllables_.size() || id == eos_; }

LayerStack ToyLm::begin() const {
  LayerStack zero;
  zero.h.assign(num_layers() + 1, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden_dim())));
  return step(zero, bos_);
}

LayerStack ToyLm::step(const LayerStack& prev, std::size_t token) const {
  if (token > bos_) throw ValidationError("token id out of range");
  LayerStack s;
  s.h.resize(num_layers() + 1);
  s.h[0] = embed_.row(static_cast<Eigen::Index>(token)).transpose();
  for (std::size_t l = 1; l <= num_layers(); ++l)
    s.h[l] = (A_[l - 1] * s.h[l - 1] + B_[l - 1] * prev.h[l - 1]).array().tanh();
  return s;
}

Eigen::VectorXd ToyLm::final_logprobs(const LayerStack& state) const {
  Eigen::VectorXd h = state.h.back();
  if (config_.final_transform == "layernorm") {
    const double m = h.mean();
    const double sd = std::sqrt((h.array() - m).square().mean() + 1e-5);
    h = (h.array() - m) / sd;
  }
  return log_softmax(W_ * h + b_);
}

Eigen::VectorXd ToyLm::lens_logprobs(const LayerStack& state, int layer) const {
  if (layer < 0 || static_cast<std::size_t>(layer) > num_layers())
    throw ValidationError("layer " + std::to_string(layer) + " out of range");
  return log_softmax(W_ * state.h[static_cast<std::size_t>(layer)] + b_);
}

std::vector<std::size_t> ToyLm::spell(const std::vector<std::size_t>& syllable_ids) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < syllable_ids.size(); ++i) {
    if (syllable_ids[i] >= syllables_.size()) throw ValidationError("syllable id out of range");
    out.push_back(i == 0 ? syllable_ids[i] : syllables_.size() + syllable_ids[i]);
  }
  return out;
}

}  // namespace rtprobe::synth
