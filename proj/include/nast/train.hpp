// Training: the self-reconstruction, style, and cycle losses with their
// pseudo-alignment bounds, the adversarial discriminator and its 10:5
// schedule, three gradient-approximation regimes, and the cycle-only
// experiment with an AR baseline.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nast/align.hpp"
#include "nast/corpus.hpp"
#include "nast/model.hpp"
#include "nast/tensor.hpp"

namespace nast {

enum class GradApprox { GumbelSoftmax, SoftEmbedding, StopGradient };

inline const char* grad_approx_name(GradApprox g) {
  switch (g) {
    case GradApprox::GumbelSoftmax: return "gumbel";
    case GradApprox::SoftEmbedding: return "soft";
    default: return "stop";
  }
}

struct LossWeights {
  double alpha = 0.5;   // self-reconstruction
  double beta_x = 1.0;  // style loss, X -> Y direction
  double beta_y = 1.0;  // style loss, Y -> X direction
  double gamma = 0.5;   // cycle

  void validate() const {
    if (alpha < 0 || beta_x < 0 || beta_y < 0 || gamma < 0)
      throw std::runtime_error("loss weights must be nonnegative");
  }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename Real>
class Adam {
 public:
  Adam(ParamStore<Real>& ps, double lr, double clip_norm = 1.0)
      : ps_(ps), lr_(lr), clip_(clip_norm) {
    for (auto& [k, p] : ps.params) {
      m_[k].assign(p->size(), 0.0);
      v_[k].assign(p->size(), 0.0);
    }
  }

  // Applies one update from the accumulated gradients; returns the global
  // gradient norm (before clipping).
  double step() {
    double sq = 0;
    for (auto& [k, p] : ps_.params)
      for (Real g : p->g) sq += static_cast<double>(g) * static_cast<double>(g);
    double norm = std::sqrt(sq);
    double scale = (clip_ > 0 && norm > clip_) ? clip_ / norm : 1.0;
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [k, p] : ps_.params) {
      auto& m = m_[k];
      auto& v = v_[k];
      for (size_t i = 0; i < p->size(); ++i) {
        double g = static_cast<double>(p->g[i]) * scale;
        m[i] = beta1_ * m[i] + (1 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1 - beta2_) * g * g;
        p->v[i] -= static_cast<Real>(lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_));
      }
    }
    return norm;
  }

 private:
  ParamStore<Real>& ps_;
  double lr_, clip_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Style discriminator
// ---------------------------------------------------------------------------

struct DiscriminatorConfig {
  int vocab_size = 0;
  int num_layers = 2;
  int num_heads = 4;
  int hidden_dim = 64;
  int feedforward_dim = 128;
  int max_len = 64;
};

// Transformer-encoder classifier over token sequences; accepts hard ids or
// relaxed one-hot rows (the embedding lookup generalizes to convex rows).
template <typename Real>
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg_.hidden_dim % cfg_.num_heads != 0)
      throw std::runtime_error("discriminator: hidden_dim must divide by num_heads");
    std::mt19937_64 rng(seed);
    int d = cfg_.hidden_dim;
    init_uniform(ps_.add("embed", {cfg_.vocab_size, d}), Real(-0.1), Real(0.1), rng);
    for (int l = 0; l < cfg_.num_layers; ++l) {
      std::string p = "l" + std::to_string(l);
      for (const char* w : {".wq", ".wk", ".wv", ".wo"})
        init_xavier(ps_.add(p + w, {d, d}), rng);
      init_xavier(ps_.add(p + ".ff1", {d, cfg_.feedforward_dim}), rng);
      ps_.add(p + ".ff1_b", {cfg_.feedforward_dim});
      init_xavier(ps_.add(p + ".ff2", {cfg_.feedforward_dim, d}), rng);
      ps_.add(p + ".ff2_b", {d});
      add_ln(p + ".ln1");
      add_ln(p + ".ln2");
    }
    add_ln("lnf");
    init_xavier(ps_.add("cls", {d, 2}), rng);
    ps_.add("cls_b", {2});
    pos_table_ = sinusoidal_table<Real>(cfg_.max_len, d);
  }

  ParamStore<Real>& params() { return ps_; }
  const DiscriminatorConfig& config() const { return cfg_; }

  // rows: [len, V] distribution (or one-hot) rows
  Tensor<Real> logits_from_rows(Tensor<Real> rows) const {
    return forward(matmul(rows, ps_.get("embed")));
  }

  Tensor<Real> logits_from_ids(const TokenSeq& ids) const {
    return forward(embed_rows(ps_.get("embed"), ids));
  }

  int classify(const TokenSeq& ids) const {
    auto l = logits_from_ids(ids);
    return l->v[1] > l->v[0] ? 1 : 0;
  }

  // log P(style | sentence)
  Tensor<Real> style_logprob(Tensor<Real> logits, Style s) const {
    return scale(cross_entropy_rows(logits, {static_cast<int>(s)}), Real(-1));
  }

 private:
  void add_ln(const std::string& p) {
    auto g = ps_.add(p + "_g", {cfg_.hidden_dim});
    std::fill(g->v.begin(), g->v.end(), Real(1));
    ps_.add(p + "_b", {cfg_.hidden_dim});
  }

  Tensor<Real> ln(const std::string& p, Tensor<Real> x) const {
    return layer_norm_rows(x, ps_.get(p + "_g"), ps_.get(p + "_b"));
  }

  Tensor<Real> forward(Tensor<Real> emb) const {
    int n = emb->rows();
    if (n < 1 || n > cfg_.max_len)
      throw std::runtime_error("discriminator: sequence length out of range");
    int d = cfg_.hidden_dim;
    std::vector<Real> pe(static_cast<size_t>(n) * d);
    std::copy_n(pos_table_.begin(), pe.size(), pe.begin());
    auto x = add(emb, constant<Real>({n, d}, std::move(pe)));
    for (int l = 0; l < cfg_.num_layers; ++l) {
      std::string p = "l" + std::to_string(l);
      x = add(x, attention(p, ln(p + ".ln1", x)));
      auto h = relu_t(add_rowvec(matmul(ln(p + ".ln2", x), ps_.get(p + ".ff1")),
                                 ps_.get(p + ".ff1_b")));
      x = add(x, add_rowvec(matmul(h, ps_.get(p + ".ff2")), ps_.get(p + ".ff2_b")));
    }
    x = ln("lnf", x);
    auto pooled = scale(matmul(transpose(x), ones_col(n)), Real(1) / static_cast<Real>(n));
    return add_rowvec(matmul(transpose(pooled), ps_.get("cls")), ps_.get("cls_b"));
  }

  Tensor<Real> attention(const std::string& p, Tensor<Real> x) const {
    int d = cfg_.hidden_dim, H = cfg_.num_heads, dh = d / H;
    auto Q = matmul(x, ps_.get(p + ".wq"));
    auto K = matmul(x, ps_.get(p + ".wk"));
    auto V = matmul(x, ps_.get(p + ".wv"));
    std::vector<Tensor<Real>> heads;
    Real inv_sqrt = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dh)));
    for (int h = 0; h < H; ++h) {
      auto s = scale(matmul(slice_cols(Q, h * dh, (h + 1) * dh),
                            transpose(slice_cols(K, h * dh, (h + 1) * dh))),
                     inv_sqrt);
      heads.push_back(matmul(softmax_rows(s), slice_cols(V, h * dh, (h + 1) * dh)));
    }
    return matmul(concat_cols(heads), ps_.get(p + ".wo"));
  }

  static Tensor<Real> ones_col(int n) {
    return constant<Real>({n, 1}, std::vector<Real>(n, Real(1)));
  }

  DiscriminatorConfig cfg_;
  ParamStore<Real> ps_;
  std::vector<Real> pos_table_;
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// One generated sample with its differentiable representation.
template <typename Real>
struct GeneratedSample {
  TokenSeq hard;
  Alignment alignment;
  Tensor<Real> rows;  // [M, V]: straight-through one-hot, soft distribution, or detached one-hot
};

// Two-step generation under the active gradient regime. The alignment is
// discrete; its gradient is always stopped.
template <typename Real>
GeneratedSample<Real> generate_transfer(const Model<Real>& model, const TokenSeq& x,
                                        Style target, AlignMode align_mode, GradApprox regime,
                                        Real tau, std::mt19937_64& rng) {
  auto [t, logps] = model.predict_alignment(x, target, align_mode);
  (void)logps;
  GeneratedSample<Real> out;
  out.alignment = t;
  if (t.empty()) return out;
  auto src_emb = model.embed_hard(x);
  auto enc = model.encode_rep(src_emb);
  auto logits = model.nar_decode_rep(src_emb, enc, t, target);
  switch (regime) {
    case GradApprox::GumbelSoftmax: {
      auto gs = gumbel_sample(logits, tau, rng);
      out.rows = gs.straight_through;
      out.hard = gs.hard;
      break;
    }
    case GradApprox::SoftEmbedding: {
      out.rows = softmax_rows(logits);
      out.hard = Model<Real>::argmax_rows(out.rows);
      break;
    }
    case GradApprox::StopGradient: {
      out.hard = Model<Real>::argmax_rows(logits);
      std::vector<Real> onehot(out.hard.size() * static_cast<size_t>(logits->cols()), Real(0));
      for (size_t i = 0; i < out.hard.size(); ++i)
        onehot[i * logits->cols() + out.hard[i]] = Real(1);
      out.rows = constant<Real>({static_cast<int>(out.hard.size()), logits->cols()},
                                std::move(onehot));
      break;
    }
  }
  return out;
}

// -[log P(X|X~,T*) + log P(T*|X~)] averaged over the batch, both styles.
// Simple mode requires length-preserving corruption and uses the identity T*.
template <typename Real>
Tensor<Real> self_reconstruction_loss(const Model<Real>& model,
                                      const std::vector<TokenSeq>& batch_x,
                                      const std::vector<TokenSeq>& batch_y,
                                      const NoiseConfig& noise, const Vocabulary& vocab,
                                      AlignMode align_mode, std::mt19937_64& rng) {
  if (batch_x.empty() || batch_y.empty())
    throw std::runtime_error("self_reconstruction_loss: empty batch");
  if (align_mode == AlignMode::Simple && !noise.length_preserving())
    throw std::runtime_error(
        "self_reconstruction_loss: Simple alignment requires length-preserving noise "
        "(drop_prob = 0 and no insertions)");
  auto loss = scalar_const<Real>(0);
  auto run_side = [&](const std::vector<TokenSeq>& batch, Style style) {
    auto side = scalar_const<Real>(0);
    for (const auto& x : batch) {
      TokenSeq corrupted = corrupt(x, noise, vocab, rng);
      Alignment tstar;
      if (align_mode == AlignMode::Simple) {
        tstar = simple_alignment(static_cast<int>(corrupted.size()));
      } else {
        tstar = pseudo_alignment_dp(corrupted, x, model.embeddings()).first;
      }
      auto src_emb = model.embed_hard(corrupted);
      auto enc = model.encode_rep(src_emb);
      auto logits = model.nar_decode_rep(src_emb, enc, tstar, style);
      side = add(side, cross_entropy_rows(logits, x));
      if (align_mode == AlignMode::Learnable)
        side = add(side, model.alignment_nll(src_emb, enc, tstar, style));
    }
    loss = add(loss, scale(side, Real(1) / static_cast<Real>(batch.size())));
  };
  run_side(batch_x, Style::X);
  run_side(batch_y, Style::Y);
  return loss;
}

// Per-direction style losses -F(G_Y(X), Y) and -F(G_X(Y), X). The regime's
// differentiable rows feed the discriminator; StopGradient still uses Gumbel
// here since the style loss needs a differentiable output.
template <typename Real>
std::pair<Tensor<Real>, Tensor<Real>> style_loss(
    const Model<Real>& model, Discriminator<Real>& disc, const std::vector<TokenSeq>& batch_x,
    const std::vector<TokenSeq>& batch_y, AlignMode align_mode, GradApprox regime, Real tau,
    std::mt19937_64& rng) {
  GradApprox effective = regime == GradApprox::StopGradient ? GradApprox::GumbelSoftmax : regime;
  auto run_dir = [&](const std::vector<TokenSeq>& batch, Style target) {
    auto dir = scalar_const<Real>(0);
    int counted = 0;
    for (const auto& s : batch) {
      auto gen = generate_transfer(model, s, target, align_mode, effective, tau, rng);
      if (gen.hard.empty()) continue;
      auto logits = disc.logits_from_rows(gen.rows);
      dir = add(dir, scale(disc.style_logprob(logits, target), Real(-1)));
      ++counted;
    }
    if (counted > 0) dir = scale(dir, Real(1) / static_cast<Real>(counted));
    return dir;
  };
  return {run_dir(batch_x, Style::Y), run_dir(batch_y, Style::X)};
}

// Conditional-discriminator update: real sentences toward their true style,
// generated sentences toward the source style. Returns the scalar loss; the
// caller owns the optimizer step (generator parameters are untouched).
template <typename Real>
Tensor<Real> discriminator_loss(Discriminator<Real>& disc,
                                const std::vector<TokenSeq>& real_x,
                                const std::vector<TokenSeq>& real_y,
                                const std::vector<TokenSeq>& generated_toward_y,
                                const std::vector<TokenSeq>& generated_toward_x) {
  auto loss = scalar_const<Real>(0);
  int count = 0;
  auto push = [&](const TokenSeq& s, Style label) {
    if (s.empty()) return;
    loss = add(loss, cross_entropy_rows(disc.logits_from_ids(s),
                                        {static_cast<int>(label)}));
    ++count;
  };
  for (const auto& s : real_x) push(s, Style::X);
  for (const auto& s : real_y) push(s, Style::Y);
  for (const auto& s : generated_toward_y) push(s, Style::X);  // source style
  for (const auto& s : generated_toward_x) push(s, Style::Y);
  if (count == 0) throw std::runtime_error("discriminator_loss: no sentences");
  return scale(loss, Real(1) / static_cast<Real>(count));
}

// Cycle loss with the tractable bound: transfer, then reconstruct toward the
// original, with -log P(T*_cyc | G(X)) added in Learnable mode. Gradients
// reach the first pass only through the regime's relaxed representation.
template <typename Real>
Tensor<Real> cycle_loss(const Model<Real>& model, const std::vector<TokenSeq>& batch_x,
                        const std::vector<TokenSeq>& batch_y, AlignMode align_mode,
                        GradApprox regime, Real tau, std::mt19937_64& rng) {
  auto loss = scalar_const<Real>(0);
  auto run_dir = [&](const std::vector<TokenSeq>& batch, Style source_style) {
    auto dir = scalar_const<Real>(0);
    int counted = 0;
    for (const auto& s : batch) {
      auto gen = generate_transfer(model, s, other(source_style), align_mode, regime, tau, rng);
      if (gen.hard.empty()) continue;
      auto src_emb2 = matmul(gen.rows, model.embeddings());
      auto enc2 = model.encode_rep(src_emb2);
      Alignment tstar;
      if (align_mode == AlignMode::Simple)
        tstar = simple_alignment(static_cast<int>(gen.hard.size()));
      else
        tstar = pseudo_alignment_dp(gen.hard, s, model.embeddings()).first;
      auto logits = model.nar_decode_rep(src_emb2, enc2, tstar, source_style);
      dir = add(dir, cross_entropy_rows(logits, s));
      if (align_mode == AlignMode::Learnable)
        dir = add(dir, model.alignment_nll(src_emb2, enc2, tstar, source_style));
      ++counted;
    }
    if (counted > 0) dir = scale(dir, Real(1) / static_cast<Real>(counted));
    return dir;
  };
  loss = add(run_dir(batch_x, Style::X), run_dir(batch_y, Style::Y));
  return loss;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 1e-4;
  double disc_lr = 1e-4;
  int batch_size = 64;
  int max_steps = 1000;  // generator steps
  uint64_t seed = 0;
  NoiseConfig noise;
  GradApprox regime = GradApprox::GumbelSoftmax;
  double gumbel_temperature = 1.0;
  LossWeights weights;
  AlignMode align_mode = AlignMode::Simple;
  int disc_steps = 10;  // discriminator steps per iteration
  int gen_steps = 5;    // generator steps per iteration
  int eval_every = 0;   // 0 = never
  double clip_norm = 1.0;
  // Generator steps before the adversarial style weights take effect. The
  // reconstruction losses anchor the copy behaviour first; the style gradient
  // then concentrates on the positions the discriminator actually separates.
  // The discriminator still trains during warmup so it is ready at the switch.
  int style_warmup_steps = 0;

  void validate() const {
    if (max_steps <= 0) throw std::runtime_error("train config: max_steps must be > 0");
    if (!(gumbel_temperature > 0) && regime == GradApprox::GumbelSoftmax)
      throw std::runtime_error("train config: gumbel temperature must be > 0");
    weights.validate();
    noise.validate();
  }
};

struct StepMetrics {
  int step = 0;
  double l_self = 0, l_sty = 0, l_cyc = 0, disc_loss = 0, grad_norm = 0;

  std::string tsv() const {
    std::ostringstream os;
    os << step << "\t" << l_self << "\t" << l_sty << "\t" << l_cyc << "\t" << disc_loss
       << "\t" << grad_norm;
    return os.str();
  }
};

template <typename Real>
class Trainer {
 public:
  Trainer(Model<Real>& model, Discriminator<Real>& disc, const StyledCorpus& corpus,
          const Vocabulary& vocab, TrainConfig cfg)
      : model_(model),
        disc_(disc),
        corpus_(corpus),
        vocab_(vocab),
        cfg_(cfg),
        rng_(cfg.seed),
        opt_(model.params(), cfg.lr, cfg.clip_norm),
        disc_opt_(disc.params(), cfg.disc_lr, cfg.clip_norm) {
    cfg_.validate();
    if (corpus_.style_x.empty() || corpus_.style_y.empty())
      throw std::runtime_error("trainer: both style corpora must be non-empty");
  }

  std::mt19937_64& rng() { return rng_; }
  int step_count() const { return step_; }

  // Algorithm-2 schedule: per iteration, disc_steps discriminator updates
  // followed by gen_steps generator updates. Runs until `steps` generator
  // updates have completed; invokes `on_step` after each one.
  void run(int steps, const std::function<void(const StepMetrics&)>& on_step = {}) {
    bool adversarial = cfg_.weights.beta_x > 0 || cfg_.weights.beta_y > 0;
    int done = 0;
    while (done < steps) {
      double dloss = 0;
      if (adversarial)
        for (int k = 0; k < cfg_.disc_steps; ++k) dloss = discriminator_step();
      for (int k = 0; k < cfg_.gen_steps && done < steps; ++k, ++done) {
        auto m = generator_step();
        m.disc_loss = dloss;
        if (on_step) on_step(m);
      }
    }
  }

  StepMetrics generator_step() {
    auto bx = sample_batch(corpus_.style_x);
    auto by = sample_batch(corpus_.style_y);
    const auto& w = cfg_.weights;
    Real tau = static_cast<Real>(cfg_.gumbel_temperature);
    StepMetrics m;
    m.step = ++step_;
    auto total = scalar_const<Real>(0);
    if (w.alpha > 0) {
      auto l = self_reconstruction_loss(model_, bx, by, cfg_.noise, vocab_, cfg_.align_mode,
                                        rng_);
      m.l_self = value_of(l);
      total = add(total, scale(l, static_cast<Real>(w.alpha)));
    }
    if ((w.beta_x > 0 || w.beta_y > 0) && m.step > cfg_.style_warmup_steps) {
      auto [lx, ly] =
          style_loss(model_, disc_, bx, by, cfg_.align_mode, cfg_.regime, tau, rng_);
      m.l_sty = value_of(lx) + value_of(ly);
      total = add(total, add(scale(lx, static_cast<Real>(w.beta_x)),
                             scale(ly, static_cast<Real>(w.beta_y))));
    }
    if (w.gamma > 0) {
      auto l = cycle_loss(model_, bx, by, cfg_.align_mode, cfg_.regime, tau, rng_);
      m.l_cyc = value_of(l);
      total = add(total, scale(l, static_cast<Real>(w.gamma)));
    }
    if (!std::isfinite(static_cast<double>(value_of(total))))
      throw std::runtime_error("non-finite loss at step " + std::to_string(m.step) +
                               ": self=" + std::to_string(m.l_self) +
                               " sty=" + std::to_string(m.l_sty) +
                               " cyc=" + std::to_string(m.l_cyc));
    model_.params().zero_grad();
    backward(total);
    m.grad_norm = opt_.step();
    return m;
  }

  double discriminator_step() {
    auto bx = sample_batch(corpus_.style_x, cfg_.batch_size / 2 + 1);
    auto by = sample_batch(corpus_.style_y, cfg_.batch_size / 2 + 1);
    std::vector<TokenSeq> gen_y, gen_x;
    for (const auto& s : bx)
      gen_y.push_back(model_.transfer(s, Style::Y, cfg_.align_mode).first);
    for (const auto& s : by)
      gen_x.push_back(model_.transfer(s, Style::X, cfg_.align_mode).first);
    auto loss = discriminator_loss(disc_, bx, by, gen_y, gen_x);
    double v = value_of(loss);
    disc_.params().zero_grad();
    backward(loss);
    disc_opt_.step();
    return v;
  }

 private:
  std::vector<TokenSeq> sample_batch(const std::vector<TokenSeq>& pool, int size = 0) {
    if (size == 0) size = cfg_.batch_size;
    std::uniform_int_distribution<size_t> d(0, pool.size() - 1);
    std::vector<TokenSeq> batch;
    for (int i = 0; i < size; ++i) {
      const auto& s = pool[d(rng_)];
      if (!s.empty()) batch.push_back(s);
    }
    if (batch.empty()) batch.push_back(pool[0]);
    return batch;
  }

  Model<Real>& model_;
  Discriminator<Real>& disc_;
  const StyledCorpus& corpus_;
  const Vocabulary& vocab_;
  TrainConfig cfg_;
  std::mt19937_64 rng_;
  Adam<Real> opt_;
  Adam<Real> disc_opt_;
  int step_ = 0;
};

// ---------------------------------------------------------------------------
// Cycle-only experiment (NAR vs AR generators)
// ---------------------------------------------------------------------------

enum class GeneratorKind { NAR, AR };

// Free-running AR generation of exactly `length` tokens (the target length is
// provided; no EOS prediction), with the regime's differentiable chaining.
template <typename Real>
GeneratedSample<Real> ar_generate(const Model<Real>& model, const TokenSeq& x, Style target,
                                  int length, GradApprox regime, Real tau,
                                  std::mt19937_64& rng) {
  auto src_emb = model.embed_hard(x);
  auto enc = model.encode_rep(src_emb);
  int vocab = model.config().vocab_size;
  GeneratedSample<Real> out;
  std::vector<Tensor<Real>> input_rows = {model.params().get("ar.start")};
  std::vector<Tensor<Real>> row_list;
  for (int i = 0; i < length; ++i) {
    auto logits = model.ar_decode_rep(concat_rows(input_rows), enc, target);
    auto step_logits = select_rows(logits, {i});
    Tensor<Real> rows;
    int hard;
    switch (regime) {
      case GradApprox::GumbelSoftmax: {
        auto gs = gumbel_sample(step_logits, tau, rng);
        rows = gs.straight_through;
        hard = gs.hard[0];
        break;
      }
      case GradApprox::SoftEmbedding: {
        rows = softmax_rows(step_logits);
        hard = Model<Real>::argmax_rows(rows)[0];
        break;
      }
      default: {
        hard = Model<Real>::argmax_rows(step_logits)[0];
        std::vector<Real> onehot(vocab, Real(0));
        onehot[hard] = Real(1);
        rows = constant<Real>({1, vocab}, std::move(onehot));
        break;
      }
    }
    out.hard.push_back(hard);
    row_list.push_back(rows);
    input_rows.push_back(matmul(rows, model.embeddings()));
  }
  out.rows = concat_rows(row_list);
  return out;
}

// Greedy AR transfer at inference (hard tokens only).
template <typename Real>
TokenSeq ar_transfer(const Model<Real>& model, const TokenSeq& x, Style target, int length) {
  auto src_emb = model.embed_hard(x);
  auto enc = model.encode_rep(src_emb);
  TokenSeq out;
  std::vector<Tensor<Real>> input_rows = {model.params().get("ar.start")};
  for (int i = 0; i < length; ++i) {
    auto logits = model.ar_decode_rep(concat_rows(input_rows), enc, target);
    int best = 0;
    for (int j = 1; j < logits->cols(); ++j)
      if (logits->at(i, j) > logits->at(i, best)) best = j;
    out.push_back(best);
    input_rows.push_back(model.embed_hard({best}));
  }
  return out;
}

// Cycle loss for the AR generator: free-running first pass with the target
// length provided, teacher-forced reconstruction pass.
template <typename Real>
Tensor<Real> ar_cycle_loss(const Model<Real>& model, const std::vector<TokenSeq>& batch_x,
                           const std::vector<TokenSeq>& batch_y, GradApprox regime, Real tau,
                           std::mt19937_64& rng) {
  auto run_dir = [&](const std::vector<TokenSeq>& batch, Style source_style) {
    auto dir = scalar_const<Real>(0);
    int counted = 0;
    for (const auto& s : batch) {
      if (s.empty()) continue;
      auto gen = ar_generate(model, s, other(source_style), static_cast<int>(s.size()), regime,
                             tau, rng);
      auto src_emb2 = matmul(gen.rows, model.embeddings());
      auto enc2 = model.encode_rep(src_emb2);
      // shifted teacher-forced inputs: start, then the gold prefix
      std::vector<Tensor<Real>> rows = {model.params().get("ar.start")};
      for (size_t i = 0; i + 1 < s.size(); ++i)
        rows.push_back(model.embed_hard({s[i]}));
      auto logits = model.ar_decode_rep(concat_rows(rows), enc2, source_style);
      dir = add(dir, cross_entropy_rows(logits, s));
      ++counted;
    }
    if (counted > 0) dir = scale(dir, Real(1) / static_cast<Real>(counted));
    return dir;
  };
  return add(run_dir(batch_x, Style::X), run_dir(batch_y, Style::Y));
}

}  // namespace nast
