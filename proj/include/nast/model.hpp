// The two-step non-autoregressive style transfer network: shared Transformer
// encoder, pointer-network alignment predictor, NAR decoder with style
// embeddings, plus an autoregressive decoder of matched architecture used as
// the baseline in the cycle-only experiment.
//
// Both transfer directions resolve to the same weight tensors except the two
// style embedding rows. The output projection is tied to the embedding table.

#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nast/align.hpp"
#include "nast/corpus.hpp"
#include "nast/tensor.hpp"

namespace nast {

enum class AlignMode { Simple, Learnable };
enum class Style : int { X = 0, Y = 1 };

inline Style other(Style s) { return s == Style::X ? Style::Y : Style::X; }

struct ModelConfig {
  int vocab_size = 0;
  int num_layers = 2;
  int num_heads = 4;
  int hidden_dim = 64;
  int feedforward_dim = 128;
  int max_len = 64;
  int predictor_layers = 1;
  int max_slack = 5;  // Learnable decoding halts at N + max_slack actions
  double dropout = 0.0;
  bool no_aligned_input = false;
  bool no_cross_attention = false;
  bool with_ar_decoder = false;

  void validate() const {
    if (vocab_size <= kNumSpecial) throw std::runtime_error("model config: vocab too small");
    if (hidden_dim % num_heads != 0)
      throw std::runtime_error("model config: hidden_dim must divide by num_heads");
    if (num_layers < 1 || predictor_layers < 1 || max_len < 1)
      throw std::runtime_error("model config: bad sizes");
  }
};

// Fixed sinusoidal positional encodings.
template <typename Real>
std::vector<Real> sinusoidal_table(int max_len, int dim) {
  std::vector<Real> pe(static_cast<size_t>(max_len) * dim);
  for (int p = 0; p < max_len; ++p)
    for (int j = 0; j < dim; ++j) {
      double angle = p / std::pow(10000.0, 2.0 * (j / 2) / dim);
      pe[static_cast<size_t>(p) * dim + j] =
          static_cast<Real>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

template <typename Real>
struct GenerationOutput {
  Alignment alignment;
  Tensor<Real> logits;         // [M, V]
  Tensor<Real> probs;          // softmax of logits
  TokenSeq greedy;             // per-position argmax
  Tensor<Real> relaxed;        // gumbel-relaxed rows, when sampling is active
  Tensor<Real> straight_through;  // hard one-hot forward / relaxed backward
};

template <typename Real>
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    build_params(rng);
    pos_table_ = sinusoidal_table<Real>(cfg_.max_len + cfg_.max_slack + 1, cfg_.hidden_dim);
  }

  explicit Model(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(0);
    build_params(rng);
    pos_table_ = sinusoidal_table<Real>(cfg_.max_len + cfg_.max_slack + 1, cfg_.hidden_dim);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<Real>& params() { return ps_; }
  const ParamStore<Real>& params() const { return ps_; }
  Tensor<Real> embeddings() const { return ps_.get("embed"); }

  // ---- building blocks -----------------------------------------------------

  Tensor<Real> positional(int len, int offset = 0) const {
    int d = cfg_.hidden_dim;
    std::vector<Real> rows(static_cast<size_t>(len) * d);
    for (int i = 0; i < len; ++i)
      std::copy_n(pos_table_.begin() + static_cast<size_t>(i + offset) * d, d,
                  rows.begin() + static_cast<size_t>(i) * d);
    return constant<Real>({len, d}, std::move(rows));
  }

  Tensor<Real> style_rows(Style s, int len) const {
    auto emb = select_rows(ps_.get("style"), std::vector<int>(len, static_cast<int>(s)));
    return emb;
  }

  Tensor<Real> embed_hard(const TokenSeq& ids) const { return embed_rows(ps_.get("embed"), ids); }

  // Multi-head attention; `mask` (if nonempty) is row-major [q_len x k_len],
  // nonzero entries blocked.
  Tensor<Real> attention(const std::string& prefix, Tensor<Real> q_in, Tensor<Real> kv_in,
                         const std::vector<uint8_t>& mask) const {
    int d = cfg_.hidden_dim, H = cfg_.num_heads, dh = d / H;
    auto Q = matmul(q_in, ps_.get(prefix + ".wq"));
    auto K = matmul(kv_in, ps_.get(prefix + ".wk"));
    auto V = matmul(kv_in, ps_.get(prefix + ".wv"));
    std::vector<Tensor<Real>> heads;
    Real inv_sqrt = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dh)));
    for (int h = 0; h < H; ++h) {
      auto Qh = slice_cols(Q, h * dh, (h + 1) * dh);
      auto Kh = slice_cols(K, h * dh, (h + 1) * dh);
      auto Vh = slice_cols(V, h * dh, (h + 1) * dh);
      auto scores = scale(matmul(Qh, transpose(Kh)), inv_sqrt);
      if (!mask.empty()) scores = masked_fill(scores, mask, Real(-1e9));
      heads.push_back(matmul(softmax_rows(scores), Vh));
    }
    return matmul(concat_cols(heads), ps_.get(prefix + ".wo"));
  }

  Tensor<Real> feed_forward(const std::string& prefix, Tensor<Real> x) const {
    auto h = relu_t(add_rowvec(matmul(x, ps_.get(prefix + ".ff1")), ps_.get(prefix + ".ff1_b")));
    return add_rowvec(matmul(h, ps_.get(prefix + ".ff2")), ps_.get(prefix + ".ff2_b"));
  }

  Tensor<Real> ln(const std::string& prefix, Tensor<Real> x) const {
    return layer_norm_rows(x, ps_.get(prefix + "_g"), ps_.get(prefix + "_b"));
  }

  // ---- encoder -------------------------------------------------------------

  // `src_rep` is the embedded source: [N, hidden]. Pre-LN Transformer stack.
  Tensor<Real> encode_rep(Tensor<Real> src_rep) const {
    int n = src_rep->rows();
    if (n < 1 || n > cfg_.max_len)
      throw std::runtime_error("encode: source length " + std::to_string(n) +
                               " outside [1, max_len=" + std::to_string(cfg_.max_len) + "]");
    auto x = add(src_rep, positional(n));
    for (int l = 0; l < cfg_.num_layers; ++l) {
      std::string p = "enc.l" + std::to_string(l);
      auto a = attention(p + ".self", ln(p + ".ln1", x), ln(p + ".ln1", x), {});
      x = add(x, a);
      x = add(x, feed_forward(p, ln(p + ".ln2", x)));
    }
    return ln("enc.lnf", x);
  }

  Tensor<Real> encode_source(const TokenSeq& ids) const { return encode_rep(embed_hard(ids)); }

  // ---- NAR decoder ---------------------------------------------------------

  // Builds the decoder input rows for alignment T from an embedded source
  // matrix (row i-1 for pointer i, the [Mask] embedding for 0).
  Tensor<Real> aligned_input(Tensor<Real> src_emb, const Alignment& t) const {
    auto mask_row = select_rows(ps_.get("embed"), {kMask});
    std::vector<int> idx;
    idx.reserve(t.size());
    for (int ti : t) {
      if (ti < 0 || ti > src_emb->rows())
        throw std::runtime_error("nar_decode: invalid alignment entry " + std::to_string(ti));
      idx.push_back(ti);  // 0 selects the mask row
    }
    return select_rows(concat_rows<Real>({mask_row, src_emb}), idx);
  }

  // Per-position output logits in one parallel pass. `src_emb` is the embedded
  // source sentence (hard, soft, or straight-through rows times the embedding
  // table); `enc_state` its encoding.
  Tensor<Real> nar_decode_rep(Tensor<Real> src_emb, Tensor<Real> enc_state, const Alignment& t,
                              Style style) const {
    if (!validate_alignment(t, src_emb->rows()))
      throw std::runtime_error("nar_decode: invalid alignment");
    int m = static_cast<int>(t.size());
    int d = cfg_.hidden_dim;
    (void)d;
    Tensor<Real> x;
    if (cfg_.no_cross_attention) {
      // Pointwise ablation: each output conditioned solely on its aligned word.
      x = add(aligned_input(src_emb, t), style_rows(style, m));
      for (int l = 0; l < cfg_.num_layers; ++l) {
        std::string p = "dec.l" + std::to_string(l);
        x = add(x, feed_forward(p, ln(p + ".ln3", x)));
      }
    } else {
      if (cfg_.no_aligned_input)
        x = add(positional(m), style_rows(style, m));
      else
        x = add(add(aligned_input(src_emb, t), positional(m)), style_rows(style, m));
      for (int l = 0; l < cfg_.num_layers; ++l) {
        std::string p = "dec.l" + std::to_string(l);
        x = add(x, attention(p + ".self", ln(p + ".ln1", x), ln(p + ".ln1", x), {}));
        x = add(x, attention(p + ".cross", ln(p + ".ln2", x), enc_state, {}));
        x = add(x, feed_forward(p, ln(p + ".ln3", x)));
      }
    }
    x = ln("dec.lnf", x);
    return add_rowvec(matmul(x, transpose(ps_.get("embed"))), ps_.get("out_bias"));
  }

  GenerationOutput<Real> nar_decode(const TokenSeq& x_ids, const Alignment& t, Style style) const {
    auto src_emb = embed_hard(x_ids);
    auto enc = encode_rep(src_emb);
    GenerationOutput<Real> out;
    out.alignment = t;
    out.logits = nar_decode_rep(src_emb, enc, t, style);
    out.probs = softmax_rows(out.logits);
    out.greedy = argmax_rows(out.probs);
    return out;
  }

  static TokenSeq argmax_rows(const Tensor<Real>& probs) {
    TokenSeq ids(probs->rows());
    for (int i = 0; i < probs->rows(); ++i) {
      int best = 0;
      for (int j = 1; j < probs->cols(); ++j)
        if (probs->at(i, j) > probs->at(i, best)) best = j;
      ids[i] = best;
    }
    return ids;
  }

  // ---- pointer predictor ---------------------------------------------------

  // Action space per step: column 0 = MASK slot, columns 1..N = source
  // positions, column N+1 = STOP.
  static constexpr int kActionStop(int n) { return n + 1; }

  // Teacher-forced action logits for a given action sequence (the actions
  // consumed are those *before* each step). Returns [steps, N+2], invalid
  // actions already masked to -1e9.
  Tensor<Real> predictor_logits(Tensor<Real> src_emb, Tensor<Real> enc_state,
                                const std::vector<int>& prev_actions, Style style) const {
    int n = enc_state->rows();
    int steps = static_cast<int>(prev_actions.size()) + 1;
    int d = cfg_.hidden_dim;
    // input row per step: learned start vector, then the embedding of the
    // token the previous action selected (mask embedding for action 0).
    std::vector<Tensor<Real>> rows;
    rows.push_back(ps_.get("ptr.start"));
    auto mask_row = select_rows(ps_.get("embed"), {kMask});
    for (int a : prev_actions) {
      if (a == 0 || a == kActionStop(n))
        rows.push_back(mask_row);
      else
        rows.push_back(select_rows(src_emb, {a - 1}));
    }
    auto x = add(add(concat_rows(rows), positional(steps)), style_rows(style, steps));
    std::vector<uint8_t> causal(static_cast<size_t>(steps) * steps, 0);
    for (int i = 0; i < steps; ++i)
      for (int j = i + 1; j < steps; ++j) causal[static_cast<size_t>(i) * steps + j] = 1;
    for (int l = 0; l < cfg_.predictor_layers; ++l) {
      std::string p = "ptr.l" + std::to_string(l);
      x = add(x, attention(p + ".self", ln(p + ".ln1", x), ln(p + ".ln1", x), causal));
      x = add(x, attention(p + ".cross", ln(p + ".ln2", x), enc_state, {}));
      x = add(x, feed_forward(p, ln(p + ".ln3", x)));
    }
    x = ln("ptr.lnf", x);
    Real inv_sqrt = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(d)));
    auto mask_logit = matmul(x, transpose(ps_.get("ptr.mask_vec")));
    auto pos_logits = matmul(x, transpose(enc_state));
    auto stop_logit = matmul(x, transpose(ps_.get("ptr.stop_vec")));
    auto logits = scale(concat_cols<Real>({mask_logit, pos_logits, stop_logit}), inv_sqrt);
    // monotonicity mask: pointer actions must exceed the last nonzero pointer
    std::vector<uint8_t> invalid(static_cast<size_t>(steps) * (n + 2), 0);
    int last = 0;
    for (int i = 0; i < steps; ++i) {
      if (i > 0) {
        int a = prev_actions[i - 1];
        if (a >= 1 && a <= n) last = a;
      }
      for (int j = 1; j <= last; ++j) invalid[static_cast<size_t>(i) * (n + 2) + j] = 1;
    }
    return masked_fill(logits, invalid, Real(-1e9));
  }

  // Greedy alignment prediction. Returns the alignment and the stepwise
  // log-probabilities (including the terminating STOP when taken).
  std::pair<Alignment, std::vector<double>> predict_alignment(const TokenSeq& x_ids,
                                                              Style style,
                                                              AlignMode mode) const {
    int n = static_cast<int>(x_ids.size());
    if (mode == AlignMode::Simple) return {simple_alignment(n), {0.0}};
    auto src_emb = embed_hard(x_ids);
    auto enc = encode_rep(src_emb);
    std::vector<int> actions;
    std::vector<double> logps;
    Alignment t;
    int limit = n + cfg_.max_slack;
    while (static_cast<int>(t.size()) < limit) {
      auto logits = predictor_logits(src_emb, enc, actions, style);
      int row = logits->rows() - 1;
      int cols = logits->cols();
      int best = 0;
      for (int j = 1; j < cols; ++j)
        if (logits->at(row, j) > logits->at(row, best)) best = j;
      // stepwise log-probability under the masked softmax
      double mx = logits->at(row, 0), z = 0;
      for (int j = 1; j < cols; ++j) mx = std::max(mx, static_cast<double>(logits->at(row, j)));
      for (int j = 0; j < cols; ++j) z += std::exp(static_cast<double>(logits->at(row, j)) - mx);
      logps.push_back(static_cast<double>(logits->at(row, best)) - mx - std::log(z));
      if (best == kActionStop(n)) return {t, logps};
      actions.push_back(best);
      t.push_back(best);
    }
    return {t, logps};
  }

  // Differentiable -log P(T | X) via teacher forcing (actions then STOP).
  Tensor<Real> alignment_nll(Tensor<Real> src_emb, Tensor<Real> enc_state, const Alignment& t,
                             Style style) const {
    int n = enc_state->rows();
    if (!validate_alignment(t, n))
      throw std::runtime_error("alignment_nll: invalid alignment");
    std::vector<int> actions(t.begin(), t.end());
    auto logits = predictor_logits(src_emb, enc_state, actions, style);
    std::vector<int> targets = actions;
    targets.push_back(kActionStop(n));
    return cross_entropy_rows(logits, targets);
  }

  // log P(T|X): 0 for the identity alignment in Simple mode, -inf otherwise.
  double alignment_logprob(const TokenSeq& x_ids, const Alignment& t, Style style,
                           AlignMode mode) const {
    int n = static_cast<int>(x_ids.size());
    if (!validate_alignment(t, n)) return -std::numeric_limits<double>::infinity();
    if (mode == AlignMode::Simple)
      return t == simple_alignment(n) ? 0.0 : -std::numeric_limits<double>::infinity();
    auto src_emb = embed_hard(x_ids);
    auto enc = encode_rep(src_emb);
    return -static_cast<double>(value_of(alignment_nll(src_emb, enc, t, style)));
  }

  // log P(Y|X,T): sum of per-position log-probabilities (Eq. 2 factorization).
  double sequence_logprob(const TokenSeq& y, const TokenSeq& x, const Alignment& t,
                          Style style) const {
    if (y.size() != t.size())
      throw std::runtime_error("sequence_logprob: |Y| != |T|");
    auto out = nar_decode(x, t, style);
    auto logp = log_softmax_rows(out.logits);
    double s = 0;
    for (size_t i = 0; i < y.size(); ++i) s += static_cast<double>(logp->at(static_cast<int>(i), y[i]));
    return s;
  }

  // ---- greedy two-step transfer -------------------------------------------

  std::pair<TokenSeq, Alignment> transfer(const TokenSeq& x, Style target_style,
                                          AlignMode mode) const {
    auto [t, logps] = predict_alignment(x, target_style, mode);
    (void)logps;
    if (t.empty()) return {{}, t};
    auto out = nar_decode(x, t, target_style);
    return {out.greedy, t};
  }

  // ---- AR baseline decoder (cycle-only experiment) -------------------------

  // Teacher-forced logits of an autoregressive decoder of matched
  // architecture; `tgt_emb` holds the embedded shifted inputs.
  Tensor<Real> ar_decode_rep(Tensor<Real> tgt_emb, Tensor<Real> enc_state, Style style) const {
    if (!cfg_.with_ar_decoder) throw std::runtime_error("model built without the AR decoder");
    int m = tgt_emb->rows();
    auto x = add(add(tgt_emb, positional(m)), style_rows(style, m));
    std::vector<uint8_t> causal(static_cast<size_t>(m) * m, 0);
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) causal[static_cast<size_t>(i) * m + j] = 1;
    for (int l = 0; l < cfg_.num_layers; ++l) {
      std::string p = "ar.l" + std::to_string(l);
      x = add(x, attention(p + ".self", ln(p + ".ln1", x), ln(p + ".ln1", x), causal));
      x = add(x, attention(p + ".cross", ln(p + ".ln2", x), enc_state, {}));
      x = add(x, feed_forward(p, ln(p + ".ln3", x)));
    }
    x = ln("ar.lnf", x);
    return add_rowvec(matmul(x, transpose(ps_.get("embed"))), ps_.get("out_bias"));
  }

  // ---- checkpoints ---------------------------------------------------------

  void save_checkpoint(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write("NASTCKPT", 8);
    write_u32(f, 1);  // format version
    std::ostringstream cfgs;
    cfgs << "vocab_size " << cfg_.vocab_size << "\nnum_layers " << cfg_.num_layers
         << "\nnum_heads " << cfg_.num_heads << "\nhidden_dim " << cfg_.hidden_dim
         << "\nfeedforward_dim " << cfg_.feedforward_dim << "\nmax_len " << cfg_.max_len
         << "\npredictor_layers " << cfg_.predictor_layers << "\nmax_slack " << cfg_.max_slack
         << "\nno_aligned_input " << cfg_.no_aligned_input << "\nno_cross_attention "
         << cfg_.no_cross_attention << "\nwith_ar_decoder " << cfg_.with_ar_decoder << "\n";
    std::string cfgblock = cfgs.str();
    write_u32(f, static_cast<uint32_t>(cfgblock.size()));
    f.write(cfgblock.data(), static_cast<std::streamsize>(cfgblock.size()));
    write_u32(f, static_cast<uint32_t>(ps_.params.size()));
    for (const auto& [name, p] : ps_.params) {
      write_u32(f, static_cast<uint32_t>(name.size()));
      f.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(f, static_cast<uint32_t>(p->shape.size()));
      for (int e : p->shape) write_u32(f, static_cast<uint32_t>(e));
      for (Real x : p->v) {
        float v = static_cast<float>(x);
        f.write(reinterpret_cast<const char*>(&v), 4);
      }
    }
  }

  static Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "NASTCKPT", 8) != 0)
      throw std::runtime_error("bad checkpoint magic in " + path);
    uint32_t version = read_u32(f);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    uint32_t cfglen = read_u32(f);
    std::string cfgblock(cfglen, '\0');
    f.read(cfgblock.data(), cfglen);
    ModelConfig cfg;
    std::istringstream cs(cfgblock);
    std::string key;
    while (cs >> key) {
      if (key == "vocab_size") cs >> cfg.vocab_size;
      else if (key == "num_layers") cs >> cfg.num_layers;
      else if (key == "num_heads") cs >> cfg.num_heads;
      else if (key == "hidden_dim") cs >> cfg.hidden_dim;
      else if (key == "feedforward_dim") cs >> cfg.feedforward_dim;
      else if (key == "max_len") cs >> cfg.max_len;
      else if (key == "predictor_layers") cs >> cfg.predictor_layers;
      else if (key == "max_slack") cs >> cfg.max_slack;
      else if (key == "no_aligned_input") cs >> cfg.no_aligned_input;
      else if (key == "no_cross_attention") cs >> cfg.no_cross_attention;
      else if (key == "with_ar_decoder") cs >> cfg.with_ar_decoder;
      else throw std::runtime_error("checkpoint: unknown config key " + key);
    }
    Model model(cfg, 0);
    uint32_t count = read_u32(f);
    for (uint32_t i = 0; i < count; ++i) {
      uint32_t nlen = read_u32(f);
      std::string name(nlen, '\0');
      f.read(name.data(), nlen);
      uint32_t rank = read_u32(f);
      std::vector<int> shape(rank);
      for (auto& e : shape) e = static_cast<int>(read_u32(f));
      auto p = model.ps_.get(name);
      check_shapes_equal(p->shape, shape, "load_checkpoint");
      for (auto& x : p->v) {
        float v;
        f.read(reinterpret_cast<char*>(&v), 4);
        x = static_cast<Real>(v);
      }
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return model;
  }

 private:
  static void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  static uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }

  void add_layer_norm(const std::string& prefix, std::mt19937_64&) {
    auto g = ps_.add(prefix + "_g", {cfg_.hidden_dim});
    std::fill(g->v.begin(), g->v.end(), Real(1));
    ps_.add(prefix + "_b", {cfg_.hidden_dim});
  }

  void add_attention(const std::string& prefix, std::mt19937_64& rng) {
    for (const char* w : {".wq", ".wk", ".wv", ".wo"})
      init_xavier(ps_.add(prefix + w, {cfg_.hidden_dim, cfg_.hidden_dim}), rng);
  }

  void add_ff(const std::string& prefix, std::mt19937_64& rng) {
    init_xavier(ps_.add(prefix + ".ff1", {cfg_.hidden_dim, cfg_.feedforward_dim}), rng);
    ps_.add(prefix + ".ff1_b", {cfg_.feedforward_dim});
    init_xavier(ps_.add(prefix + ".ff2", {cfg_.feedforward_dim, cfg_.hidden_dim}), rng);
    ps_.add(prefix + ".ff2_b", {cfg_.hidden_dim});
  }

  void build_params(std::mt19937_64& rng) {
    int d = cfg_.hidden_dim;
    init_uniform(ps_.add("embed", {cfg_.vocab_size, d}), Real(-0.1), Real(0.1), rng);
    init_uniform(ps_.add("style", {2, d}), Real(-0.1), Real(0.1), rng);
    ps_.add("out_bias", {cfg_.vocab_size});
    for (int l = 0; l < cfg_.num_layers; ++l) {
      std::string p = "enc.l" + std::to_string(l);
      add_attention(p + ".self", rng);
      add_layer_norm(p + ".ln1", rng);
      add_layer_norm(p + ".ln2", rng);
      add_ff(p, rng);
    }
    add_layer_norm("enc.lnf", rng);
    for (int l = 0; l < cfg_.num_layers; ++l) {
      std::string p = "dec.l" + std::to_string(l);
      add_attention(p + ".self", rng);
      add_attention(p + ".cross", rng);
      add_layer_norm(p + ".ln1", rng);
      add_layer_norm(p + ".ln2", rng);
      add_layer_norm(p + ".ln3", rng);
      add_ff(p, rng);
    }
    add_layer_norm("dec.lnf", rng);
    for (int l = 0; l < cfg_.predictor_layers; ++l) {
      std::string p = "ptr.l" + std::to_string(l);
      add_attention(p + ".self", rng);
      add_attention(p + ".cross", rng);
      add_layer_norm(p + ".ln1", rng);
      add_layer_norm(p + ".ln2", rng);
      add_layer_norm(p + ".ln3", rng);
      add_ff(p, rng);
    }
    add_layer_norm("ptr.lnf", rng);
    init_uniform(ps_.add("ptr.start", {1, d}), Real(-0.1), Real(0.1), rng);
    init_uniform(ps_.add("ptr.mask_vec", {1, d}), Real(-0.1), Real(0.1), rng);
    init_uniform(ps_.add("ptr.stop_vec", {1, d}), Real(-0.1), Real(0.1), rng);
    if (cfg_.with_ar_decoder) {
      for (int l = 0; l < cfg_.num_layers; ++l) {
        std::string p = "ar.l" + std::to_string(l);
        add_attention(p + ".self", rng);
        add_attention(p + ".cross", rng);
        add_layer_norm(p + ".ln1", rng);
        add_layer_norm(p + ".ln2", rng);
        add_layer_norm(p + ".ln3", rng);
        add_ff(p, rng);
      }
      add_layer_norm("ar.lnf", rng);
      init_uniform(ps_.add("ar.start", {1, d}), Real(-0.1), Real(0.1), rng);
    }
  }

  ModelConfig cfg_;
  ParamStore<Real> ps_;
  std::vector<Real> pos_table_;
};

// Gumbel-perturbed sampling from per-position logits. Returns the relaxed
// softmax rows, the straight-through hard tensor, and the hard token ids.
template <typename Real>
struct GumbelSample {
  Tensor<Real> relaxed;
  Tensor<Real> straight_through;
  TokenSeq hard;
};

template <typename Real>
std::vector<Real> gumbel_noise(size_t count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(1e-12, 1.0);
  std::vector<Real> noise(count);
  for (auto& x : noise) x = static_cast<Real>(-std::log(-std::log(u(rng))));
  return noise;
}

template <typename Real>
GumbelSample<Real> gumbel_sample(Tensor<Real> logits, Real temperature,
                                 const std::vector<Real>& noise) {
  if (!(temperature > Real(0)))
    throw std::invalid_argument("gumbel_sample: temperature must be > 0");
  if (noise.size() != logits->size())
    throw ShapeError("gumbel_sample: noise size vs logits " + shape_str(logits->shape));
  auto noise_t = constant<Real>(logits->shape, noise);
  GumbelSample<Real> out;
  out.relaxed = softmax_rows(scale(add(logits, noise_t), Real(1) / temperature));
  out.straight_through = straight_through_hard(out.relaxed);
  out.hard.resize(logits->rows());
  for (int i = 0; i < logits->rows(); ++i) {
    int best = 0;
    for (int j = 1; j < logits->cols(); ++j)
      if (out.straight_through->at(i, j) > out.straight_through->at(i, best)) best = j;
    out.hard[i] = best;
  }
  return out;
}

template <typename Real>
GumbelSample<Real> gumbel_sample(Tensor<Real> logits, Real temperature, std::mt19937_64& rng) {
  return gumbel_sample(logits, temperature, gumbel_noise<Real>(logits->size(), rng));
}

}  // namespace nast
