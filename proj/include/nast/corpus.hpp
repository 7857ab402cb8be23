// Corpus ingestion, vocabulary handling, the denoising corruption used by the
// self-reconstruction loss, and the synthetic lexicon-swap task generator.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace nast {

struct CorpusError : std::runtime_error {
  explicit CorpusError(const std::string& msg) : std::runtime_error(msg) {}
};

// Reserved ids 0..4, never assigned to corpus tokens.
enum SpecialToken : int {
  kPad = 0,
  kUnk = 1,
  kEos = 2,
  kMask = 3,  // placeholder for unaligned target positions
  kDel = 4,   // analysis marker for unaligned source words
  kNumSpecial = 5,
};

using TokenSeq = std::vector<int>;

class Vocabulary {
 public:
  Vocabulary() {
    for (const char* s : {"<pad>", "<unk>", "<eos>", "[Mask]", "[Del]"}) add_token(s);
  }

  int add_token(const std::string& tok) {
    auto it = token_to_id_.find(tok);
    if (it != token_to_id_.end()) return it->second;
    int id = static_cast<int>(id_to_token_.size());
    token_to_id_.emplace(tok, id);
    id_to_token_.push_back(tok);
    return id;
  }

  int id(const std::string& tok) const {
    auto it = token_to_id_.find(tok);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& tok) const { return token_to_id_.count(tok) > 0; }

  const std::string& token(int id) const {
    if (id < 0 || id >= static_cast<int>(id_to_token_.size()))
      throw CorpusError("vocabulary: id " + std::to_string(id) + " out of range");
    return id_to_token_[id];
  }

  int size() const { return static_cast<int>(id_to_token_.size()); }

  TokenSeq encode(const std::string& line) const {
    TokenSeq out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(id(tok));
    return out;
  }

  std::string decode(const TokenSeq& ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
      if (i) out += ' ';
      out += token(ids[i]);
    }
    return out;
  }

  void save(std::ostream& os) const {
    for (int i = kNumSpecial; i < size(); ++i) os << id_to_token_[i] << "\n";
  }

  static Vocabulary load_tokens(std::istream& is) {
    Vocabulary v;
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty()) v.add_token(line);
    }
    return v;
  }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Frequency-descending, ties lexicographic; tokens below min_freq dropped.
inline Vocabulary build_vocabulary(const std::vector<std::string>& sentences, int min_freq) {
  if (min_freq < 1) throw CorpusError("build_vocabulary: min_freq must be >= 1");
  if (sentences.empty()) throw CorpusError("build_vocabulary: empty corpus");
  std::map<std::string, int64_t> freq;
  for (const auto& s : sentences) {
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) ++freq[tok];
  }
  std::vector<std::pair<std::string, int64_t>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (auto& [tok, n] : items)
    if (n >= min_freq) v.add_token(tok);
  return v;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CorpusError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    for (unsigned char c : line)
      if (c == 0)
        throw CorpusError(path + ":" + std::to_string(lineno) + ": malformed encoding");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline std::vector<TokenSeq> load_corpus(const std::string& path, const Vocabulary& vocab) {
  std::vector<TokenSeq> out;
  for (const auto& line : read_lines(path)) out.push_back(vocab.encode(line));
  return out;
}

struct StyledCorpus {
  std::vector<TokenSeq> style_x;
  std::vector<TokenSeq> style_y;
  // Line-aligned reference sets; refs_x[r][i] is the r-th reference for style_x[i].
  std::vector<std::vector<TokenSeq>> refs_x;
  std::vector<std::vector<TokenSeq>> refs_y;
};

struct NoiseConfig {
  double drop_prob = 0.1;
  double mask_prob = 0.1;
  double insert_prob = 0.1;
  int max_insertions = 2;

  bool length_preserving() const {
    return drop_prob == 0.0 && (insert_prob == 0.0 || max_insertions == 0);
  }
  void validate() const {
    for (double p : {drop_prob, mask_prob, insert_prob})
      if (p < 0.0 || p > 1.0) throw CorpusError("noise probability out of [0,1]");
    if (max_insertions < 0) throw CorpusError("max_insertions must be >= 0");
  }
};

// Word dropout / masking / insertion. Never returns an empty sequence and
// never emits PAD; inserted tokens are uniform over the non-reserved vocab.
inline TokenSeq corrupt(const TokenSeq& seq, const NoiseConfig& cfg, const Vocabulary& vocab,
                        std::mt19937_64& rng) {
  if (seq.empty()) throw CorpusError("corrupt: empty input sequence");
  cfg.validate();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TokenSeq out;
  for (int id : seq) {
    if (u(rng) < cfg.drop_prob) continue;
    if (u(rng) < cfg.mask_prob)
      out.push_back(kMask);
    else
      out.push_back(id);
  }
  if (out.empty()) {
    std::uniform_int_distribution<size_t> pickpos(0, seq.size() - 1);
    out.push_back(seq[pickpos(rng)]);
  }
  if (vocab.size() > kNumSpecial) {
    std::uniform_int_distribution<int> picktok(kNumSpecial, vocab.size() - 1);
    for (int k = 0; k < cfg.max_insertions; ++k) {
      if (u(rng) < cfg.insert_prob) {
        std::uniform_int_distribution<size_t> pos(0, out.size());
        out.insert(out.begin() + pos(rng), picktok(rng));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic lexicon-swap task
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  int num_common_tokens = 40;           // filler vocabulary c0..c{n-1}
  std::vector<std::pair<std::string, std::string>> pairs;  // style-X word <-> style-Y word
  std::string filler_x;                 // optional style-specific trailing token
  std::string filler_y;
  double filler_prob = 0.0;
  int min_len = 5;
  int max_len = 12;
  int min_style_words = 1;
  int max_style_words = 2;
  int sentences_per_style = 2000;
  uint64_t seed = 0;

  void validate() const {
    if (pairs.empty()) throw CorpusError("synthetic spec: no lexicon pairs");
    std::map<std::string, int> xs, ys;
    for (auto& [a, b] : pairs) {
      if (++xs[a] > 1 || ++ys[b] > 1)
        throw CorpusError("synthetic spec: lexicon mapping is not a bijection");
    }
    for (auto& [a, b] : pairs)
      if (ys.count(a) || xs.count(b))
        throw CorpusError("synthetic spec: lexicons are not disjoint");
    if (min_len < 1 || max_len < min_len) throw CorpusError("synthetic spec: bad length range");
    if (min_style_words < 0 || max_style_words < min_style_words ||
        max_style_words > min_len)
      throw CorpusError("synthetic spec: bad style word range");
    if (sentences_per_style < 1) throw CorpusError("synthetic spec: bad corpus size");
  }
};

struct SyntheticCorpus {
  Vocabulary vocab;
  StyledCorpus corpus;  // refs hold the gold lexicon-swapped references
};

// Sentences are common tokens with a few style-lexicon words at random
// positions; the gold reference applies the bijection (and the filler rule),
// so an oracle transfer reaches RefB = 100.
inline SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  SyntheticCorpus out;
  std::vector<std::string> common;
  for (int i = 0; i < spec.num_common_tokens; ++i) common.push_back("c" + std::to_string(i));
  for (auto& c : common) out.vocab.add_token(c);
  std::map<int, int> x_to_y, y_to_x;
  std::vector<int> x_lex, y_lex;
  for (auto& [a, b] : spec.pairs) {
    int ia = out.vocab.add_token(a);
    int ib = out.vocab.add_token(b);
    x_to_y[ia] = ib;
    y_to_x[ib] = ia;
    x_lex.push_back(ia);
    y_lex.push_back(ib);
  }
  int fx = spec.filler_x.empty() ? -1 : out.vocab.add_token(spec.filler_x);
  int fy = spec.filler_y.empty() ? -1 : out.vocab.add_token(spec.filler_y);

  std::uniform_int_distribution<int> len_d(spec.min_len, spec.max_len);
  std::uniform_int_distribution<int> nstyle_d(spec.min_style_words, spec.max_style_words);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  auto gen_side = [&](const std::vector<int>& lex, const std::map<int, int>& swap, int own_filler,
                      int other_filler, std::vector<TokenSeq>& sents,
                      std::vector<std::vector<TokenSeq>>& refs) {
    refs.resize(1);
    std::uniform_int_distribution<int> common_d(0, spec.num_common_tokens - 1);
    std::uniform_int_distribution<int> lex_d(0, static_cast<int>(lex.size()) - 1);
    for (int s = 0; s < spec.sentences_per_style; ++s) {
      int len = len_d(rng);
      int nstyle = std::min(nstyle_d(rng), len);
      TokenSeq sent(len);
      for (int i = 0; i < len; ++i) sent[i] = out.vocab.id(common[common_d(rng)]);
      // choose distinct positions for style words
      std::vector<int> positions(len);
      for (int i = 0; i < len; ++i) positions[i] = i;
      for (int i = 0; i < nstyle; ++i) {
        std::uniform_int_distribution<int> pd(i, len - 1);
        std::swap(positions[i], positions[pd(rng)]);
        sent[positions[i]] = lex[lex_d(rng)];
      }
      TokenSeq ref;
      for (int id : sent) {
        auto it = swap.find(id);
        ref.push_back(it == swap.end() ? id : it->second);
      }
      if (own_filler >= 0 && u(rng) < spec.filler_prob) sent.push_back(own_filler);
      if (other_filler >= 0 && u(rng) < spec.filler_prob) ref.push_back(other_filler);
      sents.push_back(std::move(sent));
      refs[0].push_back(std::move(ref));
    }
  };
  gen_side(x_lex, x_to_y, fx, -1, out.corpus.style_x, out.corpus.refs_x);
  gen_side(y_lex, y_to_x, fy, -1, out.corpus.style_y, out.corpus.refs_y);
  return out;
}

inline void write_corpus(const std::string& path, const std::vector<TokenSeq>& sents,
                         const Vocabulary& vocab) {
  std::ofstream f(path);
  if (!f) throw CorpusError("cannot write file: " + path);
  for (const auto& s : sents) f << vocab.decode(s) << "\n";
}

// Flat key-value synthetic spec file: "key value" per line, '#' comments.
inline SyntheticSpec parse_synthetic_spec(const std::string& path) {
  SyntheticSpec spec;
  for (const auto& raw : read_lines(path)) {
    std::string line = raw.substr(0, raw.find('#'));
    std::istringstream is(line);
    std::string key;
    if (!(is >> key)) continue;
    if (key == "common_tokens") is >> spec.num_common_tokens;
    else if (key == "pair") {
      std::string a, b;
      is >> a >> b;
      if (a.empty() || b.empty()) throw CorpusError("synthetic spec: bad pair line: " + raw);
      spec.pairs.emplace_back(a, b);
    } else if (key == "filler_x") is >> spec.filler_x;
    else if (key == "filler_y") is >> spec.filler_y;
    else if (key == "filler_prob") is >> spec.filler_prob;
    else if (key == "min_len") is >> spec.min_len;
    else if (key == "max_len") is >> spec.max_len;
    else if (key == "min_style_words") is >> spec.min_style_words;
    else if (key == "max_style_words") is >> spec.max_style_words;
    else if (key == "sentences_per_style") is >> spec.sentences_per_style;
    else if (key == "seed") is >> spec.seed;
    else throw CorpusError("synthetic spec: unknown key: " + key);
  }
  return spec;
}

}  // namespace nast
