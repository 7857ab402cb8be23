// The automatic-evaluation protocol: corpus BLEU-4 (uniform 1-4 gram weights,
// brevity penalty, closest-reference length, no smoothing), a trainable style
// classifier standing in for a pretrained one, G2/H2 aggregation, length
// statistics, and Pareto trade-off filtering.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nast/corpus.hpp"
#include "nast/model.hpp"
#include "nast/train.hpp"

namespace nast {

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

namespace detail {

inline TokenSeq strip_special(const TokenSeq& s) {
  TokenSeq out;
  for (int id : s)
    if (id != kPad && id != kEos) out.push_back(id);
  return out;
}

inline std::map<std::vector<int>, int64_t> ngram_counts(const TokenSeq& s, int n) {
  std::map<std::vector<int>, int64_t> counts;
  if (static_cast<int>(s.size()) < n) return counts;
  for (size_t i = 0; i + n <= s.size(); ++i)
    ++counts[std::vector<int>(s.begin() + i, s.begin() + i + n)];
  return counts;
}

}  // namespace detail

// Corpus-level BLEU-4 in [0, 100].
inline double corpus_bleu4(const std::vector<TokenSeq>& hypotheses,
                           const std::vector<std::vector<TokenSeq>>& reference_sets) {
  if (hypotheses.size() != reference_sets.size())
    throw std::runtime_error("corpus_bleu4: " + std::to_string(hypotheses.size()) +
                             " hypotheses vs " + std::to_string(reference_sets.size()) +
                             " reference sets");
  int64_t clipped[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  int64_t hyp_len = 0, ref_len = 0;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    if (reference_sets[i].empty())
      throw std::runtime_error("corpus_bleu4: empty reference set at line " + std::to_string(i));
    TokenSeq hyp = detail::strip_special(hypotheses[i]);
    std::vector<TokenSeq> refs;
    for (const auto& r : reference_sets[i]) refs.push_back(detail::strip_special(r));
    hyp_len += static_cast<int64_t>(hyp.size());
    // closest reference length; ties resolved toward the shorter reference
    int64_t best = static_cast<int64_t>(refs[0].size());
    for (const auto& r : refs) {
      int64_t l = static_cast<int64_t>(r.size());
      if (std::llabs(l - static_cast<int64_t>(hyp.size())) <
              std::llabs(best - static_cast<int64_t>(hyp.size())) ||
          (std::llabs(l - static_cast<int64_t>(hyp.size())) ==
               std::llabs(best - static_cast<int64_t>(hyp.size())) &&
           l < best))
        best = l;
    }
    ref_len += best;
    for (int n = 1; n <= 4; ++n) {
      auto hc = detail::ngram_counts(hyp, n);
      std::map<std::vector<int>, int64_t> max_ref;
      for (const auto& r : refs)
        for (auto& [g, c] : detail::ngram_counts(r, n))
          max_ref[g] = std::max(max_ref[g], c);
      for (auto& [g, c] : hc) {
        total[n - 1] += c;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) clipped[n - 1] += std::min(c, it->second);
      }
    }
  }
  double log_prec = 0;
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0 || clipped[n] == 0) return 0.0;
    log_prec += 0.25 * std::log(static_cast<double>(clipped[n]) / static_cast<double>(total[n]));
  }
  double bp = hyp_len >= ref_len
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_prec);
}

// ---------------------------------------------------------------------------
// Style classifier
// ---------------------------------------------------------------------------

struct ClassifierConfig {
  DiscriminatorConfig arch;
  int train_steps = 400;
  int batch_size = 32;
  double lr = 1e-3;
  double holdout_fraction = 0.1;
  uint64_t seed = 7;
};

template <typename Real>
struct TrainedClassifier {
  std::shared_ptr<Discriminator<Real>> net;
  double holdout_accuracy = 0;
};

template <typename Real>
TrainedClassifier<Real> train_style_classifier(const StyledCorpus& corpus,
                                               ClassifierConfig cfg) {
  if (corpus.style_x.empty() || corpus.style_y.empty())
    throw std::runtime_error("train_style_classifier: both styles must be non-empty");
  auto clf = std::make_shared<Discriminator<Real>>(cfg.arch, cfg.seed);
  std::mt19937_64 rng(cfg.seed);
  auto split = [&](const std::vector<TokenSeq>& pool) {
    size_t holdout = std::max<size_t>(1, static_cast<size_t>(pool.size() * cfg.holdout_fraction));
    std::vector<TokenSeq> train(pool.begin(), pool.end() - holdout);
    std::vector<TokenSeq> held(pool.end() - holdout, pool.end());
    if (train.empty()) train = held;
    return std::make_pair(train, held);
  };
  auto [train_x, held_x] = split(corpus.style_x);
  auto [train_y, held_y] = split(corpus.style_y);
  Adam<Real> opt(clf->params(), cfg.lr);
  for (int step = 0; step < cfg.train_steps; ++step) {
    auto loss = scalar_const<Real>(0);
    int count = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      bool from_x = (b % 2 == 0);
      const auto& pool = from_x ? train_x : train_y;
      std::uniform_int_distribution<size_t> d(0, pool.size() - 1);
      const auto& s = pool[d(rng)];
      if (s.empty()) continue;
      loss = add(loss, cross_entropy_rows(clf->logits_from_ids(s), {from_x ? 0 : 1}));
      ++count;
    }
    if (count == 0) continue;
    loss = scale(loss, Real(1) / static_cast<Real>(count));
    clf->params().zero_grad();
    backward(loss);
    opt.step();
  }
  int correct = 0, total = 0;
  for (const auto& s : held_x)
    if (!s.empty()) ++total, correct += clf->classify(s) == 0;
  for (const auto& s : held_y)
    if (!s.empty()) ++total, correct += clf->classify(s) == 1;
  TrainedClassifier<Real> out;
  out.net = clf;
  out.holdout_accuracy = total ? 100.0 * correct / total : 0.0;
  return out;
}

template <typename Real>
double style_accuracy(const Discriminator<Real>& clf, const std::vector<TokenSeq>& sentences,
                      Style target) {
  if (sentences.empty()) throw std::runtime_error("style_accuracy: empty input");
  int hit = 0;
  for (const auto& s : sentences)
    if (!s.empty() && clf.classify(s) == static_cast<int>(target)) ++hit;
  return 100.0 * hit / static_cast<double>(sentences.size());
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

inline std::pair<double, double> aggregate_g2_h2(double acc, double ref_bleu) {
  double g2 = std::sqrt(acc * ref_bleu);
  double h2 = (acc + ref_bleu) > 0 ? 2.0 * acc * ref_bleu / (acc + ref_bleu) : 0.0;
  return {g2, h2};
}

// mean |delta| and population std of delta, delta = output_len - source_len
inline std::pair<double, double> length_stats(const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) throw std::runtime_error("length_stats: empty input");
  double mean_abs = 0, mean = 0;
  for (auto& [src, out] : pairs) {
    double d = out - src;
    mean_abs += std::abs(d);
    mean += d;
  }
  mean_abs /= pairs.size();
  mean /= pairs.size();
  double var = 0;
  for (auto& [src, out] : pairs) {
    double d = (out - src) - mean;
    var += d * d;
  }
  var /= pairs.size();
  return {mean_abs, std::sqrt(var)};
}

struct DirectionReport {
  double acc = 0, self_bleu = 0, ref_bleu = 0, g2 = 0, h2 = 0;
  double mean_abs_delta = 0, std_delta = 0;
  int sentence_count = 0;
};

struct EvalReport {
  DirectionReport x_to_y, y_to_x, averaged;
  std::string classifier_note;  // substitute-classifier provenance
  double latency_ms_per_sentence = 0;  // diagnostics only; not serialized

  // Flat key-value document, one metric per line. Deterministic; excludes
  // wall-clock fields so identical runs serialize byte-identically.
  std::string serialize() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    auto emit = [&](const char* prefix, const DirectionReport& r) {
      os << prefix << ".acc " << r.acc << "\n"
         << prefix << ".self_bleu " << r.self_bleu << "\n"
         << prefix << ".ref_bleu " << r.ref_bleu << "\n"
         << prefix << ".g2 " << r.g2 << "\n"
         << prefix << ".h2 " << r.h2 << "\n"
         << prefix << ".mean_abs_delta " << r.mean_abs_delta << "\n"
         << prefix << ".std_delta " << r.std_delta << "\n"
         << prefix << ".sentences " << r.sentence_count << "\n";
    };
    emit("x_to_y", x_to_y);
    emit("y_to_x", y_to_x);
    emit("avg", averaged);
    os << "classifier " << (classifier_note.empty() ? "trained-substitute" : classifier_note)
       << "\n";
    return os.str();
  }
};

inline DirectionReport average_directions(const DirectionReport& a, const DirectionReport& b) {
  DirectionReport r;
  r.acc = (a.acc + b.acc) / 2;
  r.self_bleu = (a.self_bleu + b.self_bleu) / 2;
  r.ref_bleu = (a.ref_bleu + b.ref_bleu) / 2;
  r.g2 = (a.g2 + b.g2) / 2;
  r.h2 = (a.h2 + b.h2) / 2;
  r.mean_abs_delta = (a.mean_abs_delta + b.mean_abs_delta) / 2;
  r.std_delta = (a.std_delta + b.std_delta) / 2;
  r.sentence_count = a.sentence_count + b.sentence_count;
  return r;
}

// Scores one direction from precomputed hypotheses.
template <typename Real>
DirectionReport score_direction(const std::vector<TokenSeq>& sources,
                                const std::vector<TokenSeq>& hypotheses,
                                const std::vector<std::vector<TokenSeq>>& reference_sets,
                                const Discriminator<Real>& clf, Style target) {
  DirectionReport r;
  r.sentence_count = static_cast<int>(hypotheses.size());
  r.acc = style_accuracy(clf, hypotheses, target);
  std::vector<std::vector<TokenSeq>> self_refs;
  for (const auto& s : sources) self_refs.push_back({s});
  r.self_bleu = corpus_bleu4(hypotheses, self_refs);
  if (!reference_sets.empty()) r.ref_bleu = corpus_bleu4(hypotheses, reference_sets);
  auto [g2, h2] = aggregate_g2_h2(r.acc, r.ref_bleu);
  r.g2 = g2;
  r.h2 = h2;
  std::vector<std::pair<int, int>> lens;
  for (size_t i = 0; i < sources.size(); ++i)
    lens.emplace_back(static_cast<int>(sources[i].size()),
                      static_cast<int>(hypotheses[i].size()));
  auto [mad, sd] = length_stats(lens);
  r.mean_abs_delta = mad;
  r.std_delta = sd;
  return r;
}

// refs[r][i] (per reference-set files) -> per-sentence reference lists
inline std::vector<std::vector<TokenSeq>> transpose_refs(
    const std::vector<std::vector<TokenSeq>>& refs) {
  std::vector<std::vector<TokenSeq>> out;
  if (refs.empty()) return out;
  out.resize(refs[0].size());
  for (const auto& set : refs) {
    if (set.size() != out.size())
      throw std::runtime_error("reference files are not line-aligned");
    for (size_t i = 0; i < set.size(); ++i) out[i].push_back(set[i]);
  }
  return out;
}

// Full two-direction evaluation of a model on a test corpus.
template <typename Real>
EvalReport evaluate_model(const Model<Real>& model, AlignMode mode, const StyledCorpus& test,
                          const Discriminator<Real>& clf) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<TokenSeq> hyp_xy, hyp_yx;
  for (const auto& s : test.style_x) hyp_xy.push_back(model.transfer(s, Style::Y, mode).first);
  for (const auto& s : test.style_y) hyp_yx.push_back(model.transfer(s, Style::X, mode).first);
  auto t1 = std::chrono::steady_clock::now();
  EvalReport rep;
  rep.x_to_y = score_direction(test.style_x, hyp_xy, test.refs_x.empty()
                                                        ? std::vector<std::vector<TokenSeq>>{}
                                                        : transpose_refs(test.refs_x),
                               clf, Style::Y);
  rep.y_to_x = score_direction(test.style_y, hyp_yx, test.refs_y.empty()
                                                        ? std::vector<std::vector<TokenSeq>>{}
                                                        : transpose_refs(test.refs_y),
                               clf, Style::X);
  rep.averaged = average_directions(rep.x_to_y, rep.y_to_x);
  size_t n = hyp_xy.size() + hyp_yx.size();
  if (n > 0)
    rep.latency_ms_per_sentence =
        std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(n);
  return rep;
}

// ---------------------------------------------------------------------------
// Pareto frontier
// ---------------------------------------------------------------------------

struct TradeoffPoint {
  double acc = 0, ref_bleu = 0;
  int epoch = 0;
  std::string run_id;
};

// Keeps points not dominated in both axes; exact duplicates deduplicated.
inline std::vector<TradeoffPoint> pareto_filter(const std::vector<TradeoffPoint>& points) {
  std::vector<TradeoffPoint> kept;
  for (const auto& p : points) {
    bool dominated = false;
    for (const auto& q : points) {
      if (q.acc >= p.acc && q.ref_bleu >= p.ref_bleu &&
          (q.acc > p.acc || q.ref_bleu > p.ref_bleu)) {
        dominated = true;
        break;
      }
    }
    if (dominated) continue;
    bool dup = false;
    for (const auto& k : kept)
      if (k.acc == p.acc && k.ref_bleu == p.ref_bleu) {
        dup = true;
        break;
      }
    if (!dup) kept.push_back(p);
  }
  std::sort(kept.begin(), kept.end(),
            [](const TradeoffPoint& a, const TradeoffPoint& b) { return a.acc < b.acc; });
  return kept;
}

}  // namespace nast
