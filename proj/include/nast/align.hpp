// The latent alignment T: validation, the identity (Simple) alignment, the
// cosine-similarity pseudo-alignment DP with a brute-force oracle, alignment
// application, and the aligned-word-pair analyzer.
//
// Alignment entries: t_i == 0 means the target position is unaligned (a
// [Mask] slot); t_i in [1, N] points at source position t_i. Nonzero entries
// are strictly increasing.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nast/corpus.hpp"
#include "nast/tensor.hpp"

namespace nast {

using Alignment = std::vector<int>;

inline bool validate_alignment(const Alignment& t, int source_length) {
  int last = 0;
  for (int ti : t) {
    if (ti == 0) continue;
    if (ti < 0 || ti > source_length) return false;
    if (ti <= last) return false;
    last = ti;
  }
  return true;
}

inline Alignment simple_alignment(int source_length) {
  Alignment t(source_length);
  for (int i = 0; i < source_length; ++i) t[i] = i + 1;
  return t;
}

// [x_{t_1}, ..., x_{t_M}], with MASK at unaligned slots.
inline TokenSeq apply_alignment(const TokenSeq& x, const Alignment& t) {
  TokenSeq out;
  out.reserve(t.size());
  for (int ti : t) {
    if (ti == 0) {
      out.push_back(kMask);
    } else {
      if (ti < 1 || ti > static_cast<int>(x.size()))
        throw std::runtime_error("apply_alignment: pointer " + std::to_string(ti) +
                                 " out of range for source length " +
                                 std::to_string(x.size()));
      out.push_back(x[ti - 1]);
    }
  }
  return out;
}

// Cosine over embedding-table rows; cosine involving a zero vector is 0.
template <typename Real>
double cosine_rows(const Tensor<Real>& table, int row_a, int row_b) {
  int d = table->cols();
  double dot = 0, na = 0, nb = 0;
  for (int j = 0; j < d; ++j) {
    double a = static_cast<double>(table->at(row_a, j));
    double b = static_cast<double>(table->at(row_b, j));
    dot += a * b;
    na += a * a;
    nb += b * b;
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// sim[i][j] = cos(e(y_i), e(x_j)) for j >= 1; column 0 (the Mask slot) is 0.
template <typename Real>
std::vector<std::vector<double>> similarity_matrix(const TokenSeq& x, const TokenSeq& y,
                                                   const Tensor<Real>& embeddings) {
  int n = static_cast<int>(x.size()), m = static_cast<int>(y.size());
  std::vector<std::vector<double>> sim(m, std::vector<double>(n + 1, 0.0));
  for (int i = 0; i < m; ++i)
    for (int j = 1; j <= n; ++j) sim[i][j] = cosine_rows(embeddings, y[i], x[j - 1]);
  return sim;
}

// Sum of cosine similarities over aligned pairs; unaligned positions add 0.
// Summed in target order so the DP reproduces the same float result exactly.
template <typename Real>
double alignment_objective(const TokenSeq& x, const TokenSeq& y, const Alignment& t,
                           const Tensor<Real>& embeddings) {
  if (t.size() != y.size() || !validate_alignment(t, static_cast<int>(x.size())))
    throw std::runtime_error("alignment_objective: invalid alignment");
  double score = 0;
  for (size_t i = 0; i < t.size(); ++i)
    if (t[i] != 0) score += cosine_rows(embeddings, y[i], x[t[i] - 1]);
  return score;
}

namespace detail {

// Branch precedence at each cell: c1 (leave y_i unaligned) wins ties over
// c2 (align y_i with x_j), which wins over c3 (y_i aligned left of j).
// This ordering is normative; the oracle replicates it.
enum DpChoice { kChoiceUnaligned = 0, kChoiceDiagonal = 1, kChoiceLeft = 2 };

}  // namespace detail

// Argmax of alignment_objective over monotone alignments. O(N*M*d), the
// similarity matrix dominating.
template <typename Real>
std::pair<Alignment, double> pseudo_alignment_dp(const TokenSeq& x, const TokenSeq& y,
                                                 const Tensor<Real>& embeddings) {
  int n = static_cast<int>(x.size()), m = static_cast<int>(y.size());
  for (int id : x)
    if (id < 0 || id >= embeddings->rows())
      throw std::runtime_error("pseudo_alignment_dp: no embedding for token id " +
                               std::to_string(id));
  for (int id : y)
    if (id < 0 || id >= embeddings->rows())
      throw std::runtime_error("pseudo_alignment_dp: no embedding for token id " +
                               std::to_string(id));
  auto sim = similarity_matrix(x, y, embeddings);

  std::vector<std::vector<double>> f(m + 1, std::vector<double>(n + 1, 0.0));
  std::vector<std::vector<int8_t>> back(m + 1, std::vector<int8_t>(n + 1, 0));
  for (int i = 1; i <= m; ++i) {
    for (int j = 0; j <= n; ++j) {
      double c1 = f[i - 1][j];
      double best = c1;
      int8_t choice = detail::kChoiceUnaligned;
      if (j > 0) {
        double c2 = f[i - 1][j - 1] + sim[i - 1][j];
        double c3 = f[i][j - 1];
        if (c2 > best) {
          best = c2;
          choice = detail::kChoiceDiagonal;
        }
        if (c3 > best) {
          best = c3;
          choice = detail::kChoiceLeft;
        }
      }
      f[i][j] = best;
      back[i][j] = choice;
    }
  }
  Alignment t(m, 0);
  int i = m, j = n;
  while (i > 0) {
    switch (back[i][j]) {
      case detail::kChoiceUnaligned:
        t[i - 1] = 0;
        --i;
        break;
      case detail::kChoiceDiagonal:
        t[i - 1] = j;
        --i;
        --j;
        break;
      default:
        --j;
        break;
    }
  }
  return {t, alignment_objective(x, y, t, embeddings)};
}

// Exhaustive oracle. Enumerates every monotone alignment for the score, and
// follows the codified c1>c2>c3 precedence by plain recursion (no tables)
// for the tie-broken alignment.
template <typename Real>
std::pair<Alignment, double> brute_force_pseudo_alignment(const TokenSeq& x, const TokenSeq& y,
                                                          const Tensor<Real>& embeddings) {
  int n = static_cast<int>(x.size()), m = static_cast<int>(y.size());
  if (n > 10 || m > 10)
    throw std::runtime_error("brute_force_pseudo_alignment: size guard exceeded (N,M <= 10)");
  auto sim = similarity_matrix(x, y, embeddings);

  double best_score = -1e18;
  Alignment current(m, 0);
  std::function<void(int, int, double)> enumerate = [&](int i, int min_next, double acc) {
    if (i == m) {
      best_score = std::max(best_score, acc);
      return;
    }
    current[i] = 0;
    enumerate(i + 1, min_next, acc + 0.0);
    for (int j = min_next; j <= n; ++j) {
      current[i] = j;
      enumerate(i + 1, j + 1, acc + sim[i][j]);
    }
  };
  if (m == 0) best_score = 0.0;
  else enumerate(0, 1, 0.0);

  // Tie-broken alignment: exponential recursion with the same branch
  // precedence as the DP cell rule, but without memoization.
  std::function<std::pair<double, Alignment>(int, int)> solve = [&](int i,
                                                                    int j) -> std::pair<double, Alignment> {
    if (i == 0) return {0.0, {}};
    auto [s1, t1] = solve(i - 1, j);
    double best = s1;
    int choice = 0;
    std::pair<double, Alignment> r2, r3;
    if (j > 0) {
      r2 = solve(i - 1, j - 1);
      r3 = solve(i, j - 1);
      if (r2.first + sim[i - 1][j] > best) {
        best = r2.first + sim[i - 1][j];
        choice = 1;
      }
      if (r3.first > best) {
        best = r3.first;
        choice = 2;
      }
    }
    if (choice == 0) {
      t1.push_back(0);
      return {s1, t1};
    }
    if (choice == 1) {
      r2.second.push_back(j);
      return {best, r2.second};
    }
    return {best, r3.second};
  };
  auto [score, align] = solve(m, n);
  (void)score;
  return {align, best_score};
}

// ---------------------------------------------------------------------------
// Aligned word-pair analysis
// ---------------------------------------------------------------------------

struct TransferResult {
  TokenSeq source;
  Alignment alignment;
  TokenSeq output;
};

struct PairEntry {
  std::string target;
  int64_t count = 0;
  double proportion = 0;  // within the source-token group
};

// Counting rules: t_i >= 1 records x_{t_i} -> y_i; t_i == 0 records
// [Mask] -> y_i; a source word aligned to no target records x_i -> [Del].
inline std::map<std::string, std::vector<PairEntry>> count_aligned_pairs(
    const std::vector<TransferResult>& results, const Vocabulary& vocab) {
  std::map<std::string, std::map<std::string, int64_t>> counts;
  for (const auto& r : results) {
    if (r.alignment.size() != r.output.size() ||
        !validate_alignment(r.alignment, static_cast<int>(r.source.size())))
      throw std::runtime_error("count_aligned_pairs: invalid alignment in results");
    std::vector<bool> used(r.source.size(), false);
    for (size_t i = 0; i < r.alignment.size(); ++i) {
      int ti = r.alignment[i];
      const std::string& tgt = vocab.token(r.output[i]);
      if (ti >= 1) {
        used[ti - 1] = true;
        ++counts[vocab.token(r.source[ti - 1])][tgt];
      } else {
        ++counts[vocab.token(kMask)][tgt];
      }
    }
    for (size_t i = 0; i < r.source.size(); ++i)
      if (!used[i]) ++counts[vocab.token(r.source[i])][vocab.token(kDel)];
  }
  std::map<std::string, std::vector<PairEntry>> out;
  for (auto& [src, tgts] : counts) {
    int64_t total = 0;
    for (auto& [t, c] : tgts) total += c;
    std::vector<PairEntry> entries;
    for (auto& [t, c] : tgts)
      entries.push_back({t, c, static_cast<double>(c) / static_cast<double>(total)});
    std::sort(entries.begin(), entries.end(), [](const PairEntry& a, const PairEntry& b) {
      if (a.count != b.count) return a.count > b.count;
      return a.target < b.target;
    });
    out.emplace(src, std::move(entries));
  }
  return out;
}

// Tab-separated report: source token, target token, count, percentage.
inline std::string format_pair_report(const std::map<std::string, std::vector<PairEntry>>& pairs) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  for (const auto& [src, entries] : pairs)
    for (const auto& e : entries)
      os << src << "\t" << e.target << "\t" << e.count << "\t" << e.proportion * 100.0 << "%\n";
  return os.str();
}

}  // namespace nast
