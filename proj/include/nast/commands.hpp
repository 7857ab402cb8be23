// The operator surface: synth | train | transfer | eval | align-analyze |
// cycle-exp. Artifacts go to files under out.dir; progress and metrics go to
// standard error. Exit codes: 0 success, 1 runtime failure, 2 usage/config.

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "nast/align.hpp"
#include "nast/config.hpp"
#include "nast/corpus.hpp"
#include "nast/eval.hpp"
#include "nast/model.hpp"
#include "nast/train.hpp"

namespace nast {

using TrainReal = float;

namespace cli {

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f << content;
}

inline std::string out_path(const RunConfig& cfg, const std::string& name) {
  std::string dir = cfg.require_string("out.dir");
  std::filesystem::create_directories(dir);
  return dir + "/" + name;
}

inline void echo_config(const RunConfig& cfg) {
  write_text(out_path(cfg, "config.resolved.txt"), cfg.serialize());
}

inline ModelConfig model_config(const RunConfig& cfg, int vocab_size) {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.num_layers = static_cast<int>(cfg.get_int("model.num_layers", 2));
  mc.num_heads = static_cast<int>(cfg.get_int("model.num_heads", 4));
  mc.hidden_dim = static_cast<int>(cfg.get_int("model.hidden_dim", 64));
  mc.feedforward_dim = static_cast<int>(cfg.get_int("model.feedforward_dim", 128));
  mc.max_len = static_cast<int>(cfg.get_int("model.max_len", 64));
  mc.predictor_layers = static_cast<int>(cfg.get_int("model.predictor_layers", 1));
  mc.max_slack = static_cast<int>(cfg.get_int("model.max_slack", 5));
  mc.dropout = cfg.get_double("model.dropout", 0.0);
  mc.no_aligned_input = cfg.get_bool("model.no_aligned_input", false);
  mc.no_cross_attention = cfg.get_bool("model.no_cross_attention", false);
  return mc;
}

inline TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.lr = cfg.get_double("train.lr", 1e-4);
  tc.disc_lr = cfg.get_double("train.disc_lr", 1e-4);
  tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size", 64));
  tc.max_steps = static_cast<int>(cfg.get_int("train.max_steps", 1000));
  tc.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
  tc.noise.drop_prob = cfg.get_double("train.drop_prob", 0.1);
  tc.noise.mask_prob = cfg.get_double("train.mask_prob", 0.1);
  tc.noise.insert_prob = cfg.get_double("train.insert_prob", 0.1);
  tc.noise.max_insertions = static_cast<int>(cfg.get_int("train.max_insertions", 2));
  std::string regime = cfg.get_string("train.regime", "gumbel");
  if (regime == "gumbel") tc.regime = GradApprox::GumbelSoftmax;
  else if (regime == "soft") tc.regime = GradApprox::SoftEmbedding;
  else if (regime == "stop") tc.regime = GradApprox::StopGradient;
  else throw ConfigError("train.regime must be gumbel|soft|stop, got '" + regime + "'");
  tc.gumbel_temperature = cfg.get_double("train.gumbel_temperature", 1.0);
  tc.weights.alpha = cfg.get_double("train.alpha", 0.5);
  tc.weights.beta_x = cfg.get_double("train.beta_x", 1.0);
  tc.weights.beta_y = cfg.get_double("train.beta_y", 1.0);
  tc.weights.gamma = cfg.get_double("train.gamma", 0.5);
  std::string align = cfg.get_string("train.align", "simple");
  if (align == "simple") tc.align_mode = AlignMode::Simple;
  else if (align == "learnable") tc.align_mode = AlignMode::Learnable;
  else throw ConfigError("train.align must be simple|learnable, got '" + align + "'");
  tc.disc_steps = static_cast<int>(cfg.get_int("train.disc_steps", 10));
  tc.gen_steps = static_cast<int>(cfg.get_int("train.gen_steps", 5));
  tc.eval_every = static_cast<int>(cfg.get_int("train.eval_every", 0));
  tc.clip_norm = cfg.get_double("train.clip_norm", 1.0);
  tc.style_warmup_steps = static_cast<int>(cfg.get_int("train.style_warmup_steps", 0));
  // Simple alignment needs length-preserving corruption
  if (tc.align_mode == AlignMode::Simple && !cfg.has("train.drop_prob")) {
    tc.noise.drop_prob = 0.0;
    tc.noise.insert_prob = 0.0;
    tc.noise.max_insertions = 0;
    if (!cfg.has("train.mask_prob")) tc.noise.mask_prob = 0.2;
  }
  return tc;
}

inline ClassifierConfig classifier_config(const RunConfig& cfg, int vocab_size, int max_len) {
  ClassifierConfig cc;
  cc.arch.vocab_size = vocab_size;
  cc.arch.num_layers = static_cast<int>(cfg.get_int("clf.num_layers", 2));
  cc.arch.hidden_dim = static_cast<int>(cfg.get_int("clf.hidden_dim", 64));
  cc.arch.feedforward_dim = cc.arch.hidden_dim * 2;
  cc.arch.max_len = max_len;
  cc.train_steps = static_cast<int>(cfg.get_int("clf.train_steps", 400));
  cc.batch_size = static_cast<int>(cfg.get_int("clf.batch_size", 32));
  cc.lr = cfg.get_double("clf.lr", 1e-3);
  return cc;
}

inline Vocabulary load_or_build_vocab(const RunConfig& cfg,
                                      const std::vector<std::string>& corpus_paths) {
  if (cfg.has("data.vocab")) {
    std::ifstream f(cfg.require_string("data.vocab"));
    if (!f) throw std::runtime_error("cannot open vocab: " + cfg.require_string("data.vocab"));
    return Vocabulary::load_tokens(f);
  }
  std::vector<std::string> lines;
  for (const auto& p : corpus_paths)
    for (auto& l : read_lines(p)) lines.push_back(l);
  return build_vocabulary(lines, static_cast<int>(cfg.get_int("data.min_freq", 1)));
}

inline std::string format_alignment(const Alignment& t) {
  std::string out;
  for (size_t i = 0; i < t.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(t[i]);
  }
  return out;
}

inline Alignment parse_alignment(const std::string& line) {
  Alignment t;
  std::istringstream is(line);
  int v;
  while (is >> v) t.push_back(v);
  return t;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_synth(const RunConfig& cfg) {
  auto spec = parse_synthetic_spec(cfg.require_string("synth.spec"));
  if (cfg.has("seed")) spec.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
  std::mt19937_64 rng(spec.seed);
  auto synth = generate_synthetic_corpus(spec, rng);
  double test_frac = cfg.get_double("synth.test_fraction", 0.1);
  auto split = [&](std::vector<TokenSeq>& all, std::vector<TokenSeq>& refs,
                   const std::string& tag) {
    size_t ntest = std::max<size_t>(1, static_cast<size_t>(all.size() * test_frac));
    size_t ntrain = all.size() - ntest;
    std::vector<TokenSeq> train(all.begin(), all.begin() + ntrain);
    std::vector<TokenSeq> test(all.begin() + ntrain, all.end());
    std::vector<TokenSeq> test_refs(refs.begin() + ntrain, refs.end());
    write_corpus(out_path(cfg, "train." + tag), train, synth.vocab);
    write_corpus(out_path(cfg, "test." + tag), test, synth.vocab);
    write_corpus(out_path(cfg, "test." + tag + ".refs.0"), test_refs, synth.vocab);
  };
  split(synth.corpus.style_x, synth.corpus.refs_x[0], "x");
  split(synth.corpus.style_y, synth.corpus.refs_y[0], "y");
  std::ostringstream vs;
  synth.vocab.save(vs);
  write_text(out_path(cfg, "vocab.txt"), vs.str());
  echo_config(cfg);
  std::cerr << "synth: wrote " << spec.sentences_per_style << " sentences/style, vocab size "
            << synth.vocab.size() << "\n";
  return 0;
}

inline StyledCorpus load_train_corpus(const RunConfig& cfg, const Vocabulary& vocab) {
  StyledCorpus c;
  c.style_x = load_corpus(cfg.require_string("data.train_x"), vocab);
  c.style_y = load_corpus(cfg.require_string("data.train_y"), vocab);
  return c;
}

inline StyledCorpus load_test_corpus(const RunConfig& cfg, const Vocabulary& vocab) {
  StyledCorpus c;
  if (cfg.has("data.test_x")) c.style_x = load_corpus(cfg.require_string("data.test_x"), vocab);
  if (cfg.has("data.test_y")) c.style_y = load_corpus(cfg.require_string("data.test_y"), vocab);
  for (const auto& p : cfg.get_list("data.refs_x")) c.refs_x.push_back(load_corpus(p, vocab));
  for (const auto& p : cfg.get_list("data.refs_y")) c.refs_y.push_back(load_corpus(p, vocab));
  return c;
}

inline int cmd_train(const RunConfig& cfg) {
  auto vocab = load_or_build_vocab(
      cfg, {cfg.require_string("data.train_x"), cfg.require_string("data.train_y")});
  auto corpus = load_train_corpus(cfg, vocab);
  auto test = load_test_corpus(cfg, vocab);
  auto mc = model_config(cfg, vocab.size());
  auto tc = train_config(cfg);
  Model<TrainReal> model(mc, tc.seed + 1);
  DiscriminatorConfig dc;
  dc.vocab_size = vocab.size();
  dc.num_layers = 2;
  dc.hidden_dim = mc.hidden_dim;
  dc.feedforward_dim = mc.feedforward_dim;
  dc.max_len = mc.max_len + mc.max_slack + 2;
  Discriminator<TrainReal> disc(dc, tc.seed + 2);

  // frozen substitute classifier for periodic evaluation
  auto cc = classifier_config(cfg, vocab.size(), dc.max_len);
  auto clf = train_style_classifier<TrainReal>(corpus, cc);
  std::cerr << "train: substitute classifier held-out accuracy " << clf.holdout_accuracy
            << "%\n";

  Trainer<TrainReal> trainer(model, disc, corpus, vocab, tc);
  std::ofstream metrics(out_path(cfg, "metrics.tsv"));
  std::ostringstream tradeoff;
  bool have_test = !test.style_x.empty() && !test.style_y.empty();
  int eval_idx = 0;
  trainer.run(tc.max_steps, [&](const StepMetrics& m) {
    metrics << m.tsv() << "\n";
    if (m.step % 50 == 0) std::cerr << "step " << m.step << "\t" << m.tsv() << "\n";
    if (tc.eval_every > 0 && m.step % tc.eval_every == 0 && have_test) {
      auto rep = evaluate_model(model, tc.align_mode, test, *clf.net);
      write_text(out_path(cfg, "eval_step" + std::to_string(m.step) + ".txt"), rep.serialize());
      model.save_checkpoint(out_path(cfg, "model_step" + std::to_string(m.step) + ".ckpt"));
      tradeoff << rep.averaged.acc << "\t" << rep.averaged.ref_bleu << "\t" << ++eval_idx
               << "\trun-seed" << tc.seed << "\n";
    }
  });
  model.save_checkpoint(out_path(cfg, "model.ckpt"));
  if (have_test) {
    auto rep = evaluate_model(model, tc.align_mode, test, *clf.net);
    rep.classifier_note =
        "trained-substitute holdout_acc=" + std::to_string(clf.holdout_accuracy);
    write_text(out_path(cfg, "eval_final.txt"), rep.serialize());
    std::cerr << "final eval:\n" << rep.serialize();
  }
  if (!tradeoff.str().empty()) write_text(out_path(cfg, "tradeoff.tsv"), tradeoff.str());
  echo_config(cfg);
  return 0;
}

inline int cmd_transfer(const RunConfig& cfg) {
  std::ifstream vf(cfg.require_string("data.vocab"));
  if (!vf) throw std::runtime_error("cannot open vocab: " + cfg.require_string("data.vocab"));
  auto vocab = Vocabulary::load_tokens(vf);
  auto model = Model<TrainReal>::load_checkpoint(cfg.require_string("transfer.checkpoint"));
  std::string style_s = cfg.get_string("transfer.style", "y");
  if (style_s != "x" && style_s != "y")
    throw ConfigError("transfer.style must be x or y, got '" + style_s + "'");
  Style target = style_s == "x" ? Style::X : Style::Y;
  std::string align_s = cfg.get_string("train.align", "simple");
  AlignMode mode = align_s == "learnable" ? AlignMode::Learnable : AlignMode::Simple;
  auto inputs = load_corpus(cfg.require_string("transfer.input"), vocab);
  std::ostringstream out, alns;
  for (const auto& s : inputs) {
    if (s.empty()) {
      out << "\n";
      alns << "\n";
      continue;
    }
    auto [y, t] = model.transfer(s, target, mode);
    out << vocab.decode(y) << "\n";
    alns << format_alignment(t) << "\n";
  }
  write_text(cfg.get_string("transfer.output", out_path(cfg, "transfer.txt")), out.str());
  write_text(cfg.get_string("transfer.alignment_output", out_path(cfg, "transfer.align")),
             alns.str());
  echo_config(cfg);
  return 0;
}

inline int cmd_eval(const RunConfig& cfg) {
  auto vocab = load_or_build_vocab(
      cfg, {cfg.require_string("data.train_x"), cfg.require_string("data.train_y")});
  StyledCorpus train = load_train_corpus(cfg, vocab);
  auto cc = classifier_config(cfg, vocab.size(),
                              static_cast<int>(cfg.get_int("model.max_len", 64)) + 8);
  auto clf = train_style_classifier<TrainReal>(train, cc);
  std::cerr << "eval: substitute classifier held-out accuracy " << clf.holdout_accuracy << "%\n";
  EvalReport rep;
  rep.classifier_note = "trained-substitute holdout_acc=" + std::to_string(clf.holdout_accuracy);
  bool any = false;
  if (cfg.has("eval.hyp_xy")) {
    auto hyp = load_corpus(cfg.require_string("eval.hyp_xy"), vocab);
    auto src = load_corpus(cfg.require_string("eval.src_x"), vocab);
    std::vector<std::vector<TokenSeq>> refs;
    for (const auto& p : cfg.get_list("eval.refs_x")) refs.push_back(load_corpus(p, vocab));
    rep.x_to_y = score_direction(src, hyp, refs.empty() ? std::vector<std::vector<TokenSeq>>{}
                                                        : transpose_refs(refs),
                                 *clf.net, Style::Y);
    any = true;
  }
  if (cfg.has("eval.hyp_yx")) {
    auto hyp = load_corpus(cfg.require_string("eval.hyp_yx"), vocab);
    auto src = load_corpus(cfg.require_string("eval.src_y"), vocab);
    std::vector<std::vector<TokenSeq>> refs;
    for (const auto& p : cfg.get_list("eval.refs_y")) refs.push_back(load_corpus(p, vocab));
    rep.y_to_x = score_direction(src, hyp, refs.empty() ? std::vector<std::vector<TokenSeq>>{}
                                                        : transpose_refs(refs),
                                 *clf.net, Style::X);
    any = true;
  }
  if (!any) throw ConfigError("eval: need eval.hyp_xy and/or eval.hyp_yx");
  rep.averaged = average_directions(rep.x_to_y, rep.y_to_x);
  std::string report = rep.serialize();
  write_text(cfg.get_string("eval.report", out_path(cfg, "eval.txt")), report);
  std::cerr << report;
  echo_config(cfg);
  return 0;
}

inline int cmd_align_analyze(const RunConfig& cfg) {
  std::ifstream vf(cfg.require_string("data.vocab"));
  if (!vf) throw std::runtime_error("cannot open vocab: " + cfg.require_string("data.vocab"));
  auto vocab = Vocabulary::load_tokens(vf);
  auto sources = load_corpus(cfg.require_string("analyze.sources"), vocab);
  auto outputs = load_corpus(cfg.require_string("analyze.outputs"), vocab);
  auto aln_lines = read_lines(cfg.require_string("analyze.alignments"));
  if (sources.size() != outputs.size() || sources.size() != aln_lines.size())
    throw std::runtime_error("align-analyze: input files are not line-parallel");
  std::vector<TransferResult> results;
  for (size_t i = 0; i < sources.size(); ++i)
    results.push_back({sources[i], parse_alignment(aln_lines[i]), outputs[i]});
  auto pairs = count_aligned_pairs(results, vocab);
  write_text(cfg.get_string("analyze.report", out_path(cfg, "pairs.tsv")),
             format_pair_report(pairs));
  echo_config(cfg);
  return 0;
}

// Cycle-only optimization: {NAR, AR} x {gumbel, stop, soft}, mean and std of
// the cycle-reconstruction BLEU-4 over seeds.
inline double cycle_only_run(const StyledCorpus& train, const StyledCorpus& test,
                             const Vocabulary& vocab, const ModelConfig& base_mc,
                             GeneratorKind kind, GradApprox regime, int max_steps,
                             int batch_size, double lr, uint64_t seed) {
  ModelConfig mc = base_mc;
  mc.with_ar_decoder = kind == GeneratorKind::AR;
  Model<TrainReal> model(mc, seed + 1);
  Adam<TrainReal> opt(model.params(), lr);
  std::mt19937_64 rng(seed);
  TrainReal tau = 1.0;
  auto sample = [&](const std::vector<TokenSeq>& pool) {
    std::uniform_int_distribution<size_t> d(0, pool.size() - 1);
    std::vector<TokenSeq> batch;
    for (int i = 0; i < batch_size; ++i) {
      const auto& s = pool[d(rng)];
      if (!s.empty()) batch.push_back(s);
    }
    return batch;
  };
  for (int step = 0; step < max_steps; ++step) {
    auto bx = sample(train.style_x);
    auto by = sample(train.style_y);
    Tensor<TrainReal> loss;
    if (kind == GeneratorKind::NAR)
      loss = cycle_loss(model, bx, by, AlignMode::Simple, regime, tau, rng);
    else
      loss = ar_cycle_loss(model, bx, by, regime, tau, rng);
    model.params().zero_grad();
    backward(loss);
    opt.step();
  }
  // held-out cycle reconstruction BLEU
  std::vector<TokenSeq> hyps;
  std::vector<std::vector<TokenSeq>> refs;
  auto run_dir = [&](const std::vector<TokenSeq>& pool, Style src_style) {
    for (const auto& s : pool) {
      if (s.empty()) continue;
      TokenSeq mid, back;
      if (kind == GeneratorKind::NAR) {
        mid = model.transfer(s, other(src_style), AlignMode::Simple).first;
        back = model.transfer(mid, src_style, AlignMode::Simple).first;
      } else {
        mid = ar_transfer(model, s, other(src_style), static_cast<int>(s.size()));
        back = ar_transfer(model, mid, src_style, static_cast<int>(s.size()));
      }
      hyps.push_back(back);
      refs.push_back({s});
    }
  };
  run_dir(test.style_x, Style::X);
  run_dir(test.style_y, Style::Y);
  (void)vocab;
  return corpus_bleu4(hyps, refs);
}

inline int cmd_cycle_exp(const RunConfig& cfg) {
  auto vocab = load_or_build_vocab(
      cfg, {cfg.require_string("data.train_x"), cfg.require_string("data.train_y")});
  auto train = load_train_corpus(cfg, vocab);
  auto test = load_test_corpus(cfg, vocab);
  int eval_size = static_cast<int>(cfg.get_int("cycle.eval_size", 200));
  if (static_cast<int>(test.style_x.size()) > eval_size) test.style_x.resize(eval_size);
  if (static_cast<int>(test.style_y.size()) > eval_size) test.style_y.resize(eval_size);
  auto mc = model_config(cfg, vocab.size());
  int max_steps = static_cast<int>(cfg.get_int("cycle.max_steps", 600));
  int num_seeds = static_cast<int>(cfg.get_int("cycle.num_seeds", 3));
  int batch_size = static_cast<int>(cfg.get_int("cycle.batch_size", 16));
  double lr = cfg.get_double("cycle.lr", 3e-4);
  uint64_t base_seed = static_cast<uint64_t>(cfg.get_int("seed", 0));

  std::ostringstream table;
  table << "generator\tregime\tmean_bleu\tstd_bleu\n";
  for (auto kind : {GeneratorKind::NAR, GeneratorKind::AR}) {
    for (auto regime :
         {GradApprox::GumbelSoftmax, GradApprox::StopGradient, GradApprox::SoftEmbedding}) {
      std::vector<double> bleus;
      for (int s = 0; s < num_seeds; ++s) {
        double b = cycle_only_run(train, test, vocab, mc, kind, regime, max_steps, batch_size,
                                  lr, base_seed + 100 * s);
        bleus.push_back(b);
        std::cerr << (kind == GeneratorKind::NAR ? "NAR" : "AR") << "\t"
                  << grad_approx_name(regime) << "\tseed " << s << "\tBLEU " << b << "\n";
      }
      double mean = std::accumulate(bleus.begin(), bleus.end(), 0.0) / bleus.size();
      double var = 0;
      for (double b : bleus) var += (b - mean) * (b - mean);
      var /= bleus.size();
      table << (kind == GeneratorKind::NAR ? "NAR" : "AR") << "\t" << grad_approx_name(regime)
            << "\t" << mean << "\t" << std::sqrt(var) << "\n";
    }
  }
  write_text(out_path(cfg, "cycle_exp.tsv"), table.str());
  std::cerr << table.str();
  echo_config(cfg);
  return 0;
}

}  // namespace cli

// Dispatch. Returns the process exit code.
inline int run_command(const std::vector<std::string>& argv) {
  if (argv.empty()) {
    std::cerr << "usage: nast <synth|train|transfer|eval|align-analyze|cycle-exp> "
                 "[--config file] [--section.key value ...]\n";
    return 2;
  }
  const std::string& cmd = argv[0];
  try {
    RunConfig cfg = RunConfig::parse({argv.begin() + 1, argv.end()});
    if (cmd == "synth") return cli::cmd_synth(cfg);
    if (cmd == "train") return cli::cmd_train(cfg);
    if (cmd == "transfer") return cli::cmd_transfer(cfg);
    if (cmd == "eval") return cli::cmd_eval(cfg);
    if (cmd == "align-analyze") return cli::cmd_align_analyze(cfg);
    if (cmd == "cycle-exp") return cli::cmd_cycle_exp(cfg);
    std::cerr << "unknown command: " << cmd << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace nast
