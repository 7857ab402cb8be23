#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "nast/commands.hpp"

using namespace nast;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("nast_cli_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& content) {
    auto p = (path / name).string();
    std::ofstream f(p);
    f << content;
    return p;
  }
  std::string sub(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("config: flag overrides file value") {
  TempDir d;
  auto cfgfile = d.file("c.txt", "train.lr 1e-4\nseed 3  # trailing comment\n");
  auto cfg = RunConfig::parse({"--config", cfgfile, "--train.lr", "1e-3"});
  CHECK(cfg.get_double("train.lr", 0) == Catch::Approx(1e-3));
  CHECK(cfg.get_int("seed", 0) == 3);
}

TEST_CASE("config: unknown keys and type mismatches are rejected") {
  CHECK_THROWS_AS(RunConfig::parse({"--train.lrr", "1"}), ConfigError);
  auto cfg = RunConfig::parse({"--train.max_steps", "abc"});
  CHECK_THROWS_AS(cfg.get_int("train.max_steps", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_double("train.max_steps", 0), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse({"--train.lr"}), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse({"train.lr", "1"}), ConfigError);
}

TEST_CASE("config: empty file plus complete flags is valid; echo is sorted") {
  TempDir d;
  auto cfgfile = d.file("empty.txt", "\n# only a comment\n");
  auto cfg = RunConfig::parse({"--config", cfgfile, "--seed", "7", "--out.dir", "x"});
  CHECK(cfg.serialize() == "out.dir x\nseed 7\n");
}

TEST_CASE("run_command exit codes") {
  CHECK(run_command({}) == 2);
  CHECK(run_command({"frobnicate"}) == 2);
  CHECK(run_command({"train", "--bogus.key", "1"}) == 2);
  // runtime failure: missing input file
  TempDir d;
  CHECK(run_command({"train", "--out.dir", d.sub("o"), "--data.train_x", d.sub("missing"),
                     "--data.train_y", d.sub("missing")}) == 1);
}

TEST_CASE("synth + transfer: line parity and valid alignments") {
  TempDir d;
  auto spec = d.file("spec.txt",
                     "common_tokens 10\npair good bad\nmin_len 3\nmax_len 6\n"
                     "sentences_per_style 40\nseed 11\n");
  REQUIRE(run_command({"synth", "--synth.spec", spec, "--out.dir", d.sub("data")}) == 0);

  REQUIRE(run_command({"train", "--out.dir", d.sub("run"),
                       "--data.train_x", d.sub("data/train.x"),
                       "--data.train_y", d.sub("data/train.y"),
                       "--data.vocab", d.sub("data/vocab.txt"),
                       "--model.hidden_dim", "16", "--model.feedforward_dim", "32",
                       "--model.num_layers", "1", "--model.num_heads", "2",
                       "--train.batch_size", "2", "--train.max_steps", "2",
                       "--train.disc_steps", "1", "--train.gen_steps", "1",
                       "--clf.train_steps", "5"}) == 0);

  REQUIRE(run_command({"transfer", "--out.dir", d.sub("tr"),
                       "--data.vocab", d.sub("data/vocab.txt"),
                       "--transfer.checkpoint", d.sub("run/model.ckpt"),
                       "--transfer.input", d.sub("data/test.x"),
                       "--transfer.style", "y"}) == 0);

  auto sources = read_lines(d.sub("data/test.x"));
  auto outputs = read_lines(d.sub("tr/transfer.txt"));
  auto aligns = read_lines(d.sub("tr/transfer.align"));
  REQUIRE(outputs.size() == sources.size());
  REQUIRE(aligns.size() == sources.size());
  for (size_t i = 0; i < sources.size(); ++i) {
    std::istringstream is(aligns[i]);
    Alignment t;
    int v;
    while (is >> v) t.push_back(v);
    int n = 0;
    std::istringstream ss(sources[i]);
    std::string tok;
    while (ss >> tok) ++n;
    CHECK(validate_alignment(t, n));
  }

  // the resolved config is echoed for reproducibility
  CHECK(slurp(d.sub("run/config.resolved.txt")).find("train.max_steps 2") != std::string::npos);

  SECTION("align-analyze consumes the transfer artifacts") {
    REQUIRE(run_command({"align-analyze", "--out.dir", d.sub("an"),
                         "--data.vocab", d.sub("data/vocab.txt"),
                         "--analyze.sources", d.sub("data/test.x"),
                         "--analyze.outputs", d.sub("tr/transfer.txt"),
                         "--analyze.alignments", d.sub("tr/transfer.align")}) == 0);
    auto report = slurp(d.sub("an/pairs.tsv"));
    CHECK_FALSE(report.empty());
  }
}

TEST_CASE("eval: hypotheses equal to references yield ref_bleu 100") {
  TempDir d;
  std::string x_lines = "c1 c2 c3 c4 c5\nc2 c3 c4 c5 c6\n";
  std::string y_lines = "c7 c8 c9 c1 c2\nc8 c9 c1 c2 c3\n";
  auto train_x = d.file("train.x", x_lines + x_lines + x_lines);
  auto train_y = d.file("train.y", y_lines + y_lines + y_lines);
  auto hyp = d.file("hyp.txt", "c7 c8 c9 c2 c1\nc9 c8 c1 c3 c2\n");
  auto src = d.file("src.txt", x_lines);
  REQUIRE(run_command({"eval", "--out.dir", d.sub("ev"),
                       "--data.train_x", train_x, "--data.train_y", train_y,
                       "--eval.hyp_xy", hyp, "--eval.src_x", src,
                       "--eval.refs_x", hyp, "--clf.train_steps", "5"}) == 0);
  auto report = slurp(d.sub("ev/eval.txt"));
  CHECK(report.find("x_to_y.ref_bleu 100.0000") != std::string::npos);
}

TEST_CASE("eval reruns are byte-identical") {
  TempDir d;
  std::string x_lines = "c1 c2 c3 c4\nc2 c3 c4 c5\nc3 c4 c5 c6\n";
  std::string y_lines = "c7 c8 c9 c1\nc8 c9 c1 c2\nc9 c1 c2 c3\n";
  auto train_x = d.file("train.x", x_lines);
  auto train_y = d.file("train.y", y_lines);
  auto hyp = d.file("hyp.txt", y_lines);
  auto src = d.file("src.txt", x_lines);
  std::vector<std::string> argv = {"eval", "--out.dir", d.sub("e1"),
                                   "--data.train_x", train_x, "--data.train_y", train_y,
                                   "--eval.hyp_xy", hyp, "--eval.src_x", src,
                                   "--clf.train_steps", "10", "--seed", "4"};
  REQUIRE(run_command(argv) == 0);
  auto first = slurp(d.sub("e1/eval.txt"));
  argv[2] = d.sub("e2");
  REQUIRE(run_command(argv) == 0);
  CHECK(slurp(d.sub("e2/eval.txt")) == first);
}
