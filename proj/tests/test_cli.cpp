#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <sstream>

#include "layerlens/cli.hpp"

using namespace layerlens;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  RunResult r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Scratch area with an untrained (but valid) weight document.
struct Fixture {
  fs::path dir;
  std::string model_path;

  Fixture() {
    dir = fs::temp_directory_path() / "layerlens-cli-tests";
    fs::remove_all(dir);
    fs::create_directories(dir);
    Vocab vocab = load_vocab_file(default_data_dir() + "/vocab.txt");
    ModelConfig c;
    c.vocab_size = vocab.size();
    ModelWeights w = init_weights(c, 7);
    model_path = (dir / "model.weights").string();
    save_weights_file(w, model_path);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("cli rejects missing or unknown arguments with usage errors") {
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"frobnicate"}).code == 1);
  CHECK(run_cli({"explain", "--no-such-flag"}).code == 1);

  RunResult r = run_cli({"explain", "--model", fixture().model_path});
  CHECK(r.code == 1);
  CHECK(r.err.find("usage") != std::string::npos);
}

TEST_CASE("cli help exits zero") {
  RunResult r = run_cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("explain") != std::string::npos);
}

TEST_CASE("explain writes the full artifact set deterministically") {
  const fs::path out_dir = fixture().dir / "explain-out";
  const std::vector<std::string> args = {"explain", "Read the book, forget the movie!",
                                         "--model", fixture().model_path,
                                         "--out", out_dir.string(),
                                         "--seed", "123"};
  RunResult r = run_cli(args);
  CAPTURE(r.err);
  REQUIRE(r.code == 0);

  const std::string slug = "read-the-book-forget-the-movie";
  const std::vector<std::string> expected = {
      slug + ".report",
      slug + ".embedding.bars.svg",
      slug + ".encoder-0.bars.svg",
      slug + ".aggregated.bars.svg",
      slug + ".attention.svg",
      slug + ".html",
  };
  for (const auto& name : expected) {
    INFO(name);
    CHECK(fs::exists(out_dir / name));
  }

  ExplanationReport report = parse_document(read_text_file((out_dir / (slug + ".report")).string()));
  CHECK(report.sentence == "Read the book, forget the movie!");
  CHECK(report.seed == 123);
  CHECK(report.method == "exact");
  REQUIRE(report.layers.size() == 2);
  CHECK(report.layers[0].target == "embedding");
  CHECK(report.layers[1].target == "encoder:0");
  CHECK(report.phrases.size() == 5);
  REQUIRE(report.attention.has_value());
  CHECK(report.attention->scores.rows == 5);

  // byte-identical on a second run
  std::map<std::string, std::string> first;
  for (const auto& name : expected) first[name] = read_text_file((out_dir / name).string());
  REQUIRE(run_cli(args).code == 0);
  for (const auto& name : expected)
    CHECK(read_text_file((out_dir / name).string()) == first[name]);
}

TEST_CASE("explain honors --targets and --formats") {
  const fs::path out_dir = fixture().dir / "targets-out";
  RunResult r = run_cli({"explain", "the book", "--model", fixture().model_path,
                         "--out", out_dir.string(), "--targets", "input,encoder:1",
                         "--formats", "report"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out_dir / "the-book.report"));
  CHECK(!fs::exists(out_dir / "the-book.html"));
  CHECK(!fs::exists(out_dir / "the-book.input.bars.svg"));
  ExplanationReport report = parse_document(read_text_file((out_dir / "the-book.report").string()));
  REQUIRE(report.layers.size() == 2);
  CHECK(report.layers[0].target == "input");
  CHECK(report.layers[1].target == "encoder:1");

  CHECK(run_cli({"explain", "the book", "--model", fixture().model_path,
                 "--out", out_dir.string(), "--targets", "bogus"}).code == 1);
  CHECK(run_cli({"explain", "the book", "--model", fixture().model_path,
                 "--out", out_dir.string(), "--formats", "bogus"}).code == 1);
}

TEST_CASE("baseline keeps subword players and stamps the kernel config") {
  const fs::path out_dir = fixture().dir / "baseline-out";
  RunResult r = run_cli({"baseline", "a quirky movie", "--model", fixture().model_path,
                         "--out", out_dir.string(), "--samples", "256", "--seed", "9"});
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  ExplanationReport report =
      parse_document(read_text_file((out_dir / "a-quirky-movie.report").string()));
  REQUIRE(report.baseline.has_value());
  const auto& players = report.baseline->players;
  CHECK(std::find(players.begin(), players.end(), "qui") != players.end());
  CHECK(std::find(players.begin(), players.end(), "##rky") != players.end());
  CHECK(report.seed == 9);
  CHECK(fs::exists(out_dir / "a-quirky-movie.baseline.bars.svg"));
}

TEST_CASE("attention subcommand emits the heatmap") {
  const fs::path out_dir = fixture().dir / "attention-out";
  RunResult r = run_cli({"attention", "Read the book, forget the movie!", "--model",
                         fixture().model_path, "--out", out_dir.string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out_dir / "read-the-book-forget-the-movie.attention.svg"));
  ExplanationReport report = parse_document(
      read_text_file((out_dir / "read-the-book-forget-the-movie.report").string()));
  CHECK(report.layers.empty());
  CHECK(report.aggregated.empty());
  REQUIRE(report.attention.has_value());
  CHECK(report.attention->layer_selection == "last");
  CHECK(report.attention->head_reduction == "mean");
}

TEST_CASE("batch input files skip comments and blank lines") {
  const fs::path out_dir = fixture().dir / "batch-out";
  const fs::path input = fixture().dir / "sentences.txt";
  {
    std::ofstream f(input);
    f << "# a comment\n\nthe book\nthe movie\n";
  }
  RunResult r = run_cli({"explain", "--input", input.string(), "--model", fixture().model_path,
                         "--out", out_dir.string(), "--formats", "report"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out_dir / "the-book.report"));
  CHECK(fs::exists(out_dir / "the-movie.report"));
}

TEST_CASE("external phrase documents drive explain") {
  const fs::path out_dir = fixture().dir / "phrases-out";
  const fs::path doc = fixture().dir / "phrases.json";
  {
    std::ofstream f(doc);
    f << R"({"sentence": "Read the book, forget the movie!",
            "phrases": [{"kind": "NP", "word_start": 1, "word_end": 2},
                        {"kind": "VP", "word_start": 4, "word_end": 6},
                        {"kind": "NP", "word_start": 5, "word_end": 6}]})";
  }
  RunResult r = run_cli({"explain", "--phrases", doc.string(), "--model", fixture().model_path,
                         "--out", out_dir.string(), "--formats", "report"});
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  ExplanationReport report = parse_document(
      read_text_file((out_dir / "read-the-book-forget-the-movie.report").string()));
  REQUIRE(report.phrases.size() == 4);
  CHECK(report.phrases[1].text == "the book");
  CHECK(report.phrases[2].text == "forget the movie");
  CHECK(report.phrases[3].text == "the movie");
}

TEST_CASE("unreadable inputs are runtime errors naming the path") {
  RunResult r = run_cli({"explain", "the book", "--model", "/no/such/model.weights"});
  CHECK(r.code == 2);
  CHECK(r.err.find("/no/such/model.weights") != std::string::npos);

  RunResult r2 = run_cli({"explain", "--input", "/no/such/input.txt",
                          "--model", fixture().model_path});
  CHECK(r2.code == 2);
  CHECK(r2.err.find("/no/such/input.txt") != std::string::npos);
}

TEST_CASE("LAYERLENS_SEED provides the default seed and --seed wins") {
  const fs::path out_dir = fixture().dir / "env-seed-out";
  ::setenv("LAYERLENS_SEED", "777", 1);
  RunResult r = run_cli({"explain", "the book", "--model", fixture().model_path,
                         "--out", out_dir.string(), "--formats", "report"});
  REQUIRE(r.code == 0);
  ExplanationReport report =
      parse_document(read_text_file((out_dir / "the-book.report").string()));
  CHECK(report.seed == 777);

  RunResult r2 = run_cli({"explain", "the book", "--model", fixture().model_path,
                          "--out", out_dir.string(), "--formats", "report", "--seed", "5"});
  REQUIRE(r2.code == 0);
  ExplanationReport report2 =
      parse_document(read_text_file((out_dir / "the-book.report").string()));
  CHECK(report2.seed == 5);

  ::setenv("LAYERLENS_SEED", "not-a-number", 1);
  CHECK(run_cli({"explain", "the book", "--model", fixture().model_path,
                 "--out", out_dir.string(), "--formats", "report"}).code == 2);
  ::unsetenv("LAYERLENS_SEED");
}

TEST_CASE("out-of-range encoder targets are usage errors") {
  CHECK(run_cli({"explain", "the book", "--model", fixture().model_path,
                 "--targets", "encoder:9"}).code == 1);
}

TEST_CASE("train writes a loadable weight document") {
  const fs::path out = fixture().dir / "trained.weights";
  RunResult r = run_cli({"train", "--out", out.string(), "--epochs", "2", "--batch", "16",
                         "--seed", "5"});
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  REQUIRE(fs::exists(out));
  ModelWeights w = load_weights_file(out.string());
  CHECK(w.config.n_layers == 2);
  CHECK(r.out.find("epoch   1") != std::string::npos);
}
