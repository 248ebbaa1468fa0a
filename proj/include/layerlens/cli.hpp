#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "layerlens/attention.hpp"
#include "layerlens/common.hpp"
#include "layerlens/data.hpp"
#include "layerlens/model.hpp"
#include "layerlens/phrase.hpp"
#include "layerlens/report.hpp"
#include "layerlens/shap.hpp"
#include "layerlens/tokenizer.hpp"
#include "layerlens/viz.hpp"

#include "CLI11.hpp"

namespace layerlens::cli {

// Sentences behind the bundled demo; the golden tests run against the same
// three strings.
inline const std::vector<std::string>& demo_sentences() {
  static const std::vector<std::string> sentences = {
      "neither parker nor donovan is a typical romantic lead , but they bring a fresh , quirky "
      "charm to the formula .",
      "Read the book, forget the movie!",
      "Oh great, another email. I just love waiting an extra week for something I ordered two "
      "months ago."};
  return sentences;
}

inline std::string slugify(const std::string& sentence) {
  std::string slug;
  bool pending_dash = false;
  for (unsigned char c : sentence) {
    if (std::isalnum(c)) {
      if (pending_dash && !slug.empty()) slug.push_back('-');
      pending_dash = false;
      slug.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_dash = true;
    }
    if (slug.size() >= 48) break;
  }
  return slug.empty() ? "sentence" : slug;
}

// write-temp-then-rename so concurrent or interrupted runs never leave a
// partially written file under the final name
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write file: " + tmp.string());
    f << content;
    if (!f) throw InputError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

struct CommonOptions {
  std::string sentence;
  std::string input_file;
  std::string vocab_path;
  std::string model_path;
  std::string phrases_path;
  std::string out_dir = ".";
  std::string targets;
  std::string method;  // per-subcommand default filled in later
  int samples = 2048;
  std::uint64_t seed = 42;
  bool seed_given = false;
  std::string class_selector = "logodds";
  std::string formats = "report,svg,html";
  std::string attention_layers = "last";
  std::string attention_heads = "mean";
};

struct TrainOptions {
  std::string corpus_path;
  std::string out_path;
  std::string vocab_path;
  std::uint64_t seed = 42;
  bool seed_given = false;
  double learning_rate = TrainHyperparams{}.learning_rate;
  int epochs = TrainHyperparams{}.epochs;
  int batch_size = TrainHyperparams{}.batch_size;
};

struct Formats {
  bool report = false;
  bool svg = false;
  bool html = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Formats parse_formats(const std::string& spec) {
  Formats f;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "report")
      f.report = true;
    else if (item == "svg")
      f.svg = true;
    else if (item == "html")
      f.html = true;
    else
      throw UsageError("unknown output format \"" + item + "\" (expected report, svg, html)");
  }
  if (!f.report && !f.svg && !f.html) throw UsageError("no output formats selected");
  return f;
}

inline uint64_t seed_from_environment() {
  const char* env = std::getenv("LAYERLENS_SEED");
  if (!env || !*env) return 42;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0')
    throw ConfigError(strfmt("LAYERLENS_SEED=\"%s\" is not an integer", env));
  return static_cast<uint64_t>(v);
}

inline ExplainerConfig explainer_config(const CommonOptions& opt, const ModelConfig& model) {
  ExplainerConfig cfg;
  cfg.seed = opt.seed_given ? opt.seed : seed_from_environment();
  cfg.kernel_samples = opt.samples;
  if (opt.method == "exact")
    cfg.method = ShapMethod::EXACT;
  else if (opt.method == "kernel")
    cfg.method = ShapMethod::KERNEL;
  else
    throw UsageError("unknown --method \"" + opt.method + "\" (expected exact or kernel)");
  if (opt.class_selector == "logodds" || opt.class_selector == "log_odds_positive")
    cfg.selector = ScalarSelector::LOG_ODDS_POSITIVE;
  else if (opt.class_selector == "prob" || opt.class_selector == "prob_positive")
    cfg.selector = ScalarSelector::PROB_POSITIVE;
  else
    throw UsageError("unknown --class \"" + opt.class_selector + "\" (expected logodds or prob)");
  if (!opt.targets.empty()) {
    std::stringstream ss(opt.targets);
    std::string item;
    while (std::getline(ss, item, ',')) {
      auto target = parse_layer_target(item, model.n_layers);
      if (!target) throw UsageError("unknown layer target \"" + item + "\"");
      cfg.layer_targets.push_back(*target);
    }
  }
  try {
    cfg.validate();
    cfg.resolved_targets(model);  // range-check encoder indices now
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

inline AttentionAggregationConfig attention_config(const CommonOptions& opt) {
  AttentionAggregationConfig cfg;
  if (opt.attention_layers == "last")
    cfg.layer_selection = LayerSelection::LAST;
  else if (opt.attention_layers == "mean_all")
    cfg.layer_selection = LayerSelection::MEAN_ALL;
  else
    throw UsageError("unknown --attention-layers \"" + opt.attention_layers + "\"");
  if (opt.attention_heads == "mean")
    cfg.head_reduction = HeadReduction::MEAN;
  else if (opt.attention_heads == "max")
    cfg.head_reduction = HeadReduction::MAX;
  else
    throw UsageError("unknown --attention-heads \"" + opt.attention_heads + "\"");
  return cfg;
}

// Sentence list from the positional argument or --input (one per line,
// '#' comments and blank lines skipped).
inline std::vector<std::string> gather_sentences(const CommonOptions& opt) {
  std::vector<std::string> sentences;
  if (!opt.sentence.empty()) sentences.push_back(opt.sentence);
  if (!opt.input_file.empty()) {
    std::istringstream in(read_text_file(opt.input_file));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      sentences.push_back(line);
    }
  }
  return sentences;
}

struct LoadedAssets {
  Vocab vocab;
  ModelWeights model;
  PosLexicon lexicon;
};

inline LoadedAssets load_assets(const CommonOptions& opt, bool need_model = true) {
  const std::string dir = default_data_dir();
  LoadedAssets assets;
  assets.vocab = load_vocab_file(opt.vocab_path.empty() ? dir + "/vocab.txt" : opt.vocab_path);
  assets.lexicon = load_lexicon_file(dir + "/pos_lexicon.txt");
  if (need_model) {
    assets.model =
        load_weights_file(opt.model_path.empty() ? dir + "/model.weights" : opt.model_path);
    if (assets.model.config.vocab_size != assets.vocab.size())
      throw ConfigError(strfmt("model expects vocab of %d entries, vocab file has %d",
                               assets.model.config.vocab_size, assets.vocab.size()));
  }
  return assets;
}

class SlugAllocator {
 public:
  std::string allocate(const std::string& sentence) {
    std::string base = slugify(sentence);
    std::string slug = base;
    int n = 2;
    while (!used_.insert(slug).second) slug = base + "-" + std::to_string(n++);
    return slug;
  }

 private:
  std::set<std::string> used_;
};

inline std::string bars_title(const std::string& target_label) {
  return "Phrase SHAP values (" + target_label + ")";
}

// explain one sentence end to end and write the selected artifacts
inline void run_explain_one(const LoadedAssets& assets, const std::string& sentence,
                            const PhraseSet* external_phrases, const ExplainerConfig& cfg,
                            const AttentionAggregationConfig& attn_cfg, const Formats& formats,
                            const std::string& out_dir, const std::string& slug,
                            std::ostream& out) {
  const PhraseSet phrases =
      external_phrases ? *external_phrases : extract_phrases(sentence, assets.lexicon);
  ShapResult result = explain(assets.model, assets.vocab, phrases, cfg);
  TokenSequence seq = tokenize(phrases.sentence, assets.vocab);
  ForwardTrace trace = forward(assets.model, seq.ids());
  PhraseAttentionMatrix attention = phrase_attention(trace, phrases, seq, attn_cfg);

  ExplanationReport report = make_report(result, assets.model, seq);
  report.attention = ReportAttention{to_string(attn_cfg.layer_selection),
                                     to_string(attn_cfg.head_reduction), attention.scores};

  std::vector<std::string> labels;
  for (const auto& p : phrases.phrases) labels.push_back(p.text);

  const std::filesystem::path dir(out_dir);
  std::vector<std::pair<std::string, std::string>> sections;
  std::vector<std::pair<std::string, std::string>> files;  // path, content

  if (formats.report) files.push_back({(dir / (slug + ".report")).string(), emit_document(report)});
  for (const auto& layer : result.per_layer) {
    const std::string svg = render_bars(layer.values, labels, bars_title(layer.target.label()));
    sections.push_back({bars_title(layer.target.label()), svg});
    if (formats.svg)
      files.push_back({(dir / (slug + "." + layer.target.file_label() + ".bars.svg")).string(),
                       svg});
  }
  const std::string agg_svg = render_bars(result.aggregated, labels, bars_title("aggregated"));
  sections.push_back({bars_title("aggregated"), agg_svg});
  if (formats.svg) files.push_back({(dir / (slug + ".aggregated.bars.svg")).string(), agg_svg});
  const std::string heatmap = render_heatmap(attention);
  sections.push_back({"Phrase attention", heatmap});
  if (formats.svg) files.push_back({(dir / (slug + ".attention.svg")).string(), heatmap});
  if (formats.html)
    files.push_back({(dir / (slug + ".html")).string(), render_html(phrases.sentence, sections)});

  for (const auto& [path, content] : files) {
    write_file_atomic(path, content);
    out << path << "\n";
  }
}

inline void run_baseline_one(const LoadedAssets& assets, const std::string& sentence,
                             const ExplainerConfig& cfg, const Formats& formats,
                             const std::string& out_dir, const std::string& slug,
                             std::ostream& out) {
  TokenShapResult result = baseline_token_shap(assets.model, assets.vocab, sentence, cfg);
  TokenSequence seq = tokenize(sentence, assets.vocab);

  ExplanationReport report;
  report.sentence = sentence;
  for (const auto& t : seq.tokens) report.tokens.push_back(t.text);
  report.class_selector = to_string(result.selector);
  report.method = to_string(result.method);
  report.seed = result.seed;
  report.samples = result.samples;
  report.model_config = assets.model.config;
  report.weights_fingerprint = weights_fingerprint(assets.model);
  report.baseline =
      ReportBaseline{result.players, result.values, result.v_empty, result.v_full};

  const std::filesystem::path dir(out_dir);
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::pair<std::string, std::string>> sections;
  if (formats.report) files.push_back({(dir / (slug + ".report")).string(), emit_document(report)});
  const std::string svg =
      render_bars(result.values, result.players, "Token SHAP values (whole-model baseline)");
  sections.push_back({"Token SHAP values (whole-model baseline)", svg});
  if (formats.svg) files.push_back({(dir / (slug + ".baseline.bars.svg")).string(), svg});
  if (formats.html)
    files.push_back({(dir / (slug + ".html")).string(), render_html(sentence, sections)});
  for (const auto& [path, content] : files) {
    write_file_atomic(path, content);
    out << path << "\n";
  }
}

inline void run_attention_one(const LoadedAssets& assets, const std::string& sentence,
                              const PhraseSet* external_phrases,
                              const AttentionAggregationConfig& attn_cfg, const Formats& formats,
                              const std::string& out_dir, const std::string& slug,
                              std::ostream& out) {
  const PhraseSet phrases =
      external_phrases ? *external_phrases : extract_phrases(sentence, assets.lexicon);
  TokenSequence seq = tokenize(phrases.sentence, assets.vocab);
  ForwardTrace trace = forward(assets.model, seq.ids());
  PhraseAttentionMatrix attention = phrase_attention(trace, phrases, seq, attn_cfg);

  ExplanationReport report;
  report.sentence = phrases.sentence;
  for (const auto& t : seq.tokens) report.tokens.push_back(t.text);
  int index = 0;
  for (const auto& p : phrases.phrases)
    report.phrases.push_back({index++, to_string(p.kind), p.word_start, p.word_end, p.text});
  report.class_selector = to_string(ScalarSelector::LOG_ODDS_POSITIVE);
  report.method = "exact";
  report.seed = 0;
  report.samples = 0;
  report.model_config = assets.model.config;
  report.weights_fingerprint = weights_fingerprint(assets.model);
  report.attention = ReportAttention{to_string(attn_cfg.layer_selection),
                                     to_string(attn_cfg.head_reduction), attention.scores};

  const std::filesystem::path dir(out_dir);
  std::vector<std::pair<std::string, std::string>> files;
  if (formats.report) files.push_back({(dir / (slug + ".report")).string(), emit_document(report)});
  const std::string heatmap = render_heatmap(attention);
  if (formats.svg) files.push_back({(dir / (slug + ".attention.svg")).string(), heatmap});
  if (formats.html)
    files.push_back({(dir / (slug + ".html")).string(),
                     render_html(phrases.sentence, {{"Phrase attention", heatmap}})});
  for (const auto& [path, content] : files) {
    write_file_atomic(path, content);
    out << path << "\n";
  }
}

}  // namespace detail

// Entry point shared by the binary and the tests. Returns the process exit
// code: 0 success, 1 usage error, 2 runtime error.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace detail;
  CLI::App app{"layerlens: layer-wise phrase Shapley explanations for a small sentiment "
               "transformer"};
  app.name("layerlens");
  app.require_subcommand(1);

  CommonOptions explain_opt, baseline_opt, attention_opt, demo_opt;
  TrainOptions train_opt;
  explain_opt.method = "exact";
  baseline_opt.method = "kernel";  // token games usually exceed the exact threshold
  attention_opt.method = "exact";
  demo_opt.method = "exact";

  auto add_common = [](CLI::App* cmd, CommonOptions& opt, bool with_sentence) {
    if (with_sentence) {
      cmd->add_option("sentence", opt.sentence, "sentence to explain");
      cmd->add_option("--input", opt.input_file,
                      "file with one sentence per line (# comments ignored)");
    }
    cmd->add_option("--vocab", opt.vocab_path, "vocab file (default: bundled)");
    cmd->add_option("--model", opt.model_path, "weight document (default: bundled)");
    cmd->add_option("--out", opt.out_dir, "output directory (default: .)");
    cmd->add_option("--method", opt.method, "shapley method: exact or kernel")
        ->capture_default_str();
    cmd->add_option("--samples", opt.samples, "kernel sample budget")->capture_default_str();
    cmd->add_option("--seed", opt.seed, "rng seed (default: $LAYERLENS_SEED or 42)")
        ->trigger_on_parse()
        ->each([&opt](const std::string&) { opt.seed_given = true; });
    cmd->add_option("--class", opt.class_selector, "explained scalar: logodds or prob")
        ->capture_default_str();
    cmd->add_option("--formats", opt.formats, "comma list of report,svg,html")
        ->capture_default_str();
  };

  CLI::App* explain_cmd = app.add_subcommand("explain", "phrase-level layer-wise explanation");
  add_common(explain_cmd, explain_opt, true);
  explain_cmd->add_option("--phrases", explain_opt.phrases_path,
                          "external phrase document (bypasses the chunker)");
  explain_cmd->add_option("--targets", explain_opt.targets,
                          "comma list of input, embedding, encoder:N (default: "
                          "embedding,encoder:last)");
  explain_cmd->add_option("--attention-layers", explain_opt.attention_layers,
                          "attention layer selection: last or mean_all")
      ->capture_default_str();
  explain_cmd->add_option("--attention-heads", explain_opt.attention_heads,
                          "attention head reduction: mean or max")
      ->capture_default_str();

  CLI::App* baseline_cmd =
      app.add_subcommand("baseline", "token-level whole-model SHAP baseline");
  add_common(baseline_cmd, baseline_opt, true);

  CLI::App* attention_cmd = app.add_subcommand("attention", "phrase-attention heatmap only");
  add_common(attention_cmd, attention_opt, true);
  attention_cmd->add_option("--phrases", attention_opt.phrases_path,
                            "external phrase document (bypasses the chunker)");
  attention_cmd->add_option("--attention-layers", attention_opt.attention_layers,
                            "attention layer selection: last or mean_all")
      ->capture_default_str();
  attention_cmd->add_option("--attention-heads", attention_opt.attention_heads,
                            "attention head reduction: mean or max")
      ->capture_default_str();

  CLI::App* train_cmd = app.add_subcommand("train", "train the bundled toy classifier");
  train_cmd->add_option("--corpus", train_opt.corpus_path, "corpus file (default: bundled)");
  train_cmd->add_option("--out", train_opt.out_path, "output weight document")->required();
  train_cmd->add_option("--vocab", train_opt.vocab_path, "vocab file (default: bundled)");
  train_cmd->add_option("--seed", train_opt.seed, "rng seed (default: $LAYERLENS_SEED or 42)")
      ->trigger_on_parse()
      ->each([&train_opt](const std::string&) { train_opt.seed_given = true; });
  train_cmd->add_option("--lr", train_opt.learning_rate, "learning rate")->capture_default_str();
  train_cmd->add_option("--epochs", train_opt.epochs, "training epochs")->capture_default_str();
  train_cmd->add_option("--batch", train_opt.batch_size, "batch size")->capture_default_str();

  CLI::App* demo_cmd =
      app.add_subcommand("demo", "run the bundled demo sentences and write all figures");
  demo_cmd->add_option("--out", demo_opt.out_dir, "output directory (default: .)");
  demo_cmd->add_option("--seed", demo_opt.seed, "rng seed (default: $LAYERLENS_SEED or 42)")
      ->trigger_on_parse()
      ->each([&demo_opt](const std::string&) { demo_opt.seed_given = true; });

  std::vector<const char*> argv;
  argv.push_back("layerlens");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (explain_cmd->parsed() || baseline_cmd->parsed() || attention_cmd->parsed()) {
      CommonOptions& opt = explain_cmd->parsed()
                               ? explain_opt
                               : (baseline_cmd->parsed() ? baseline_opt : attention_opt);
      std::optional<PhraseSet> external;
      if (!opt.phrases_path.empty()) {
        if (!opt.input_file.empty())
          throw UsageError("--phrases cannot be combined with --input");
        external = load_external_phrases_file(opt.phrases_path);
        if (!opt.sentence.empty() && opt.sentence != external->sentence)
          throw InputError("sentence argument differs from the phrase document's sentence");
      }
      std::vector<std::string> sentences = gather_sentences(opt);
      if (external && sentences.empty()) sentences.push_back(external->sentence);
      if (sentences.empty()) {
        err << "usage error: provide a sentence, --input, or --phrases\n\n" << app.help();
        return 1;
      }
      const Formats formats = parse_formats(opt.formats);
      const LoadedAssets assets = load_assets(opt);
      const ExplainerConfig cfg = explainer_config(opt, assets.model.config);
      const AttentionAggregationConfig attn_cfg = attention_config(opt);
      SlugAllocator slugs;
      for (const auto& sentence : sentences) {
        const std::string slug = slugs.allocate(sentence);
        const PhraseSet* phrases = external ? &*external : nullptr;
        if (explain_cmd->parsed())
          run_explain_one(assets, sentence, phrases, cfg, attn_cfg, formats, opt.out_dir, slug,
                          out);
        else if (baseline_cmd->parsed())
          run_baseline_one(assets, sentence, cfg, formats, opt.out_dir, slug, out);
        else
          run_attention_one(assets, sentence, phrases, attn_cfg, formats, opt.out_dir, slug, out);
      }
      return 0;
    }

    if (train_cmd->parsed()) {
      const std::string dir = default_data_dir();
      const Vocab vocab = load_vocab_file(
          train_opt.vocab_path.empty() ? dir + "/vocab.txt" : train_opt.vocab_path);
      const auto corpus = load_corpus_file(
          train_opt.corpus_path.empty() ? dir + "/corpus.tsv" : train_opt.corpus_path);
      const auto examples = corpus_to_examples(corpus, vocab);
      TrainHyperparams hp;
      hp.learning_rate = train_opt.learning_rate;
      hp.epochs = train_opt.epochs;
      hp.batch_size = train_opt.batch_size;
      hp.seed = train_opt.seed_given ? train_opt.seed : seed_from_environment();
      ModelConfig config;
      config.vocab_size = vocab.size();
      ModelWeights init = init_weights(config, hp.seed);
      TrainResult result = train_classifier(init, examples, hp);
      for (size_t e = 0; e < result.epoch_loss.size(); ++e)
        out << strfmt("epoch %3zu  loss %.6f  accuracy %.4f\n", e + 1, result.epoch_loss[e],
                      result.epoch_accuracy[e]);
      save_weights_file(result.weights, train_opt.out_path);
      out << train_opt.out_path << "\n";
      return 0;
    }

    // demo: the three bundled sentences, every artifact
    demo_opt.seed = demo_opt.seed_given ? demo_opt.seed : seed_from_environment();
    demo_opt.seed_given = true;
    const Formats formats = parse_formats(demo_opt.formats);
    const LoadedAssets assets = load_assets(demo_opt);
    const ExplainerConfig cfg = explainer_config(demo_opt, assets.model.config);
    const AttentionAggregationConfig attn_cfg = attention_config(demo_opt);
    SlugAllocator slugs;
    for (const auto& sentence : demo_sentences()) {
      const std::string slug = slugs.allocate(sentence);
      run_explain_one(assets, sentence, nullptr, cfg, attn_cfg, formats, demo_opt.out_dir, slug,
                      out);
    }
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace layerlens::cli
