// phiscrub command-line front end: train, eval, scrub, gradcheck.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phiscrub/io/conll.hpp"
#include "phiscrub/pipeline/pipeline.hpp"
#include "phiscrub/taggers/gradcheck_suite.hpp"
#include "phiscrub/taggers/model_io.hpp"

namespace fs = std::filesystem;
using namespace phiscrub;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

struct UsageError : Error {
  using Error::Error;
};

void fail_line(const std::string& kind, const std::string& msg) {
  std::string one = msg;
  std::replace(one.begin(), one.end(), '\n', ' ');
  std::cerr << "phiscrub: " << kind << ": " << one << '\n';
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string metrics_line(const taggers::SegmentScores& s) {
  return "P " + pct(s.precision()) + " R " + pct(s.recall()) + " F1 " + pct(s.f1());
}

std::string env_or(const std::string& flag_value, const char* env) {
  if (!flag_value.empty()) return flag_value;
  const char* v = std::getenv(env);
  return v ? std::string(v) : std::string();
}

std::string slurp(const std::string& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw DataError("cannot open input file: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open input file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw DataError("cannot read input file: " + path);
  return buf.str();
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << content;
  if (!out) throw DataError("cannot write file: " + path);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string arch, data, dev, embeddings, out, log, config;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t batch = 8;
};

int cmd_train(const TrainArgs& a) {
  const auto arch = *taggers::parse_arch(a.arch);
  const taggers::Corpus corpus = io::load_conll(a.data);
  taggers::Corpus dev;
  taggers::TrainOptions opt;
  opt.seed = a.seed;
  opt.max_batch_size = a.batch;
  if (a.epochs) opt.epochs = a.epochs;
  if (!a.dev.empty()) {
    dev = io::load_conll(a.dev);
    opt.dev = &dev;
  }
  nlohmann::json overrides = nlohmann::json::object();
  if (!a.config.empty()) {
    try {
      overrides = nlohmann::json::parse(slurp(a.config));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("config file " + a.config + ": " + e.what());
    }
  }
  const std::string log_path = a.log.empty() ? a.out + ".log" : a.log;
  std::ofstream log(log_path);
  if (!log) throw DataError("cannot write log file: " + log_path);
  log << "epoch\tloss\tdev_p\tdev_r\tdev_f1\n";
  opt.on_epoch = [&](const taggers::EpochMetrics& m) {
    log << m.epoch << '\t' << m.loss << '\t' << pct(m.dev.precision()) << '\t' << pct(m.dev.recall()) << '\t'
        << pct(m.dev.f1()) << std::endl;
  };
  const auto t0 = std::chrono::steady_clock::now();
  auto result = taggers::train_tagger(arch, corpus, features::WordEmbeddingTable::load(a.embeddings), overrides, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  taggers::save_model(a.out, result.model);
  taggers::SegmentScores best;
  for (const auto& e : result.epochs) {
    if (e.epoch == result.best_epoch) best = e.dev;
  }
  log << "# best_epoch\t" << result.best_epoch << "\n# unk_rate\t" << result.unk_rate << "\n# seconds\t" << secs << '\n';
  std::cout << "best epoch " << result.best_epoch << " held-out " << metrics_line(best) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const std::string& model_path, const std::string& data, const std::string& arch) {
  const auto model = taggers::load_model(model_path);
  if (!arch.empty() && taggers::arch_of(model) != *taggers::parse_arch(arch)) {
    throw DataError("model " + model_path + " is " + std::string(labels::to_string(taggers::arch_of(model))) +
                    ", expected " + arch);
  }
  const auto corpus = io::load_conll(data);
  std::cout << metrics_line(taggers::evaluate_segment_f1(model, corpus)) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- scrub

struct ScrubArgs {
  std::string in, out, report, model_bilstm, model_idcnn, rules, dict, stems;
  std::string placeholder = std::string(pipeline::kDefaultPlaceholder);
  bool no_neural = false, no_regex = false, no_disambiguation = false;
  unsigned threads = 0;
};

int cmd_scrub(const ScrubArgs& a) {
  pipeline::ScrubConfig cfg;
  cfg.model_bilstm = a.no_neural ? "" : a.model_bilstm;
  cfg.model_idcnn = a.no_neural ? "" : a.model_idcnn;
  cfg.rules_path = env_or(a.rules, "PHISCRUB_RULES");
  cfg.dict_path = env_or(a.dict, "PHISCRUB_DICT");
  cfg.stems_path = env_or(a.stems, "PHISCRUB_STEMS");
  cfg.placeholder = a.placeholder;
  cfg.detectors.regex = !a.no_regex;
  cfg.detectors.disambiguation = !a.no_disambiguation;
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const pipeline::Scrubber scrubber(cfg);

  if (!fs::exists(a.in)) throw DataError("input not found: " + a.in);
  if (!fs::is_directory(a.in)) {
    const auto r = scrubber.scrub(slurp(a.in), fs::path(a.in).filename().string());
    if (a.out.empty()) {
      std::cout << r.text;
    } else {
      spit(a.out, r.text);
    }
    if (!a.report.empty()) spit(a.report, r.report.to_text());
    return kExitOk;
  }

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.in)) {
    if (e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "phiscrub: warning: no .txt files in " << a.in << '\n';
    return kExitOk;
  }
  if (a.out.empty()) throw UsageError("--out directory is required for directory input");
  fs::create_directories(a.out);
  if (!a.report.empty()) fs::create_directories(a.report);

  std::vector<std::string> docs, ids;
  std::vector<fs::path> ok_files;
  int status = kExitOk;
  for (const auto& f : files) {
    try {
      docs.push_back(slurp(f.string()));
      ids.push_back(f.filename().string());
      ok_files.push_back(f);
    } catch (const DataError& e) {
      fail_line("error", e.what());
      status = kExitData;
    }
  }
  const auto results = scrubber.scrub_batch(docs, ids, a.threads);
  for (std::size_t i = 0; i < results.size(); ++i) {
    try {
      spit((fs::path(a.out) / ok_files[i].filename()).string(), results[i].text);
      if (!a.report.empty()) {
        spit((fs::path(a.report) / (ok_files[i].stem().string() + ".report.tsv")).string(), results[i].report.to_text());
      }
    } catch (const DataError& e) {
      fail_line("error", e.what());
      status = kExitData;
    }
  }
  std::cerr << "phiscrub: scrubbed " << results.size() << " of " << files.size() << " files\n";
  return status;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const std::vector<std::string>& ops, bool list, bool corrupt) {
  const auto checks = taggers::gradcheck::registry(corrupt);
  if (list) {
    for (const auto& c : checks) std::cout << c.name << '\n';
    return kExitOk;
  }
  for (const auto& op : ops) {
    if (std::none_of(checks.begin(), checks.end(), [&](const auto& c) { return c.name == op; })) {
      throw UsageError("unknown op '" + op + "' (see gradcheck --list)");
    }
  }
  bool all_ok = true;
  for (const auto& c : checks) {
    if (!ops.empty() && std::find(ops.begin(), ops.end(), c.name) == ops.end()) continue;
    const auto r = c.run();
    const bool ok = r.max_relative_error <= taggers::gradcheck::kTolerance;
    all_ok = all_ok && ok;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-22s max_rel_err %.3e  %s", c.name.c_str(), r.max_relative_error, ok ? "ok" : "FAIL");
    std::cout << buf << '\n';
  }
  return all_ok ? kExitOk : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phiscrub: PHI de-identification for clinical notes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "phiscrub 0.1.0");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a tagger on a CoNLL corpus");
  train->add_option("--arch", ta.arch, "Architecture")->required()->check(CLI::IsMember({"bilstm", "idcnn"}));
  train->add_option("--data", ta.data, "Training corpus (TOKEN<TAB>TAG)")->required();
  train->add_option("--dev", ta.dev, "Held-out corpus (default: seeded 10% split)");
  train->add_option("--embeddings", ta.embeddings, "Word vectors, 'token v1 ... vD' per line")->required();
  train->add_option("--out", ta.out, "Model file to write")->required();
  train->add_option("--seed", ta.seed, "Random seed")->required();
  train->add_option("--epochs", ta.epochs, "Override the configured epoch count");
  train->add_option("--batch", ta.batch, "Maximum batch size")->check(CLI::PositiveNumber);
  train->add_option("--config", ta.config, "JSON file merged over the architecture defaults");
  train->add_option("--log", ta.log, "Metrics log (default: <out>.log)");

  std::string eval_model, eval_data, eval_arch;
  auto* eval = app.add_subcommand("eval", "Segment micro P/R/F1 of a model on a gold corpus");
  eval->add_option("--model", eval_model, "Model file")->required();
  eval->add_option("--data", eval_data, "Gold corpus")->required();
  eval->add_option("--arch", eval_arch, "Expected architecture")->check(CLI::IsMember({"bilstm", "idcnn"}));

  ScrubArgs sa;
  auto* scrub = app.add_subcommand("scrub", "Redact PHI from a text file or a directory of .txt files");
  scrub->add_option("--in", sa.in, "Input file or directory")->required();
  scrub->add_option("--out", sa.out, "Output file or directory (file input: default stdout)");
  scrub->add_option("--report", sa.report, "Report file or directory");
  scrub->add_option("--model-bilstm", sa.model_bilstm, "Bi-LSTM model file");
  scrub->add_option("--model-idcnn", sa.model_idcnn, "ID-CNN model file");
  scrub->add_option("--rules", sa.rules, "Regex rules file (env PHISCRUB_RULES)");
  scrub->add_option("--dict", sa.dict, "Medical dictionary (env PHISCRUB_DICT)");
  scrub->add_option("--stems", sa.stems, "Drug stem list (env PHISCRUB_STEMS)");
  scrub->add_option("--placeholder", sa.placeholder, "Replacement template, {CLASS} is substituted");
  scrub->add_flag("--no-neural", sa.no_neural, "Regex recognizers only");
  scrub->add_flag("--no-regex", sa.no_regex, "Taggers only");
  scrub->add_flag("--no-disambiguation", sa.no_disambiguation, "Keep tagger spans over medical terms");
  scrub->add_option("--threads", sa.threads, "Worker threads for directory input (0 = all cores)");

  std::vector<std::string> ops;
  bool list_ops = false, corrupt = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gradcheck->add_option("--op", ops, "Only these ops (repeatable)");
  gradcheck->add_flag("--list", list_ops, "List registered ops");
  gradcheck->add_flag("--corrupt-gradient", corrupt, "Add an op with a wrong gradient")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail_line("usage", e.what());
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(eval_model, eval_data, eval_arch);
    if (*scrub) return cmd_scrub(sa);
    if (*gradcheck) return cmd_gradcheck(ops, list_ops, corrupt);
  } catch (const UsageError& e) {
    fail_line("usage", e.what());
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    fail_line("error", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fail_line("error", e.what());
    return kExitData;
  }
  return kExitUsage;
}
