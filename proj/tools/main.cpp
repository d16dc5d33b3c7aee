// Command-line front end: corpus generation, training, retrieval evaluation,
// phrase grounding, and gradient checking over the alignment head.
//
// Exit codes: 0 ok, 2 bad configuration/arguments, 3 divergence or a
// degenerate-batch abort, 4 shape mismatch between artifacts, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xmodal/dataio.hpp"
#include "xmodal/eval.hpp"
#include "xmodal/grad.hpp"
#include "xmodal/synth.hpp"
#include "xmodal/train.hpp"
#include "xmodal/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xmodal;

namespace {

struct ExitError {
  int code;
  std::string message;
};

int classify(std::string_view what) {
  if (what.starts_with("shape mismatch")) return 4;
  if (what.starts_with("degenerate local alignments")) return 3;
  return 1;
}

void require_input(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw ExitError{2, std::string(what) + " not found: " + p.string()};
}

json load_json_file(const fs::path& path, const char* what) {
  require_input(path, what);
  std::ifstream in(path);
  if (!in) throw ExitError{2, std::string("cannot open ") + what + ": " + path.string()};
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ExitError{2, std::string(what) + " is not valid JSON: " + e.what()};
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void emit_report(const json& report, const std::string& out) {
  if (out.empty()) {
    std::cout << dump(report);
    return;
  }
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + out);
  f << dump(report);
  log_info("report written to " + out);
}

Corpus load_corpus(const fs::path& path, const char* what) {
  require_input(path, what);
  return read_corpus(path);
}

std::vector<StudyContext> prep_corpus(const Corpus& corpus, bool apply_pe) {
  std::vector<StudyContext> ctx;
  ctx.reserve(corpus.studies.size());
  for (const Study& s : corpus.studies) ctx.push_back(prep_study(s, apply_pe));
  return ctx;
}

void check_dims(const Checkpoint& ck, const Corpus& corpus) {
  if (ck.params.dim != corpus.dim) {
    throw std::runtime_error("shape mismatch: checkpoint dim " + std::to_string(ck.params.dim) +
                             " vs corpus dim " + std::to_string(corpus.dim));
  }
}

ExtVariant ext_variant_from_string(const std::string& s) {
  if (s == "summed") return ExtVariant::SummedScore;
  if (s == "two_term") return ExtVariant::TwoTerm;
  throw ExitError{2, "unknown --ext-variant '" + s + "' (expected summed|two_term)"};
}

// ---------------------------------------------------------------- gen -----

struct GenArgs {
  std::string config;
  std::string out;
  std::string split = "synth";
  std::string slice;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int run_gen(const GenArgs& a) {
  json j = load_json_file(a.config, "synth config");
  SynthConfig sc;
  try {
    sc = synth_config_from_json(j);
  } catch (const std::exception& e) {
    throw ExitError{2, e.what()};
  }
  if (a.seed_set) sc.seed = a.seed;

  Corpus corpus;
  try {
    corpus = generate(sc, a.split);
  } catch (const std::exception& e) {
    throw ExitError{2, e.what()};  // generate only throws on unsatisfiable configs
  }

  if (!a.slice.empty()) {
    auto colon = a.slice.find(':');
    std::size_t begin = 0, end = 0;
    try {
      if (colon == std::string::npos) throw std::invalid_argument("no colon");
      begin = std::stoul(a.slice.substr(0, colon));
      end = std::stoul(a.slice.substr(colon + 1));
    } catch (const std::exception&) {
      throw ExitError{2, "bad --slice '" + a.slice + "' (expected BEGIN:END)"};
    }
    if (begin >= end || end > corpus.studies.size()) {
      throw ExitError{2, "--slice " + a.slice + " out of range for " +
                             std::to_string(corpus.studies.size()) + " studies"};
    }
    corpus = corpus_slice(corpus, begin, end, a.split);
  }

  write_corpus(corpus, a.out);
  json manifest = load_json_file(a.out + ".json", "manifest");

  json report = {
      {"command", "gen"},
      {"out", a.out},
      {"studies", corpus.studies.size()},
      {"dim", corpus.dim},
      {"grid", {corpus.grid.height, corpus.grid.width}},
      {"split", corpus.split},
      {"seed", sc.seed},
      {"checksum", manifest.at("checksum")},
  };
  std::cout << dump(report);
  return 0;
}

// -------------------------------------------------------------- train -----

struct TrainArgs {
  std::string train_path;
  std::string val_path;
  std::string config;
  std::string out_dir;
  bool frontal_only = false;
  bool no_pe = false;
  int threads = 1;
  // optional overrides; presence tracked through the CLI11 option pointers
  double lr = 0, weight_decay = 0, tau = 0, lambda = 0;
  std::size_t batch_size = 0, max_epochs = 0, patience = 0;
  std::uint64_t seed = 0;
  std::string rank_score, ext_variant;
  CLI::Option* o_lr = nullptr;
  CLI::Option* o_wd = nullptr;
  CLI::Option* o_tau = nullptr;
  CLI::Option* o_lambda = nullptr;
  CLI::Option* o_batch = nullptr;
  CLI::Option* o_epochs = nullptr;
  CLI::Option* o_patience = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_rank = nullptr;
  CLI::Option* o_ext = nullptr;
};

json config_echo(const TrainConfig& tc) {
  json j = train_config_to_json(tc);
  j.erase("threads");  // outputs are byte-identical across thread counts
  return j;
}

int run_train(const TrainArgs& a) {
  TrainConfig tc;
  if (!a.config.empty()) {
    json j = load_json_file(a.config, "train config");
    try {
      tc = train_config_from_json(j);
    } catch (const std::exception& e) {
      throw ExitError{2, e.what()};
    }
  }
  if (a.o_lr->count()) tc.lr = a.lr;
  if (a.o_wd->count()) tc.weight_decay = a.weight_decay;
  if (a.o_tau->count()) tc.tau = a.tau;
  if (a.o_lambda->count()) tc.lambda = a.lambda;
  if (a.o_batch->count()) tc.batch_size = a.batch_size;
  if (a.o_epochs->count()) tc.max_epochs = a.max_epochs;
  if (a.o_patience->count()) tc.patience = a.patience;
  if (a.o_seed->count()) tc.seed = a.seed;
  if (a.o_rank->count()) {
    try {
      tc.rank_score = rank_score_from_string(a.rank_score);
    } catch (const std::exception& e) {
      throw ExitError{2, e.what()};
    }
  }
  if (a.o_ext->count()) tc.ext_variant = ext_variant_from_string(a.ext_variant);
  tc.apply_pe = !a.no_pe;
  tc.threads = a.threads;
  if (tc.lr <= 0 || tc.tau <= 0 || tc.batch_size < 2 || tc.max_epochs == 0) {
    throw ExitError{2, "train: need lr > 0, tau > 0, batch size >= 2 and max epochs >= 1"};
  }

  Corpus train = load_corpus(a.train_path, "training corpus");
  Corpus val = load_corpus(a.val_path, "validation corpus");
  if (train.dim != val.dim || !(train.grid == val.grid)) {
    throw std::runtime_error("shape mismatch: training and validation corpora disagree");
  }
  if (a.frontal_only) {
    train = strip_laterals(train);
    val = strip_laterals(val);
  }

  fs::create_directories(a.out_dir);
  FitResult fr = fit(train, val, tc);

  write_history_csv(fr.history, fs::path(a.out_dir) / "history.csv");
  save_checkpoint(fr.best, fs::path(a.out_dir) / "checkpoint.lmtc");

  std::vector<StudyContext> val_ctx = prep_corpus(val, tc.apply_pe);
  ScoreMatrix s = score_corpus(val_ctx, fr.best.params, tc.rank_score, tc.threads);
  RetrievalSummary summary = retrieval_summary(s, tc.recall_ks);

  json report = {
      {"command", "train"},
      {"best", {{"epoch", fr.best.epoch}, {"r_sum", fr.best.r_sum}}},
      {"epochs_run", fr.history.size()},
      {"frontal_only", a.frontal_only},
      {"retrieval", retrieval_json(summary)},
      {"config", config_echo(tc)},
  };
  {
    std::ofstream f(fs::path(a.out_dir) / "metrics.json", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + a.out_dir + "/metrics.json");
    f << dump(report);
  }
  std::cout << dump(report);

  if (fr.diverged) {
    std::cerr << "training diverged: " << fr.message << "\n";
    return 3;
  }
  log_info("best epoch " + std::to_string(fr.best.epoch) + ", val R_sum " +
           std::to_string(fr.best.r_sum));
  return 0;
}

// --------------------------------------------------------------- eval -----

struct EvalArgs {
  std::string checkpoint;
  std::string corpus;
  std::string out;
  std::string rank_score = "agg";
  std::vector<std::size_t> ks = {1, 5, 10};
  std::vector<std::size_t> precision_ks;
  int threads = 1;
  bool no_pe = false;
};

int run_eval(const EvalArgs& a) {
  require_input(a.checkpoint, "checkpoint");
  Checkpoint ck = load_checkpoint(a.checkpoint);
  Corpus corpus = load_corpus(a.corpus, "corpus");
  check_dims(ck, corpus);

  RankScore rank;
  try {
    rank = rank_score_from_string(a.rank_score);
  } catch (const std::exception& e) {
    throw ExitError{2, e.what()};
  }
  const std::size_t n = corpus.studies.size();
  for (std::size_t k : a.ks) {
    if (k == 0 || k > n) throw ExitError{2, "--ks entry " + std::to_string(k) + " out of range 1.." + std::to_string(n)};
  }

  std::vector<StudyContext> ctx = prep_corpus(corpus, !a.no_pe);
  ScoreMatrix s = score_corpus(ctx, ck.params, rank, a.threads);
  RetrievalSummary summary = retrieval_summary(s, a.ks);

  json report = {
      {"command", "eval"},
      {"corpus", {{"studies", n}, {"split", corpus.split}}},
      {"retrieval", retrieval_json(summary)},
      {"config",
       {{"rank_score", to_string(rank)},
        {"ks", a.ks},
        {"apply_pe", !a.no_pe},
        {"lambda", ck.params.lambda},
        {"tau", ck.params.tau},
        {"checkpoint_epoch", ck.epoch}}},
  };

  if (!a.precision_ks.empty()) {
    std::vector<int> labels;
    labels.reserve(n);
    for (const Study& st : corpus.studies) {
      if (!st.label) throw ExitError{2, "precision requested but study '" + st.id + "' has no label"};
      labels.push_back(*st.label);
    }
    json prec = json::object();
    for (std::size_t k : a.precision_ks) {
      if (k == 0) throw ExitError{2, "--precision-ks entries must be positive"};
      prec["precision_at_" + std::to_string(k)] = precision_at_k(s, labels, labels, k);
    }
    report["precision"] = prec;
  }

  emit_report(report, a.out);
  return 0;
}

// ------------------------------------------------------------- ground -----

struct GroundArgs {
  std::string checkpoint;
  std::string corpus;
  std::string out;
  std::string out_dir;
  std::string map_score = "attention";
  bool no_pe = false;
};

int run_ground(const GroundArgs& a) {
  require_input(a.checkpoint, "checkpoint");
  Checkpoint ck = load_checkpoint(a.checkpoint);
  Corpus corpus = load_corpus(a.corpus, "corpus");
  check_dims(ck, corpus);

  MapVariant variant;
  try {
    variant = map_variant_from_string(a.map_score);
  } catch (const std::exception& e) {
    throw ExitError{2, e.what()};
  }
  if (!a.out_dir.empty()) fs::create_directories(a.out_dir);

  json records = json::array();
  double cnr_sum = 0.0;
  std::size_t cnr_count = 0;
  for (const Study& study : corpus.studies) {
    if (study.grounding.empty()) continue;
    StudyContext ctx = prep_study(study, !a.no_pe);
    for (std::size_t g = 0; g < study.grounding.size(); ++g) {
      const GroundingRecord& rec = study.grounding[g];
      GridMap map = phrase_attention(ctx, rec.token_indices, ck.params, variant);
      CnrResult c = cnr(map, rec);
      cnr_sum += c.value;
      ++cnr_count;
      json entry = {
          {"study", study.id},
          {"record", g},
          {"box", {rec.x, rec.y, rec.w, rec.h}},
          {"cnr", c.value},
          {"flagged", c.flagged},
      };
      if (!a.out_dir.empty()) {
        std::string stem = study.id + "-g" + std::to_string(g);
        write_map_csv(map, fs::path(a.out_dir) / (stem + ".csv"));
        write_map_pgm(map, fs::path(a.out_dir) / (stem + ".pgm"));
        entry["map"] = stem;
      }
      records.push_back(entry);
    }
  }
  if (cnr_count == 0) throw ExitError{2, "corpus has no grounding records"};

  json report = {
      {"command", "ground"},
      {"map_score", a.map_score},
      {"mean_cnr", cnr_sum / static_cast<double>(cnr_count)},
      {"record_count", cnr_count},
      {"records", records},
      {"config",
       {{"apply_pe", !a.no_pe}, {"lambda", ck.params.lambda}, {"tau", ck.params.tau}}},
  };
  emit_report(report, a.out);
  return 0;
}

// ---------------------------------------------------------- gradcheck -----

struct GradcheckArgs {
  std::string corpus;
  std::string checkpoint;
  std::string out;
  std::uint64_t seed = 1;
  std::size_t batch = 4;
  double step = 1e-5;
  std::size_t max_coords = 200;
  double tol = 1e-6;
  double lambda = 10.0;
  double tau = 0.1;
  std::string ext_variant = "summed";
  int threads = 1;
  bool no_pe = false;
};

int run_gradcheck(const GradcheckArgs& a) {
  Corpus corpus;
  if (!a.corpus.empty()) {
    corpus = load_corpus(a.corpus, "corpus");
  } else {
    // Small mixed instance: 4 studies on a 2x3 grid, half with laterals.
    SynthConfig sc;
    sc.num_studies = std::max<std::size_t>(a.batch, 2);
    sc.dim = 8;
    sc.grid = {2, 3};
    sc.num_tokens = 4;
    sc.vocab_size = 6;
    sc.concepts_per_study = 2;
    sc.noise_sigma = 0.4;
    sc.lateral_fraction = 0.5;
    sc.seed = a.seed;
    corpus = generate(sc);
  }
  if (a.batch < 2) throw ExitError{2, "--batch must be at least 2"};
  if (corpus.studies.size() < a.batch) {
    throw ExitError{2, "corpus has " + std::to_string(corpus.studies.size()) +
                           " studies, --batch wants " + std::to_string(a.batch)};
  }

  HeadParams params;
  if (!a.checkpoint.empty()) {
    require_input(a.checkpoint, "checkpoint");
    Checkpoint ck = load_checkpoint(a.checkpoint);
    check_dims(ck, corpus);
    params = ck.params;
  } else {
    params = init_head_params(corpus.dim, a.seed, a.lambda, a.tau);
  }

  std::vector<StudyContext> ctx = prep_corpus(corpus, !a.no_pe);
  std::vector<const StudyContext*> batch;
  for (std::size_t i = 0; i < a.batch; ++i) batch.push_back(&ctx[i]);

  LossOptions opts;
  opts.ext_variant = ext_variant_from_string(a.ext_variant);
  opts.threads = a.threads;
  FdOptions fd;
  fd.step = a.step;
  fd.max_coords_per_block = a.max_coords;

  std::vector<FdBlockReport> blocks = fd_check(batch, params, opts, fd);
  double worst = 0.0;
  json rows = json::array();
  for (const FdBlockReport& b : blocks) {
    worst = std::max(worst, b.max_rel_err);
    rows.push_back({{"block", b.block}, {"checked", b.checked}, {"max_rel_err", b.max_rel_err}});
  }
  json report = {
      {"command", "gradcheck"},
      {"blocks", rows},
      {"max_rel_err", worst},
      {"tolerance", a.tol},
      {"pass", worst <= a.tol},
      {"config",
       {{"seed", a.seed},
        {"batch", a.batch},
        {"step", a.step},
        {"max_coords_per_block", a.max_coords},
        {"lambda", params.lambda},
        {"tau", params.tau},
        {"apply_pe", !a.no_pe},
        {"ext_variant", a.ext_variant}}},
  };
  emit_report(report, a.out);
  return worst <= a.tol ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-modal alignment head: generate, train, evaluate, ground"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* cmd_gen = app.add_subcommand("gen", "generate a synthetic corpus file");
  cmd_gen->add_option("--config", gen.config, "synth config JSON")->required();
  cmd_gen->add_option("--out", gen.out, "output corpus path (.lmtr)")->required();
  cmd_gen->add_option("--split", gen.split, "split tag stored in the manifest");
  cmd_gen->add_option("--slice", gen.slice, "keep studies [BEGIN:END) of the generated corpus");
  CLI::Option* gen_seed = cmd_gen->add_option("--seed", gen.seed, "override the config seed");

  TrainArgs tr;
  CLI::App* cmd_train = app.add_subcommand("train", "fit the head on a corpus pair");
  cmd_train->add_option("--train", tr.train_path, "training corpus")->required();
  cmd_train->add_option("--val", tr.val_path, "validation corpus")->required();
  cmd_train->add_option("--config", tr.config, "train config JSON");
  cmd_train->add_option("--out-dir", tr.out_dir, "directory for checkpoint/history/metrics")->required();
  cmd_train->add_flag("--frontal-only", tr.frontal_only, "drop lateral views before training");
  cmd_train->add_flag("--no-pe", tr.no_pe, "skip the positional encoding");
  cmd_train->add_option("--threads", tr.threads, "worker threads (results are thread-invariant)");
  tr.o_lr = cmd_train->add_option("--lr", tr.lr, "learning rate");
  tr.o_wd = cmd_train->add_option("--weight-decay", tr.weight_decay, "decoupled weight decay");
  tr.o_tau = cmd_train->add_option("--tau", tr.tau, "contrastive temperature");
  tr.o_lambda = cmd_train->add_option("--lambda", tr.lambda, "attention sharpness");
  tr.o_batch = cmd_train->add_option("--batch-size", tr.batch_size, "studies per batch");
  tr.o_epochs = cmd_train->add_option("--max-epochs", tr.max_epochs, "epoch cap");
  tr.o_patience = cmd_train->add_option("--patience", tr.patience, "early-stopping patience");
  tr.o_seed = cmd_train->add_option("--seed", tr.seed, "init/shuffle seed");
  tr.o_rank = cmd_train->add_option("--rank-score", tr.rank_score, "validation ranking score: agg|global|sum");
  tr.o_ext = cmd_train->add_option("--ext-variant", tr.ext_variant, "external loss form: summed|two_term");

  EvalArgs ev;
  CLI::App* cmd_eval = app.add_subcommand("eval", "retrieval metrics for a checkpoint on a corpus");
  cmd_eval->add_option("--checkpoint", ev.checkpoint, "trained checkpoint")->required();
  cmd_eval->add_option("--corpus", ev.corpus, "corpus to score")->required();
  cmd_eval->add_option("--out", ev.out, "write the JSON report here instead of stdout");
  cmd_eval->add_option("--rank-score", ev.rank_score, "ranking score: agg|global|sum");
  cmd_eval->add_option("--ks", ev.ks, "recall cutoffs")->delimiter(',');
  cmd_eval->add_option("--precision-ks", ev.precision_ks, "precision cutoffs (needs labels)")->delimiter(',');
  cmd_eval->add_option("--threads", ev.threads, "worker threads");
  cmd_eval->add_flag("--no-pe", ev.no_pe, "skip the positional encoding");

  GroundArgs gr;
  CLI::App* cmd_ground = app.add_subcommand("ground", "phrase-grounding CNR and attention maps");
  cmd_ground->add_option("--checkpoint", gr.checkpoint, "trained checkpoint")->required();
  cmd_ground->add_option("--corpus", gr.corpus, "corpus with grounding records")->required();
  cmd_ground->add_option("--out", gr.out, "write the JSON report here instead of stdout");
  cmd_ground->add_option("--out-dir", gr.out_dir, "write per-record CSV/PGM maps here");
  cmd_ground->add_option("--map-score", gr.map_score, "map variant: attention|cosine");
  cmd_ground->add_flag("--no-pe", gr.no_pe, "skip the positional encoding");

  GradcheckArgs gc;
  CLI::App* cmd_gc = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradient");
  cmd_gc->add_option("--corpus", gc.corpus, "corpus to draw the batch from (default: built-in instance)");
  cmd_gc->add_option("--checkpoint", gc.checkpoint, "check at these parameters instead of a fresh init");
  cmd_gc->add_option("--out", gc.out, "write the JSON report here instead of stdout");
  cmd_gc->add_option("--seed", gc.seed, "instance/init seed");
  cmd_gc->add_option("--batch", gc.batch, "batch size");
  cmd_gc->add_option("--step", gc.step, "central-difference half step");
  cmd_gc->add_option("--max-coords", gc.max_coords, "sampled coordinates per block");
  cmd_gc->add_option("--tol", gc.tol, "pass/fail threshold on the max relative error");
  cmd_gc->add_option("--lambda", gc.lambda, "attention sharpness for fresh params");
  cmd_gc->add_option("--tau", gc.tau, "contrastive temperature for fresh params");
  cmd_gc->add_option("--ext-variant", gc.ext_variant, "external loss form: summed|two_term");
  cmd_gc->add_option("--threads", gc.threads, "worker threads");
  cmd_gc->add_flag("--no-pe", gc.no_pe, "skip the positional encoding");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    gen.seed_set = gen_seed->count() > 0;
    if (app.got_subcommand(cmd_gen)) return run_gen(gen);
    if (app.got_subcommand(cmd_train)) return run_train(tr);
    if (app.got_subcommand(cmd_eval)) return run_eval(ev);
    if (app.got_subcommand(cmd_ground)) return run_ground(gr);
    if (app.got_subcommand(cmd_gc)) return run_gradcheck(gc);
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify(e.what());
  }
  return 0;
}
