#include "sih/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <iostream>

#include <CLI11.hpp>

#include "sih/dataset.hpp"
#include "sih/incremental.hpp"
#include "sih/model_io.hpp"
#include "sih/retrieval.hpp"
#include "sih/trainer.hpp"

namespace sih {

namespace {

struct TrainFlags {
  std::string data, out;
  int bits = 32;
  int anchors = 1000;
  double sigma = 0.0, lambda = 0.0;
  double cx = 16.0, cb = 1e-3, gamma = 1e5, epsilon = 0.0;
  int max_iter = 5;
  std::uint64_t seed = 0;
  CLI::Option* sigma_opt = nullptr;
  CLI::Option* lambda_opt = nullptr;
};

struct UpdateFlags {
  std::string model, events, out, strategy = "incremental";
  bool re_anchor = false, refit_preprocess = false;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  int threads = 1;
  bool verbose = false;

  TrainLog log() const { return TrainLog{verbose ? &err : nullptr}; }
};

void add_threads(CLI::App* cmd, Context& ctx) {
  cmd->add_option("--threads", ctx.threads, "Worker threads (default: SIH_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--verbose", ctx.verbose, "Print per-phase progress to standard error");
}

void run_train(const TrainFlags& f, Context& ctx) {
  TrainConfig cfg;
  cfg.bits = f.bits;
  cfg.anchors = f.anchors;
  if (f.sigma_opt->count()) cfg.sigma = f.sigma;
  if (f.lambda_opt->count()) cfg.lambda = f.lambda;
  cfg.cx = f.cx;
  cfg.cb = f.cb;
  cfg.gamma = f.gamma;
  cfg.epsilon = f.epsilon;
  cfg.max_iter = f.max_iter;
  cfg.seed = f.seed;
  cfg.threads = ctx.threads;
  const Dataset data = load_dataset(f.data);
  TrainResult result = train(data, cfg, ctx.log());
  const bool converged = result.model.converged;
  save_model(make_state(data, std::move(result)), f.out);
  ctx.out << "trained " << data.size() << " samples, " << data.num_classes() << " classes, " << cfg.bits
          << " bits" << (converged ? "" : " (iteration cap reached)") << " -> " << f.out << '\n';
}

void run_update(const UpdateFlags& f, Context& ctx) {
  ModelFile file = load_model(f.model);
  if (f.strategy == "passive") {
    if (file.state)
      save_model(*file.state, f.out);
    else
      save_model(file.model, f.out);
    ctx.out << "passive: model unchanged -> " << f.out << '\n';
    return;
  }
  if (!file.state) throw InvalidArgument("model '" + f.model + "' has no training state; retrain to enable updates");

  TrainConfig cfg = file.model.config;
  cfg.threads = ctx.threads;
  if (f.seed_opt->count()) cfg.seed = f.seed;
  const auto events = load_events(f.events);
  TrainState state = std::move(*file.state);
  for (std::size_t e = 0; e < events.size(); ++e)
    state = apply_event(state, events[e], derive_seed(cfg.seed, 16 + e));

  TrainResult result;
  if (f.strategy == "scratch") {
    cfg.anchors = std::min<Index>(cfg.anchors, state.data.size());
    if (!f.seed_opt->count()) cfg.seed = derive_seed(cfg.seed, 1000);
    result = train(state.data, cfg, ctx.log());
  } else {
    result = incremental_train(state, cfg, IncrementalOptions{f.refit_preprocess, f.re_anchor}, ctx.log());
  }
  const Index n = state.data.size();
  const Index K = state.data.num_classes();
  save_model(make_state(state.data, std::move(result)), f.out);
  ctx.out << f.strategy << ": " << events.size() << " events, " << n << " samples, " << K << " classes -> " << f.out
          << '\n';
}

void run_encode(const std::string& model_path, const std::string& data_path, const std::string& out_path,
                Context& ctx) {
  const ModelFile file = load_model(model_path);
  const Dataset data = load_dataset(data_path);
  const CodeBits codes = encode_rows(file.model, data.features, ctx.threads);
  save_codes(CodeDatabase::from_bits(codes), out_path);
  ctx.out << "encoded " << codes.rows() << " rows at " << codes.cols() << " bits -> " << out_path << '\n';
}

void run_query(const std::string& model_path, const std::string& db_path, const std::string& data_path, int top,
               Context& ctx) {
  const ModelFile file = load_model(model_path);
  const CodeDatabase db = load_codes(db_path);
  const Dataset data = load_dataset(data_path);
  const CodeBits codes = encode_rows(file.model, data.features, ctx.threads);
  if (codes.cols() != db.bits())
    throw DimensionError("model emits " + std::to_string(codes.cols()) + "-bit codes, database holds " +
                         std::to_string(db.bits()));
  const Index shown = std::min<Index>(top, db.size());
  for (Index q = 0; q < codes.rows(); ++q) {
    const PackedCode code = pack(codes.row(q).transpose());
    const auto order = rank_by_hamming(code, db);
    ctx.out << q;
    for (Index k = 0; k < shown; ++k) {
      const Index i = order[static_cast<std::size_t>(k)];
      ctx.out << ' ' << i << ':' << hamming_words(code.words.data(), db.code(i), code.words.size());
    }
    ctx.out << '\n';
  }
}

void run_eval(const std::string& model_path, const std::string& test_path, const std::string& out_path,
              Context& ctx) {
  const ModelFile file = load_model(model_path);
  const Dataset test = load_dataset(test_path);
  const CodeBits codes = encode_rows(file.model, test.features, ctx.threads);
  const EvalReport report = evaluate(CodeDatabase::from_bits(codes, test.labels), ctx.threads);
  save_report(report, out_path);
  ctx.out << "map=";
  if (report.map)
    ctx.out << *report.map;
  else
    ctx.out << "undefined";
  ctx.out << " queries=" << report.queries << " excluded=" << report.excluded_queries << " -> " << out_path << '\n';
}

int default_threads(std::ostream& err, bool& ok) {
  ok = true;
  const char* env = std::getenv("SIH_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 4096) {
    err << "SIH_THREADS must be a positive integer, got '" << env << "'\n";
    ok = false;
    return 1;
  }
  return static_cast<int>(v);
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  bool env_ok = true;
  Context ctx{out, err, default_threads(err, env_ok)};
  if (!env_ok) return kExitUsage;

  CLI::App app{"Supervised incremental hashing: train, update, encode, query and evaluate binary codes", "sih"};
  app.require_subcommand(1);
  std::function<void()> action;

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Learn a hash model from a labeled dataset");
  train_cmd->add_option("--data", tf.data, "Training data (CSV or SIHD binary)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tf.out, "Output model file")->required();
  train_cmd->add_option("--bits", tf.bits, "Code length m")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--anchors", tf.anchors, "Anchor count r")->check(CLI::PositiveNumber)->capture_default_str();
  tf.sigma_opt = train_cmd->add_option("--sigma", tf.sigma, "RBF width (default: median anchor distance)")
                     ->check(CLI::PositiveNumber);
  train_cmd->add_option("--cx", tf.cx, "Bit SVM cost")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--cb", tf.cb, "Class SVM cost")->check(CLI::PositiveNumber)->capture_default_str();
  tf.lambda_opt = train_cmd->add_option("--lambda", tf.lambda, "Class term weight (default: bits * 1e8)")
                      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--gamma", tf.gamma, "Bit balance penalty")->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_option("--epsilon", tf.epsilon, "Solver tolerance (<= 0: relative default)")->capture_default_str();
  train_cmd->add_option("--max-iter", tf.max_iter, "Outer iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--seed", tf.seed, "Random seed")->capture_default_str();
  add_threads(train_cmd, ctx);
  train_cmd->callback([&] { action = [&] { run_train(tf, ctx); }; });

  UpdateFlags uf;
  auto* update_cmd = app.add_subcommand("update", "Apply database modifications to a trained model");
  update_cmd->add_option("--model", uf.model, "Input model with training state")->required()->check(CLI::ExistingFile);
  update_cmd->add_option("--events", uf.events, "Event file")->required()->check(CLI::ExistingFile);
  update_cmd->add_option("--out", uf.out, "Output model file")->required();
  update_cmd->add_option("--strategy", uf.strategy, "incremental, scratch or passive")
      ->check(CLI::IsMember({"incremental", "scratch", "passive"}))
      ->capture_default_str();
  update_cmd->add_flag("--re-anchor", uf.re_anchor, "Resample anchors; bit weights restart from zero");
  update_cmd->add_flag("--refit-preprocess", uf.refit_preprocess, "Refit the centering mean on the new data");
  uf.seed_opt = update_cmd->add_option("--seed", uf.seed, "Override the stored seed");
  add_threads(update_cmd, ctx);
  update_cmd->callback([&] { action = [&] { run_update(uf, ctx); }; });

  std::string model, data, db, codes_out;
  int top = 10;
  auto* encode_cmd = app.add_subcommand("encode", "Encode a dataset into a packed code file");
  encode_cmd->add_option("--model", model, "Model file")->required()->check(CLI::ExistingFile);
  encode_cmd->add_option("--data", data, "Data to encode")->required()->check(CLI::ExistingFile);
  encode_cmd->add_option("--out", codes_out, "Output code file")->required();
  add_threads(encode_cmd, ctx);
  encode_cmd->callback([&] { action = [&] { run_encode(model, data, codes_out, ctx); }; });

  auto* query_cmd = app.add_subcommand("query", "Rank a code database for each query row");
  query_cmd->add_option("--model", model, "Model file")->required()->check(CLI::ExistingFile);
  query_cmd->add_option("--db", db, "Code file to search")->required()->check(CLI::ExistingFile);
  query_cmd->add_option("--data", data, "Query rows")->required()->check(CLI::ExistingFile);
  query_cmd->add_option("--top", top, "Results per query")->check(CLI::PositiveNumber)->capture_default_str();
  add_threads(query_cmd, ctx);
  query_cmd->callback([&] { action = [&] { run_query(model, db, data, top, ctx); }; });

  auto* eval_cmd = app.add_subcommand("eval", "Leave-one-out retrieval evaluation on a test set");
  eval_cmd->add_option("--model", model, "Model file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--test", data, "Labeled test data")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", codes_out, "Report JSON path")->required();
  add_threads(eval_cmd, ctx);
  eval_cmd->callback([&] { action = [&] { run_eval(model, data, codes_out, ctx); }; });

  int classes = 6, per_class = 100, dim = 2;
  double spread = 0.2;
  std::uint64_t blob_seed = 0;
  std::string format = "csv";
  auto* blobs_cmd = app.add_subcommand("blobs", "Write a synthetic Gaussian-cluster dataset");
  blobs_cmd->add_option("--classes", classes, "Class count")->check(CLI::PositiveNumber)->capture_default_str();
  blobs_cmd->add_option("--per-class", per_class, "Rows per class")->check(CLI::PositiveNumber)->capture_default_str();
  blobs_cmd->add_option("--dim", dim, "Feature dimension")->check(CLI::PositiveNumber)->capture_default_str();
  blobs_cmd->add_option("--spread", spread, "Cluster standard deviation")->check(CLI::NonNegativeNumber)->capture_default_str();
  blobs_cmd->add_option("--seed", blob_seed, "Random seed")->capture_default_str();
  blobs_cmd->add_option("--format", format, "csv or binary")->check(CLI::IsMember({"csv", "binary"}))->capture_default_str();
  blobs_cmd->add_option("--out", codes_out, "Output dataset file")->required();
  blobs_cmd->callback([&] {
    action = [&] {
      const Dataset d = generate_blobs(classes, per_class, dim, spread, blob_seed);
      save_dataset(d, codes_out, format == "csv" ? DataFormat::csv : DataFormat::binary);
      out << "wrote " << d.size() << " rows -> " << codes_out << '\n';
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    action();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace sih
