#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <ostream>

#include "deepcough/experiments.hpp"
#include "deepcough/model_file.hpp"

namespace deepcough::cli {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct TrainFlags {
  double learning_rate = nn::SgdConfig{}.learning_rate;
  double momentum = nn::SgdConfig{}.momentum;
  Eigen::Index batch = nn::SgdConfig{}.batch_size;
  int epochs = nn::SgdConfig{}.epochs;

  nn::SgdConfig config(std::uint64_t seed) const {
    nn::SgdConfig c;
    c.learning_rate = learning_rate;
    c.momentum = momentum;
    c.batch_size = batch;
    c.epochs = epochs;
    c.seed = seed;
    c.validate();
    return c;
  }
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--lr", f.learning_rate, "Learning rate")->capture_default_str();
  app->add_option("--momentum", f.momentum, "Momentum coefficient")->capture_default_str();
  app->add_option("--batch", f.batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str()->check(CLI::PositiveNumber);
}

void require_parent_dir(const fs::path& file) {
  const fs::path parent = file.parent_path().empty() ? fs::path(".") : file.parent_path();
  if (!fs::is_directory(parent)) throw Error(ErrorCode::Io, "output directory does not exist: " + parent.string());
}

void require_manifest(const fs::path& corpus) {
  if (!fs::is_regular_file(corpus / kManifestName))
    throw Error(ErrorCode::Io, "missing manifest " + (corpus / kManifestName).string());
}

EpochCallback epoch_printer(std::ostream& err) {
  return [&err](const EpochRecord& r) {
    err << "epoch " << r.epoch << " train_loss " << fixed(r.train_loss, 4) << " train_acc " << fixed(r.train_acc, 4)
        << " val_loss " << fixed(r.val_loss, 4) << " val_acc " << fixed(r.val_acc, 4) << '\n';
  };
}

int cmd_synth(const fs::path& out_dir, std::size_t n, std::uint64_t seed, std::ostream& out) {
  const Dataset ds = synth_corpus(n, seed);
  write_corpus(ds, out_dir);
  out << "wrote " << ds.count(Label::Cough) << " cough and " << ds.count(Label::Speech) << " speech clips to "
      << out_dir.string() << '\n';
  return kOk;
}

int cmd_train(const fs::path& corpus_dir, const fs::path& model_path, fs::path history_path, const TrainFlags& flags,
              double threshold, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  const nn::SgdConfig cfg = flags.config(seed);
  if (history_path.empty()) history_path = fs::path(model_path.string() + ".history.csv");
  require_manifest(corpus_dir);
  require_parent_dir(model_path);
  require_parent_dir(history_path);

  const DatasetSplit split = prepare_split(read_corpus(corpus_dir), seed);
  const SegmentSplit seg = prepare_segments(split, threshold);
  err << "segments: " << seg.train.size() << " train, " << seg.val.size() << " val, " << seg.test.size()
      << " test\n";
  const CnnModel model = fit_deepcough(seg.train, seg.val, cfg, {}, epoch_printer(err));
  save_model(model, model_path);
  write_history_csv(history_path, model.history);

  const Eigen::MatrixXf probs = predict_spectra(model, seg.test.spectra);
  std::vector<Label> predicted(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index j = 0; j < probs.cols(); ++j)
    predicted[static_cast<std::size_t>(j)] = probs(0, j) > probs(1, j) ? Label::Cough : Label::Speech;
  const Confusion c = confusion(seg.test.labels, predicted);
  out << "test segments " << c.total() << " sensitivity " << fixed(c.sensitivity(), 4) << " specificity "
      << fixed(c.specificity(), 4) << '\n';
  out << "model written to " << model_path.string() << '\n';
  return kOk;
}

int cmd_eval(const fs::path& corpus_dir, const fs::path& out_dir, const fs::path& save_cnn, const TrainFlags& flags,
             double threshold, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  ExperimentOptions opts;
  opts.seed = seed;
  opts.threshold = threshold;
  opts.cnn = flags.config(seed);
  opts.on_epoch = epoch_printer(err);
  opts.log = [&err](const std::string& m) { err << m << '\n'; };
  require_manifest(corpus_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());
  if (!save_cnn.empty()) require_parent_dir(save_cnn);

  const Dataset corpus = read_corpus(corpus_dir);
  const Experiment1Result exp1 = run_experiment1(corpus, opts);
  const Experiment2Result exp2 = run_experiment2(corpus, opts, &exp1.cnn);
  write_experiment_outputs(out_dir, exp1, exp2);
  if (!save_cnn.empty()) save_model(exp1.cnn, save_cnn);

  out << render_table("Segment level (64 ms)", exp1.rows) << '\n';
  const EvalReport rows2[] = {exp2.cnn, exp2.hmm};
  out << render_table("Window level (one decision per test clip)", rows2, true);
  return kOk;
}

int cmd_detect(const fs::path& model_path, const fs::path& wav_path, double threshold, std::ostream& out) {
  const CnnModel model = load_model(model_path);
  AudioClip clip = load_wav(wav_path);
  if (clip.sample_rate != kPipelineRate) clip = resample(clip, kPipelineRate);
  const double frame_ms = 1000.0 * kFrameSize / kPipelineRate;
  for (const AudioWindow& w : admit_windows(frame_signal(clip), threshold)) {
    const auto p = predict_segment(model, stft_segment(w.samples));
    const double start = frame_ms * static_cast<double>(w.origin_frame);
    const Label label = p[0] > 0.5 ? Label::Cough : Label::Speech;
    out << fixed(start, 0) << '\t' << fixed(start + frame_ms * kWindowFrames, 0) << '\t' << to_string(label) << '\t'
        << fixed(p[0], 4) << '\n';
  }
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, bool inject_fault, std::ostream& out) {
  nn::Network<double> net = build_network<double>(reduced_architecture(), seed);
  Rng rng(seed, 0x4743);
  nn::Vector<double> input(net.input_size());
  for (Eigen::Index i = 0; i < input.size(); ++i) input[i] = rng.normal();
  const int label = static_cast<int>(rng.below(2));
  nn::GradientTamper tamper;
  if (inject_fault) tamper = [](nn::Gradients<double>& g) { g.front() *= 1.1; };
  const nn::GradCheckResult r = nn::gradient_check(net, input, label, 1e-5, tamper);
  out << "parameters " << r.parameters_checked << " max_relative_error " << r.max_relative_error << '\n';
  if (inject_fault) return r.max_relative_error > 1e-2 ? kOk : kNumeric;
  return r.max_relative_error < 1e-4 ? kOk : kNumeric;
}

// Keys of a --config file fill in options that were not given as flags.
void apply_config(CLI::App* sub, const fs::path& path) {
  if (path.empty()) return;
  for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(path.string())) {
    if (item.name == "config") continue;
    CLI::Option* opt = sub->get_option_no_throw("--" + item.name);
    if (!opt || !item.parents.empty())
      throw CLI::ConfigError::Extras(item.fullname() + " in " + path.string());
    if (opt->count() > 0) continue;
    for (const std::string& v : item.inputs) opt->add_result(v);
    opt->run_callback();
  }
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
      return kUsage;
    case ErrorCode::NumericFailure:
      return kNumeric;
    default:
      return kData;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cough detection from short audio windows"};
  app.require_subcommand(1);
  std::uint64_t seed = 42;
  double threshold = kDefaultAdmissionThreshold;
  TrainFlags flags;

  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Seed for all randomness")->capture_default_str(); };
  auto add_threshold = [&](CLI::App* sub) {
    sub->add_option("--threshold", threshold, "Window RMS admission threshold")->capture_default_str();
  };
  fs::path config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value file; flags take precedence")->check(CLI::ExistingFile);
  };

  fs::path out_dir, corpus_dir, model_path, history_path, wav_path, save_cnn;
  std::size_t n_per_class = 200;
  bool inject_fault = false;

  auto* synth = app.add_subcommand("synth", "Write the synthetic cough/speech corpus");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--n", n_per_class, "Clips per class")->capture_default_str()->check(CLI::PositiveNumber);
  add_seed(synth);
  add_config(synth);

  auto* train = app.add_subcommand("train", "Train the CNN on a corpus");
  train->add_option("--corpus", corpus_dir, "Corpus directory with manifest.tsv")->required();
  train->add_option("--model", model_path, "Output model file")->required();
  train->add_option("--history", history_path, "Per-epoch CSV (default <model>.history.csv)");
  add_train_flags(train, flags);
  add_threshold(train);
  add_seed(train);
  add_config(train);

  auto* eval = app.add_subcommand("eval", "Run both experiments and write the result tables");
  eval->add_option("--corpus", corpus_dir, "Corpus directory with manifest.tsv")->required();
  eval->add_option("--out", out_dir, "Directory for the CSV outputs")->capture_default_str();
  eval->add_option("--save-cnn", save_cnn, "Also write the trained CNN here");
  add_train_flags(eval, flags);
  add_threshold(eval);
  add_seed(eval);
  add_config(eval);

  auto* detect = app.add_subcommand("detect", "Classify every admitted 64 ms window of a WAV file");
  detect->add_option("--model", model_path, "Model file")->required();
  detect->add_option("--wav", wav_path, "Input WAV")->required();
  add_threshold(detect);
  add_config(detect);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the reduced network");
  gradcheck->add_flag("--inject-fault", inject_fault, "Scale one gradient block; succeeds if the check catches it");
  add_seed(gradcheck);

  out_dir = ".";
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    for (CLI::App* sub : app.get_subcommands()) apply_config(sub, config_path);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(out_dir, n_per_class, seed, out);
    if (*train) return cmd_train(corpus_dir, model_path, history_path, flags, threshold, seed, out, err);
    if (*eval) return cmd_eval(corpus_dir, out_dir, save_cnn, flags, threshold, seed, out, err);
    if (*detect) return cmd_detect(model_path, wav_path, threshold, out);
    if (*gradcheck) return cmd_gradcheck(seed, inject_fault, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace deepcough::cli
