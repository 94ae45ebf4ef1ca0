// Command-line front end: dataset synthesis and ingestion, training, tuning,
// evaluation, forecasting, causal sweeps, and the HTTP API.

#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ccf/causal.hpp"
#include "ccf/hyperopt.hpp"
#include "ccf/pipeline.hpp"
#include "ccf/service/api.hpp"
#include "ccf/service/config.hpp"
#include "ccf/service/registry.hpp"
#include "ccf/service/server.hpp"
#include "ccf/synthplant.hpp"

namespace {

using namespace ccf;
using service::Registry;
using service::Settings;

struct Options {
  std::string workspace = "ccf-workspace";
  std::string config;
};

Settings load_settings(const Options& o) {
  auto s = o.config.empty() ? Settings() : Settings::load(o.config);
  s.apply_env();
  return s;
}

std::string latest_dataset(const Registry& reg) {
  auto ds = reg.datasets();
  if (ds.empty()) throw Error(ErrorKind::NotFound, "registry has no datasets; run `synth` or `ingest` first");
  std::size_t best = 0;
  std::string id;
  for (const auto& d : ds) {
    auto n = std::stoul(d.id.substr(3));
    if (n >= best) best = n, id = d.id;
  }
  return id;
}

ArchitectureSpec architecture_spec(const Settings& s, Architecture a) {
  return {a, s.count("hidden"), s.count("layers"), s.count("kernel")};
}

void print_metrics(const MetricsReport& m) {
  std::cout << "MSE  " << format_double(m.mse) << "\n"
            << "RMSE " << format_double(m.rmse) << "\n"
            << "MAE  " << format_double(m.mae) << "\n"
            << "MAPE " << (m.mape ? format_double(*m.mape) + " %" : std::string("undefined")) << "\n"
            << "R2   " << (m.r2 ? format_double(*m.r2) : std::string("undefined")) << "\n"
            << "n    " << m.n << "\n";
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Carbon-capture emission forecasting and causal what-if toolkit"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("-w,--workspace", opt.workspace, "Registry directory")->capture_default_str();
  app.add_option("-c,--config", opt.config, "key = value settings file (CCF_<KEY> env vars override)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic plant dataset and register it");
  double days = 23.0;
  std::uint64_t synth_seed = 0;
  std::string synth_csv;
  synth->add_option("--days", days, "Length in days")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--csv", synth_csv, "Also write the CSV here");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load plant CSV segments, clean them, and register the result");
  std::vector<std::string> ingest_files;
  bool downsample = false;
  ingest->add_option("files", ingest_files, "CSV segments in chronological order")->required();
  ingest->add_flag("--downsample", downsample, "Keep alternate rows (300 s -> 600 s)");

  // train / tune
  std::string dataset_id, target = columns::kAmpFtir, arch_name = "lstm", log_path;
  auto* train_cmd = app.add_subcommand("train", "Train a model and register it");
  auto* tune_cmd = app.add_subcommand("tune", "Bayesian hyperparameter search, then train the best configuration");
  for (auto* c : {train_cmd, tune_cmd}) {
    c->add_option("--dataset", dataset_id, "Dataset id (default: most recent)");
    c->add_option("--target", target, "Output column to forecast")->capture_default_str();
    c->add_option("--arch", arch_name, "lstm | stackedlstm | bilstm | convlstm")->capture_default_str();
    c->add_option("--log", log_path, "Append per-epoch JSON lines here");
  }

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a model on a dataset's test segment");
  std::string model_id;
  eval_cmd->add_option("--model", model_id, "Model id")->required();
  eval_cmd->add_option("--dataset", dataset_id, "Dataset id (default: the model's training dataset)");

  // forecast
  auto* fc_cmd = app.add_subcommand("forecast", "Write a forecast CSV");
  std::size_t fc_start = 0, fc_horizon = 0;
  std::string fc_mode = "exogenous", out_path;
  fc_cmd->add_option("--model", model_id, "Model id")->required();
  fc_cmd->add_option("--dataset", dataset_id, "Dataset id (default: the model's training dataset)");
  fc_cmd->add_option("--start", fc_start, "First predicted row (default: horizon rows before the end)");
  fc_cmd->add_option("--horizon", fc_horizon, "Steps to predict (default: one day)");
  fc_cmd->add_option("--mode", fc_mode, "exogenous | autoregressive")->capture_default_str();
  fc_cmd->add_option("-o,--out", out_path, "Output CSV (default: stdout)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Causal impact grid over -20%..+20% in 5% steps");
  std::string sweep_feature, json_path;
  std::vector<std::string> pair;
  std::size_t win_start = 0, win_length = 0;
  sweep_cmd->add_option("--model", model_id, "Model id")->required();
  sweep_cmd->add_option("--dataset", dataset_id, "Dataset id (default: the model's training dataset)");
  auto* feat_opt = sweep_cmd->add_option("--feature", sweep_feature, "Restrict a single-feature sweep to one input");
  sweep_cmd->add_option("--pair", pair, "Two inputs for a 9x9 pair grid")->expected(2)->excludes(feat_opt);
  sweep_cmd->add_option("--window-start", win_start, "Evaluation window start row (default: last two days)");
  sweep_cmd->add_option("--window-length", win_length, "Evaluation window length (default: two days)");
  sweep_cmd->add_option("-o,--out", out_path, "Grid CSV (default: stdout)");
  sweep_cmd->add_option("--json", json_path, "Also write the structured grid as JSON here");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Serve the /api/v1/ HTTP endpoints");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    auto reg = std::make_shared<Registry>(opt.workspace);
    auto settings = load_settings(opt);

    if (synth->parsed()) {
      auto cfg = synth::cesar1_defaults(synth_seed, days);
      auto frame = synth::generate(cfg);
      if (!synth_csv.empty()) write_csv(synth_csv, frame);
      auto id = reg->add_dataset(frame, synth::provenance_json(cfg));
      std::cout << id << "\n";
      std::cerr << "rows " << frame.rows() << ", interval " << frame.interval_s() << " s\n";
      return 0;
    }

    if (ingest->parsed()) {
      std::optional<TimeSeriesFrame> frame;
      for (const auto& f : ingest_files) {
        auto seg = load_csv(f, cesar1_schema());
        frame = frame ? concat(*frame, seg) : seg;
      }
      auto filled = fill_missing_report(*frame);
      auto out = downsample ? downsample_alternate(filled.frame) : filled.frame;
      auto id = reg->add_dataset(out);
      std::cout << id << "\n";
      std::cerr << "rows " << out.rows() << ", interval " << out.interval_s() << " s, filled " << filled.filled
                << " cells\n";
      return 0;
    }

    auto model_dataset = [&] { return dataset_id.empty() ? reg->model(model_id).dataset_id : dataset_id; };

    if (train_cmd->parsed() || tune_cmd->parsed()) {
      if (dataset_id.empty()) dataset_id = latest_dataset(*reg);
      auto frame = reg->open_dataset(dataset_id);
      const auto arch = parse_architecture(arch_name);
      auto fc = settings.feature_config(target, frame.interval_s());
      auto p = prepare(frame, fc, settings.split());
      auto tc = settings.train_config();
      auto spec = architecture_spec(settings, arch);
      std::ofstream log_file;
      if (!log_path.empty()) log_file.open(log_path, std::ios::app);

      if (tune_cmd->parsed()) {
        auto hs = hpo::HyperoptSpec::for_architecture(arch);
        hs.budget = settings.count("budget");
        hs.design_size = settings.count("design_size");
        hs.candidates = settings.count("candidates");
        hs.seed = tc.seed;
        const auto folds = settings.count("folds");
        auto cv_frame = frame.slice(0, p.val_end);
        auto apply = [&](const hpo::Params& prm, ArchitectureSpec& a, TrainConfig& t) {
          a.hidden = static_cast<std::size_t>(prm.at("hidden"));
          t.learning_rate = prm.at("learning_rate");
          t.batch_size = static_cast<std::size_t>(prm.at("batch_size"));
          if (prm.count("layers")) a.layers = static_cast<std::size_t>(prm.at("layers"));
          if (prm.count("kernel")) a.kernel = static_cast<std::size_t>(prm.at("kernel"));
        };
        auto res = hpo::bayes_opt(
            [&](const hpo::Params& prm) {
              auto a = spec;
              auto t = tc;
              apply(prm, a, t);
              try {
                return lstm_cv(cv_frame, make_descriptor(p, a), t, folds);
              } catch (const Error& e) {
                std::cerr << "trial failed: " << e.what() << "\n";
                return std::numeric_limits<double>::quiet_NaN();
              }
            },
            hs);
        for (const auto& e : res.trace) {
          std::cerr << hpo::to_json(e).dump() << "\n";
          if (log_file) log_file << nlohmann::json{{"trial", hpo::to_json(e)}}.dump() << "\n";
        }
        apply(res.best, spec, tc);
      }

      auto r = train_and_evaluate(frame, p, spec, tc, log_file.is_open() ? &log_file : nullptr);
      auto id = reg->add_model(r.result.trained, dataset_id, r.test_metrics);
      std::cout << id << "\n";
      std::cerr << to_string(arch) << " on " << target << ": " << param_count(r.result.trained.model.descriptor())
                << " parameters, " << r.result.history.size() << " epochs (best " << r.result.best_epoch << ")\n";
      print_metrics(r.test_metrics);
      return 0;
    }

    if (eval_cmd->parsed()) {
      auto ds = model_dataset();
      auto frame = reg->open_dataset(ds);
      auto model = reg->open_model(model_id).model;
      auto [n_train, n_val, n_test] = split_lengths(frame.rows(), settings.split());
      const auto start = std::max(n_train + n_val, first_forecastable_row(model.descriptor().features));
      auto r = forecast(model, frame, {start, frame.rows() - start, ForecastMode::Exogenous});
      std::vector<double> act;
      for (const auto& a : r.actual) act.push_back(a.value_or(kMissing));
      const auto& fc = model.descriptor().features;
      auto m = metrics(r.predicted, act, model.descriptor().scaler, fc.target);
      reg->set_metrics(model_id, m);
      std::cerr << model_id << " on " << ds << " rows [" << start << ", " << frame.rows() << ")\n";
      print_metrics(m);
      return 0;
    }

    if (fc_cmd->parsed()) {
      auto frame = reg->open_dataset(model_dataset());
      auto model = reg->open_model(model_id).model;
      if (fc_horizon == 0) fc_horizon = steps_per_day(frame.interval_s());
      if (fc_start == 0) fc_start = frame.rows() >= fc_horizon ? frame.rows() - fc_horizon : 0;
      auto r = forecast(model, frame, {fc_start, fc_horizon, parse_forecast_mode(fc_mode)});
      std::ofstream file;
      write_forecast_csv(open_out(out_path, file), r);
      return 0;
    }

    if (sweep_cmd->parsed()) {
      auto frame = reg->open_dataset(model_dataset());
      auto model = reg->open_model(model_id).model;
      EvalWindow w;
      w.length = win_length ? win_length : 2 * steps_per_day(frame.interval_s());
      w.start = win_start ? win_start : (frame.rows() >= w.length ? frame.rows() - w.length : 0);
      ImpactGrid g;
      if (!pair.empty())
        g = sweep_pair(model, frame, pair[0], pair[1], w);
      else
        g = sweep_single(model, frame, w, sweep_feature.empty() ? std::vector<std::string>{}
                                                                 : std::vector<std::string>{sweep_feature});
      g.model_id = model_id;
      std::ofstream file;
      write_grid_csv(open_out(out_path, file), g);
      if (!json_path.empty()) {
        std::ofstream j(json_path);
        if (!j) throw Error(ErrorKind::Io, "cannot write '" + json_path + "'");
        j << to_json(g).dump(2) << "\n";
      }
      return 0;
    }

    if (serve_cmd->parsed()) {
      service::Api api(reg);
      bool ok = service::serve(api, host, port, [&](int bound) {
        std::cerr << "serving " << opt.workspace << " on http://" << host << ":" << bound << "/api/v1/\n";
      });
      if (!ok) throw Error(ErrorKind::Io, "cannot listen on " + host + ":" + std::to_string(port));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
