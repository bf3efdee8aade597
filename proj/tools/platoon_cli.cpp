// Command-line front end: corpus generation, predictor training, paired
// scenario execution, and grid sweeps. Every command writes a manifest with
// content hashes of its inputs and outputs into the output directory.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "platoon/platoon.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace platoon;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("config '" + path + "': " + e.what());
  }
  return j;
}

// Exhaustive key validation: a typo never silently falls back to a default.
void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  std::string bad;
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&key](const char* a) {
          return key == a;
        }) == allowed.end()) {
      if (!bad.empty()) bad += ", ";
      bad += key;
    }
  }
  if (!bad.empty()) {
    throw ConfigError(where + ": unknown key(s): " + bad);
  }
}

std::string resolve_near(const std::string& path, const std::string& anchor) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(anchor).parent_path() / p).string();
}

double peak_abs_u(const sim::ScenarioResult& r) {
  double peak = 0.0;
  for (double u : r.followers.at(0).u) peak = std::max(peak, std::abs(u));
  return peak;
}

// ---- gen-data ----

sim::CorpusConfig parse_corpus_config(const json& j) {
  check_keys(j, "gen-data config",
             {"lane_changes", "straights", "curves", "dt", "speed_lo",
              "speed_hi", "duration_lo", "duration_hi", "lane_width",
              "radius_lo", "radius_hi", "seed"});
  sim::CorpusConfig c;
  c.lane_changes = j.value("lane_changes", c.lane_changes);
  c.straights = j.value("straights", c.straights);
  c.curves = j.value("curves", c.curves);
  c.dt = j.value("dt", c.dt);
  c.speed_lo = j.value("speed_lo", c.speed_lo);
  c.speed_hi = j.value("speed_hi", c.speed_hi);
  c.duration_lo = j.value("duration_lo", c.duration_lo);
  c.duration_hi = j.value("duration_hi", c.duration_hi);
  c.lane_width = j.value("lane_width", c.lane_width);
  c.radius_lo = j.value("radius_lo", c.radius_lo);
  c.radius_hi = j.value("radius_hi", c.radius_hi);
  c.seed = j.value("seed", c.seed);
  return c;
}

json echo_corpus_config(const sim::CorpusConfig& c) {
  return json{{"lane_changes", c.lane_changes}, {"straights", c.straights},
              {"curves", c.curves},             {"dt", c.dt},
              {"speed_lo", c.speed_lo},         {"speed_hi", c.speed_hi},
              {"duration_lo", c.duration_lo},   {"duration_hi", c.duration_hi},
              {"lane_width", c.lane_width},     {"radius_lo", c.radius_lo},
              {"radius_hi", c.radius_hi},       {"seed", c.seed}};
}

void cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                  int maneuvers_flag, bool seed_given, std::uint64_t seed,
                  io::RunManifest& man) {
  sim::CorpusConfig cfg;
  if (!config_path.empty()) {
    cfg = parse_corpus_config(load_json_file(config_path));
    man.inputs.push_back(config_path);
  }
  if (maneuvers_flag >= 0) cfg.lane_changes = maneuvers_flag;
  if (seed_given) cfg.seed = seed;
  if (cfg.lane_changes < 1) {
    throw ConfigError("gen-data: lane-change count must be at least 1");
  }
  if (cfg.straights < 0 || cfg.curves < 0) {
    throw ConfigError("gen-data: negative trace counts");
  }

  const auto corpus = sim::generate_corpus(cfg);
  for (const auto& ct : corpus) {
    const std::string name = ct.name + ".csv";
    signals::write_trace_csv(out_dir + "/" + name, ct.trace.records);
    man.outputs.push_back(name);
  }
  man.seed = cfg.seed;
  man.config_echo = echo_corpus_config(cfg);
  log_info("gen-data: wrote %zu traces to %s", corpus.size(),
           out_dir.c_str());
}

// ---- train ----

void parse_training_block(const json& j, const std::string& where,
                          predictor::TrainingConfig& t) {
  check_keys(j, where, {"max_epochs", "learning_rate", "momentum", "patience",
                        "bptt_window"});
  t.max_epochs = j.value("max_epochs", t.max_epochs);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.momentum = j.value("momentum", t.momentum);
  t.patience = j.value("patience", t.patience);
  t.bptt_window = j.value("bptt_window", t.bptt_window);
}

predictor::PredictorConfig parse_train_config(const json& j) {
  check_keys(j, "train config", {"predictor", "training"});
  predictor::PredictorConfig cfg;
  if (j.contains("predictor")) {
    const json& p = j.at("predictor");
    check_keys(p, "train config: predictor",
               {"delays", "hidden", "steps", "dt", "history_window",
                "bounds_pad", "calib_quantile", "calib_floor", "calib_stride"});
    cfg.delays = p.value("delays", cfg.delays);
    cfg.hidden = p.value("hidden", cfg.hidden);
    cfg.steps = p.value("steps", cfg.steps);
    cfg.dt = p.value("dt", cfg.dt);
    cfg.history_window = p.value("history_window", cfg.history_window);
    cfg.bounds_pad = p.value("bounds_pad", cfg.bounds_pad);
    cfg.calib_quantile = p.value("calib_quantile", cfg.calib_quantile);
    cfg.calib_floor = p.value("calib_floor", cfg.calib_floor);
    cfg.calib_stride = p.value("calib_stride", cfg.calib_stride);
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    check_keys(t, "train config: training", {"nar", "narx", "rnn"});
    if (t.contains("nar")) {
      parse_training_block(t.at("nar"), "train config: training.nar",
                           cfg.nar_train);
    }
    if (t.contains("narx")) {
      parse_training_block(t.at("narx"), "train config: training.narx",
                           cfg.narx_train);
    }
    if (t.contains("rnn")) {
      parse_training_block(t.at("rnn"), "train config: training.rnn",
                           cfg.rnn_train);
    }
  }
  return cfg;
}

json echo_training_block(const predictor::TrainingConfig& t) {
  return json{{"max_epochs", t.max_epochs},
              {"learning_rate", t.learning_rate},
              {"momentum", t.momentum},
              {"patience", t.patience},
              {"bptt_window", t.bptt_window}};
}

json echo_train_config(const predictor::PredictorConfig& c) {
  json j;
  j["predictor"] = {{"delays", c.delays},
                    {"hidden", c.hidden},
                    {"steps", c.steps},
                    {"dt", c.dt},
                    {"history_window", c.history_window},
                    {"bounds_pad", c.bounds_pad},
                    {"calib_quantile", c.calib_quantile},
                    {"calib_floor", c.calib_floor},
                    {"calib_stride", c.calib_stride}};
  j["training"] = {{"nar", echo_training_block(c.nar_train)},
                   {"narx", echo_training_block(c.narx_train)},
                   {"rnn", echo_training_block(c.rnn_train)}};
  return j;
}

void cmd_train(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir, std::uint64_t seed, int jobs,
               io::RunManifest& man) {
  predictor::PredictorConfig cfg;
  if (!config_path.empty()) {
    cfg = parse_train_config(load_json_file(config_path));
    man.inputs.push_back(config_path);
  }

  std::vector<std::string> paths;
  if (!fs::is_directory(data_dir)) {
    throw ConfigError("train: data directory '" + data_dir + "' not found");
  }
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    if (entry.path().extension() == ".csv") {
      paths.push_back(entry.path().string());
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.size() < 3) {
    throw InsufficientDataError("train: need at least 3 trace files, found " +
                                std::to_string(paths.size()));
  }

  std::vector<predictor::Trace> traces;
  std::vector<std::string> groups;
  for (const std::string& p : paths) {
    predictor::Trace t;
    t.name = fs::path(p).stem().string();
    t.segments = signals::load_trace(p);
    groups.push_back(predictor::trace_group(t.name));
    traces.push_back(std::move(t));
    man.inputs.push_back(p);
  }

  const predictor::SplitIndices split = predictor::split_traces(groups, seed);
  std::vector<predictor::Trace> tr, va, te;
  for (std::size_t i : split.train) tr.push_back(traces[i]);
  for (std::size_t i : split.val) va.push_back(traces[i]);
  for (std::size_t i : split.test) te.push_back(traces[i]);

  predictor::TrainSummary summary;
  predictor::PredictorBundle bundle =
      predictor::train_bundle(tr, va, cfg, seed, jobs, &summary);
  predictor::calibrate(bundle, va);

  json report;
  report["traces"] = traces.size();
  report["split"] = {{"train", tr.size()}, {"val", va.size()},
                     {"test", te.size()}};
  for (const auto& [key, rep] : summary.reports) {
    report["training"][key] = {{"epochs", rep.epochs},
                               {"train_mse", rep.train_mse},
                               {"val_mse", rep.val_mse},
                               {"early_stopped", rep.early_stopped}};
  }
  report["calibration"] = {{"q_long", bundle.q_long},
                           {"q_lat", bundle.q_lat}};
  if (!te.empty()) {
    const predictor::Coverage cov = predictor::coverage(bundle, te);
    const predictor::StepErrors rmse = predictor::per_step_rmse(bundle, te);
    report["coverage"] = {{"longitudinal", cov.longitudinal},
                          {"lateral", cov.lateral}};
    report["rmse"] = {{"longitudinal", rmse.longitudinal},
                      {"lateral", rmse.lateral}};
  }

  {
    std::ofstream out(out_dir + "/model.json");
    if (!out) throw FormatError("train: cannot write model.json");
    out << predictor::bundle_to_json(bundle).dump(2) << '\n';
    man.outputs.push_back("model.json");
  }
  {
    std::ofstream out(out_dir + "/report.json");
    if (!out) throw FormatError("train: cannot write report.json");
    out << report.dump(2) << '\n';
    man.outputs.push_back("report.json");
  }
  man.seed = seed;
  man.config_echo = echo_train_config(cfg);
  log_info("train: %zu traces (%zu/%zu/%zu split), model written to %s",
           traces.size(), tr.size(), va.size(), te.size(), out_dir.c_str());
}

// ---- run ----

// A scenario file holds the whole experiment: plant/platoon geometry, the
// interferer maneuver, the controller tuning shared by both legs, and the
// predictor the stochastic leg uses.
struct RunSpec {
  sim::ScenarioConfig scenario;
  control::ControllerConfig controller;
  std::string model_path;           // as written in the file
  std::string model_path_resolved;  // empty when no predictor is configured
};

RunSpec parse_run_config(const json& j, const std::string& config_path) {
  check_keys(j, "scenario",
             {"platoon", "interferer", "controller", "predictor_model_path",
              "seed"});
  RunSpec spec;
  sim::ScenarioConfig& sc = spec.scenario;
  if (j.contains("platoon")) {
    const json& p = j.at("platoon");
    check_keys(p, "scenario: platoon",
               {"duration", "dt", "followers", "cruise_speed", "lane_width"});
    sc.duration = p.value("duration", sc.duration);
    sc.dt = p.value("dt", sc.dt);
    sc.followers = p.value("followers", sc.followers);
    sc.cruise_speed = p.value("cruise_speed", sc.cruise_speed);
    sc.lane_width = p.value("lane_width", sc.lane_width);
  }
  if (j.contains("interferer")) {
    const json& p = j.at("interferer");
    check_keys(p, "scenario: interferer",
               {"present", "maneuver_start", "maneuver_duration",
                "gap_fraction", "speed_offset", "side", "length", "width"});
    sc.with_interferer = p.value("present", sc.with_interferer);
    sc.maneuver_start = p.value("maneuver_start", sc.maneuver_start);
    sc.maneuver_duration = p.value("maneuver_duration", sc.maneuver_duration);
    sc.gap_fraction = p.value("gap_fraction", sc.gap_fraction);
    sc.interferer_speed_offset =
        p.value("speed_offset", sc.interferer_speed_offset);
    sc.interferer_side = p.value("side", sc.interferer_side);
    sc.interferer_len = p.value("length", sc.interferer_len);
    sc.interferer_width = p.value("width", sc.interferer_width);
  }
  sc.seed = j.value("seed", sc.seed);

  control::ControllerConfig& cc = spec.controller;
  cc.vehicle.ts = sc.dt;  // control period follows the simulation step
  if (j.contains("controller")) {
    const json& p = j.at("controller");
    check_keys(p, "scenario: controller",
               {"headway", "standstill", "margin", "engine_lag", "ts",
                "predecessor_length", "u_min", "u_max", "dv_min", "dv_max",
                "a_min", "a_max", "alpha", "spacing_weight", "closing_weight",
                "effort_weight", "horizon", "design_speed", "ttsis_guard"});
    control::VehicleParams& v = cc.vehicle;
    v.headway = p.value("headway", v.headway);
    v.standstill = p.value("standstill", v.standstill);
    v.margin = p.value("margin", v.margin);
    v.engine_lag = p.value("engine_lag", v.engine_lag);
    v.ts = p.value("ts", v.ts);
    v.length = p.value("predecessor_length", v.length);
    v.u_min = p.value("u_min", v.u_min);
    v.u_max = p.value("u_max", v.u_max);
    v.dv_min = p.value("dv_min", v.dv_min);
    v.dv_max = p.value("dv_max", v.dv_max);
    v.a_min = p.value("a_min", v.a_min);
    v.a_max = p.value("a_max", v.a_max);
    v.alpha = p.value("alpha", v.alpha);
    cc.weights.spacing = p.value("spacing_weight", cc.weights.spacing);
    cc.weights.closing = p.value("closing_weight", cc.weights.closing);
    cc.weights.effort = p.value("effort_weight", cc.weights.effort);
    cc.mpc.horizon = p.value("horizon", cc.mpc.horizon);
    cc.mpc.design_speed = p.value("design_speed", cc.mpc.design_speed);
    cc.ttsis_guard = p.value("ttsis_guard", cc.ttsis_guard);
  }
  if (cc.vehicle.ts != sc.dt) {
    throw ConfigError("scenario: controller.ts must equal platoon.dt");
  }

  spec.model_path = j.value("predictor_model_path", std::string());
  spec.model_path_resolved = resolve_near(spec.model_path, config_path);
  if (sc.with_interferer && spec.model_path.empty()) {
    throw ConfigError(
        "scenario: interferer.present is true but predictor_model_path is "
        "empty; the stochastic leg needs a trained cut-in predictor");
  }
  return spec;
}

json echo_run_config(const RunSpec& spec) {
  const sim::ScenarioConfig& sc = spec.scenario;
  const control::ControllerConfig& cc = spec.controller;
  const control::VehicleParams& v = cc.vehicle;
  json j;
  j["platoon"] = {{"duration", sc.duration},
                  {"dt", sc.dt},
                  {"followers", sc.followers},
                  {"cruise_speed", sc.cruise_speed},
                  {"lane_width", sc.lane_width}};
  j["interferer"] = {{"present", sc.with_interferer},
                     {"maneuver_start", sc.maneuver_start},
                     {"maneuver_duration", sc.maneuver_duration},
                     {"gap_fraction", sc.gap_fraction},
                     {"speed_offset", sc.interferer_speed_offset},
                     {"side", sc.interferer_side},
                     {"length", sc.interferer_len},
                     {"width", sc.interferer_width}};
  j["controller"] = {{"headway", v.headway},
                     {"standstill", v.standstill},
                     {"margin", v.margin},
                     {"engine_lag", v.engine_lag},
                     {"ts", v.ts},
                     {"predecessor_length", v.length},
                     {"u_min", v.u_min},
                     {"u_max", v.u_max},
                     {"dv_min", v.dv_min},
                     {"dv_max", v.dv_max},
                     {"a_min", v.a_min},
                     {"a_max", v.a_max},
                     {"alpha", v.alpha},
                     {"spacing_weight", cc.weights.spacing},
                     {"closing_weight", cc.weights.closing},
                     {"effort_weight", cc.weights.effort},
                     {"horizon", cc.mpc.horizon},
                     {"design_speed", cc.mpc.design_speed},
                     {"ttsis_guard", cc.ttsis_guard}};
  j["predictor_model_path"] = spec.model_path;
  j["seed"] = sc.seed;
  return j;
}

json paired_metrics_json(const sim::PairedResult& pr) {
  return json{{"stochastic", sim::metrics_to_json(pr.stochastic.metrics)},
              {"conventional", sim::metrics_to_json(pr.conventional.metrics)},
              {"delta_ratio", pr.delta_ratio},
              {"stochastic_peak_u", peak_abs_u(pr.stochastic)},
              {"conventional_peak_u", peak_abs_u(pr.conventional)}};
}

// Long-format plot data for the host follower: one row per (cycle, series,
// variant), series delta/v/a/pc, variants smpc and conv.
void write_plot_csv(const std::string& path, const sim::PairedResult& pr) {
  std::ofstream out(path);
  if (!out) throw FormatError("run: cannot write '" + path + "'");
  out << "t, series, variant, value\n";
  char buf[160];
  auto emit = [&](const sim::ScenarioResult& r, const char* variant) {
    const sim::FollowerTrack& f = r.followers.at(0);
    for (std::size_t k = 0; k < r.t.size(); ++k) {
      auto row = [&](const char* series, double value) {
        std::snprintf(buf, sizeof buf, "%.6f, %s, %s, %.9g\n", r.t[k], series,
                      variant, value);
        out << buf;
      };
      row("delta", f.delta_phys[k]);
      row("v", f.v[k]);
      row("a", f.a[k]);
      row("pc", f.pc[k]);
    }
  };
  emit(pr.stochastic, "smpc");
  emit(pr.conventional, "conv");
}

void cmd_run(const std::string& config_path, const std::string& out_dir,
             bool seed_given, std::uint64_t seed, io::RunManifest& man) {
  if (config_path.empty()) {
    throw ConfigError("run: --config scenario file is required");
  }
  RunSpec spec = parse_run_config(load_json_file(config_path), config_path);
  if (seed_given) spec.scenario.seed = seed;
  man.inputs.push_back(config_path);

  predictor::PredictorBundle bundle;
  const predictor::PredictorBundle* bundle_ptr = nullptr;
  if (!spec.model_path_resolved.empty()) {
    bundle = predictor::bundle_from_json(
        load_json_file(spec.model_path_resolved));
    bundle_ptr = &bundle;
    man.inputs.push_back(spec.model_path_resolved);
  }

  const sim::PairedResult pr =
      sim::run_paired(spec.scenario, spec.controller, bundle_ptr);

  sim::write_run_csv(out_dir + "/run_smpc.csv", pr.stochastic);
  man.outputs.push_back("run_smpc.csv");
  sim::write_run_csv(out_dir + "/run_conv.csv", pr.conventional);
  man.outputs.push_back("run_conv.csv");
  write_plot_csv(out_dir + "/plot.csv", pr);
  man.outputs.push_back("plot.csv");
  {
    std::ofstream out(out_dir + "/metrics.json");
    if (!out) throw FormatError("run: cannot write metrics.json");
    out << paired_metrics_json(pr).dump(2) << '\n';
    man.outputs.push_back("metrics.json");
  }
  man.seed = spec.scenario.seed;
  man.config_echo = echo_run_config(spec);
  log_info("run: max|delta| smpc %.3f conv %.3f (ratio %.3f)",
           pr.stochastic.metrics.max_abs_delta_f1,
           pr.conventional.metrics.max_abs_delta_f1, pr.delta_ratio);
}

// ---- sweep ----

json apply_override(json scenario, const std::string& key, const json& value) {
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    scenario[key] = value;
  } else {
    const std::string block = key.substr(0, dot);
    const std::string leaf = key.substr(dot + 1);
    if (leaf.empty() || leaf.find('.') != std::string::npos) {
      throw ConfigError("sweep: grid key '" + key +
                        "' must be 'key' or 'block.key'");
    }
    scenario[block][leaf] = value;
  }
  return scenario;
}

void cmd_sweep(const std::string& config_path, const std::string& out_dir,
               int jobs, io::RunManifest& man) {
  if (config_path.empty()) {
    throw ConfigError("sweep: --config file is required");
  }
  const json cfg = load_json_file(config_path);
  check_keys(cfg, "sweep config", {"scenario", "scenario_file", "grid"});
  man.inputs.push_back(config_path);

  json base;
  std::string base_anchor = config_path;
  if (cfg.contains("scenario") && cfg.contains("scenario_file")) {
    throw ConfigError("sweep config: give scenario or scenario_file, not both");
  }
  if (cfg.contains("scenario")) {
    base = cfg.at("scenario");
  } else if (cfg.contains("scenario_file")) {
    base_anchor = resolve_near(cfg.at("scenario_file").get<std::string>(),
                               config_path);
    base = load_json_file(base_anchor);
    man.inputs.push_back(base_anchor);
  } else {
    throw ConfigError("sweep config: missing scenario or scenario_file");
  }

  if (!cfg.contains("grid") || !cfg.at("grid").is_object() ||
      cfg.at("grid").empty()) {
    throw ConfigError("sweep config: empty grid");
  }
  std::vector<std::string> keys;
  std::vector<std::vector<json>> values;
  for (const auto& [key, arr] : cfg.at("grid").items()) {
    if (!arr.is_array() || arr.empty()) {
      throw ConfigError("sweep config: grid value for '" + key +
                        "' must be a non-empty array");
    }
    if (key == "predictor_model_path") {
      throw ConfigError("sweep config: predictor_model_path is not sweepable");
    }
    keys.push_back(key);
    values.push_back(std::vector<json>(arr.begin(), arr.end()));
  }

  // Cross product, odometer order: the last key varies fastest. Cell specs
  // are validated (and the model loaded) before any simulation starts.
  std::size_t n_cells = 1;
  for (const auto& v : values) n_cells *= v.size();
  struct Cell {
    std::vector<json> grid_values;
    RunSpec spec;
  };
  std::vector<Cell> cells;
  cells.reserve(n_cells);
  std::vector<std::size_t> odo(keys.size(), 0);
  for (std::size_t c = 0; c < n_cells; ++c) {
    json j = base;
    Cell cell;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      j = apply_override(j, keys[k], values[k][odo[k]]);
      cell.grid_values.push_back(values[k][odo[k]]);
    }
    cell.spec = parse_run_config(j, base_anchor);
    cells.push_back(std::move(cell));
    for (std::size_t k = keys.size(); k-- > 0;) {
      if (++odo[k] < values[k].size()) break;
      odo[k] = 0;
    }
  }

  predictor::PredictorBundle bundle;
  const predictor::PredictorBundle* bundle_ptr = nullptr;
  const std::string model = cells.front().spec.model_path_resolved;
  for (const Cell& c : cells) {
    if (c.spec.model_path_resolved != model) {
      throw ConfigError("sweep: all cells must share one predictor model");
    }
  }
  if (!model.empty()) {
    bundle = predictor::bundle_from_json(load_json_file(model));
    bundle_ptr = &bundle;
    man.inputs.push_back(model);
  }

  // Rows are written by cell index, so the file does not depend on thread
  // scheduling.
  std::vector<std::string> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    char buf[512];
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      const sim::PairedResult pr =
          sim::run_paired(cell.spec.scenario, cell.spec.controller,
                          bundle_ptr);
      const sim::ScenarioMetrics& ms = pr.stochastic.metrics;
      const sim::ScenarioMetrics& mc = pr.conventional.metrics;
      std::string row = std::to_string(i);
      for (const json& v : cell.grid_values) row += ", " + v.dump();
      std::snprintf(buf, sizeof buf,
                    ", %.9g, %.9g, %.9g, %.9g, %.9g, %.9g, %.9g, %.9g, %.9g, "
                    "%d, %d, %d, %d\n",
                    ms.max_abs_delta_f1, mc.max_abs_delta_f1, pr.delta_ratio,
                    ms.detection_time, ms.crossing_time, ms.detection_lead,
                    ms.pc_peak, peak_abs_u(pr.stochastic),
                    peak_abs_u(pr.conventional), ms.fallback_cycles,
                    mc.fallback_cycles, ms.collision ? 1 : 0,
                    mc.collision ? 1 : 0);
      row += buf;
      rows[i] = std::move(row);
      log_debug("sweep: cell %zu done", i);
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(jobs), cells.size());
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  {
    std::ofstream out(out_dir + "/sweep.csv");
    if (!out) throw FormatError("sweep: cannot write sweep.csv");
    out << "cell";
    for (const std::string& k : keys) out << ", " << k;
    out << ", smpc_max_abs_delta, conv_max_abs_delta, delta_ratio, "
           "detection_time, crossing_time, detection_lead, pc_peak, "
           "smpc_peak_u, conv_peak_u, smpc_fallback_cycles, "
           "conv_fallback_cycles, smpc_collision, conv_collision\n";
    for (const std::string& r : rows) out << r;
    man.outputs.push_back("sweep.csv");
  }
  man.seed = cells.front().spec.scenario.seed;
  man.config_echo = cfg;
  log_info("sweep: %zu cells written to %s", cells.size(), out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Platoon CACC simulator: stochastic MPC with neural cut-in "
               "prediction"};
  app.set_version_flag("--version", kVersionString);
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir;
  std::uint64_t seed = 1;
  int jobs = 1;
  int maneuvers = -1;

  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate a synthetic driving-trace corpus");
  gen->add_option("--config", config_path, "Corpus configuration JSON");
  gen->add_option("--out", out_dir, "Output directory")->required();
  CLI::Option* gen_seed = gen->add_option("--seed", seed, "Corpus seed");
  gen->add_option("--maneuvers", maneuvers,
                  "Number of lane-change maneuvers (default 90)");

  CLI::App* train = app.add_subcommand(
      "train", "Train the cut-in predictor on a trace corpus");
  train->add_option("--config", config_path, "Predictor/training JSON");
  train->add_option("--data", data_dir, "Directory of trace CSV files")
      ->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--seed", seed, "Split and initialization seed");
  train->add_option("--jobs", jobs, "Parallel net-training threads");

  CLI::App* run = app.add_subcommand(
      "run", "Run one cut-in scenario with both controller flavors");
  run->add_option("--config", config_path, "Scenario JSON")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  CLI::Option* run_seed = run->add_option("--seed", seed, "Scenario seed");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Run a scenario grid and tabulate metrics");
  sweep->add_option("--config", config_path, "Sweep JSON")->required();
  sweep->add_option("--out", out_dir, "Output directory")->required();
  sweep->add_option("--jobs", jobs, "Parallel scenario threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    fs::create_directories(out_dir);
    io::RunManifest man;
    man.config_path = config_path;
    man.out_dir = out_dir;
    man.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    if (gen->parsed()) {
      man.command = "gen-data";
      cmd_gen_data(config_path, out_dir, maneuvers, gen_seed->count() > 0,
                   seed, man);
    } else if (train->parsed()) {
      man.command = "train";
      cmd_train(config_path, data_dir, out_dir, seed, jobs, man);
    } else if (run->parsed()) {
      man.command = "run";
      cmd_run(config_path, out_dir, run_seed->count() > 0, seed, man);
    } else {
      man.command = "sweep";
      cmd_sweep(config_path, out_dir, jobs, man);
    }
    man.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    io::write_manifest(man);
  } catch (const std::exception& e) {
    log_error("%s", e.what());
    return 1;
  }
  return 0;
}
