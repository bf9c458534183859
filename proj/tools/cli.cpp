#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#ifdef SFOT_CLI11_SINGLE_HEADER
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif
#include <nlohmann/json.hpp>

#include "sfot/checkpoint.hpp"
#include "sfot/dataset.hpp"
#include "sfot/error.hpp"
#include "sfot/seeding.hpp"
#include "sfot/sim.hpp"
#include "sfot/text_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sfot::cli {

namespace {

struct Shared {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string config;
};

// Runs fn(i) for i in [0, n) on up to jobs threads. Results must be written
// to per-index slots by fn.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

json load_config_json(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    json j = json::parse(text::read_file(path));
    if (!j.is_object()) throw InputError(path + ": config must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_run_config(const fs::path& out_dir, const std::string& command, const json& args, const Shared& shared) {
  json rc;
  rc["command"] = command;
  rc["args"] = args;
  rc["seed"] = shared.seed;
  rc["tool_version"] = "0.1.0";
  text::write_file_atomic(out_dir / "run_config.json", rc.dump(2) + "\n");
}

std::string fmt(double v) { return text::format_double(v); }

// --- configuration (de)serialization -------------------------------------

json to_json(const MatcherConfig& c) {
  return {{"width", c.width},
          {"layers", c.layers},
          {"max_candidates", c.max_candidates},
          {"omega", c.omega},
          {"tau_match", c.tau_match},
          {"sinkhorn_iters", c.sinkhorn_iters},
          {"train_sinkhorn_iters", c.train_sinkhorn_iters},
          {"alpha_init", c.alpha_init}};
}

MatcherConfig matcher_config_from(const json& j, MatcherConfig c) {
  c.width = j.value("width", c.width);
  c.layers = j.value("layers", c.layers);
  c.max_candidates = j.value("max_candidates", c.max_candidates);
  c.omega = j.value("omega", c.omega);
  c.tau_match = j.value("tau_match", c.tau_match);
  c.sinkhorn_iters = j.value("sinkhorn_iters", c.sinkhorn_iters);
  c.train_sinkhorn_iters = j.value("train_sinkhorn_iters", c.train_sinkhorn_iters);
  c.alpha_init = j.value("alpha_init", c.alpha_init);
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"steps", c.steps}, {"batch_size", c.batch_size}, {"lr", c.adam.lr}, {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2}, {"eps", c.adam.eps}, {"seed", c.seed},
          {"mode", c.mode == MatchMode::fused ? "fused" : "high_only"}};
}

TrainConfig train_config_from(const json& j, TrainConfig c) {
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("eps", c.adam.eps);
  return c;
}

json to_json(const TrackerConfig& c) {
  return {{"tau_cand_fraction", c.tau_cand_fraction},
          {"tau_cand_floor", c.tau_cand_floor},
          {"nms_window", c.nms_window},
          {"max_candidates", c.max_candidates},
          {"feature_radius_cells", c.feature_radius_cells},
          {"tau_new", c.tau_new},
          {"tau_redetect", c.tau_redetect},
          {"redetect_margin", c.redetect_margin},
          {"redetect_beta_factor", c.redetect_beta_factor},
          {"memory_beta", c.memory_beta},
          {"mode", c.mode == MatchMode::fused ? "fused" : "high_only"}};
}

TrackerConfig tracker_config_from(const json& j, TrackerConfig c) {
  c.tau_cand_fraction = j.value("tau_cand_fraction", c.tau_cand_fraction);
  c.tau_cand_floor = j.value("tau_cand_floor", c.tau_cand_floor);
  c.nms_window = j.value("nms_window", c.nms_window);
  c.max_candidates = j.value("max_candidates", c.max_candidates);
  c.feature_radius_cells = j.value("feature_radius_cells", c.feature_radius_cells);
  c.tau_new = j.value("tau_new", c.tau_new);
  c.tau_redetect = j.value("tau_redetect", c.tau_redetect);
  c.redetect_margin = j.value("redetect_margin", c.redetect_margin);
  c.redetect_beta_factor = j.value("redetect_beta_factor", c.redetect_beta_factor);
  c.memory_beta = j.value("memory_beta", c.memory_beta);
  return c;
}

json section(const json& cfg, const char* key) {
  if (!cfg.contains(key)) return json::object();
  if (!cfg.at(key).is_object()) throw InputError(std::string("config section '") + key + "' must be an object");
  return cfg.at(key);
}

// --- evaluation JSON --------------------------------------------------------

json curve_json(const Curve& c) { return {{"thresholds", c.thresholds}, {"values", c.values}}; }

Curve curve_from_json(const json& j) {
  Curve c;
  c.thresholds = j.at("thresholds").get<std::vector<double>>();
  c.values = j.at("values").get<std::vector<double>>();
  if (c.thresholds.size() != c.values.size()) throw InputError("curve thresholds and values differ in length");
  return c;
}

json scores_json(const SequenceScores& s) {
  return {{"prc", s.prc},
          {"auc", s.auc},
          {"success_at_half", s.success_at_half},
          {"evaluated_frames", s.evaluated_frames},
          {"precision", curve_json(s.precision)},
          {"success", curve_json(s.success)}};
}

SequenceScores scores_from_json(const json& j) {
  SequenceScores s;
  s.prc = j.at("prc").get<double>();
  s.auc = j.at("auc").get<double>();
  s.success_at_half = j.at("success_at_half").get<double>();
  s.evaluated_frames = j.at("evaluated_frames").get<std::size_t>();
  s.precision = curve_from_json(j.at("precision"));
  s.success = curve_from_json(j.at("success"));
  return s;
}

json eval_json(const EvalResult& e) {
  json per = json::object();
  for (const auto& [name, s] : e.per_sequence) per[name] = scores_json(s);
  return {{"aggregate", scores_json(e.aggregate)}, {"per_sequence", per}, {"evaluated_frames", e.evaluated_frames}};
}

// --- loading helpers ------------------------------------------------------

std::map<std::string, std::vector<BBox>> load_results_dir(const fs::path& dir, const std::vector<Sequence>& dataset) {
  if (!fs::is_directory(dir)) throw InputError(dir.string() + ": results directory not found");
  std::map<std::string, std::vector<BBox>> out;
  for (const auto& seq : dataset) {
    const auto path = dir / (seq.name + ".txt");
    if (!fs::is_regular_file(path)) throw InputError(path.string() + ": missing results for " + seq.name);
    out[seq.name] = load_results(path, seq.size());
  }
  return out;
}

std::vector<TrainingPair> collect_pairs(const std::vector<SimSequence>& seqs, const TrackerConfig& tc) {
  std::vector<TrainingPair> pairs;
  for (const auto& s : seqs) {
    auto p = training_pairs(s, tc);
    pairs.insert(pairs.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return pairs;
}

std::vector<SimSequence> load_sim_or_fail(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError(dir.string() + ": not a directory");
  return load_sim_dataset(dir);
}

std::string loss_csv(const std::vector<double>& losses) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out += std::to_string(i) + "," + fmt(losses[i]) + "\n";
  return out;
}

struct TrackRun {
  std::vector<TrackOutput> outputs;
};

TrackRun track_all(const std::vector<SimSequence>& seqs, const MatcherParams& params, const TrackerConfig& tc,
                   std::size_t jobs) {
  TrackRun run;
  run.outputs.resize(seqs.size());
  parallel_for(seqs.size(), jobs, [&](std::size_t i) { run.outputs[i] = run_sequence(seqs[i], params, tc); });
  return run;
}

void write_track_outputs(const fs::path& out, const std::vector<SimSequence>& seqs, const TrackRun& run) {
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    save_results(out / (seqs[i].groundtruth.name + ".txt"), run.outputs[i].boxes);
    save_confidences(out / (seqs[i].groundtruth.name + ".beta.txt"), run.outputs[i].betas);
  }
}

EvalResult evaluate_run(const std::vector<SimSequence>& seqs, const TrackRun& run) {
  std::vector<Sequence> ds;
  std::map<std::string, std::vector<BBox>> results;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    ds.push_back(seqs[i].groundtruth);
    results[seqs[i].groundtruth.name] = run.outputs[i].boxes;
  }
  return evaluate(ds, results);
}

std::vector<double> parse_grid(const std::string& list) {
  std::vector<double> grid;
  for (auto field : text::split(list, ',')) {
    if (text::trim(field).empty()) continue;
    grid.push_back(text::parse_double(field));
  }
  return grid;
}

// --- SVG -------------------------------------------------------------------

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string plot_svg(const std::map<std::string, EvalResult>& evals, bool precision) {
  const double width = 640.0;
  const double height = 480.0;
  const double left = 60.0;
  const double right = 180.0;
  const double top = 40.0;
  const double bottom = 50.0;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  const double x_max = precision ? static_cast<double>(ope::kMaxPrecisionThreshold) : 1.0;
  static const char* palette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << (precision ? "Precision plots of OPE" : "Success plots of OPE") << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 10; ++i) {
    const double fy = top + ph - ph * i / 10.0;
    const double fx = left + pw * i / 10.0;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << fy + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
        << fmt(i / 10.0) << "</text>\n";
    svg << "<text x=\"" << fx << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
        << fmt(x_max * i / 10.0) << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << (precision ? "Location error threshold (pixels)" : "Overlap threshold") << "</text>\n";

  const auto order = rank(evals, precision ? RankKey::prc : RankKey::auc);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& agg = evals.at(order[k]).aggregate;
    const Curve& c = precision ? agg.precision : agg.success;
    const char* color = palette[k % (sizeof palette / sizeof palette[0])];
    std::string values;
    std::ostringstream points;
    for (std::size_t i = 0; i < c.values.size(); ++i) {
      if (i) {
        values += ";";
        points << " ";
      }
      values += fmt(c.values[i]);
      points << fmt(left + pw * c.thresholds[i] / x_max) << "," << fmt(top + ph - ph * c.values[i]);
    }
    svg << "<polyline class=\"curve\" data-tracker=\"" << xml_escape(order[k]) << "\" data-values=\"" << values
        << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points.str() << "\"/>\n";
    const double ly = top + 14.0 + 18.0 * static_cast<double>(k);
    const double score = precision ? agg.prc : agg.auc;
    char label[64];
    std::snprintf(label, sizeof label, " [%.3f]", score);
    svg << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 30 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text class=\"legend\" x=\"" << left + pw + 34 << "\" y=\"" << ly << "\" font-size=\"11\">"
        << xml_escape(order[k]) << label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string curves_table_csv(const std::map<std::string, EvalResult>& evals, bool precision) {
  const auto order = rank(evals, precision ? RankKey::prc : RankKey::auc);
  std::string out = "threshold";
  for (const auto& name : order) out += "," + name;
  out += "\n";
  const auto thresholds = precision ? ope::precision_thresholds() : ope::success_thresholds();
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    out += fmt(thresholds[i]);
    for (const auto& name : order) {
      const auto& agg = evals.at(name).aggregate;
      out += "," + fmt((precision ? agg.precision : agg.success).values.at(i));
    }
    out += "\n";
  }
  return out;
}

// --- commands ----------------------------------------------------------------

int cmd_stats(const std::string& dataset_dir, const std::string& out_dir, const Shared& shared) {
  const auto seqs = load_dataset(dataset_dir);
  const auto s = dataset_stats(seqs);
  const auto lengths = category_lengths(seqs);
  json j;
  j["num_sequences"] = s.num_sequences;
  j["total_frames"] = s.total_frames;
  j["present_frames"] = s.present_frames;
  j["speed_pairs"] = s.speed_pairs;
  j["min_frames"] = s.min_frames;
  j["max_frames"] = s.max_frames;
  j["avg_frames"] = s.avg_frames;
  j["avg_target_size"] = s.avg_target_size;
  j["avg_relative_speed"] = s.avg_relative_speed;
  j["category_avg_length"] = lengths;
  std::cout << j.dump(2) << "\n";
  if (!out_dir.empty()) {
    const fs::path out(out_dir);
    fs::create_directories(out);
    std::string csv = "metric,value\n";
    for (const auto& [k, v] : j.items()) {
      if (k != "category_avg_length") csv += k + "," + (v.is_number_float() ? fmt(v.get<double>()) : v.dump()) + "\n";
    }
    std::string cat_csv = "category,avg_length\n";
    for (const auto& [cat, len] : lengths) cat_csv += cat + "," + fmt(len) + "\n";
    text::write_file_atomic(out / "stats.json", j.dump(2) + "\n");
    text::write_file_atomic(out / "stats.csv", csv);
    text::write_file_atomic(out / "category_lengths.csv", cat_csv);
    write_run_config(out, "stats", {{"dataset", dataset_dir}}, shared);
  }
  return kExitOk;
}

std::string attribute_list(const AttributeSet& s) {
  std::string out;
  for (auto a : s.to_vector()) {
    if (!out.empty()) out += ";";
    out += std::string(attribute_name(a));
  }
  return out;
}

int cmd_attrs(const std::string& dataset_dir, const std::string& out_dir, const Shared& shared) {
  const auto seqs = load_dataset(dataset_dir);
  std::string per = "sequence,manual,auto,resolved\n";
  std::vector<AttributeSet> resolved;
  for (const auto& s : seqs) {
    const auto autos = compute_auto_attributes(s);
    resolved.push_back(s.manual_attributes | autos);
    per += s.name + "," + attribute_list(s.manual_attributes) + "," + attribute_list(autos) + "," +
           attribute_list(resolved.back()) + "\n";
  }
  const auto m = attribute_cooccurrence(resolved);
  std::string csv = "attribute";
  for (auto a : all_attributes()) csv += "," + std::string(attribute_name(a));
  csv += "\n";
  for (auto a : all_attributes()) {
    csv += std::string(attribute_name(a));
    for (auto b : all_attributes()) csv += "," + std::to_string(m.at(a, b));
    csv += "\n";
  }
  std::cout << csv;
  if (!out_dir.empty()) {
    const fs::path out(out_dir);
    fs::create_directories(out);
    text::write_file_atomic(out / "attributes.csv", per);
    text::write_file_atomic(out / "cooccurrence.csv", csv);
    write_run_config(out, "attrs", {{"dataset", dataset_dir}}, shared);
  }
  return kExitOk;
}

int cmd_simulate(const std::string& out_dir, std::size_t count, const Shared& shared) {
  if (shared.config.empty()) throw InputError("simulate: --config is required");
  json cfg = load_config_json(shared.config);
  if (cfg.contains("count")) {
    if (count == 0) count = cfg.at("count").get<std::size_t>();
    cfg.erase("count");
  }
  if (count == 0) throw InputError("simulate: sequence count must be positive (--count or \"count\" in config)");
  const SimConfig sim = sim_config_from_json(cfg.dump());
  const fs::path out(out_dir);
  const auto names = gen_dataset(sim, count, shared.seed, out, shared.jobs);
  write_run_config(out, "simulate", {{"config", json::parse(sim_config_to_json(sim))}, {"count", count}}, shared);
  std::cout << "wrote " << names.size() << " sequences to " << out.string() << "\n";
  return kExitOk;
}

struct TrainSetup {
  MatcherConfig matcher;
  TrainConfig train;
  TrackerConfig tracker;
};

TrainSetup train_setup(const Shared& shared, double omega, bool high_only, std::size_t steps_override) {
  const json cfg = load_config_json(shared.config);
  TrainSetup s;
  s.matcher = matcher_config_from(section(cfg, "matcher"), s.matcher);
  s.train = train_config_from(section(cfg, "train"), s.train);
  s.tracker = tracker_config_from(section(cfg, "tracker"), s.tracker);
  if (omega >= 0.0) s.matcher.omega = omega;
  if (steps_override > 0) s.train.steps = steps_override;
  s.train.seed = derive_seed(shared.seed, "train", "matcher");
  s.train.mode = high_only ? MatchMode::high_only : MatchMode::fused;
  s.tracker.mode = s.train.mode;
  s.tracker.max_candidates = s.matcher.max_candidates;
  return s;
}

int cmd_train(const std::string& dataset_dir, const std::string& out_dir, double omega, bool high_only,
              std::size_t steps, const Shared& shared) {
  const auto setup = train_setup(shared, omega, high_only, steps);
  const auto seqs = load_sim_or_fail(dataset_dir);
  const auto pairs = collect_pairs(seqs, setup.tracker);
  const auto result = train_matcher(pairs, setup.matcher, setup.train);
  for (double l : result.loss_history) {
    if (!std::isfinite(l)) throw InvariantError("training produced a non-finite loss");
  }
  const fs::path out(out_dir);
  fs::create_directories(out);
  nn::save_checkpoint(out / "matcher.ckpt", result.params.to_checkpoint());
  text::write_file_atomic(out / "loss.csv", loss_csv(result.loss_history));
  write_run_config(out, "train",
                   {{"dataset", dataset_dir},
                    {"matcher", to_json(setup.matcher)},
                    {"train", to_json(setup.train)},
                    {"tracker", to_json(setup.tracker)},
                    {"training_pairs", pairs.size()}},
                   shared);
  std::cout << "initial loss " << fmt(result.loss_history.front()) << ", final loss "
            << fmt(result.loss_history.back()) << "\n";
  return kExitOk;
}

int cmd_track(const std::string& dataset_dir, const std::string& checkpoint, const std::string& out_dir,
              bool high_only, const Shared& shared) {
  const json cfg = load_config_json(shared.config);
  TrackerConfig tc = tracker_config_from(section(cfg, "tracker"), TrackerConfig{});
  tc.mode = high_only ? MatchMode::high_only : MatchMode::fused;
  const auto params = MatcherParams::from_checkpoint(nn::load_checkpoint(checkpoint));
  tc.max_candidates = params.config.max_candidates;
  const auto seqs = load_sim_or_fail(dataset_dir);
  for (const auto& s : seqs) {
    for (const auto& f : s.features) {
      for (const auto& r : f) {
        if (r.feat_high.size() != params.config.width || r.feat_low.size() != params.config.width) {
          throw InputError(s.groundtruth.name + ": feature width does not match checkpoint width " +
                           std::to_string(params.config.width));
        }
      }
    }
  }
  const auto run = track_all(seqs, params, tc, shared.jobs);
  const fs::path out(out_dir);
  fs::create_directories(out);
  write_track_outputs(out, seqs, run);
  write_run_config(out, "track",
                   {{"dataset", dataset_dir}, {"checkpoint", checkpoint}, {"tracker", to_json(tc)},
                    {"omega", params.config.omega}},
                   shared);
  std::cout << "tracked " << seqs.size() << " sequences into " << out.string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& dataset_dir, const std::vector<std::string>& results_dirs, const std::string& out_dir,
             const Shared& shared) {
  const auto dataset = load_dataset(dataset_dir);
  std::map<std::string, EvalResult> evals;
  std::map<std::string, std::map<Attribute, EvalResult>> breakdowns;
  for (const auto& dir : results_dirs) {
    auto name = fs::path(dir).filename().string();
    if (name.empty()) name = fs::path(dir).parent_path().filename().string();
    if (evals.count(name)) throw InputError("eval: duplicate tracker name '" + name + "'");
    const auto results = load_results_dir(dir, dataset);
    evals[name] = evaluate(dataset, results);
    breakdowns[name] = attribute_breakdown(evals[name], dataset);
  }
  const fs::path out(out_dir);
  fs::create_directories(out);
  text::write_file_atomic(out / "eval.json", eval_to_json(evals, breakdowns));
  std::string ranking = "rank,tracker,auc,prc,success_at_half\n";
  const auto order = rank(evals, RankKey::auc);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& a = evals.at(order[i]).aggregate;
    ranking += std::to_string(i + 1) + "," + order[i] + "," + fmt(a.auc) + "," + fmt(a.prc) + "," +
               fmt(a.success_at_half) + "\n";
  }
  text::write_file_atomic(out / "ranking.csv", ranking);
  std::string attr_csv = "tracker,attribute,sequences,auc,prc\n";
  for (const auto& [tracker, per_attr] : breakdowns) {
    for (const auto& [attr, e] : per_attr) {
      attr_csv += tracker + "," + std::string(attribute_name(attr)) + "," + std::to_string(e.per_sequence.size()) +
                  "," + fmt(e.aggregate.auc) + "," + fmt(e.aggregate.prc) + "\n";
    }
  }
  text::write_file_atomic(out / "attributes.csv", attr_csv);
  for (const auto& [name, e] : evals) {
    text::write_file_atomic(out / ("precision_" + name + ".csv"), curve_csv(e.aggregate.precision));
    text::write_file_atomic(out / ("success_" + name + ".csv"), curve_csv(e.aggregate.success));
  }
  write_run_config(out, "eval", {{"dataset", dataset_dir}, {"results", results_dirs}}, shared);
  std::cout << ranking;
  return kExitOk;
}

int cmd_sweep(const std::string& dataset_dir, const std::string& train_dir, const std::string& grid_spec,
              const std::string& out_dir, std::size_t steps, const Shared& shared) {
  const auto grid = parse_grid(grid_spec);
  if (grid.empty()) throw InputError("sweep: empty omega grid");
  for (double w : grid) {
    if (!(w >= 0.0 && w <= 1.0)) throw InputError("sweep: omega values must lie in [0, 1]");
  }
  const auto eval_seqs = load_sim_or_fail(dataset_dir);
  const auto train_seqs = train_dir.empty() ? eval_seqs : load_sim_or_fail(train_dir);

  struct Row {
    double omega;
    EvalResult eval;
    TrackRun run;
  };
  std::vector<Row> rows;
  const fs::path out(out_dir);
  fs::create_directories(out);
  TrainSetup setup = train_setup(shared, -1.0, false, steps);
  const auto pairs = collect_pairs(train_seqs, setup.tracker);
  for (double w : grid) {
    setup.matcher.omega = w;
    const auto trained = train_matcher(pairs, setup.matcher, setup.train);
    auto run = track_all(eval_seqs, trained.params, setup.tracker, shared.jobs);
    rows.push_back({w, evaluate_run(eval_seqs, run), std::move(run)});
    std::cerr << "omega " << fmt(w) << ": AUC " << fmt(rows.back().eval.aggregate.auc) << " PRC "
              << fmt(rows.back().eval.aggregate.prc) << "\n";
  }

  // Reference run with the high-level branch alone.
  json reduction = nullptr;
  const auto one = std::find_if(rows.begin(), rows.end(), [](const Row& r) { return r.omega == 1.0; });
  if (one != rows.end()) {
    TrainSetup high = setup;
    high.matcher.omega = 1.0;
    high.train.mode = MatchMode::high_only;
    high.tracker.mode = MatchMode::high_only;
    const auto trained = train_matcher(pairs, high.matcher, high.train);
    const auto run = track_all(eval_seqs, trained.params, high.tracker, shared.jobs);
    bool identical = true;
    for (std::size_t i = 0; i < run.outputs.size(); ++i) {
      identical = identical && run.outputs[i].boxes == one->run.outputs[i].boxes &&
                  run.outputs[i].betas == one->run.outputs[i].betas;
    }
    const auto e = evaluate_run(eval_seqs, run);
    reduction = {{"high_only_auc", e.aggregate.auc}, {"high_only_prc", e.aggregate.prc},
                 {"bit_identical_to_omega_1", identical}};
  }

  std::string csv = "omega,prc,auc\n";
  json rows_json = json::array();
  std::size_t best = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = rows[i].eval.aggregate;
    csv += fmt(rows[i].omega) + "," + fmt(a.prc) + "," + fmt(a.auc) + "\n";
    rows_json.push_back({{"omega", rows[i].omega}, {"prc", a.prc}, {"auc", a.auc}});
    if (a.auc > rows[best].eval.aggregate.auc) best = i;
  }
  json summary;
  summary["rows"] = rows_json;
  summary["best_omega"] = rows[best].omega;
  summary["best_auc"] = rows[best].eval.aggregate.auc;
  summary["reduction"] = reduction;
  text::write_file_atomic(out / "sweep.csv", csv);
  text::write_file_atomic(out / "sweep.json", summary.dump(2) + "\n");
  write_run_config(out, "sweep",
                   {{"dataset", dataset_dir},
                    {"train_dataset", train_dir.empty() ? dataset_dir : train_dir},
                    {"omegas", grid},
                    {"matcher", to_json(setup.matcher)},
                    {"train", to_json(setup.train)},
                    {"tracker", to_json(setup.tracker)}},
                   shared);
  std::cout << csv;
  return kExitOk;
}

int cmd_report(const std::string& eval_path, const std::string& out_dir, const Shared& shared) {
  const auto evals = evals_from_json(text::read_file(eval_path));
  if (evals.empty()) throw InputError(eval_path + ": no trackers in evaluation");
  const fs::path out(out_dir);
  fs::create_directories(out);
  text::write_file_atomic(out / "precision.svg", precision_svg(evals));
  text::write_file_atomic(out / "success.svg", success_svg(evals));
  text::write_file_atomic(out / "precision.csv", curves_table_csv(evals, true));
  text::write_file_atomic(out / "success.csv", curves_table_csv(evals, false));
  write_run_config(out, "report", {{"eval", eval_path}}, shared);
  return kExitOk;
}

}  // namespace

// --- public helpers -------------------------------------------------------------

std::string curve_csv(const Curve& c) {
  std::string out = "threshold,value\n";
  for (std::size_t i = 0; i < c.thresholds.size(); ++i) out += fmt(c.thresholds[i]) + "," + fmt(c.values[i]) + "\n";
  return out;
}

std::string eval_to_json(const std::map<std::string, EvalResult>& evals,
                         const std::map<std::string, std::map<Attribute, EvalResult>>& breakdowns) {
  json j;
  j["trackers"] = json::object();
  for (const auto& [name, e] : evals) {
    json t = eval_json(e);
    json attrs = json::object();
    if (const auto it = breakdowns.find(name); it != breakdowns.end()) {
      for (const auto& [attr, ae] : it->second) {
        attrs[std::string(attribute_name(attr))] = {{"sequences", ae.per_sequence.size()},
                                                    {"aggregate", scores_json(ae.aggregate)}};
      }
    }
    t["attributes"] = attrs;
    j["trackers"][name] = t;
  }
  j["ranking"] = {{"auc", rank(evals, RankKey::auc)}, {"prc", rank(evals, RankKey::prc)}};
  return j.dump(2) + "\n";
}

std::map<std::string, EvalResult> evals_from_json(const std::string& contents) {
  std::map<std::string, EvalResult> out;
  try {
    const json j = json::parse(contents);
    for (const auto& [name, t] : j.at("trackers").items()) {
      EvalResult e;
      e.aggregate = scores_from_json(t.at("aggregate"));
      e.evaluated_frames = t.at("evaluated_frames").get<std::size_t>();
      for (const auto& [seq, s] : t.at("per_sequence").items()) e.per_sequence[seq] = scores_from_json(s);
      out[name] = std::move(e);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed evaluation JSON: ") + e.what());
  }
  return out;
}

std::string precision_svg(const std::map<std::string, EvalResult>& evals) { return plot_svg(evals, true); }
std::string success_svg(const std::map<std::string, EvalResult>& evals) { return plot_svg(evals, false); }

int run(const std::vector<std::string>& args) {
  CLI::App app{"Small/fast object tracking toolkit: simulation, candidate-association tracking and OPE evaluation", "sfot"};
  app.require_subcommand(1);
  app.fallthrough();
  Shared shared;
  app.add_option("--seed", shared.seed, "Base random seed")->default_val(0);
  app.add_option("--jobs", shared.jobs, "Worker threads for per-sequence work")->default_val(1)->check(CLI::PositiveNumber);
  app.add_option("--config", shared.config, "JSON configuration file");

  std::string dataset;
  std::string out;
  std::string checkpoint;
  std::string train_dir;
  std::string grid = "0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  std::vector<std::string> results;
  std::string eval_path;
  double omega = -1.0;
  bool high_only = false;
  std::size_t count = 0;
  std::size_t steps = 0;

  auto* stats = app.add_subcommand("stats", "Dataset statistics (target size, relative speed, lengths)");
  stats->add_option("dataset", dataset, "Dataset root")->required();
  stats->add_option("--out", out, "Output directory");

  auto* attrs = app.add_subcommand("attrs", "Per-sequence attributes and their co-occurrence matrix");
  attrs->add_option("dataset", dataset, "Dataset root")->required();
  attrs->add_option("--out", out, "Output directory");

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset (needs --config)");
  simulate->add_option("--out", out, "Output dataset root")->required();
  simulate->add_option("--count", count, "Number of sequences (overrides config \"count\")");

  auto* train = app.add_subcommand("train", "Train the candidate matcher on a simulated dataset");
  train->add_option("dataset", dataset, "Simulated dataset root")->required();
  train->add_option("--out", out, "Output directory for matcher.ckpt and loss.csv")->required();
  train->add_option("--omega", omega, "Similarity fusion weight in [0, 1]");
  train->add_option("--steps", steps, "Optimizer steps (overrides config)");
  train->add_flag("--high-only", high_only, "Train the high-level branch alone");

  auto* track = app.add_subcommand("track", "Run the tracker over a simulated dataset");
  track->add_option("dataset", dataset, "Simulated dataset root")->required();
  track->add_option("--checkpoint", checkpoint, "Matcher checkpoint")->required();
  track->add_option("--out", out, "Results directory")->required();
  track->add_flag("--high-only", high_only, "Match with the high-level branch alone");

  auto* eval = app.add_subcommand("eval", "One-pass evaluation of one or more result directories");
  eval->add_option("dataset", dataset, "Dataset root")->required();
  eval->add_option("results", results, "Result directories, one per tracker")->required();
  eval->add_option("--out", out, "Report directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Train, track and evaluate over a grid of fusion weights");
  sweep->add_option("dataset", dataset, "Simulated evaluation dataset root")->required();
  sweep->add_option("--train-dir", train_dir, "Simulated training dataset (defaults to the evaluation dataset)");
  sweep->add_option("--omegas", grid, "Comma-separated omega grid");
  sweep->add_option("--steps", steps, "Optimizer steps per training run");
  sweep->add_option("--out", out, "Report directory")->required();

  auto* report = app.add_subcommand("report", "Precision and success plots from eval.json");
  report->add_option("eval_json", eval_path, "eval.json written by the eval command")->required();
  report->add_option("--out", out, "Plot directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*stats) return cmd_stats(dataset, out, shared);
    if (*attrs) return cmd_attrs(dataset, out, shared);
    if (*simulate) return cmd_simulate(out, count, shared);
    if (*train) return cmd_train(dataset, out, omega, high_only, steps, shared);
    if (*track) return cmd_track(dataset, checkpoint, out, high_only, shared);
    if (*eval) return cmd_eval(dataset, results, out, shared);
    if (*sweep) return cmd_sweep(dataset, train_dir, grid, out, steps, shared);
    if (*report) return cmd_report(eval_path, out, shared);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace sfot::cli
