// Command-line entry points: simulate, track, dream, eval, convert, plot-data.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "offtrack/offtrack.hpp"

namespace fs = std::filesystem;
using namespace offtrack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitUsage = 64;

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level()
{
  const char * env = std::getenv("PLAYBACK_LOG");
  if (!env) return LogLevel::kWarn;
  const std::string v = env;
  if (v == "error" || v == "0") return LogLevel::kError;
  if (v == "info" || v == "2") return LogLevel::kInfo;
  if (v == "debug" || v == "3") return LogLevel::kDebug;
  return LogLevel::kWarn;
}

std::mutex g_log_mutex;

void log(LogLevel level, const std::string & msg)
{
  static const LogLevel threshold = log_level();
  if (level > threshold) return;
  static constexpr const char * kNames[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(g_log_mutex);
  std::cerr << "[" << kNames[static_cast<int>(level)] << "] " << msg << "\n";
}

struct Options
{
  std::string in;
  std::string out;
  std::string config;
  std::string gt;
  std::string pred;
  std::string spec;
  std::string st_out;
  std::optional<std::uint64_t> seed;
  int jobs{1};
  std::string mode{"offline"};
};

PipelineConfig load_pipeline_config(const Options & o)
{
  if (o.config.empty()) return PipelineConfig{};
  return io::load_config(o.config);
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
/// stops further work and is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn && fn)
{
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  }
  for (std::thread & t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

fs::path label_path(const fs::path & dir, const std::string & sequence_id) { return dir / (sequence_id + ".jsonl"); }

std::vector<io::Json> scenario_documents(const io::Json & doc)
{
  if (doc.is_object() && doc.contains("scenarios")) {
    if (!doc["scenarios"].is_array()) throw io::ValidationError("'scenarios' must be an array");
    return std::vector<io::Json>(doc["scenarios"].begin(), doc["scenarios"].end());
  }
  return {doc};
}

int cmd_simulate(const Options & o)
{
  const io::Json doc = [&] {
    try {
      return io::Json::parse(io::read_file(o.spec));
    } catch (const nlohmann::json::parse_error & e) {
      throw io::ValidationError(o.spec + ": malformed JSON: " + e.what());
    }
  }();
  std::vector<sim::ScenarioSpec> specs;
  for (const io::Json & d : scenario_documents(doc)) specs.push_back(io::scenario_from_json(d));
  if (o.seed) {
    for (std::size_t i = 0; i < specs.size(); ++i) specs[i].seed = *o.seed + i;
  }
  const fs::path out = o.out;
  parallel_for(specs.size(), o.jobs, [&](std::size_t i) {
    const sim::SimOutput sim = sim::generate(specs[i]);
    io::save_sequence(label_path(out, sim.log.sequence_id), sim.log);
    io::save_labels(label_path(out / "gt", sim.ground_truth.sequence_id), sim.ground_truth);
    log(LogLevel::kInfo, "simulated " + sim.log.sequence_id);
  });
  return kExitOk;
}

int cmd_run(const Options & o, bool online)
{
  const PipelineConfig cfg = load_pipeline_config(o);
  const std::vector<fs::path> inputs = io::jsonl_inputs(o.in);
  const fs::path out = o.out;
  parallel_for(inputs.size(), o.jobs, [&](std::size_t i) {
    const SequenceLog seq = io::load_sequence(inputs[i]);
    const LabelSequence labels = online ? run_online(seq, cfg) : dream(seq, cfg);
    io::save_labels(label_path(out, seq.sequence_id), labels);
    if (!o.st_out.empty()) {
      io::save_labels(label_path(o.st_out, seq.sequence_id), export_st_baseline(seq, cfg.st_score_threshold));
    }
    log(LogLevel::kInfo, std::string(online ? "tracked " : "refined ") + seq.sequence_id);
  });
  return kExitOk;
}

std::vector<LabelSequence> load_label_dir(const std::string & path)
{
  std::vector<LabelSequence> out;
  for (const fs::path & p : io::jsonl_inputs(path)) out.push_back(io::load_labels(p));
  return out;
}

int cmd_eval(const Options & o)
{
  const std::vector<LabelSequence> preds = load_label_dir(o.pred);
  const std::vector<LabelSequence> gts = load_label_dir(o.gt);
  ApReport report;
  try {
    report = evaluate(preds, gts);
  } catch (const std::invalid_argument & e) {
    throw io::ValidationError(e.what());
  }
  if (!o.out.empty()) io::atomic_write(o.out, io::report_to_json(report).dump(2) + "\n");
  std::cout << io::report_table(report);
  return kExitOk;
}

int cmd_convert(const Options & o)
{
  int skipped = 0;
  const LabelSequence seq = io::convert_kitti_labels(o.in, &skipped);
  if (skipped > 0) log(LogLevel::kWarn, "skipped " + std::to_string(skipped) + " malformed KITTI rows");
  fs::path out = o.out;
  if (fs::is_directory(out) || o.out.back() == '/') out = label_path(out, seq.sequence_id);
  io::save_labels(out, seq);
  return kExitOk;
}

int cmd_plot(const Options & o)
{
  const SequenceLog seq = io::load_sequence(o.in);
  std::optional<LabelSequence> labels;
  if (!o.pred.empty()) labels = io::load_labels(o.pred);
  io::atomic_write(o.out, io::plot_data(seq, labels ? &*labels : nullptr).dump() + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Offline 3D tracking and pseudo-label refinement"};
  app.require_subcommand(0, 1);
  Options o;
  bool dump_config = false;
  app.add_flag("--dump-config", dump_config, "Print the default pipeline config (with field notes) and exit");

  auto jobs_opt = [&](CLI::App * sub) {
    sub->add_option("--jobs", o.jobs, "Sequences processed in parallel")->check(CLI::PositiveNumber);
  };

  CLI::App * simulate = app.add_subcommand("simulate", "Generate synthetic sequences and ground truth");
  simulate->add_option("--spec", o.spec, "Scenario JSON")->required();
  simulate->add_option("--out", o.out, "Output directory")->required();
  simulate->add_option("--seed", o.seed, "Override the scenario seed");
  jobs_opt(simulate);

  CLI::App * track = app.add_subcommand("track", "Online tracking; confirmed tracks per frame");
  CLI::App * dream_cmd = app.add_subcommand("dream", "Offline refinement of detections into pseudo-labels");
  for (CLI::App * sub : {track, dream_cmd}) {
    sub->add_option("--in", o.in, "Sequence JSONL file or directory")->required();
    sub->add_option("--out", o.out, "Output label directory")->required();
    sub->add_option("--config", o.config, "Pipeline config JSON");
    jobs_opt(sub);
  }
  dream_cmd->add_option("--mode", o.mode, "online or offline")->check(CLI::IsMember({"online", "offline"}));
  dream_cmd->add_option("--st-out", o.st_out, "Also write self-training baseline labels here");

  CLI::App * eval_cmd = app.add_subcommand("eval", "AP_BEV report of predictions against ground truth");
  eval_cmd->add_option("--pred", o.pred, "Prediction label file or directory")->required();
  eval_cmd->add_option("--gt", o.gt, "Ground-truth label file or directory")->required();
  eval_cmd->add_option("--out", o.out, "Report JSON path");

  CLI::App * convert = app.add_subcommand("convert", "KITTI object labels to ground-truth label JSONL");
  convert->add_option("--in", o.in, "Directory of KITTI label .txt files")->required();
  convert->add_option("--out", o.out, "Output label file or directory")->required();

  CLI::App * plot = app.add_subcommand("plot-data", "Per-frame BEV polygons and track polylines as JSON");
  plot->add_option("--in", o.in, "Sequence JSONL file")->required();
  plot->add_option("--pred", o.pred, "Label JSONL file");
  plot->add_option("--out", o.out, "Output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp & e) {
    return app.exit(e);
  } catch (const CLI::ParseError & e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (dump_config) {
      std::cout << io::config_to_json(PipelineConfig{}, true).dump(2) << "\n";
      return kExitOk;
    }
    if (simulate->parsed()) return cmd_simulate(o);
    if (track->parsed()) return cmd_run(o, true);
    if (dream_cmd->parsed()) return cmd_run(o, o.mode == "online");
    if (eval_cmd->parsed()) return cmd_eval(o);
    if (convert->parsed()) return cmd_convert(o);
    if (plot->parsed()) return cmd_plot(o);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const io::IoError & e) {
    log(LogLevel::kError, e.what());
    return kExitIo;
  } catch (const fs::filesystem_error & e) {
    log(LogLevel::kError, e.what());
    return kExitIo;
  } catch (const io::ValidationError & e) {
    log(LogLevel::kError, e.what());
    return kExitValidation;
  } catch (const std::invalid_argument & e) {
    log(LogLevel::kError, e.what());
    return kExitValidation;
  }
}
