#include "promptseg_app/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "promptseg/dataset.hpp"
#include "promptseg/errors.hpp"
#include "promptseg/evaluation.hpp"
#include "promptseg/rle.hpp"
#include "promptseg/rng.hpp"
#include "promptseg/volume_io.hpp"
#include "promptseg/weights_io.hpp"
#include "promptseg_app/service.hpp"

namespace promptseg::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Thrown for bad flag values that CLI11 cannot check itself.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<int> parse_ints(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw UsageError(fmt::format("{} '{}' is not a list of integers", what, text));
    }
  }
  return out;
}

Size3 parse_triple(const std::string& text, const std::string& what) {
  const auto v = parse_ints(text, what);
  if (v.size() != 3) throw UsageError(fmt::format("{} '{}' needs three comma-separated integers", what, text));
  return {v[0], v[1], v[2]};
}

/// Search flags shared by segment and the eval subcommands.
struct SearchFlags {
  double tau = SearchConfig{}.tau;
  double alpha = SearchConfig{}.alpha;
  int n = SearchConfig{}.n_runs;
  int steps = SearchConfig{}.spiral.steps;
  int mu = SearchConfig{}.spiral.steps_per_circle;
  std::string crop = "10,10,6";
  std::string strategy = "spiral";
  std::uint64_t seed = 0;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--tau", tau, "Score threshold")->capture_default_str();
    cmd.add_option("--alpha", alpha, "Weight of the weakly supervised classifier")->capture_default_str();
    cmd.add_option("--n", n, "Search runs per prompt")->capture_default_str();
    cmd.add_option("--T", steps, "Spiral steps")->capture_default_str();
    cmd.add_option("--mu", mu, "Spiral steps per full circle")->capture_default_str();
    cmd.add_option("--crop", crop, "Crop size w,h,d")->capture_default_str();
    cmd.add_option("--strategy", strategy, "spiral, sliding_window or random")->capture_default_str();
    cmd.add_option("--search-seed", seed, "Seed for random search")->capture_default_str();
  }

  SearchConfig config() const try {
    SearchConfig c;
    c.tau = tau;
    c.alpha = alpha;
    c.n_runs = n;
    c.set_steps(steps);
    c.spiral.steps_per_circle = mu;
    c.crop_size = parse_triple(crop, "--crop");
    c.strategy = strategy_from_string(strategy);
    c.seed = seed;
    c.validate();
    return c;
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
};

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) {
  fs::path out = path;
  out.replace_filename(path.stem().string() + suffix);
  return out;
}

std::atomic<Service*> g_running_service{nullptr};

extern "C" void stop_on_signal(int) {
  if (Service* s = g_running_service.load()) s->stop();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prompt-driven volumetric segmentation with crop classifiers", "promptseg"};
  app.require_subcommand(1);

  // phantom gen
  auto* phantom = app.add_subcommand("phantom", "Synthetic phantom volumes");
  phantom->require_subcommand(1);
  auto* gen = phantom->add_subcommand("gen", "Generate a phantom set with ground truth");
  int gen_count = 8;
  double gen_fraction = 0.5;
  std::string gen_out;
  std::uint64_t gen_seed = 0;
  std::string gen_size = "64,64,24";
  gen->add_option("--count", gen_count, "Number of phantoms")->capture_default_str();
  gen->add_option("--lesion-frac", gen_fraction, "Fraction carrying a lesion")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Seed")->capture_default_str();
  gen->add_option("--size", gen_size, "Volume size w,h,d (lesion ranges scale with it)")->capture_default_str();

  // train wsc|fsc
  auto* train = app.add_subcommand("train", "Train a classifier");
  train->require_subcommand(1);
  std::string train_data, train_out, train_crop = "10,10,6";
  int train_epochs = 0, train_batch = 0, train_crops = 16;
  double train_lr = 1e-3, train_balance = 0.5;
  std::uint64_t train_seed = 0;
  auto add_train_flags = [&](CLI::App* cmd, int default_epochs, int default_batch) {
    cmd->add_option("--data", train_data, "Phantom set directory")->required();
    cmd->add_option("--out", train_out, "Weight manifest to write (.json)")->required();
    cmd->add_option("--epochs", train_epochs, "Epochs")->default_val(default_epochs);
    cmd->add_option("--batch", train_batch, "Batch size")->default_val(default_batch);
    cmd->add_option("--lr", train_lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--seed", train_seed, "Seed")->capture_default_str();
  };
  auto* train_wsc_cmd = train->add_subcommand("wsc", "Whole-volume classifier from weak labels");
  add_train_flags(train_wsc_cmd, 200, 4);
  auto* train_fsc_cmd = train->add_subcommand("fsc", "Crop classifier from full masks");
  add_train_flags(train_fsc_cmd, 40, 16);
  train_fsc_cmd->add_option("--crop", train_crop, "Crop size w,h,d")->capture_default_str();
  train_fsc_cmd->add_option("--crops-per-image", train_crops, "Crops per phantom")->capture_default_str();
  train_fsc_cmd->add_option("--balance", train_balance, "Fraction of ROI-centered crops")->capture_default_str();

  // segment
  auto* seg = app.add_subcommand("segment", "Segment a volume from point prompts");
  std::string seg_volume, seg_wsc, seg_fsc, seg_out, seg_gt, seg_scorer = "network";
  std::vector<std::string> seg_prompts;
  bool seg_print_rle = false;
  SearchFlags seg_flags;
  seg->add_option("--volume", seg_volume, "Volume header (.json)")->required();
  seg->add_option("--wsc", seg_wsc, "Weakly supervised classifier weights");
  seg->add_option("--fsc", seg_fsc, "Crop classifier weights");
  seg->add_option("--prompt", seg_prompts, "Prompt voxel w,h,d (repeatable)")->required()->take_all();
  seg->add_option("--out", seg_out, "Mask header to write (.json)");
  seg->add_option("--gt", seg_gt, "Ground-truth mask; adds Dice to the summary");
  seg->add_option("--scorer", seg_scorer, "network or oracle (oracle needs --gt)")->capture_default_str();
  seg->add_flag("--print-rle", seg_print_rle, "Include the run-length mask in the summary");
  seg_flags.add_to(*seg);

  // eval
  auto* eval = app.add_subcommand("eval", "Metrics, benchmarks and ablations");
  eval->require_subcommand(1);
  auto* eval_dice = eval->add_subcommand("dice", "Dice between two masks");
  std::string dice_pred, dice_gt;
  eval_dice->add_option("--pred", dice_pred, "Predicted mask")->required();
  eval_dice->add_option("--gt", dice_gt, "Ground-truth mask")->required();

  std::string ev_wsc, ev_fsc, ev_scorer = "network", ev_out;
  SearchFlags ev_flags;
  auto add_scorer_flags = [&](CLI::App* cmd, bool oracle_allowed = true) {
    cmd->add_option("--wsc", ev_wsc, "Weakly supervised classifier weights");
    cmd->add_option("--fsc", ev_fsc, "Crop classifier weights");
    if (oracle_allowed) cmd->add_option("--scorer", ev_scorer, "network or oracle")->capture_default_str();
    ev_flags.add_to(*cmd);
  };
  auto* eval_var = eval->add_subcommand("variance", "Dice spread over prompts sampled inside the ground truth");
  std::string var_volume, var_gt;
  int var_samples = 8;
  std::uint64_t var_seed = 0;
  eval_var->add_option("--volume", var_volume, "Volume header")->required();
  eval_var->add_option("--gt", var_gt, "Ground-truth mask")->required();
  eval_var->add_option("--samples", var_samples, "Prompt samples")->capture_default_str();
  eval_var->add_option("--seed", var_seed, "Sampling seed")->capture_default_str();
  add_scorer_flags(eval_var);

  auto* eval_strat = eval->add_subcommand("strategies", "Spiral vs sliding window vs random search");
  std::string strat_data;
  bool strat_no_timing = false;
  eval_strat->add_option("--data", strat_data, "Phantom set directory")->required();
  eval_strat->add_option("--out", ev_out, "CSV to write (stdout if absent)");
  eval_strat->add_flag("--no-timing", strat_no_timing, "Omit the wall-time column");
  add_scorer_flags(eval_strat);

  auto* eval_abl = eval->add_subcommand("ablate", "Sweep one parameter over phantoms");
  std::string abl_axis, abl_values, abl_timestamp;
  std::uint64_t abl_seed = 1;
  int abl_cases = DatasetSpec{}.eval_cases;
  eval_abl->add_option("--axis", abl_axis, "tau, alpha, T, mu, n, crop_size, wsc_samples, fsc_samples or strategy")
      ->required();
  eval_abl->add_option("--values", abl_values, "Comma-separated values (crop sizes as WxHxD)")->required();
  eval_abl->add_option("--out", ev_out, "Report directory")->required();
  eval_abl->add_option("--data-seed", abl_seed, "Dataset seed")->capture_default_str();
  eval_abl->add_option("--cases", abl_cases, "Evaluation phantoms")->capture_default_str();
  eval_abl->add_option("--timestamp", abl_timestamp, "File name stamp (default: current UTC time)");
  add_scorer_flags(eval_abl, false);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP API for the slice viewer");
  int serve_port = 8080;
  std::string serve_host = "127.0.0.1", serve_dir, serve_scorer = "network";
  serve->add_option("--port", serve_port, "Port (0 picks a free one)")->capture_default_str();
  serve->add_option("--host", serve_host, "Bind address")->capture_default_str();
  serve->add_option("--data-dir", serve_dir, "Phantom set (plus optional wsc.json / fsc.json)")->required();
  serve->add_option("--wsc", ev_wsc, "Weakly supervised classifier weights");
  serve->add_option("--fsc", ev_fsc, "Crop classifier weights");
  serve->add_option("--scorer", serve_scorer, "network or oracle")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  // Loads a classifier pair or the oracle; the oracle factory needs gt per case.
  auto load_pair = [&](const std::string& wsc_path, const std::string& fsc_path, const std::string& scorer,
                       std::optional<Network>& wsc, std::optional<Network>& fsc) {
    if (scorer_mode_from_string(scorer) == ScorerMode::Oracle) return;
    if (wsc_path.empty() || fsc_path.empty()) throw UsageError("--wsc and --fsc are required with the network scorer");
    wsc = load_weights(wsc_path, Head::GlobalAveragePool);
    fsc = load_weights(fsc_path, Head::Flatten);
  };
  auto factory = [&](const std::optional<Network>& wsc, const std::optional<Network>& fsc) {
    return wsc ? network_scorers(*wsc, *fsc) : oracle_scorers();
  };

  try {
    if (gen->parsed()) {
      PhantomConfig pc;
      const Size3 size = parse_triple(gen_size, "--size");
      if (!(size == pc.size)) {
        // Keep the default geometry in proportion to the requested size.
        const double fw = size.w / 64.0, fh = size.h / 64.0, fd = size.d / 24.0;
        pc.size = size;
        pc.center_w = {static_cast<int>(std::lround(24 * fw)), static_cast<int>(std::lround(40 * fw))};
        pc.center_h = {static_cast<int>(std::lround(24 * fh)), static_cast<int>(std::lround(40 * fh))};
        pc.center_d = {static_cast<int>(std::lround(10 * fd)), static_cast<int>(std::lround(14 * fd))};
        pc.radius_w = {4.0 * fw, 7.0 * fw};
        pc.radius_h = {4.0 * fh, 7.0 * fh};
        pc.radius_d = {std::max(1.0, 2.0 * fd), std::max(1.0, 3.0 * fd)};
        pc.gland_radius = 22.0 * std::min(fw, fh);
      }
      const auto phantoms = generate_phantoms(pc, gen_count, gen_fraction, gen_seed);
      const auto records = write_phantom_set(gen_out, phantoms);
      out << fmt::format("wrote {} phantoms to {}\n", records.size(), gen_out);
      return kExitOk;
    }

    if (train_wsc_cmd->parsed() || train_fsc_cmd->parsed()) {
      const auto phantoms = load_phantom_set(train_data);
      TrainConfig cfg;
      cfg.learning_rate = train_lr;
      cfg.epochs = train_epochs;
      cfg.batch_size = train_batch;
      cfg.seed = train_seed;
      TrainResult result{Network(NetworkSpec{}), {}, {}};
      double acc = 0.0;
      if (train_wsc_cmd->parsed()) {
        const WeakDataset data = weak_dataset(phantoms);
        result = train_wsc(data, NetworkSpec::weakly_supervised(phantoms.front().volume.channels()), cfg);
        acc = accuracy(result.network, data);
      } else {
        const Size3 crop = parse_triple(train_crop, "--crop");
        const CropDataset data = crop_dataset(phantoms, crop, train_crops, train_balance, derive_seed(train_seed, 3));
        result = train_fsc(data, NetworkSpec::fully_supervised(crop, phantoms.front().volume.channels()), cfg);
        acc = accuracy(result.network, data);
      }
      save_weights(result.network, train_out);
      const fs::path history = with_suffix(train_out, "_history.csv");
      write_history_csv(history, result.history);
      out << fmt::format("train accuracy {:.4f}, final loss {:.6f}; weights {}, history {}\n", acc,
                         result.history.back().loss, train_out, history.string());
      return kExitOk;
    }

    if (seg->parsed()) {
      SearchConfig cfg = seg_flags.config();
      std::vector<Index3> prompts;
      for (const auto& p : seg_prompts) {
        const Size3 t = parse_triple(p, "--prompt");
        prompts.push_back({t.w, t.h, t.d});
      }
      const Volume volume = load_volume(seg_volume);
      std::optional<Mask> gt;
      if (!seg_gt.empty()) gt = load_mask(seg_gt);
      std::optional<Network> wsc, fsc;
      load_pair(seg_wsc, seg_fsc, seg_scorer, wsc, fsc);
      if (!wsc && !gt) throw UsageError("--scorer oracle needs --gt");
      const ScorerPair scorers = wsc ? network_scorers(*wsc, *fsc)(Mask{}) : oracle_scorers()(*gt);
      const Segmentation s = segment(volume, prompts, cfg, *scorers.wsc, *scorers.fsc);
      if (!seg_out.empty()) save_mask(s.mask, seg_out);
      json summary = {{"dims", {s.mask.size().w, s.mask.size().h, s.mask.size().d}},
                      {"voxels", s.mask.count()},
                      {"crops_evaluated", s.diagnostics.crops_evaluated},
                      {"runtime_ms", s.diagnostics.wall_ms},
                      {"config", json::parse(to_json(cfg))}};
      if (gt) summary["dice"] = dice(s.mask, *gt);
      if (seg_print_rle) summary["mask_rle"] = rle_encode(s.mask);
      out << summary.dump(2) << "\n";
      return kExitOk;
    }

    if (eval_dice->parsed()) {
      out << fmt::format("{:.6f}\n", dice(load_mask(dice_pred), load_mask(dice_gt)));
      return kExitOk;
    }

    if (eval_var->parsed()) {
      const SearchConfig cfg = ev_flags.config();
      const Volume volume = load_volume(var_volume);
      const Mask gt = load_mask(var_gt);
      std::optional<Network> wsc, fsc;
      load_pair(ev_wsc, ev_fsc, ev_scorer, wsc, fsc);
      const ScorerPair scorers = factory(wsc, fsc)(gt);
      const PromptVariance pv = prompt_variance(volume, gt, cfg, *scorers.wsc, *scorers.fsc, var_samples, var_seed);
      json prompts = json::array();
      for (const auto& p : pv.prompts) prompts.push_back({p.w, p.h, p.d});
      out << json{{"mean_dice", pv.mean_dice}, {"stdev", pv.stdev}, {"dice", pv.dice}, {"prompts", prompts}}.dump(2)
          << "\n";
      return kExitOk;
    }

    if (eval_strat->parsed()) {
      const SearchConfig cfg = ev_flags.config();
      const auto phantoms = load_phantom_set(strat_data);
      const auto cases = centroid_cases(phantoms);
      std::optional<Network> wsc, fsc;
      load_pair(ev_wsc, ev_fsc, ev_scorer, wsc, fsc);
      const auto rows = benchmark_strategies(cases, cfg, factory(wsc, fsc));
      std::ostringstream csv;
      write_strategy_csv(csv, rows, !strat_no_timing);
      if (ev_out.empty()) {
        out << csv.str();
      } else {
        write_text(ev_out, csv.str());
        out << "wrote " << ev_out << "\n";
      }
      return kExitOk;
    }

    if (eval_abl->parsed()) {
      const SearchConfig cfg = ev_flags.config();
      AblationGrid grid{abl_axis, {}};
      std::stringstream in(abl_values);
      for (std::string v; std::getline(in, v, ',');) grid.values.push_back(v);
      DatasetSpec ds;
      ds.seed = abl_seed;
      ds.eval_cases = abl_cases;
      // Given weights are reused for inference axes; otherwise the sweep trains its own.
      std::optional<TrainedPair> fixed;
      if (!ev_wsc.empty() || !ev_fsc.empty()) {
        if (ev_wsc.empty() || ev_fsc.empty()) throw UsageError("--wsc and --fsc go together");
        fixed = TrainedPair{load_weights(ev_wsc, Head::GlobalAveragePool), load_weights(ev_fsc, Head::Flatten), 0.0, 0.0};
      }
      const AblationReport report = run_ablation(grid, cfg, ds, fixed ? &*fixed : nullptr);
      const fs::path csv = write_ablation_report(report, ev_out, abl_timestamp.empty() ? utc_timestamp() : abl_timestamp);
      out << "wrote " << csv.string() << "\n";
      return kExitOk;
    }

    if (serve->parsed()) {
      SessionState state(SearchConfig{}, scorer_mode_from_string(serve_scorer));
      const std::size_t n = state.load_directory(serve_dir);
      if (!ev_wsc.empty() || !ev_fsc.empty()) {
        if (ev_wsc.empty() || ev_fsc.empty()) throw UsageError("--wsc and --fsc go together");
        state.set_networks(load_weights(ev_wsc, Head::GlobalAveragePool), load_weights(ev_fsc, Head::Flatten));
      }
      Service service(state);
      const int port = service.bind(serve_host, serve_port);
      if (port < 0) throw Error(fmt::format("cannot bind {}:{}", serve_host, serve_port));
      out << fmt::format("serving {} volumes on http://{}:{}/api\n", n, serve_host, port) << std::flush;
      g_running_service = &service;
      std::signal(SIGINT, stop_on_signal);
      std::signal(SIGTERM, stop_on_signal);
      service.run();
      g_running_service = nullptr;
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace promptseg::app
