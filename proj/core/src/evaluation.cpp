#include "promptseg/evaluation.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "promptseg/dataset.hpp"
#include "promptseg/errors.hpp"
#include "promptseg/rng.hpp"

namespace promptseg {

namespace fs = std::filesystem;
using nlohmann::json;

double dice(const Mask& pred, const Mask& gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("dice needs matching dims: " + to_string(pred.size()) + " vs " +
                         to_string(gt.size()));
  }
  const auto a = pred.data();
  const auto b = gt.data();
  std::size_t both = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i];
    nb += b[i];
    both += a[i] & b[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_stdev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

ScorerFactory oracle_scorers() {
  return [](const Mask& gt) {
    return ScorerPair{std::make_unique<RoiFractionScorer>(gt), std::make_unique<RoiFractionScorer>(gt)};
  };
}

ScorerFactory network_scorers(const Network& wsc, const Network& fsc) {
  return [&wsc, &fsc](const Mask&) {
    return ScorerPair{std::make_unique<NetworkScorer>(wsc), std::make_unique<NetworkScorer>(fsc)};
  };
}

PromptVariance prompt_variance(const Volume& volume, const Mask& gt, const SearchConfig& config,
                               const CropScorer& wsc, const CropScorer& fsc,
                               std::span<const Index3> prompts) {
  if (gt.empty()) throw ValidationError("prompt variance needs a non-empty ground truth");
  PromptVariance out;
  out.prompts.assign(prompts.begin(), prompts.end());
  for (const Index3& p : prompts) {
    const Segmentation seg = segment(volume, std::span<const Index3>(&p, 1), config, wsc, fsc);
    out.dice.push_back(dice(seg.mask, gt));
  }
  out.mean_dice = mean(out.dice);
  out.stdev = sample_stdev(out.dice);
  return out;
}

PromptVariance prompt_variance(const Volume& volume, const Mask& gt, const SearchConfig& config,
                               const CropScorer& wsc, const CropScorer& fsc, int samples,
                               std::uint64_t seed) {
  if (gt.empty()) throw ValidationError("prompt variance needs a non-empty ground truth");
  if (samples < 2) throw ValidationError("prompt variance needs at least two prompts");
  std::vector<Index3> roi;
  const Size3 s = gt.size();
  for (int d = 0; d < s.d; ++d) {
    for (int h = 0; h < s.h; ++h) {
      for (int w = 0; w < s.w; ++w) {
        if (gt.at(w, h, d)) roi.push_back({w, h, d});
      }
    }
  }
  Rng rng(seed);
  std::vector<Index3> prompts;
  for (int i = 0; i < samples; ++i) prompts.push_back(roi[rng.below(roi.size())]);
  return prompt_variance(volume, gt, config, wsc, fsc, prompts);
}

void EvalReport::write_csv(std::ostream& out, bool include_timing) const {
  out << (include_timing ? "case,dice,crops_evaluated,wall_ms\n" : "case,dice,crops_evaluated\n");
  for (const auto& c : cases) {
    fmt::print(out, "{},{:.6f},{}", c.id, c.dice, c.crops_evaluated);
    if (include_timing) fmt::print(out, ",{:.3f}", c.wall_ms);
    out << '\n';
  }
}

std::string EvalReport::summary_json() const {
  json j;
  j["cases"] = cases.size();
  j["dice_mean"] = mean_dice;
  j["dice_stdev"] = stdev_dice;
  if (prompt_stdev) j["prompt_stdev"] = *prompt_stdev;
  j["config"] = json::parse(config_json.empty() ? "{}" : config_json);
  return j.dump(2);
}

EvalReport evaluate_cases(std::span<const EvalCase> cases, const SearchConfig& config,
                          const ScorerFactory& scorers) {
  EvalReport report;
  report.config_json = to_json(config);
  std::vector<double> values;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const EvalCase& c = cases[i];
    const ScorerPair pair = scorers(*c.gt);
    Segmentation seg = segment(*c.volume, c.prompts, config, *pair.wsc, *pair.fsc);
    CaseResult r;
    r.id = c.volume->id().empty() ? fmt::format("case_{:03d}", i) : c.volume->id();
    r.dice = dice(seg.mask, *c.gt);
    r.crops_evaluated = seg.diagnostics.crops_evaluated;
    r.wall_ms = seg.diagnostics.wall_ms;
    r.prediction = std::move(seg.mask);
    values.push_back(r.dice);
    report.cases.push_back(std::move(r));
  }
  report.mean_dice = mean(values);
  report.stdev_dice = sample_stdev(values);
  return report;
}

std::vector<EvalCase> centroid_cases(std::span<const Phantom> phantoms) {
  std::vector<EvalCase> out;
  for (const auto& p : phantoms) {
    if (p.mask.empty()) continue;
    out.push_back({&p.volume, &p.mask, {mask_centroid(p.mask)}});
  }
  return out;
}

std::vector<StrategyRow> benchmark_strategies(std::span<const EvalCase> cases,
                                              const SearchConfig& config,
                                              const ScorerFactory& scorers) {
  if (cases.empty()) throw ValidationError("benchmark needs at least one case");
  std::vector<StrategyRow> rows;
  for (Strategy s : {Strategy::Spiral, Strategy::SlidingWindow, Strategy::Random}) {
    SearchConfig cfg = config;
    cfg.strategy = s;
    StrategyRow row;
    row.strategy = s;
    std::vector<double> times;
    const EvalReport report = evaluate_cases(cases, cfg, scorers);
    for (const auto& c : report.cases) {
      row.dice.push_back(c.dice);
      row.crops.push_back(c.crops_evaluated);
      times.push_back(c.wall_ms);
    }
    row.mean_ms = mean(times);
    row.mean_dice = report.mean_dice;
    row.mean_crops = static_cast<double>(std::accumulate(row.crops.begin(), row.crops.end(), std::size_t{0})) /
                     static_cast<double>(row.crops.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_strategy_csv(std::ostream& out, std::span<const StrategyRow> rows, bool include_timing) {
  out << (include_timing ? "strategy,mean_ms,mean_dice,mean_crops\n" : "strategy,mean_dice,mean_crops\n");
  for (const auto& r : rows) {
    out << to_string(r.strategy);
    if (include_timing) fmt::print(out, ",{:.3f}", r.mean_ms);
    fmt::print(out, ",{:.6f},{:.1f}\n", r.mean_dice, r.mean_crops);
  }
}

namespace {

json search_config_json(const SearchConfig& c) {
  return {{"crop_size", {c.crop_size.w, c.crop_size.h, c.crop_size.d}},
          {"alpha", c.alpha},
          {"tau", c.tau},
          {"spiral", {{"scale", c.spiral.scale}, {"mu", c.spiral.steps_per_circle}, {"T", c.spiral.steps}}},
          {"n_runs", c.n_runs},
          {"strategy", to_string(c.strategy)},
          {"seed", c.seed}};
}

json phantom_config_json(const PhantomConfig& c) {
  return {{"dims", {c.size.w, c.size.h, c.size.d, c.channels}},
          {"lesion_present", c.lesion_present},
          {"center_range", {{c.center_w.lo, c.center_w.hi}, {c.center_h.lo, c.center_h.hi}, {c.center_d.lo, c.center_d.hi}}},
          {"radius_range", {{c.radius_w.lo, c.radius_w.hi}, {c.radius_h.lo, c.radius_h.hi}, {c.radius_d.lo, c.radius_d.hi}}},
          {"lesion_contrast", c.lesion_contrast},
          {"second_channel_contrast", c.second_channel_contrast},
          {"noise_sigma", c.noise_sigma},
          {"gland_radius", c.gland_radius}};
}

json train_config_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"epochs", c.epochs}, {"batch_size", c.batch_size}, {"seed", c.seed}};
}

const std::set<std::string>& known_axes() {
  static const std::set<std::string> axes{"tau", "alpha", "T", "mu", "n", "crop_size",
                                          "wsc_samples", "fsc_samples", "strategy"};
  return axes;
}

double parse_real(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ValidationError("not a number: '" + s + "'");
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ValidationError("not an integer: '" + s + "'");
  return v;
}

Size3 parse_size(const std::string& s) {
  std::vector<int> parts;
  std::string token;
  std::istringstream in(s);
  while (std::getline(in, token, s.find('x') != std::string::npos ? 'x' : ',')) parts.push_back(parse_int(token));
  if (parts.size() != 3) throw ValidationError("crop size must be WxHxD: '" + s + "'");
  return {parts[0], parts[1], parts[2]};
}

std::string optional_field(const std::optional<double>& v) {
  return v ? fmt::format("{:.6f}", *v) : std::string{};
}

}  // namespace

std::string to_json(const SearchConfig& config) { return search_config_json(config).dump(); }
std::string to_json(const PhantomConfig& config) { return phantom_config_json(config).dump(); }

std::string DatasetSpec::to_json() const {
  return json{{"phantom", phantom_config_json(phantom)},
              {"seed", seed},
              {"wsc_samples", wsc_samples},
              {"fsc_samples", fsc_samples},
              {"crops_per_image", crops_per_image},
              {"crop_balance", crop_balance},
              {"heldout_weak", heldout_weak},
              {"heldout_fsc", heldout_fsc},
              {"eval_cases", eval_cases},
              {"wsc_train", train_config_json(wsc_train)},
              {"fsc_train", train_config_json(fsc_train)}}
      .dump();
}

void AblationGrid::validate() const {
  if (!known_axes().contains(axis)) throw ValidationError("unknown ablation axis '" + axis + "'");
  if (values.empty()) throw ValidationError("ablation grid for '" + axis + "' is empty");
}

TrainedPair train_pair(const DatasetSpec& ds, Size3 crop_size) {
  PhantomConfig pc = ds.phantom;
  const auto weak_pool = generate_phantoms(pc, ds.wsc_samples, 0.5, derive_seed(ds.seed, 1));
  const auto weak_heldout = generate_phantoms(pc, ds.heldout_weak, 0.5, derive_seed(ds.seed, 2));
  const auto full_pool = generate_phantoms(pc, ds.fsc_samples, 1.0, derive_seed(ds.seed, 3));
  const auto full_heldout = generate_phantoms(pc, ds.heldout_fsc, 1.0, derive_seed(ds.seed, 4));

  const WeakDataset weak = weak_dataset(weak_pool);
  const CropDataset crops = crop_dataset(full_pool, crop_size, ds.crops_per_image, ds.crop_balance,
                                         derive_seed(ds.seed, 5));
  const CropDataset crops_heldout = crop_dataset(full_heldout, crop_size, ds.crops_per_image,
                                                 ds.crop_balance, derive_seed(ds.seed, 6));
  const int channels = pc.channels;
  TrainResult wsc = train_wsc(weak, NetworkSpec::weakly_supervised(channels), ds.wsc_train);
  TrainResult fsc = train_fsc(crops, NetworkSpec::fully_supervised(crop_size, channels), ds.fsc_train);
  TrainedPair out{std::move(wsc.network), std::move(fsc.network), 0.0, 0.0};
  out.wsc_accuracy = accuracy(out.wsc, weak_dataset(weak_heldout));
  out.fsc_accuracy = accuracy(out.fsc, crops_heldout);
  return out;
}

AblationReport run_ablation(const AblationGrid& grid, const SearchConfig& base,
                            const DatasetSpec& dataset, const TrainedPair* fixed) {
  grid.validate();
  base.validate();
  const bool retrains = grid.axis == "wsc_samples" || grid.axis == "fsc_samples" || grid.axis == "crop_size";

  AblationReport report;
  report.axis = grid.axis;
  report.base_config_json = to_json(base);
  report.dataset_json = dataset.to_json();

  const auto eval_phantoms = generate_phantoms(dataset.phantom, dataset.eval_cases, 1.0,
                                               derive_seed(dataset.seed, 7));
  const auto cases = centroid_cases(eval_phantoms);

  std::optional<TrainedPair> owned;
  if (!retrains && fixed == nullptr) owned = train_pair(dataset, base.crop_size);
  const TrainedPair* shared = fixed != nullptr ? fixed : (owned ? &*owned : nullptr);

  for (const std::string& value : grid.values) {
    AblationRow row;
    row.axis = grid.axis;
    row.value = value;
    try {
      SearchConfig cfg = base;
      DatasetSpec ds = dataset;
      if (grid.axis == "tau") {
        cfg.tau = parse_real(value);
      } else if (grid.axis == "alpha") {
        cfg.alpha = parse_real(value);
      } else if (grid.axis == "T") {
        cfg.set_steps(parse_int(value), base.max_radius());
      } else if (grid.axis == "mu") {
        cfg.spiral.steps_per_circle = parse_int(value);
      } else if (grid.axis == "n") {
        cfg.n_runs = parse_int(value);
      } else if (grid.axis == "strategy") {
        cfg.strategy = strategy_from_string(value);
      } else if (grid.axis == "crop_size") {
        cfg.crop_size = parse_size(value);
      } else if (grid.axis == "wsc_samples") {
        ds.wsc_samples = parse_int(value);
      } else if (grid.axis == "fsc_samples") {
        ds.fsc_samples = parse_int(value);
      }
      cfg.validate();

      std::optional<TrainedPair> retrained;
      if (retrains) {
        retrained = train_pair(ds, cfg.crop_size);
        row.wsc_accuracy = retrained->wsc_accuracy;
        row.fsc_accuracy = retrained->fsc_accuracy;
      }
      const TrainedPair& pair = retrained ? *retrained : *shared;
      EvalReport eval = evaluate_cases(cases, cfg, network_scorers(pair.wsc, pair.fsc));
      row.dice_mean = eval.mean_dice;
      row.dice_stdev = eval.stdev_dice;
      for (auto& c : eval.cases) {
        row.crops_evaluated += c.crops_evaluated;
        row.predictions.push_back(std::move(c.prediction));
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

void AblationReport::write_csv(std::ostream& out) const {
  out << "axis,value,wsc_accuracy,fsc_accuracy,dice_mean,dice_stdev,crops_evaluated,status\n";
  for (const auto& r : rows) {
    fmt::print(out, "{},{},{},{},{:.6f},{:.6f},{},{}\n", r.axis, r.value, optional_field(r.wsc_accuracy),
               optional_field(r.fsc_accuracy), r.dice_mean, r.dice_stdev, r.crops_evaluated,
               r.failed ? "failed" : "ok");
  }
}

std::string AblationReport::summary_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    json row = {{"value", r.value},
                {"dice_mean", r.dice_mean},
                {"dice_stdev", r.dice_stdev},
                {"crops_evaluated", r.crops_evaluated},
                {"status", r.failed ? "failed" : "ok"}};
    if (r.wsc_accuracy) row["wsc_accuracy"] = *r.wsc_accuracy;
    if (r.fsc_accuracy) row["fsc_accuracy"] = *r.fsc_accuracy;
    if (r.failed) row["error"] = r.error;
    rows_json.push_back(std::move(row));
  }
  return json{{"axis", axis},
              {"base_config", json::parse(base_config_json)},
              {"dataset", json::parse(dataset_json)},
              {"rows", rows_json}}
      .dump(2);
}

fs::path write_ablation_report(const AblationReport& report, const fs::path& dir,
                               const std::string& timestamp) {
  fs::create_directories(dir);
  const std::string stem = fmt::format("ablation_{}_{}", report.axis, timestamp);
  const fs::path csv = dir / (stem + ".csv");
  {
    std::ofstream out(csv);
    report.write_csv(out);
    if (!out) throw Error("cannot write " + csv.string());
  }
  std::ofstream out(dir / (stem + ".json"));
  out << report.summary_json() << '\n';
  if (!out) throw Error("cannot write " + (dir / (stem + ".json")).string());
  return csv;
}

}  // namespace promptseg
