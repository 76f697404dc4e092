#include "promptseg_app/service.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptseg/dataset.hpp"
#include "promptseg/errors.hpp"
#include "promptseg/evaluation.hpp"
#include "promptseg/rle.hpp"
#include "promptseg/scorer.hpp"
#include "promptseg/weights_io.hpp"

namespace promptseg::app {

namespace fs = std::filesystem;
using nlohmann::json;

ScorerMode scorer_mode_from_string(const std::string& name) {
  if (name == "network") return ScorerMode::Network;
  if (name == "oracle") return ScorerMode::Oracle;
  throw ValidationError("unknown scorer '" + name + "' (network or oracle)");
}

std::string to_string(ScorerMode mode) { return mode == ScorerMode::Network ? "network" : "oracle"; }

void SessionState::add_volume(const std::string& id, Volume volume, std::optional<Mask> gt) {
  if (gt && gt->size() != volume.size()) throw ValidationError("mask dims differ from volume '" + id + "'");
  std::unique_lock lock(mutex_);
  if (volumes_.contains(id)) throw ValidationError("duplicate volume id '" + id + "'");
  volume.set_id(id);
  volumes_.emplace(id, VolumeEntry{std::move(volume), std::move(gt)});
}

void SessionState::set_networks(Network wsc, Network fsc) {
  if (wsc.spec().head != Head::GlobalAveragePool) throw ValidationError("wsc needs a global-average-pool head");
  if (fsc.spec().head != Head::Flatten) throw ValidationError("fsc needs a flatten head");
  std::unique_lock lock(mutex_);
  wsc_ = std::make_unique<Network>(std::move(wsc));
  fsc_ = std::make_unique<Network>(std::move(fsc));
}

std::size_t SessionState::load_directory(const fs::path& dir) {
  std::size_t n = 0;
  if (fs::exists(dir / "manifest.json")) {
    for (const PhantomRecord& rec : read_phantom_manifest(dir)) {
      Phantom p = load_phantom(rec);
      add_volume(rec.id, std::move(p.volume), std::move(p.mask));
      ++n;
    }
  }
  if (fs::exists(dir / "wsc.json") && fs::exists(dir / "fsc.json")) {
    set_networks(load_weights(dir / "wsc.json", Head::GlobalAveragePool),
                 load_weights(dir / "fsc.json", Head::Flatten));
  }
  return n;
}

const VolumeEntry* SessionState::find(const std::string& id) const {
  const auto it = volumes_.find(id);
  return it == volumes_.end() ? nullptr : &it->second;
}

namespace {

ApiResponse error(int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  return {status, extra.dump()};
}

json dims_json(Size3 s) { return json::array({s.w, s.h, s.d}); }

std::optional<int> parse_index(const std::string& s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

template <class T>
T field(const json& body, const char* key) {
  try {
    return body.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(fmt::format("field '{}' has the wrong type", key));
  }
}

int int_field(const json& body, const char* key) {
  if (!body.at(key).is_number_integer()) throw ValidationError(fmt::format("field '{}' must be an integer", key));
  return body.at(key).get<int>();
}

Size3 triple(const json& v, const char* what) {
  if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number_integer(); })) {
    throw ValidationError(fmt::format("{} must be an array of three integers", what));
  }
  return {v[0].get<int>(), v[1].get<int>(), v[2].get<int>()};
}

}  // namespace

SearchConfig apply_request_config(const SearchConfig& base, const std::string& body_json) {
  const json body = json::parse(body_json);
  SearchConfig cfg = base;
  if (body.contains("tau")) cfg.tau = field<double>(body, "tau");
  if (body.contains("alpha")) cfg.alpha = field<double>(body, "alpha");
  if (body.contains("n_runs")) cfg.n_runs = int_field(body, "n_runs");
  if (body.contains("T")) cfg.set_steps(int_field(body, "T"), base.max_radius());
  if (body.contains("mu")) cfg.spiral.steps_per_circle = int_field(body, "mu");
  if (body.contains("crop_size")) cfg.crop_size = triple(body["crop_size"], "crop_size");
  if (body.contains("strategy")) cfg.strategy = strategy_from_string(field<std::string>(body, "strategy"));
  if (body.contains("seed")) cfg.seed = field<std::uint64_t>(body, "seed");
  cfg.validate();
  return cfg;
}

ApiResponse Api::list_volumes() const {
  const auto lock = state_->read_lock();
  json out = json::array();
  for (const auto& [id, entry] : state_->volumes()) {
    out.push_back({{"id", id},
                   {"dims", dims_json(entry.volume.size())},
                   {"channels", entry.volume.channels()},
                   {"has_gt", entry.gt.has_value()}});
  }
  return {200, out.dump()};
}

ApiResponse Api::slice(const std::string& id, const std::string& axis, const std::string& index_text,
                       const std::string& channel_text) const {
  const auto lock = state_->read_lock();
  const VolumeEntry* entry = state_->find(id);
  if (entry == nullptr) return error(404, "unknown volume '" + id + "'");
  if (axis != "w" && axis != "h" && axis != "d") return error(400, "axis must be w, h or d");
  const auto index = parse_index(index_text);
  if (!index) return error(400, "slice index must be an integer");
  const auto channel = channel_text.empty() ? std::optional<int>(0) : parse_index(channel_text);
  if (!channel) return error(400, "channel must be an integer");

  const Volume& v = entry->volume;
  const Size3 s = v.size();
  const int depth = axis == "w" ? s.w : axis == "h" ? s.h : s.d;
  if (*index < 0 || *index >= depth) return error(404, fmt::format("slice {} outside [0, {})", *index, depth));
  if (*channel < 0 || *channel >= v.channels()) return error(404, fmt::format("no channel {}", *channel));

  // Image rows run along the second remaining axis, columns along the first.
  const int width = axis == "w" ? s.h : s.w;
  const int height = axis == "d" ? s.h : s.d;
  std::vector<float> values(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      float value = 0.0f;
      if (axis == "d") value = v.at(x, y, *index, *channel);
      if (axis == "h") value = v.at(x, *index, y, *channel);
      if (axis == "w") value = v.at(*index, x, y, *channel);
      values[static_cast<std::size_t>(y) * width + x] = value;
    }
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  std::string pixels(values.size(), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = range > 0.0 ? (values[i] - *lo) / range : 0.0;
    pixels[i] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t)));
  }
  const json out = {{"width", width},
                    {"height", height},
                    {"axis", axis},
                    {"index", *index},
                    {"channel", *channel},
                    {"min", *lo},
                    {"max", *hi},
                    {"pixels", httplib::detail::base64_encode(pixels)}};
  return {200, out.dump()};
}

ApiResponse Api::ground_truth(const std::string& id) const {
  const auto lock = state_->read_lock();
  const VolumeEntry* entry = state_->find(id);
  if (entry == nullptr) return error(404, "unknown volume '" + id + "'");
  if (!entry->gt) return error(404, "no ground truth for '" + id + "'");
  return {200, json{{"mask_rle", rle_encode(*entry->gt)}, {"dims", dims_json(entry->gt->size())}}.dump()};
}

ApiResponse Api::segment(const std::string& body_text) const {
  json body;
  try {
    body = json::parse(body_text);
  } catch (const json::exception& e) {
    return error(400, std::string("malformed JSON: ") + e.what());
  }
  if (!body.is_object()) return error(400, "body must be a JSON object");
  if (!body.contains("volume_id") || !body["volume_id"].is_string()) return error(400, "volume_id (string) is required");
  if (!body.contains("prompts") || !body["prompts"].is_array() || body["prompts"].empty()) {
    return error(400, "prompts must be a non-empty array of [w, h, d]");
  }

  const auto lock = state_->read_lock();
  SearchConfig cfg;
  std::vector<Index3> prompts;
  try {
    cfg = apply_request_config(state_->defaults(), body_text);
    for (const json& p : body["prompts"]) {
      const Size3 t = triple(p, "each prompt");
      prompts.push_back({t.w, t.h, t.d});
    }
  } catch (const Error& e) {
    return error(400, e.what());
  }

  const std::string id = body["volume_id"].get<std::string>();
  const VolumeEntry* entry = state_->find(id);
  if (entry == nullptr) return error(404, "unknown volume '" + id + "'");
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (!entry->volume.size().contains(prompts[i])) {
      return error(422, fmt::format("prompt {} at {} lies outside volume {}", i, to_string(prompts[i]),
                                    to_string(entry->volume.size())),
                   {{"prompt_index", i}});
    }
  }

  std::unique_ptr<CropScorer> wsc, fsc;
  if (state_->mode() == ScorerMode::Oracle) {
    if (!entry->gt) return error(422, "oracle scoring needs ground truth for '" + id + "'");
    wsc = std::make_unique<RoiFractionScorer>(*entry->gt);
    fsc = std::make_unique<RoiFractionScorer>(*entry->gt);
  } else {
    if (state_->wsc() == nullptr || state_->fsc() == nullptr) return error(503, "no classifiers loaded");
    if (state_->fsc()->spec().input_size != cfg.crop_size) {
      return error(400, fmt::format("crop_size {} does not match the loaded fsc input {}", to_string(cfg.crop_size),
                                    to_string(state_->fsc()->spec().input_size)));
    }
    wsc = std::make_unique<NetworkScorer>(*state_->wsc());
    fsc = std::make_unique<NetworkScorer>(*state_->fsc());
  }

  try {
    const Segmentation seg = promptseg::segment(entry->volume, prompts, cfg, *wsc, *fsc);
    json out = {{"mask_rle", rle_encode(seg.mask)},
                {"dims", dims_json(seg.mask.size())},
                {"crops_evaluated", seg.diagnostics.crops_evaluated},
                {"runtime_ms", seg.diagnostics.wall_ms},
                {"voxels", seg.mask.count()}};
    if (entry->gt) out["dice"] = dice(seg.mask, *entry->gt);
    return {200, out.dump()};
  } catch (const PromptError& e) {
    return error(422, e.what(), {{"prompt_index", e.index()}});
  } catch (const DimensionError& e) {
    return error(422, e.what());
  } catch (const ShapeError& e) {
    return error(400, e.what());
  }
}

ApiResponse Api::config() const {
  const auto lock = state_->read_lock();
  const SearchConfig& c = state_->defaults();
  json out = {{"tau", c.tau},
              {"alpha", c.alpha},
              {"n_runs", c.n_runs},
              {"T", c.spiral.steps},
              {"mu", c.spiral.steps_per_circle},
              {"crop_size", dims_json(c.crop_size)},
              {"strategy", to_string(c.strategy)},
              {"seed", c.seed},
              {"max_radius", c.max_radius()},
              {"scorer", to_string(state_->mode())},
              {"classifiers_loaded", state_->wsc() != nullptr}};
  return {200, out.dump()};
}

namespace {

void reply(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body, "application/json");
}

}  // namespace

Service::Service(const SessionState& state) : api_(state), server_(std::make_unique<httplib::Server>()) {
  httplib::Server& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  s.Get("/api/volumes", [this](const httplib::Request&, httplib::Response& res) { reply(res, api_.list_volumes()); });
  s.Get(R"(/api/volumes/([^/]+)/slices/([^/]+)/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, api_.slice(req.matches[1], req.matches[2], req.matches[3], req.get_param_value("channel")));
  });
  s.Get(R"(/api/volumes/([^/]+)/gt)", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, api_.ground_truth(req.matches[1]));
  });
  s.Post("/api/segment", [this](const httplib::Request& req, httplib::Response& res) { reply(res, api_.segment(req.body)); });
  s.Get("/api/config", [this](const httplib::Request&, httplib::Response& res) { reply(res, api_.config()); });
  s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", what}}.dump(), "application/json");
  });
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) res.set_content(json{{"error", fmt::format("HTTP {}", res.status)}}.dump(), "application/json");
  });
}

Service::~Service() = default;

int Service::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool Service::run() { return server_->listen_after_bind(); }

void Service::stop() { server_->stop(); }

void Service::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace promptseg::app
