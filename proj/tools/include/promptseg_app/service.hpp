#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "promptseg/network.hpp"
#include "promptseg/search.hpp"
#include "promptseg/volume.hpp"

namespace httplib {
class Server;
}

namespace promptseg::app {

/// Where crop scores come from during segmentation.
enum class ScorerMode {
  Network,
  /// Ground-truth ROI fraction; needs a mask for the volume.
  Oracle,
};

ScorerMode scorer_mode_from_string(const std::string& name);
std::string to_string(ScorerMode mode);

struct VolumeEntry {
  Volume volume;
  std::optional<Mask> gt;
};

/// Loaded volumes and classifiers. Loading takes an exclusive lock; readers
/// hold a shared lock for the duration of a request.
class SessionState {
 public:
  explicit SessionState(SearchConfig defaults = {}, ScorerMode mode = ScorerMode::Network)
      : defaults_(defaults), mode_(mode) {}

  /// Throws ValidationError on a duplicate id or a mask with different dims.
  void add_volume(const std::string& id, Volume volume, std::optional<Mask> gt = std::nullopt);
  void set_networks(Network wsc, Network fsc);
  /// Loads every phantom listed in `dir/manifest.json`, plus `dir/wsc.json`
  /// and `dir/fsc.json` when present. Returns the number of volumes loaded.
  std::size_t load_directory(const std::filesystem::path& dir);

  std::shared_lock<std::shared_mutex> read_lock() const { return std::shared_lock(mutex_); }

  // Accessors below require the caller to hold read_lock().
  const std::map<std::string, VolumeEntry>& volumes() const { return volumes_; }
  const VolumeEntry* find(const std::string& id) const;
  const Network* wsc() const { return wsc_.get(); }
  const Network* fsc() const { return fsc_.get(); }
  const SearchConfig& defaults() const { return defaults_; }
  ScorerMode mode() const { return mode_; }

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, VolumeEntry> volumes_;
  std::unique_ptr<Network> wsc_;
  std::unique_ptr<Network> fsc_;
  SearchConfig defaults_;
  ScorerMode mode_;
};

struct ApiResponse {
  int status = 200;
  /// JSON text.
  std::string body;
};

/// Transport-free request handlers; Service routes HTTP requests onto these.
class Api {
 public:
  explicit Api(const SessionState& state) : state_(&state) {}

  ApiResponse list_volumes() const;
  /// axis is one of "w", "h", "d"; the slice is orthogonal to it.
  ApiResponse slice(const std::string& id, const std::string& axis, const std::string& index,
                    const std::string& channel) const;
  ApiResponse ground_truth(const std::string& id) const;
  ApiResponse segment(const std::string& body) const;
  ApiResponse config() const;

 private:
  const SessionState* state_;
};

/// Applies the optional search fields of a segment request (tau, alpha,
/// n_runs, T, mu, crop_size, strategy, seed) on top of `base`. Throws
/// ValidationError on a wrong type or an out-of-range value.
SearchConfig apply_request_config(const SearchConfig& base, const std::string& body_json);

class Service {
 public:
  explicit Service(const SessionState& state);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds without serving; port 0 picks a free port. Returns the bound port
  /// or -1 on failure.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool run();
  void stop();
  void wait_until_ready() const;

 private:
  Api api_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace promptseg::app
