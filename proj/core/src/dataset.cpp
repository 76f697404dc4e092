#include "promptseg/dataset.hpp"

#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "promptseg/crop_sampling.hpp"
#include "promptseg/errors.hpp"
#include "promptseg/rng.hpp"
#include "promptseg/volume_io.hpp"

namespace promptseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<PhantomRecord> write_phantom_set(const fs::path& dir, std::span<const Phantom> phantoms) {
  fs::create_directories(dir);
  std::vector<PhantomRecord> records;
  json entries = json::array();
  for (std::size_t i = 0; i < phantoms.size(); ++i) {
    const Phantom& p = phantoms[i];
    const std::string id = p.volume.id().empty() ? fmt::format("phantom_{:03d}", i) : p.volume.id();
    Volume v = p.volume;
    v.set_id(id);
    save_volume(v, dir / (id + ".json"));
    save_mask(p.mask, dir / (id + "_mask.json"));
    records.push_back({id, p.weak_label, dir / (id + ".json"), dir / (id + "_mask.json")});
    entries.push_back({{"id", id},
                       {"weak_label", p.weak_label},
                       {"volume", id + ".json"},
                       {"mask", id + "_mask.json"}});
  }
  std::ofstream out(dir / "manifest.json");
  out << json{{"phantoms", entries}}.dump(2) << '\n';
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  return records;
}

std::vector<PhantomRecord> read_phantom_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<PhantomRecord> records;
  try {
    const json j = json::parse(in);
    for (const auto& e : j.at("phantoms")) {
      PhantomRecord r;
      r.id = e.at("id").get<std::string>();
      r.weak_label = e.at("weak_label").get<int>();
      r.volume = dir / e.at("volume").get<std::string>();
      if (e.contains("mask")) r.mask = dir / e.at("mask").get<std::string>();
      records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return records;
}

Phantom load_phantom(const PhantomRecord& record) {
  Phantom p;
  p.volume = load_volume(record.volume);
  p.volume.set_id(record.id);
  p.mask = record.mask.empty() ? Mask(p.volume.size()) : load_mask(record.mask);
  p.weak_label = record.weak_label;
  return p;
}

std::vector<Phantom> load_phantom_set(const fs::path& dir) {
  std::vector<Phantom> out;
  for (const auto& r : read_phantom_manifest(dir)) out.push_back(load_phantom(r));
  return out;
}

WeakDataset weak_dataset(std::span<const Phantom> phantoms) {
  WeakDataset out;
  out.reserve(phantoms.size());
  for (const auto& p : phantoms) out.push_back({p.volume, p.weak_label});
  return out;
}

CropDataset crop_dataset(std::span<const Phantom> phantoms, Size3 crop_size, int per_image,
                         double balance, std::uint64_t seed) {
  CropDataset out;
  for (std::size_t i = 0; i < phantoms.size(); ++i) {
    auto sampled = sample_training_crops(phantoms[i].volume, phantoms[i].mask, crop_size, per_image,
                                         balance, derive_seed(seed, i));
    for (auto& item : sampled.items) out.push_back(std::move(item));
  }
  return out;
}

}  // namespace promptseg
