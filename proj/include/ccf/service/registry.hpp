#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "ccf/architectures.hpp"
#include "ccf/ingest.hpp"
#include "ccf/training.hpp"

namespace ccf::service {

namespace fs = std::filesystem;

struct ModelEntry {
  std::string id;
  std::string path;
  std::string dataset_id;
  std::string target;
  std::string architecture;
  std::string fingerprint;
  std::size_t param_count = 0;
  nlohmann::json metrics;  // latest MetricsReport, or null
};

namespace detail {

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + p.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Writes through a sibling temp file and renames, so readers never observe a
/// partially written file.
inline void write_atomic(const fs::path& p, const std::string& bytes) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, p);
}

inline std::uint32_t crc32_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace detail

/// Workspace directory holding `registry.json`, `datasets/` and `models/`.
/// Mutations rewrite the manifest atomically; all public methods take the
/// registry lock, so concurrent readers see whole snapshots.
class Registry {
 public:
  explicit Registry(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "datasets");
    fs::create_directories(root_ / "models");
    if (fs::exists(manifest_path())) load_manifest();
  }

  const fs::path& root() const { return root_; }
  fs::path manifest_path() const { return root_ / "registry.json"; }

  /// Stores `frame` as a new dataset; `sidecar` (if not null) is written next
  /// to it as provenance JSON.
  std::string add_dataset(const TimeSeriesFrame& frame, const nlohmann::json& sidecar = nullptr) {
    std::unique_lock lock(mu_);
    const auto id = "ds-" + std::to_string(next_dataset_);
    const auto rel = "datasets/" + id + ".csv";
    std::ostringstream csv;
    write_csv(csv, frame);
    detail::write_atomic(root_ / rel, csv.str());
    if (!sidecar.is_null()) detail::write_atomic(root_ / ("datasets/" + id + ".provenance.json"), sidecar.dump(2));
    Stored s{describe_dataset(frame, id, rel), detail::crc32_of(csv.str())};
    ++next_dataset_;
    datasets_[id] = s;
    save_manifest();
    return id;
  }

  std::string add_model(const TrainedModel& tm, const std::string& dataset_id,
                        const std::optional<MetricsReport>& metrics = std::nullopt) {
    std::unique_lock lock(mu_);
    if (!datasets_.count(dataset_id)) throw Error(ErrorKind::NotFound, "unknown dataset '" + dataset_id + "'");
    const auto id = "m-" + std::to_string(next_model_);
    const auto rel = "models/" + id + ".ccfm";
    auto copy = tm;
    copy.meta.dataset_id = dataset_id;
    detail::write_atomic(root_ / rel, serialize(copy));
    const auto& d = tm.model.descriptor();
    ModelEntry e{id,
                 rel,
                 dataset_id,
                 d.features.target,
                 to_string(d.architecture),
                 d.features.fingerprint(),
                 param_count(d),
                 metrics ? to_json(*metrics) : nlohmann::json(nullptr)};
    ++next_model_;
    models_[id] = e;
    save_manifest();
    return id;
  }

  void set_metrics(const std::string& model_id, const MetricsReport& m) {
    std::unique_lock lock(mu_);
    auto it = models_.find(model_id);
    if (it == models_.end()) throw Error(ErrorKind::NotFound, "unknown model '" + model_id + "'");
    it->second.metrics = to_json(m);
    save_manifest();
  }

  bool has_dataset(const std::string& id) const {
    std::shared_lock lock(mu_);
    return datasets_.count(id) > 0;
  }
  bool has_model(const std::string& id) const {
    std::shared_lock lock(mu_);
    return models_.count(id) > 0;
  }

  DatasetEntry dataset(const std::string& id) const {
    std::shared_lock lock(mu_);
    return find_dataset(id).entry;
  }

  ModelEntry model(const std::string& id) const {
    std::shared_lock lock(mu_);
    return find_model(id);
  }

  /// Reads a dataset back, verifying its checksum against the manifest.
  TimeSeriesFrame open_dataset(const std::string& id) const {
    Stored s;
    {
      std::shared_lock lock(mu_);
      s = find_dataset(id);
    }
    auto bytes = detail::read_file(root_ / s.entry.path);
    if (detail::crc32_of(bytes) != s.crc)
      throw Error(ErrorKind::Checksum, "dataset '" + id + "' does not match its registry checksum");
    std::istringstream in(bytes);
    return read_csv(in, {}, s.entry.provenance);
  }

  TrainedModel open_model(const std::string& id) const {
    ModelEntry e;
    {
      std::shared_lock lock(mu_);
      e = find_model(id);
    }
    return deserialize(detail::read_file(root_ / e.path));
  }

  std::vector<DatasetEntry> datasets() const {
    std::shared_lock lock(mu_);
    std::vector<DatasetEntry> out;
    for (const auto& [_, s] : datasets_) out.push_back(s.entry);
    return out;
  }

  std::vector<ModelEntry> models() const {
    std::shared_lock lock(mu_);
    std::vector<ModelEntry> out;
    for (const auto& [_, m] : models_) out.push_back(m);
    return out;
  }

  /// Re-reads the manifest written by another process.
  void reload() {
    std::unique_lock lock(mu_);
    datasets_.clear();
    models_.clear();
    next_dataset_ = next_model_ = 1;
    if (fs::exists(manifest_path())) load_manifest();
  }

 private:
  struct Stored {
    DatasetEntry entry;
    std::uint32_t crc = 0;
  };

  const Stored& find_dataset(const std::string& id) const {
    auto it = datasets_.find(id);
    if (it == datasets_.end()) throw Error(ErrorKind::NotFound, "unknown dataset '" + id + "'");
    return it->second;
  }

  const ModelEntry& find_model(const std::string& id) const {
    auto it = models_.find(id);
    if (it == models_.end()) throw Error(ErrorKind::NotFound, "unknown model '" + id + "'");
    return it->second;
  }

  void save_manifest() const {
    nlohmann::json j;
    j["next_dataset"] = next_dataset_;
    j["next_model"] = next_model_;
    j["datasets"] = nlohmann::json::object();
    j["models"] = nlohmann::json::object();
    for (const auto& [id, s] : datasets_)
      j["datasets"][id] = {{"path", s.entry.path},          {"interval_s", s.entry.interval_s},
                           {"start", format_iso8601(s.entry.start)}, {"end", format_iso8601(s.entry.end)},
                           {"rows", s.entry.rows},          {"provenance", s.entry.provenance},
                           {"crc32", s.crc}};
    for (const auto& [id, m] : models_)
      j["models"][id] = {{"path", m.path},
                         {"dataset_id", m.dataset_id},
                         {"target", m.target},
                         {"architecture", m.architecture},
                         {"fingerprint", m.fingerprint},
                         {"param_count", m.param_count},
                         {"metrics", m.metrics}};
    detail::write_atomic(manifest_path(), j.dump(2) + "\n");
  }

  void load_manifest() {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(detail::read_file(manifest_path()));
      next_dataset_ = j.at("next_dataset").get<std::size_t>();
      next_model_ = j.at("next_model").get<std::size_t>();
      for (const auto& [id, v] : j.at("datasets").items()) {
        Stored s;
        s.entry.id = id;
        s.entry.path = v.at("path").get<std::string>();
        s.entry.interval_s = v.at("interval_s").get<std::int64_t>();
        s.entry.start = parse_iso8601(v.at("start").get<std::string>()).value_or(0);
        s.entry.end = parse_iso8601(v.at("end").get<std::string>()).value_or(0);
        s.entry.rows = v.at("rows").get<std::size_t>();
        s.entry.provenance = v.at("provenance").get<std::string>();
        s.crc = v.at("crc32").get<std::uint32_t>();
        datasets_[id] = s;
      }
      for (const auto& [id, v] : j.at("models").items())
        models_[id] = {id,
                       v.at("path").get<std::string>(),
                       v.at("dataset_id").get<std::string>(),
                       v.at("target").get<std::string>(),
                       v.at("architecture").get<std::string>(),
                       v.at("fingerprint").get<std::string>(),
                       v.at("param_count").get<std::size_t>(),
                       v.at("metrics")};
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Schema, "registry manifest is malformed: " + std::string(e.what()));
    }
  }

  fs::path root_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Stored> datasets_;
  std::map<std::string, ModelEntry> models_;
  std::size_t next_dataset_ = 1;
  std::size_t next_model_ = 1;
};

}  // namespace ccf::service
