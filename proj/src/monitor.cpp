#include "actmon/monitor.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <unordered_set>

#include "actmon/io.hpp"
#include "actmon/parallel.hpp"
#include "json_codec.hpp"

namespace actmon {

using json_codec::json;

std::string_view to_string(Decision d) {
  return d == Decision::OutOfDistribution ? "OOD" : "ID";
}

std::string creation_timestamp() {
  std::time_t t = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

void validate_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("tau must lie in [0, 1]");
}

}  // namespace

FittedAbstraction fit_monitor(const TraceDataset& proper, const MonitorConfig& config,
                              std::vector<Index> monitored) {
  validate_tau(config.tau);
  FittedAbstraction fitted{config, fit(proper, config.mode, config.k, std::move(monitored)), {}, {}};
  fitted.proper_ids.reserve(proper.size());
  for (const auto& r : proper) fitted.proper_ids.push_back(r.sample_id);
  Fnv1a64 h;
  h.update(encode_binary(proper));
  fitted.proper_hash = h.hex();
  return fitted;
}

MonitorArtifact calibrate_monitor(const FittedAbstraction& fitted, const TraceDataset& calibration,
                                  double tau, std::string created) {
  validate_tau(tau);
  if (calibration.empty()) throw ValidationError("calibration set is empty");
  for (const auto id : fitted.proper_ids) {
    if (calibration.contains(id)) {
      throw ValidationError("sample_id " + std::to_string(id) +
                            " appears in both the proper training and calibration sets");
    }
  }
  auto scores = calibrate(fitted.abstraction, calibration);
  Fnv1a64 h;
  h.update(fitted.proper_hash);
  h.update(encode_binary(calibration));
  MonitorConfig config = fitted.config;
  config.tau = tau;
  return MonitorArtifact{config, fitted.abstraction, std::move(scores),
                         Provenance{h.hex(), std::move(created)}};
}

MonitorArtifact build_monitor(const TraceDataset& proper, const TraceDataset& calibration,
                              const MonitorConfig& config, std::vector<Index> monitored,
                              std::string created) {
  return calibrate_monitor(fit_monitor(proper, config, std::move(monitored)), calibration,
                           config.tau, std::move(created));
}

BatchResult check_batch(const MonitorArtifact& monitor, const TraceDataset& dataset) {
  BatchResult result;
  if (dataset.empty()) return result;
  if (dataset.n_neurons() != monitor.abstraction.n_neurons()) {
    throw ValidationError("traces have " + std::to_string(dataset.n_neurons()) +
                          " neurons, monitor expects " +
                          std::to_string(monitor.abstraction.n_neurons()));
  }
  const bool per_class = monitor.abstraction.mode() == AbstractionMode::PerClass;
  result.verdicts.resize(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    const auto& r = dataset[i];
    result.verdicts[i] =
        check(monitor, r.activations, r.sample_id, per_class ? r.label : std::nullopt);
  });
  for (const auto& v : result.verdicts) {
    (v.decision == Decision::OutOfDistribution ? result.ood_count : result.id_count) += 1;
  }
  return result;
}

namespace {

json stats_to_json(const NeuronStats& s) {
  return json{{"mu", json_codec::vector_to_json(s.mu)},
              {"sigma", json_codec::vector_to_json(s.sigma)}};
}

NeuronStats stats_from(const json& j) {
  return NeuronStats{json_codec::vector_from(j.at("mu"), "mu"),
                     json_codec::vector_from(j.at("sigma"), "sigma")};
}

json config_to_json(const MonitorConfig& c, bool with_tau) {
  json j{{"k", c.k}, {"mode", to_string(c.mode)}, {"layer", c.layer}};
  if (with_tau) j["tau"] = c.tau;
  return j;
}

MonitorConfig config_from(const json& j, bool with_tau) {
  MonitorConfig c;
  c.k = j.at("k").get<double>();
  c.mode = parse_abstraction_mode(j.at("mode").get<std::string>());
  c.layer = j.at("layer").get<std::string>();
  if (with_tau) {
    c.tau = j.at("tau").get<double>();
    validate_tau(c.tau);
  }
  return c;
}

void abstraction_into(json& j, const GaussianAbstraction& abs) {
  j["n_neurons"] = abs.n_neurons();
  if (!abs.monitors_all()) j["monitored"] = abs.monitored();
  if (abs.mode() == AbstractionMode::ClassAgnostic) {
    j["stats"] = stats_to_json(abs.stats());
  } else {
    json per_class = json::object();
    for (const auto label : abs.classes()) {
      per_class[std::to_string(label)] = stats_to_json(abs.stats(label));
    }
    j["stats"] = json{{"per_class", std::move(per_class)}};
  }
}

GaussianAbstraction abstraction_from(const json& j, const MonitorConfig& config) {
  std::vector<Index> monitored;
  if (j.contains("monitored")) monitored = j.at("monitored").get<std::vector<Index>>();
  const auto& stats = j.at("stats");
  auto abs = [&] {
    if (config.mode == AbstractionMode::ClassAgnostic) {
      return GaussianAbstraction(stats_from(stats), config.k, std::move(monitored));
    }
    std::map<std::int32_t, NeuronStats> tables;
    for (const auto& [key, value] : stats.at("per_class").items()) {
      std::int32_t label = 0;
      const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), label);
      if (ec != std::errc() || ptr != key.data() + key.size()) {
        throw ValidationError("invalid class key '" + key + "'");
      }
      tables.emplace(label, stats_from(value));
    }
    return GaussianAbstraction(std::move(tables), config.k, std::move(monitored));
  }();
  if (abs.n_neurons() != j.at("n_neurons").get<Index>()) {
    throw ValidationError("n_neurons disagrees with the statistics tables");
  }
  return abs;
}

void check_version(const json& j) {
  const auto& v = j.at("version");
  if (!v.is_number_integer() || v.get<int>() != kMonitorSchemaVersion) {
    throw VersionError("unsupported monitor schema version " + v.dump() + " (expected " +
                       std::to_string(kMonitorSchemaVersion) + ")");
  }
}

template <typename F>
auto decode_document(std::string_view text, const char* what, F&& decode) {
  const auto j = json_codec::parse(text, what);
  try {
    if (!j.is_object() || !j.contains("version")) {
      throw ValidationError(std::string(what) + " has no schema version");
    }
    check_version(j);
    return decode(j);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("corrupted ") + what + ": " + e.what());
  }
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string monitor_to_json(const MonitorArtifact& monitor) {
  json j{{"version", kMonitorSchemaVersion}, {"config", config_to_json(monitor.config, true)}};
  abstraction_into(j, monitor.abstraction);
  j["calibration"] = json{{"sorted_scores", monitor.calibration.scores()},
                          {"n", monitor.calibration.size()}};
  j["provenance"] = json{{"hash", monitor.provenance.hash}, {"created", monitor.provenance.created}};
  return j.dump(1) + "\n";
}

MonitorArtifact monitor_from_json(std::string_view text) {
  return decode_document(text, "monitor artifact", [](const json& j) {
    const auto config = config_from(j.at("config"), true);
    auto abs = abstraction_from(j, config);
    const auto& cal = j.at("calibration");
    auto scores = cal.at("sorted_scores").get<std::vector<double>>();
    if (scores.size() != cal.at("n").get<std::size_t>()) {
      throw ValidationError("calibration n does not match the number of scores");
    }
    if (!std::is_sorted(scores.begin(), scores.end())) {
      throw ValidationError("calibration scores are not sorted");
    }
    const auto& prov = j.at("provenance");
    return MonitorArtifact{config, std::move(abs), CalibrationScores(std::move(scores)),
                           Provenance{prov.at("hash").get<std::string>(),
                                      prov.at("created").get<std::string>()}};
  });
}

void save_monitor(const MonitorArtifact& monitor, const std::filesystem::path& path) {
  write_file_atomic(path, monitor_to_json(monitor));
}

MonitorArtifact load_monitor(const std::filesystem::path& path) {
  return monitor_from_json(read_file(path));
}

std::string fitted_to_json(const FittedAbstraction& fitted) {
  json j{{"version", kMonitorSchemaVersion},
         {"kind", "fit"},
         {"config", config_to_json(fitted.config, false)}};
  abstraction_into(j, fitted.abstraction);
  j["proper"] = json{{"hash", fitted.proper_hash}, {"ids", fitted.proper_ids}};
  return j.dump(1) + "\n";
}

FittedAbstraction fitted_from_json(std::string_view text) {
  return decode_document(text, "fitted abstraction", [](const json& j) {
    if (j.value("kind", std::string()) != "fit") {
      throw ValidationError("not a fitted-abstraction file");
    }
    const auto config = config_from(j.at("config"), false);
    auto abs = abstraction_from(j, config);
    const auto& proper = j.at("proper");
    return FittedAbstraction{config, std::move(abs),
                             proper.at("ids").get<std::vector<std::uint64_t>>(),
                             proper.at("hash").get<std::string>()};
  });
}

std::string verdicts_to_jsonl(const std::vector<Verdict>& verdicts) {
  std::string out;
  for (const auto& v : verdicts) {
    out += "{\"sample_id\":" + std::to_string(v.sample_id) +
           ",\"score\":" + format_double(v.score.value) +
           ",\"p_num\":" + std::to_string(v.p.numerator) +
           ",\"p_den\":" + std::to_string(v.p.denominator) + ",\"decision\":\"" +
           std::string(to_string(v.decision)) + "\"}\n";
  }
  return out;
}

std::string verdicts_to_csv(const std::vector<Verdict>& verdicts) {
  std::string out = "sample_id,score,p_num,p_den,decision\n";
  for (const auto& v : verdicts) {
    out += std::to_string(v.sample_id) + ',' + format_double(v.score.value) + ',' +
           std::to_string(v.p.numerator) + ',' + std::to_string(v.p.denominator) + ',' +
           std::string(to_string(v.decision)) + '\n';
  }
  return out;
}

}  // namespace actmon
