#include "actmon/trace.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "actmon/error.hpp"
#include "actmon/io.hpp"

namespace actmon {

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'T', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagLabels = 1u;
constexpr std::size_t kHeaderBytes = 20;

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xffu));
    u = static_cast<U>(u >> 8);
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T)) {
      throw ParseError(ParseError::Kind::Truncated, pos_,
                       std::string("truncated trace file: expected ") + what + " at byte " +
                           std::to_string(pos_));
    }
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<decltype(u)>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string record_context(const TraceRecord& r) {
  return "record " + std::to_string(r.sample_id);
}

}  // namespace

bool bit_equal(const TraceRecord& a, const TraceRecord& b) {
  return a.sample_id == b.sample_id && a.label == b.label &&
         a.activations.size() == b.activations.size() &&
         std::memcmp(a.activations.data(), b.activations.data(),
                     sizeof(float) * static_cast<std::size_t>(a.activations.size())) == 0;
}

void validate_activations(const Eigen::Ref<const ActivationVector>& v) {
  if (v.size() == 0) throw ValidationError("activation vector is empty");
  if (!v.allFinite()) throw ValidationError("activation vector contains a non-finite value");
}

TraceDataset::TraceDataset(Index n_neurons) : n_neurons_(n_neurons) {
  if (n_neurons <= 0) throw ValidationError("trace dataset needs at least one neuron");
}

TraceDataset::TraceDataset(Index n_neurons, std::vector<TraceRecord> records)
    : TraceDataset(n_neurons) {
  records_.reserve(records.size());
  for (auto& r : records) add(std::move(r));
}

void TraceDataset::add(TraceRecord record) {
  if (n_neurons_ <= 0) throw ValidationError("trace dataset has no width");
  if (record.activations.size() != n_neurons_) {
    throw ValidationError(record_context(record) + " has " +
                          std::to_string(record.activations.size()) + " activations, expected " +
                          std::to_string(n_neurons_));
  }
  try {
    validate_activations(record.activations);
  } catch (const ValidationError& e) {
    throw ValidationError(record_context(record) + ": " + e.what());
  }
  if (record.label && *record.label < 0) {
    throw ValidationError(record_context(record) + " has negative class label");
  }
  if (!ids_.insert(record.sample_id).second) {
    throw ValidationError("duplicate sample_id " + std::to_string(record.sample_id));
  }
  records_.push_back(std::move(record));
}

bool TraceDataset::any_labeled() const {
  return std::any_of(records_.begin(), records_.end(),
                     [](const TraceRecord& r) { return r.label.has_value(); });
}

bool TraceDataset::all_labeled() const {
  return std::all_of(records_.begin(), records_.end(),
                     [](const TraceRecord& r) { return r.label.has_value(); });
}

bool operator==(const TraceDataset& a, const TraceDataset& b) {
  if (a.n_neurons_ != b.n_neurons_ || a.records_.size() != b.records_.size()) return false;
  for (std::size_t i = 0; i < a.records_.size(); ++i) {
    if (!bit_equal(a.records_[i], b.records_[i])) return false;
  }
  return true;
}

std::string encode_binary(const TraceDataset& dataset) {
  if (dataset.empty()) throw ValidationError("refusing to write an empty trace dataset");
  const bool labeled = dataset.any_labeled();
  const auto n = static_cast<std::size_t>(dataset.n_neurons());

  std::string out;
  out.reserve(kHeaderBytes + dataset.size() * (12 + 4 * n));
  out.append(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n));
  put_le<std::uint32_t>(out, labeled ? kFlagLabels : 0u);
  for (const auto& r : dataset) {
    put_le<std::uint64_t>(out, r.sample_id);
    if (labeled) put_le<std::int32_t>(out, r.label.value_or(-1));
    for (float v : r.activations) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

TraceDataset decode_binary(std::string_view bytes) {
  using K = ParseError::Kind;
  if (bytes.size() < kMagic.size() ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw ParseError(K::Header, 0, "not a trace file: bad magic");
  }
  Reader in(bytes.substr(kMagic.size()));
  const auto at = [&] { return kMagic.size() + in.pos(); };

  const auto version = in.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw ParseError(K::Header, 4, "unsupported trace version " + std::to_string(version));
  }
  const auto n_samples = in.get<std::uint32_t>("n_samples");
  const auto n_neurons = in.get<std::uint32_t>("n_neurons");
  const auto flags = in.get<std::uint32_t>("flags");
  if (n_samples == 0) throw ParseError(K::Header, 8, "trace header declares zero samples");
  if (n_neurons == 0) throw ParseError(K::Header, 12, "trace header declares zero neurons");
  if ((flags & ~kFlagLabels) != 0) {
    throw ParseError(K::Header, 16, "unknown trace flags " + std::to_string(flags));
  }
  const bool labeled = (flags & kFlagLabels) != 0;
  const std::uint64_t record_bytes = 8 + (labeled ? 4 : 0) + 4ull * n_neurons;
  if (in.remaining() < record_bytes * n_samples) {
    throw ParseError(K::Truncated, bytes.size(),
                     "truncated trace file: " + std::to_string(n_samples) + " records of " +
                         std::to_string(record_bytes) + " bytes need " +
                         std::to_string(kHeaderBytes + record_bytes * n_samples) +
                         " bytes, found " + std::to_string(bytes.size()));
  }

  TraceDataset dataset(static_cast<Index>(n_neurons));
  dataset.reserve(n_samples);
  for (std::uint32_t s = 0; s < n_samples; ++s) {
    const auto record_start = at();
    TraceRecord r;
    r.sample_id = in.get<std::uint64_t>("sample_id");
    if (labeled) {
      const auto label_at = at();
      const auto label = in.get<std::int32_t>("label");
      if (label < -1) {
        throw ParseError(K::Syntax, label_at, "invalid label " + std::to_string(label) +
                                                  " at byte " + std::to_string(label_at));
      }
      if (label >= 0) r.label = label;
    }
    r.activations.resize(n_neurons);
    for (std::uint32_t j = 0; j < n_neurons; ++j) {
      const auto value_at = at();
      const float v = std::bit_cast<float>(in.get<std::uint32_t>("activation"));
      if (!std::isfinite(v)) {
        throw ParseError(K::NonFinite, value_at,
                         "non-finite activation at byte " + std::to_string(value_at));
      }
      r.activations[j] = v;
    }
    if (dataset.contains(r.sample_id)) {
      throw ParseError(K::Syntax, record_start,
                       "duplicate sample_id " + std::to_string(r.sample_id) + " at byte " +
                           std::to_string(record_start));
    }
    dataset.add(std::move(r));
  }
  if (in.remaining() != 0) {
    throw ParseError(K::Syntax, at(), "trailing bytes after last record at byte " +
                                          std::to_string(at()));
  }
  return dataset;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view field, T& out) {
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

std::string encode_csv(const TraceDataset& dataset) {
  if (dataset.empty()) throw ValidationError("refusing to write an empty trace dataset");
  std::string out = "sample_id,label";
  for (Index j = 0; j < dataset.n_neurons(); ++j) out += ",a" + std::to_string(j);
  out += '\n';
  char buf[64];
  for (const auto& r : dataset) {
    out += std::to_string(r.sample_id);
    out += ',';
    if (r.label) out += std::to_string(*r.label);
    for (float v : r.activations) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      out += ',';
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

TraceDataset decode_csv(std::string_view text) {
  using K = ParseError::Kind;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  const auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = nl + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line)) throw ParseError(K::Header, 1, "empty CSV trace file");
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "label") {
    throw ParseError(K::Header, 1, "CSV header must be sample_id,label,a0,...");
  }
  for (std::size_t j = 2; j < header.size(); ++j) {
    if (header[j] != "a" + std::to_string(j - 2)) {
      throw ParseError(K::Header, 1, "unexpected CSV column '" + std::string(header[j]) + "'");
    }
  }
  const auto n_neurons = static_cast<Index>(header.size() - 2);

  TraceDataset dataset(n_neurons);
  const auto where = [&] { return " at line " + std::to_string(line_no); };
  while (next_line(line)) {
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError(K::RowWidth, line_no,
                       "row has " + std::to_string(fields.size() - std::min<std::size_t>(2, fields.size())) +
                           " activations, header declares " + std::to_string(n_neurons) + where());
    }
    TraceRecord r;
    if (!parse_number(fields[0], r.sample_id)) {
      throw ParseError(K::Syntax, line_no, "bad sample_id" + where());
    }
    if (!fields[1].empty()) {
      std::int32_t label = 0;
      if (!parse_number(fields[1], label) || label < -1) {
        throw ParseError(K::Syntax, line_no, "bad label" + where());
      }
      if (label >= 0) r.label = label;
    }
    r.activations.resize(n_neurons);
    for (Index j = 0; j < n_neurons; ++j) {
      float v = 0.0f;
      if (!parse_number(fields[static_cast<std::size_t>(j) + 2], v)) {
        throw ParseError(K::Syntax, line_no, "bad activation in column a" + std::to_string(j) + where());
      }
      if (!std::isfinite(v)) {
        throw ParseError(K::NonFinite, line_no,
                         "non-finite activation in column a" + std::to_string(j) + where());
      }
      r.activations[j] = v;
    }
    if (dataset.contains(r.sample_id)) {
      throw ParseError(K::Syntax, line_no, "duplicate sample_id" + where());
    }
    dataset.add(std::move(r));
  }
  if (dataset.empty()) throw ParseError(K::Header, 1, "CSV trace file has no records");
  return dataset;
}

TraceFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? TraceFormat::Csv : TraceFormat::Binary;
}

TraceDataset load_trace(const std::filesystem::path& path, TraceFormat format) {
  const auto bytes = read_file(path);
  return format == TraceFormat::Binary ? decode_binary(bytes) : decode_csv(bytes);
}

void save_trace(const TraceDataset& dataset, const std::filesystem::path& path,
                TraceFormat format) {
  write_file_atomic(path, format == TraceFormat::Binary ? encode_binary(dataset)
                                                        : encode_csv(dataset));
}

DatasetSplit split_dataset(const TraceDataset& dataset, std::size_t split_index,
                           std::uint64_t seed) {
  if (split_index == 0 || split_index >= dataset.size()) {
    throw InvalidArgument("split_index " + std::to_string(split_index) +
                          " must lie strictly between 0 and " + std::to_string(dataset.size()));
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit split{TraceDataset(dataset.n_neurons()), TraceDataset(dataset.n_neurons())};
  split.proper.reserve(split_index);
  split.calibration.reserve(dataset.size() - split_index);
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& part = i < split_index ? split.proper : split.calibration;
    part.add(dataset[order[i]]);
  }
  return split;
}

}  // namespace actmon
