#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "actmon/types.hpp"

namespace actmon {

/// Activations of one traced layer for one input, stored at inference
/// precision. Statistics widen to double.
using ActivationVector = VectorXf;

struct TraceRecord {
  std::uint64_t sample_id = 0;
  ActivationVector activations;
  std::optional<std::int32_t> label;
};

/// Equality of two records including the bit patterns of the activations.
bool bit_equal(const TraceRecord& a, const TraceRecord& b);

/// A validated set of trace records sharing one width. Record ids are
/// unique, activations finite, and labels (when present) non-negative.
class TraceDataset {
 public:
  TraceDataset() = default;
  explicit TraceDataset(Index n_neurons);
  TraceDataset(Index n_neurons, std::vector<TraceRecord> records);

  /// Appends a record; throws ValidationError if it breaks an invariant.
  void add(TraceRecord record);
  void reserve(std::size_t n) { records_.reserve(n); }

  Index n_neurons() const noexcept { return n_neurons_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  bool contains(std::uint64_t sample_id) const { return ids_.contains(sample_id); }

  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  const TraceRecord& operator[](std::size_t i) const { return records_[i]; }
  auto begin() const noexcept { return records_.begin(); }
  auto end() const noexcept { return records_.end(); }

  bool any_labeled() const;
  bool all_labeled() const;

  /// Bit-exact equality (record order matters).
  friend bool operator==(const TraceDataset& a, const TraceDataset& b);

 private:
  Index n_neurons_ = 0;
  std::vector<TraceRecord> records_;
  std::unordered_set<std::uint64_t> ids_;
};

/// Throws ValidationError unless `v` is non-empty and finite.
void validate_activations(const Eigen::Ref<const ActivationVector>& v);

enum class TraceFormat { Binary, Csv };

/// Binary container, little-endian:
///   "ATRC" | u32 version=1 | u32 n_samples | u32 n_neurons | u32 flags
///   then per record: u64 sample_id | i32 label (flags bit 0) | f32 x n_neurons
/// Absent labels are written as -1.
std::string encode_binary(const TraceDataset& dataset);
TraceDataset decode_binary(std::string_view bytes);

/// CSV with header `sample_id,label,a0,a1,...`; blank label when absent.
std::string encode_csv(const TraceDataset& dataset);
TraceDataset decode_csv(std::string_view text);

TraceDataset load_trace(const std::filesystem::path& path, TraceFormat format);
void save_trace(const TraceDataset& dataset, const std::filesystem::path& path,
                TraceFormat format);

/// Picks the format from the extension: ".csv" is CSV, anything else binary.
TraceFormat format_for(const std::filesystem::path& path);

struct DatasetSplit {
  TraceDataset proper;
  TraceDataset calibration;
};

/// Seeded shuffle, then the first `split_index` records become the proper
/// training set and the rest the calibration set. Record order inside each
/// part follows the shuffle.
DatasetSplit split_dataset(const TraceDataset& dataset, std::size_t split_index,
                           std::uint64_t seed);

}  // namespace actmon
