#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nilmgp {

/// Timestamped watt readings for one channel.
struct PowerSeries {
  std::vector<std::int64_t> timestamps;  // epoch seconds, strictly increasing
  std::vector<double> watts;
  std::string channel_name;

  std::size_t size() const { return watts.size(); }
  bool empty() const { return watts.empty(); }

  /// Throws InputError if lengths differ, timestamps are not strictly
  /// increasing, or (when require_non_negative) any reading is negative.
  void validate(bool require_non_negative = true) const;

  bool operator==(const PowerSeries&) const = default;
};

inline constexpr const char* kRefrigerator = "refrigerator";
inline constexpr const char* kDishwasher = "dishwasher";
inline constexpr const char* kMicrowave = "microwave";
inline constexpr const char* kMains = "mains";

/// The three appliances summed into the artificial aggregate.
const std::vector<std::string>& aggregate_appliances();

/// Maps a channel label to its canonical name, case-insensitively, through a
/// fixed alias table ("fridge" -> "refrigerator", "dish_washer" -> "dishwasher",
/// ...). Returns nullopt for labels outside the table.
std::optional<std::string> canonical_channel_name(std::string_view label);

struct Home {
  std::string home_id;
  PowerSeries mains;
  std::map<std::string, PowerSeries> appliances;

  const PowerSeries& appliance(const std::string& name) const;
};

struct Fold {
  std::vector<std::string> train_home_ids;
  std::string test_home_id;
};

struct FoldPlan {
  std::vector<Fold> folds;
};

/// Reads a two-column `<epoch_seconds><sep><watts>` file (comma or whitespace,
/// `#` comment lines skipped). Duplicate timestamps are averaged and rows are
/// sorted by time.
PowerSeries load_channel(const std::filesystem::path& path, const std::string& channel_name);

/// Same parser over in-memory text; `source` names the origin in errors.
PowerSeries parse_channel(std::string_view text, const std::string& channel_name,
                          const std::string& source = "<memory>");

/// Writes a series in the format load_channel reads, with round-trip precision.
void write_channel(const std::filesystem::path& path, const PowerSeries& series);

/// Means of readings within each [m, m + 60) bucket; empty buckets dropped.
/// Output timestamps are the bucket starts.
PowerSeries resample_minute(const PowerSeries& series);

/// Pointwise sum of refrigerator, dishwasher and microwave over the minutes
/// all three share.
PowerSeries artificial_aggregate(const Home& home);

/// Adds a constant load to every reading.
PowerSeries inject_bias(const PowerSeries& series, double bias_watts);

/// Leave-one-home-out plan, one fold per home in input order.
FoldPlan make_folds(const std::vector<Home>& homes);

/// Restricts a series to the given timestamps (which must all be present).
PowerSeries align_to(const PowerSeries& series, const std::vector<std::int64_t>& timestamps);

/// Resamples every channel to minutes, rebuilds mains as the artificial
/// aggregate and trims appliance channels to the aggregate's minutes.
Home prepare_home(const Home& raw);

/// Loads a home directory: mains plus the three aggregate appliances, file
/// names matched through the alias table (`<label>.dat`). A missing mains file
/// is allowed since mains is rebuilt from the appliances.
Home load_home(const std::filesystem::path& dir);

/// Writes a home as `<dir>/<channel>.dat` files.
void write_home(const std::filesystem::path& dir, const Home& home);

/// Manifest: one home directory per line, relative to the manifest's
/// directory; blank and `#` lines skipped.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::filesystem::path>& home_dirs);

std::vector<Home> load_homes(const std::filesystem::path& manifest);

}  // namespace nilmgp
