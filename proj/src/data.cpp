#include "nilmgp/data.hpp"

#include "nilmgp/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace nilmgp {

namespace fs = std::filesystem;

namespace {

std::string normalize_label(std::string_view label) {
  std::string out;
  out.reserve(label.size());
  for (char ch : label) {
    if (ch == '-' || ch == ' ') {
      out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_double(std::string_view token, double& out) {
  token = trim(token);
  if (token.empty()) return false;
  if (token.front() == '+') token.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size() && std::isfinite(out);
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

void PowerSeries::validate(bool require_non_negative) const {
  if (timestamps.size() != watts.size()) {
    throw InputError("series '" + channel_name + "' has mismatched timestamp/value lengths");
  }
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] <= timestamps[i - 1]) {
      throw InputError("series '" + channel_name + "' timestamps are not strictly increasing");
    }
  }
  for (double w : watts) {
    if (!std::isfinite(w)) throw InputError("series '" + channel_name + "' has non-finite watts");
    if (require_non_negative && w < 0.0) {
      throw InputError("series '" + channel_name + "' has negative watts");
    }
  }
}

const std::vector<std::string>& aggregate_appliances() {
  static const std::vector<std::string> names{kRefrigerator, kDishwasher, kMicrowave};
  return names;
}

std::optional<std::string> canonical_channel_name(std::string_view label) {
  static const std::map<std::string, std::string> aliases{
      {"refrigerator", kRefrigerator}, {"fridge", kRefrigerator},
      {"refridgerator", kRefrigerator}, {"fridge_freezer", kRefrigerator},
      {"dishwasher", kDishwasher},     {"dish_washer", kDishwasher},
      {"dishwaser", kDishwasher},      {"microwave", kMicrowave},
      {"micro_wave", kMicrowave},      {"microwave_oven", kMicrowave},
      {"mains", kMains},               {"main", kMains},
      {"aggregate", kMains},           {"site_meter", kMains},
  };
  const auto it = aliases.find(normalize_label(label));
  if (it == aliases.end()) return std::nullopt;
  return it->second;
}

const PowerSeries& Home::appliance(const std::string& name) const {
  const auto it = appliances.find(name);
  if (it == appliances.end()) {
    throw DataError("home '" + home_id + "' has no '" + name + "' channel");
  }
  return it->second;
}

PowerSeries parse_channel(std::string_view text, const std::string& channel_name,
                          const std::string& source) {
  std::vector<std::pair<std::int64_t, double>> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    const auto raw_line = text.substr(pos, eol == std::string_view::npos ? text.npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    const auto line = trim(raw_line);
    if (line.empty() || line.front() == '#') continue;

    const auto where = [&] { return source + ":" + std::to_string(line_no); };
    auto sep = line.find(',');
    std::string_view first;
    std::string_view second;
    if (sep != std::string_view::npos) {
      first = line.substr(0, sep);
      second = line.substr(sep + 1);
    } else {
      sep = line.find_first_of(" \t");
      if (sep == std::string_view::npos) throw ParseError(where() + ": expected two columns");
      first = line.substr(0, sep);
      second = line.substr(sep + 1);
    }
    double t = 0.0;
    double w = 0.0;
    if (!parse_double(first, t)) throw ParseError(where() + ": bad timestamp '" + std::string(trim(first)) + "'");
    if (!parse_double(second, w)) throw ParseError(where() + ": bad watts '" + std::string(trim(second)) + "'");
    if (w < 0.0) throw InputError(where() + ": negative watts " + format_double(w));
    rows.emplace_back(static_cast<std::int64_t>(std::floor(t)), w);
  }

  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  PowerSeries series;
  series.channel_name = channel_name;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < rows.size() && rows[j].first == rows[i].first) sum += rows[j++].second;
    series.timestamps.push_back(rows[i].first);
    series.watts.push_back(sum / static_cast<double>(j - i));
    i = j;
  }
  return series;
}

PowerSeries load_channel(const fs::path& path, const std::string& channel_name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read channel file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_channel(buffer.str(), channel_name, path.string());
}

void write_channel(const fs::path& path, const PowerSeries& series) {
  series.validate(false);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write channel file '" + path.string() + "'");
  out << "# " << series.channel_name << "\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << series.timestamps[i] << ',' << format_double(series.watts[i]) << '\n';
  }
}

PowerSeries resample_minute(const PowerSeries& series) {
  if (series.empty()) throw InputError("cannot resample an empty series");
  series.validate(false);
  PowerSeries out;
  out.channel_name = series.channel_name;
  const auto bucket_of = [](std::int64_t t) {
    // floor division so negative epochs land in the right bucket
    std::int64_t q = t / 60;
    if (t % 60 != 0 && t < 0) --q;
    return q * 60;
  };
  for (std::size_t i = 0; i < series.size();) {
    const std::int64_t bucket = bucket_of(series.timestamps[i]);
    double sum = 0.0;
    std::size_t j = i;
    while (j < series.size() && bucket_of(series.timestamps[j]) == bucket) sum += series.watts[j++];
    out.timestamps.push_back(bucket);
    out.watts.push_back(sum / static_cast<double>(j - i));
    i = j;
  }
  return out;
}

PowerSeries artificial_aggregate(const Home& home) {
  const auto& names = aggregate_appliances();
  std::vector<const PowerSeries*> channels;
  for (const auto& name : names) channels.push_back(&home.appliance(name));

  PowerSeries out;
  out.channel_name = kMains;
  std::vector<std::size_t> cursor(channels.size(), 0);
  const auto& lead = *channels.front();
  for (std::size_t i = 0; i < lead.size(); ++i) {
    const std::int64_t t = lead.timestamps[i];
    double total = lead.watts[i];
    bool present = true;
    for (std::size_t c = 1; c < channels.size(); ++c) {
      const auto& ts = channels[c]->timestamps;
      auto& k = cursor[c];
      while (k < ts.size() && ts[k] < t) ++k;
      if (k == ts.size() || ts[k] != t) {
        present = false;
        break;
      }
      total += channels[c]->watts[k];
    }
    if (!present) continue;
    out.timestamps.push_back(t);
    out.watts.push_back(total);
  }
  if (out.empty()) {
    throw DataError("home '" + home.home_id + "': appliance channels share no timestamps");
  }
  return out;
}

PowerSeries inject_bias(const PowerSeries& series, double bias_watts) {
  PowerSeries out = series;
  for (double& w : out.watts) w += bias_watts;
  return out;
}

FoldPlan make_folds(const std::vector<Home>& homes) {
  if (homes.size() < 2) throw ConfigError("leave-one-home-out needs at least two homes");
  std::set<std::string> seen;
  for (const auto& h : homes) {
    if (!seen.insert(h.home_id).second) throw ConfigError("duplicate home id '" + h.home_id + "'");
  }
  FoldPlan plan;
  for (const auto& test : homes) {
    Fold fold;
    fold.test_home_id = test.home_id;
    for (const auto& other : homes) {
      if (other.home_id != test.home_id) fold.train_home_ids.push_back(other.home_id);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

PowerSeries align_to(const PowerSeries& series, const std::vector<std::int64_t>& timestamps) {
  PowerSeries out;
  out.channel_name = series.channel_name;
  out.timestamps = timestamps;
  out.watts.reserve(timestamps.size());
  std::size_t k = 0;
  for (const std::int64_t t : timestamps) {
    while (k < series.size() && series.timestamps[k] < t) ++k;
    if (k == series.size() || series.timestamps[k] != t) {
      throw DataError("series '" + series.channel_name + "' has no reading at t=" +
                      std::to_string(t));
    }
    out.watts.push_back(series.watts[k]);
  }
  return out;
}

Home prepare_home(const Home& raw) {
  Home out;
  out.home_id = raw.home_id;
  for (const auto& name : aggregate_appliances()) {
    out.appliances[name] = resample_minute(raw.appliance(name));
  }
  out.mains = artificial_aggregate(out);
  for (auto& [name, series] : out.appliances) series = align_to(series, out.mains.timestamps);
  return out;
}

Home load_home(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("home directory '" + dir.string() + "' not found");
  Home home;
  home.home_id = dir.filename().string();
  if (home.home_id.empty()) home.home_id = dir.parent_path().filename().string();

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".dat") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    const auto name = canonical_channel_name(file.stem().string());
    if (!name) continue;
    if (*name == kMains) {
      if (!home.mains.empty()) throw DataError(dir.string() + ": more than one mains channel");
      home.mains = load_channel(file, kMains);
    } else {
      if (home.appliances.count(*name)) {
        throw DataError(dir.string() + ": more than one '" + *name + "' channel");
      }
      home.appliances[*name] = load_channel(file, *name);
    }
  }
  for (const auto& name : aggregate_appliances()) {
    if (!home.appliances.count(name)) {
      throw DataError(dir.string() + ": missing '" + name + "' channel");
    }
  }
  return home;
}

void write_home(const fs::path& dir, const Home& home) {
  fs::create_directories(dir);
  if (!home.mains.empty()) write_channel(dir / "mains.dat", home.mains);
  for (const auto& [name, series] : home.appliances) write_channel(dir / (name + ".dat"), series);
}

std::vector<fs::path> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read manifest '" + path.string() + "'");
  std::vector<fs::path> dirs;
  std::string line;
  while (std::getline(in, line)) {
    const auto entry = trim(line);
    if (entry.empty() || entry.front() == '#') continue;
    fs::path p{std::string(entry)};
    dirs.push_back(p.is_absolute() ? p : path.parent_path() / p);
  }
  if (dirs.empty()) throw DataError("manifest '" + path.string() + "' lists no homes");
  return dirs;
}

void write_manifest(const fs::path& path, const std::vector<fs::path>& home_dirs) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write manifest '" + path.string() + "'");
  for (const auto& dir : home_dirs) out << dir.generic_string() << '\n';
}

std::vector<Home> load_homes(const fs::path& manifest) {
  std::vector<Home> homes;
  for (const auto& dir : read_manifest(manifest)) homes.push_back(load_home(dir));
  return homes;
}

}  // namespace nilmgp
