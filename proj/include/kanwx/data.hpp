#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "kanwx/error.hpp"

namespace kanwx {

inline constexpr std::size_t kFeatureCount = 10;

// Daily meteorological variables.
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "T2M",   "QV2M",   "RH2M",  "PREC",   "PS",
    "SWDWN", "CSWDWN", "LWDWN", "T2MDEW", "T2MWET"};

inline constexpr std::size_t kPrecFeature = 3;

inline std::size_t feature_index(const std::string& name) {
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    if (name == kFeatureNames[i]) return i;
  throw ConfigError("unknown variable '" + name + "'");
}

// ---- calendar ----

// Civil-calendar day arithmetic (proleptic Gregorian).
inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097LL + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yy + (m <= 2));
}

// Strict YYYY-MM-DD.
inline std::int64_t parse_iso_date(std::string_view s) {
  auto bad = [&] {
    return DataError("invalid ISO date '" + std::string(s) + "'");
  };
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
  unsigned y = 0, m = 0, d = 0;
  auto digits = [&](std::size_t from, std::size_t len, unsigned& out) {
    out = 0;
    for (std::size_t i = from; i < from + len; ++i) {
      if (s[i] < '0' || s[i] > '9') throw bad();
      out = out * 10 + static_cast<unsigned>(s[i] - '0');
    }
  };
  digits(0, 4, y);
  digits(5, 2, m);
  digits(8, 2, d);
  if (m < 1 || m > 12 || d < 1 || d > 31) throw bad();
  return days_from_civil(static_cast<int>(y), m, d);
}

inline std::string format_iso_date(std::int64_t day) {
  int y;
  unsigned m, d;
  civil_from_days(day, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
  return buf;
}

// ---- series ingestion ----

enum class MissingPolicy { reject, forward_fill };

struct WeatherSeries {
  std::string city;
  std::vector<std::int64_t> days;  // consecutive after ingestion
  std::vector<std::array<double, kFeatureCount>> values;

  std::size_t size() const { return days.size(); }
  std::string date_iso(std::size_t i) const { return format_iso_date(days[i]); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (std::string& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }
  return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw DataError("line " + std::to_string(line_no) + ": bad number '" + s +
                    "'");
  return v;
}

}  // namespace detail

// Values at or below this are missing-data sentinels (NASA POWER uses -999).
inline constexpr double kMissingSentinel = -990.0;

// Reads a daily weather CSV: header row with DATE plus the ten variables in
// any column order, one data row per day. Rows are sorted by date on ingest;
// sentinel values and calendar gaps are rejected or forward-filled per
// policy. The returned series has a gap-free daily index.
inline WeatherSeries ingest_csv(const std::string& path, MissingPolicy policy,
                                std::string city = "") {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw SchemaError("'" + path + "': empty file, expected a header row");
  const auto header = detail::split_csv_line(line);

  int date_col = -1;
  std::array<int, kFeatureCount> feat_col;
  feat_col.fill(-1);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name == "DATE") {
      if (date_col >= 0)
        throw SchemaError("'" + path + "': duplicate DATE column");
      date_col = static_cast<int>(c);
      continue;
    }
    bool known = false;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      if (name == kFeatureNames[f]) {
        if (feat_col[f] >= 0)
          throw SchemaError("'" + path + "': duplicate column '" + name + "'");
        feat_col[f] = static_cast<int>(c);
        known = true;
        break;
      }
    }
    if (!known)
      throw SchemaError("'" + path + "': unknown column '" + name + "'");
  }
  if (date_col < 0) throw SchemaError("'" + path + "': missing DATE column");
  for (std::size_t f = 0; f < kFeatureCount; ++f)
    if (feat_col[f] < 0)
      throw SchemaError("'" + path + "': missing column '" +
                        std::string(kFeatureNames[f]) + "'");

  struct Row {
    std::int64_t day;
    std::array<double, kFeatureCount> v;
    std::array<bool, kFeatureCount> missing;
    std::size_t line_no;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
    Row row;
    row.line_no = line_no;
    try {
      row.day = parse_iso_date(cells[static_cast<std::size_t>(date_col)]);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const double v = detail::parse_double(
          cells[static_cast<std::size_t>(feat_col[f])], line_no);
      if (!std::isfinite(v))
        throw DataError("line " + std::to_string(line_no) +
                        ": non-finite value in " + kFeatureNames[f]);
      row.v[f] = v;
      row.missing[f] = v <= kMissingSentinel;
    }
    rows.push_back(row);
  }
  if (rows.empty())
    throw DataError("'" + path + "': no data rows");

  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.day < b.day; });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].day == rows[i - 1].day)
      throw DataError("duplicate date " + format_iso_date(rows[i].day) +
                      " (line " + std::to_string(rows[i].line_no) + ")");

  WeatherSeries series;
  series.city = city.empty() ? path : std::move(city);
  series.days.reserve(rows.size());
  series.values.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Row& row = rows[i];
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      if (!row.missing[f]) continue;
      if (policy == MissingPolicy::reject || series.values.empty())
        throw DataError("line " + std::to_string(row.line_no) +
                        ": missing value in " + kFeatureNames[f]);
      row.v[f] = series.values.back()[f];  // forward fill
    }
    if (!series.days.empty()) {
      const std::int64_t gap = row.day - series.days.back();
      if (gap > 1) {
        if (policy == MissingPolicy::reject)
          throw DataError("calendar gap before " + format_iso_date(row.day) +
                          " (line " + std::to_string(row.line_no) + ")");
        for (std::int64_t g = 1; g < gap; ++g) {
          series.days.push_back(series.days.back() + 1);
          series.values.push_back(series.values.back());
        }
      }
    }
    series.days.push_back(row.day);
    series.values.push_back(row.v);
  }
  return series;
}

// ---- scaling ----

// Which scaling ranges a model family uses: spline-based models need every
// input inside the B-spline grid domain [0, 1]; the recurrent family keeps
// [0, 1] except precipitation, which is mapped to [-1, 1].
enum class ScalingFamily { spline, rnn };

class MinMaxScaler {
 public:
  MinMaxScaler() = default;

  // Statistics come from rows [0, fit_rows) only.
  static MinMaxScaler fit(const WeatherSeries& series, std::size_t fit_rows,
                          ScalingFamily family) {
    if (fit_rows == 0 || fit_rows > series.size())
      throw ContractError("MinMaxScaler::fit: bad fit_rows " +
                          std::to_string(fit_rows));
    MinMaxScaler s;
    s.family_ = family;
    s.fit_rows_ = fit_rows;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      double lo = series.values[0][f], hi = series.values[0][f];
      for (std::size_t i = 1; i < fit_rows; ++i) {
        lo = std::min(lo, series.values[i][f]);
        hi = std::max(hi, series.values[i][f]);
      }
      if (!(hi > lo))
        throw DegenerateFeatureError(std::string("feature ") +
                                     kFeatureNames[f] +
                                     " is constant on the fitted rows");
      s.f_[f].min = lo;
      s.f_[f].max = hi;
      if (family == ScalingFamily::rnn && f == kPrecFeature) {
        s.f_[f].a = -1.0;
        s.f_[f].b = 1.0;
      } else {
        s.f_[f].a = 0.0;
        s.f_[f].b = 1.0;
      }
    }
    return s;
  }

  double transform(std::size_t feature, double x) const {
    const PerFeature& f = f_[feature];
    return f.a + (x - f.min) * (f.b - f.a) / (f.max - f.min);
  }

  double inverse(std::size_t feature, double x) const {
    const PerFeature& f = f_[feature];
    return f.min + (x - f.a) * (f.max - f.min) / (f.b - f.a);
  }

  double feature_min(std::size_t f) const { return f_[f].min; }
  double feature_max(std::size_t f) const { return f_[f].max; }
  double range_lo(std::size_t f) const { return f_[f].a; }
  double range_hi(std::size_t f) const { return f_[f].b; }
  ScalingFamily family() const { return family_; }
  std::size_t fit_rows() const { return fit_rows_; }

 private:
  struct PerFeature {
    double min = 0, max = 1, a = 0, b = 1;
  };
  std::array<PerFeature, kFeatureCount> f_;
  ScalingFamily family_ = ScalingFamily::spline;
  std::size_t fit_rows_ = 0;
};

// ---- windowing and splitting ----

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
  std::size_t total() const { return train + val + test; }
};

// Chronological split at the windowed-sample level: the earliest
// floor(train_frac * n) samples train, the next floor(val_frac * n)
// validate, the remainder tests.
inline SplitCounts chronological_split(std::size_t n, double train_frac = 0.72,
                                       double val_frac = 0.08,
                                       double test_frac = 0.20) {
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw ContractError("split fractions must sum to 1");
  SplitCounts s;
  s.train = static_cast<std::size_t>(
      std::floor(train_frac * static_cast<double>(n)));
  s.val =
      static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n)));
  if (s.train + s.val > n) throw ContractError("split overflows sample count");
  s.test = n - s.train - s.val;
  if (s.train == 0 || s.val == 0 || s.test == 0)
    throw ContractError("empty split for n=" + std::to_string(n));
  return s;
}

// Sliding windows over a scaled series: sample j covers days j..j+w-1 and
// its target is day j+w+horizon-1 of the target feature.
class WindowedDataset {
 public:
  WindowedDataset() = default;

  WindowedDataset(const WeatherSeries& series, const MinMaxScaler& scaler,
                  std::size_t window, std::size_t horizon,
                  std::size_t target_feature)
      : window_(window),
        horizon_(horizon),
        target_(target_feature),
        scaler_(scaler) {
    if (window < 1 || horizon < 1)
      throw ContractError("WindowedDataset: window and horizon must be >= 1");
    if (series.size() < window + horizon)
      throw ContractError("series of length " + std::to_string(series.size()) +
                          " too short for window " + std::to_string(window) +
                          " + horizon " + std::to_string(horizon));
    if (target_feature >= kFeatureCount)
      throw ContractError("target feature index out of range");
    n_days_ = series.size();
    scaled_.resize(n_days_ * kFeatureCount);
    raw_.resize(n_days_ * kFeatureCount);
    days_ = series.days;
    for (std::size_t i = 0; i < n_days_; ++i) {
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        raw_[i * kFeatureCount + f] = series.values[i][f];
        scaled_[i * kFeatureCount + f] =
            scaler.transform(f, series.values[i][f]);
      }
    }
  }

  void set_split(SplitCounts split) {
    if (split.total() != sample_count())
      throw ContractError("split total " + std::to_string(split.total()) +
                          " != sample count " +
                          std::to_string(sample_count()));
    if (split.train == 0 || split.val == 0 || split.test == 0)
      throw ContractError("empty split");
    split_ = split;
  }

  std::size_t sample_count() const { return n_days_ - window_ - horizon_ + 1; }
  std::size_t window_size() const { return window_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t feature_count() const { return kFeatureCount; }
  std::size_t target_feature() const { return target_; }
  const SplitCounts& split() const { return split_; }
  const MinMaxScaler& scaler() const { return scaler_; }

  // Scaled window for sample j, row-major [window x features].
  void copy_window(std::size_t j, double* out) const {
    const double* src = scaled_.data() + j * kFeatureCount;
    std::copy(src, src + window_ * kFeatureCount, out);
  }

  std::size_t target_day(std::size_t j) const {
    return j + window_ + horizon_ - 1;
  }

  double target_scaled(std::size_t j) const {
    return scaled_[target_day(j) * kFeatureCount + target_];
  }

  double target_raw(std::size_t j) const {
    return raw_[target_day(j) * kFeatureCount + target_];
  }

  std::string target_date(std::size_t j) const {
    return format_iso_date(days_[target_day(j)]);
  }

  double scaled_at(std::size_t day, std::size_t feature) const {
    return scaled_[day * kFeatureCount + feature];
  }

  double raw_at(std::size_t day, std::size_t feature) const {
    return raw_[day * kFeatureCount + feature];
  }

 private:
  std::size_t n_days_ = 0;
  std::size_t window_ = 14;
  std::size_t horizon_ = 1;
  std::size_t target_ = 0;
  MinMaxScaler scaler_;
  SplitCounts split_;
  std::vector<double> scaled_;
  std::vector<double> raw_;
  std::vector<std::int64_t> days_;
};

// Raw rows visible to training: the days covered by training windows plus
// their targets. Scaler statistics must come from exactly these rows.
inline std::size_t scaler_fit_rows(std::size_t train_samples,
                                   std::size_t window, std::size_t horizon) {
  return train_samples + window + horizon - 1;
}

// Ingest -> split arithmetic -> train-rows-only scaler fit -> windowing.
inline WindowedDataset build_dataset(const WeatherSeries& series,
                                     ScalingFamily family, std::size_t window,
                                     std::size_t horizon,
                                     std::size_t target_feature,
                                     double train_frac = 0.72,
                                     double val_frac = 0.08,
                                     double test_frac = 0.20) {
  if (series.size() < window + horizon)
    throw ContractError("series of length " + std::to_string(series.size()) +
                        " too short for window " + std::to_string(window));
  const std::size_t n_samples = series.size() - window - horizon + 1;
  const SplitCounts split =
      chronological_split(n_samples, train_frac, val_frac, test_frac);
  const MinMaxScaler scaler = MinMaxScaler::fit(
      series, scaler_fit_rows(split.train, window, horizon), family);
  WindowedDataset ds(series, scaler, window, horizon, target_feature);
  ds.set_split(split);
  return ds;
}

}  // namespace kanwx
