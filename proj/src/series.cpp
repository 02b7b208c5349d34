#include "census/series.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace census {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Count parse_count(const std::string& text, std::size_t row) {
  std::size_t used = 0;
  long long v = 0;
  bool ok = !text.empty();
  if (ok) {
    try {
      v = std::stoll(text, &used);
    } catch (const std::exception&) {
      ok = false;
    }
  }
  if (!ok || used != text.size()) {
    throw std::invalid_argument("row " + std::to_string(row) + ": count '" + text + "' is not an integer");
  }
  if (v < 0) throw std::invalid_argument("row " + std::to_string(row) + ": count " + text + " is negative");
  return static_cast<Count>(v);
}

}  // namespace

Date parse_date(const std::string& text) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char dash1 = 0;
  char dash2 = 0;
  std::istringstream in(text);
  in >> y >> dash1 >> m >> dash2 >> d;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (in.fail() || dash1 != '-' || dash2 != '-' || !in.eof() || !ymd.ok() || text.size() != 10) {
    throw std::invalid_argument("invalid ISO date '" + text + "'");
  }
  return Date(ymd);
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd(d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

CountSeries CountSeries::slice(std::size_t offset, std::size_t length) const {
  if (offset + length > counts.size()) throw std::out_of_range("series slice out of range");
  CountSeries out{site, date(offset), {}};
  out.counts.assign(counts.begin() + static_cast<std::ptrdiff_t>(offset),
                    counts.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return out;
}

CountSeries CountSeries::between(Date from, Date to) const {
  if (counts.empty() || from < start || to > end() || to < from) {
    throw std::out_of_range("series '" + site + "' does not cover " + format_date(from) + " to " + format_date(to));
  }
  return slice(static_cast<std::size_t>((from - start).count()), static_cast<std::size_t>((to - from).count() + 1));
}

std::vector<double> CountSeries::as_double() const { return {counts.begin(), counts.end()}; }

std::vector<CountSeries> parse_counts_csv(std::istream& in, const std::string& default_site) {
  std::string line;
  std::size_t row = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++row;
    if (!trim(line).empty()) header = split_fields(line);
  }
  const bool multi = header == std::vector<std::string>{"date", "site", "count"};
  if (!multi && header != std::vector<std::string>{"date", "count"}) {
    throw std::invalid_argument("expected header 'date,count' or 'date,site,count'");
  }

  struct Rows {
    std::vector<std::pair<Date, Count>> values;
    std::vector<std::size_t> line;
  };
  std::vector<std::string> order;
  std::map<std::string, Rows> by_site;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw std::invalid_argument("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields");
    }
    Date d;
    try {
      d = parse_date(fields[0]);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("row " + std::to_string(row) + ": " + e.what());
    }
    const std::string site = multi ? fields[1] : default_site;
    const Count y = parse_count(fields.back(), row);
    if (!by_site.count(site)) order.push_back(site);
    by_site[site].values.emplace_back(d, y);
    by_site[site].line.push_back(row);
  }
  if (order.empty()) throw std::invalid_argument("no data rows");

  std::vector<CountSeries> out;
  for (const auto& name : order) {
    Rows& r = by_site[name];
    std::vector<std::size_t> idx(r.values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return r.values[a].first < r.values[b].first; });
    CountSeries s{name, r.values[idx[0]].first, {}};
    std::vector<std::string> gaps;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& [d, y] = r.values[idx[k]];
      if (k > 0) {
        const Date prev = r.values[idx[k - 1]].first;
        if (d == prev) {
          throw std::invalid_argument("site '" + name + "': duplicate date " + format_date(d) + " at row " +
                                      std::to_string(r.line[idx[k]]));
        }
        for (Date m = prev + std::chrono::days(1); m < d; m += std::chrono::days(1)) gaps.push_back(format_date(m));
      }
      s.counts.push_back(y);
    }
    if (!gaps.empty()) {
      std::string msg = "site '" + name + "': missing dates";
      for (const auto& g : gaps) msg += " " + g;
      throw std::invalid_argument(msg);
    }
    out.push_back(std::move(s));
  }
  for (const auto& s : out) {
    if (s.start != out.front().start || s.size() != out.front().size()) {
      throw std::invalid_argument("site '" + s.site + "' covers different dates than site '" + out.front().site + "'");
    }
  }
  return out;
}

std::vector<CountSeries> ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return parse_counts_csv(in, std::filesystem::path(path).stem().string());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

void SplitSpec::validate() const {
  if (test_days < 1 || val_days < 1 || horizon < 1) throw std::invalid_argument("split sizes must be positive");
}

CountSeries SeriesSplit::train_val() const {
  CountSeries out = train;
  out.counts.insert(out.counts.end(), val.counts.begin(), val.counts.end());
  return out;
}

SeriesSplit split(const CountSeries& series, const SplitSpec& spec) {
  spec.validate();
  const std::size_t held = static_cast<std::size_t>(spec.test_days + spec.val_days);
  if (series.size() <= held) {
    throw std::invalid_argument("series '" + series.site + "' has " + std::to_string(series.size()) +
                                " days; need more than " + std::to_string(held) + " to leave a training set");
  }
  const std::size_t train = series.size() - held;
  return {series.slice(0, train), series.slice(train, static_cast<std::size_t>(spec.val_days)),
          series.slice(train + static_cast<std::size_t>(spec.val_days), static_cast<std::size_t>(spec.test_days))};
}

AnomalyReport screen_anomalies(const CountSeries& series, double jump, int neighbours) {
  AnomalyReport r{series.site, {}, {}};
  const auto n = static_cast<std::ptrdiff_t>(series.size());
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const double y = static_cast<double>(series.counts[t]);
    if (series.counts[t] == 0) r.zero_days.push_back(series.date(static_cast<std::size_t>(t)));
    if (t < neighbours || t + neighbours >= n) continue;
    bool far = true;
    for (std::ptrdiff_t k = 1; k <= neighbours && far; ++k) {
      far = std::fabs(y - static_cast<double>(series.counts[t - k])) > jump &&
            std::fabs(y - static_cast<double>(series.counts[t + k])) > jump;
    }
    if (far) r.jump_days.push_back(series.date(static_cast<std::size_t>(t)));
  }
  return r;
}

}  // namespace census
