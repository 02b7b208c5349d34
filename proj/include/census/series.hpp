#pragma once

// Daily count series: CSV ingestion, chronological splitting and the
// optional anomaly screen.

#include <chrono>
#include <iosfwd>
#include <string>
#include <vector>

#include "census/count_likelihoods.hpp"

namespace census {

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD; throws std::invalid_argument otherwise.
Date parse_date(const std::string& text);
std::string format_date(Date d);

struct CountSeries {
  std::string site;
  Date start{};
  std::vector<Count> counts;

  std::size_t size() const noexcept { return counts.size(); }
  Date date(std::size_t i) const { return start + std::chrono::days(static_cast<int>(i)); }
  Date end() const { return date(counts.size() - 1); }
  /// Contiguous slice [offset, offset + length).
  CountSeries slice(std::size_t offset, std::size_t length) const;
  /// Entries dated [from, to] inclusive; throws if not covered.
  CountSeries between(Date from, Date to) const;
  std::vector<double> as_double() const;
};

/// Reads `date,count` (single site, named after the file stem) or
/// `date,site,count`. Sites come back in order of first appearance. Dates
/// must be contiguous per site and all sites must share the same dates.
std::vector<CountSeries> ingest_csv(const std::string& path);
std::vector<CountSeries> parse_counts_csv(std::istream& in, const std::string& default_site);

struct SplitSpec {
  int test_days = 14;
  int val_days = 14;
  int horizon = 14;

  void validate() const;
};

struct SeriesSplit {
  CountSeries train;
  CountSeries val;
  CountSeries test;
  /// Training plus validation days, used for the refit before test scoring.
  CountSeries train_val() const;
};

/// test = last test_days, val = the val_days before, train = the rest
/// (at least one day).
SeriesSplit split(const CountSeries& series, const SplitSpec& spec);

struct AnomalyReport {
  std::string site;
  std::vector<Date> zero_days;
  std::vector<Date> jump_days;  // differs by more than 50 from each of the 4 days before and after
  bool passed() const noexcept { return zero_days.empty() && jump_days.empty(); }
};

AnomalyReport screen_anomalies(const CountSeries& series, double jump = 50.0, int neighbours = 4);

}  // namespace census
