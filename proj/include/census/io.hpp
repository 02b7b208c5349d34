#pragma once

// File formats: forecast tables, draw files, count files and external
// state forecasts.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "census/baselines.hpp"
#include "census/forecast.hpp"
#include "census/series.hpp"

namespace census {

/// Header `date,mean,lower95,upper95`.
ExternalStateForecast read_external_forecast(const std::string& path);

/// Header `date,mean,p2.5,p50,p97.5`, one row per forecast day.
void write_forecast_csv(const std::string& path, Date first_day, const std::vector<DaySummary>& days);

struct DrawTable {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;
};

/// Header `chain,draw,<names...>`; values written with 17 significant digits
/// so they read back bit-identically.
void write_draws_csv(const std::string& path, const DrawTable& table);
DrawTable read_draws_csv(const std::string& path);

/// `date,count` for one series, `date,site,count` for several.
void write_counts_csv(const std::string& path, const std::vector<CountSeries>& series);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace census
