#include "census/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace census {

namespace {

std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    while (!f.empty() && f.front() == ' ') f.erase(f.begin());
    out.push_back(f);
  }
  return out;
}

double to_double(const std::string& text, std::size_t row, const std::string& path) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw std::invalid_argument(path + " row " + std::to_string(row) + ": '" + text + "' is not a number");
  }
  return v;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

ExternalStateForecast read_external_forecast(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (fields_of(line) != std::vector<std::string>{"date", "mean", "lower95", "upper95"}) {
    throw std::invalid_argument(path + ": expected header 'date,mean,lower95,upper95'");
  }
  ExternalStateForecast fc;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto f = fields_of(line);
    if (f.empty() || (f.size() == 1 && f[0].empty())) continue;
    if (f.size() != 4) throw std::invalid_argument(path + " row " + std::to_string(row) + ": expected 4 fields");
    fc.dates.push_back(parse_date(f[0]));
    fc.days.push_back({to_double(f[1], row, path), to_double(f[2], row, path), to_double(f[3], row, path)});
  }
  fc.validate();
  return fc;
}

void write_forecast_csv(const std::string& path, Date first_day, const std::vector<DaySummary>& days) {
  std::ofstream out = open_out(path);
  out << "date,mean,p2.5,p50,p97.5\n";
  for (std::size_t i = 0; i < days.size(); ++i) {
    out << format_date(first_day + std::chrono::days(static_cast<int>(i))) << ',' << fmt(days[i].mean) << ','
        << fmt(days[i].p025) << ',' << fmt(days[i].median) << ',' << fmt(days[i].p975) << '\n';
  }
}

void write_draws_csv(const std::string& path, const DrawTable& table) {
  std::ofstream out = open_out(path);
  out << "chain,draw";
  for (const auto& n : table.names) out << ',' << n;
  out << '\n';
  for (std::size_t c = 0; c < table.chains.size(); ++c) {
    const Eigen::MatrixXd& m = table.chains[c];
    if (m.cols() != static_cast<Eigen::Index>(table.names.size())) {
      throw std::invalid_argument("draw matrix has a different column count than its header");
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out << c << ',' << i;
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << fmt(m(i, j));
      out << '\n';
    }
  }
}

DrawTable read_draws_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  auto header = fields_of(line);
  if (header.size() < 3 || header[0] != "chain" || header[1] != "draw") {
    throw std::invalid_argument(path + ": expected header starting 'chain,draw'");
  }
  DrawTable table;
  table.names.assign(header.begin() + 2, header.end());
  std::map<int, std::vector<std::vector<double>>> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto f = fields_of(line);
    if (f.empty() || (f.size() == 1 && f[0].empty())) continue;
    if (f.size() != header.size()) throw std::invalid_argument(path + " row " + std::to_string(row) + ": wrong field count");
    std::vector<double> v;
    for (std::size_t j = 2; j < f.size(); ++j) v.push_back(to_double(f[j], row, path));
    rows[static_cast<int>(to_double(f[0], row, path))].push_back(std::move(v));
  }
  for (const auto& [chain, r] : rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(table.names.size()));
    for (std::size_t i = 0; i < r.size(); ++i) {
      for (std::size_t j = 0; j < r[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[i][j];
    }
    table.chains.push_back(std::move(m));
  }
  return table;
}

void write_counts_csv(const std::string& path, const std::vector<CountSeries>& series) {
  if (series.empty()) throw std::invalid_argument("no series to write");
  std::ofstream out = open_out(path);
  if (series.size() == 1) {
    out << "date,count\n";
    for (std::size_t i = 0; i < series[0].size(); ++i) out << format_date(series[0].date(i)) << ',' << series[0].counts[i] << '\n';
    return;
  }
  out << "date,site,count\n";
  for (std::size_t i = 0; i < series[0].size(); ++i) {
    for (const auto& s : series) out << format_date(s.date(i)) << ',' << s.site << ',' << s.counts.at(i) << '\n';
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace census
