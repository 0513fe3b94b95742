#include "aggvae/prevalence.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "aggvae/container.hpp"
#include "aggvae/error.hpp"

namespace aggvae::inference {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  return out;
}

std::int64_t parse_count(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    throw Error("prevalence line " + std::to_string(line) + ": '" + s + "' is not an integer");
  }
  return v;
}

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

void PrevalenceData::validate() const {
  if (n_tests.size() != labels.size() || n_pos.size() != labels.size()) {
    throw Error("prevalence data: column lengths differ");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (n_tests[i] < 0 || n_pos[i] < 0 || n_pos[i] > n_tests[i]) {
      throw Error("prevalence data: unit '" + labels[i] +
                  "' violates 0 <= n_pos <= n_tests");
    }
  }
}

Eigen::VectorXd PrevalenceData::crude() const {
  Eigen::VectorXd c(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) {
    c(static_cast<Eigen::Index>(i)) =
        n_tests[i] > 0 ? static_cast<double>(n_pos[i]) / static_cast<double>(n_tests[i])
                       : std::numeric_limits<double>::quiet_NaN();
  }
  return c;
}

PrevalenceData parse_prevalence_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  PrevalenceData data;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split(line);
    if (!header_seen) {
      if (fields != std::vector<std::string>{"unit", "n_tests", "n_pos"}) {
        throw Error("prevalence file: expected header 'unit,n_tests,n_pos'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3) {
      throw Error("prevalence line " + std::to_string(line_no) + ": expected 3 fields");
    }
    data.labels.push_back(fields[0]);
    data.n_tests.push_back(parse_count(fields[1], line_no));
    data.n_pos.push_back(parse_count(fields[2], line_no));
  }
  if (!header_seen) throw Error("prevalence file: missing header");
  data.validate();
  return data;
}

PrevalenceData load_prevalence(const std::filesystem::path& path) {
  try {
    return parse_prevalence_csv(read_text_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string prevalence_to_csv(const PrevalenceData& data, const std::string& comment) {
  data.validate();
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += "unit,n_tests,n_pos\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += data.labels[i] + "," + std::to_string(data.n_tests[i]) + "," +
           std::to_string(data.n_pos[i]) + "\n";
  }
  return out;
}

double log_binomial_coefficient(std::int64_t n, std::int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double binomial_log_likelihood(const PrevalenceData& data, const Eigen::VectorXd& eta,
                               Eigen::VectorXd* grad) {
  if (static_cast<std::size_t>(eta.size()) != data.size()) {
    throw Error("binomial likelihood: linear predictor has length " +
                std::to_string(eta.size()) + " for " + std::to_string(data.size()) + " units");
  }
  if (grad != nullptr) grad->resize(eta.size());
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto n = data.n_tests[i];
    const auto k = data.n_pos[i];
    if (n > 0) {
      total += log_binomial_coefficient(n, k) + static_cast<double>(k) * eta(ii) -
               static_cast<double>(n) * softplus(eta(ii));
    }
    if (grad != nullptr) {
      (*grad)(ii) = static_cast<double>(k) - static_cast<double>(n) * logistic(eta(ii));
    }
  }
  return total;
}

}  // namespace aggvae::inference
