#include "dsgd/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dsgd/error.hpp"
#include "dsgd/random_stream.hpp"

namespace dsgd {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

bool parse_number(std::string_view tok, double& out) {
  if (tok.empty()) return false;
  if (tok.front() == '+') tok.remove_prefix(1);
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

bool parse_index(std::string_view tok, std::size_t& out) {
  if (tok.empty()) return false;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

[[noreturn]] void fail_line(std::size_t line_no, const std::string& msg) {
  throw DataError("line " + std::to_string(line_no) + ": " + msg);
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

void Dataset::validate() const {
  if (y.size() != size()) {
    throw DataError("dataset has " + std::to_string(size()) + " rows but " +
                    std::to_string(y.size()) + " targets");
  }
  if (!X.allFinite()) throw DataError("dataset contains non-finite inputs");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) throw DataError("non-finite target at row " + std::to_string(i));
    if (task == Task::multiclass &&
        (y[i] < 0 || y[i] != std::floor(y[i]) || y[i] >= num_classes)) {
      throw DataError("class index out of range at row " + std::to_string(i));
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.task = task;
  out.num_classes = num_classes;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.y.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.X.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(rows[k]));
    out.y[k] = y[rows[k]];
  }
  return out;
}

DataFormat parse_data_format(std::string_view name) {
  if (name == "libsvm") return DataFormat::libsvm;
  if (name == "csv") return DataFormat::csv;
  throw InvalidArgument("unknown data format '" + std::string(name) + "'");
}

Dataset parse_libsvm(std::istream& in, std::size_t min_dim) {
  struct Row {
    double label;
    std::vector<std::pair<std::size_t, double>> entries;
  };
  std::vector<Row> rows;
  std::size_t dim = min_dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;

    Row row;
    std::size_t pos = 0;
    bool first = true;
    std::size_t last_index = 0;
    while (pos < view.size()) {
      while (pos < view.size() && (view[pos] == ' ' || view[pos] == '\t')) ++pos;
      if (pos >= view.size()) break;
      std::size_t end = pos;
      while (end < view.size() && view[end] != ' ' && view[end] != '\t') ++end;
      const std::string_view tok = view.substr(pos, end - pos);
      pos = end;
      if (first) {
        if (!parse_number(tok, row.label)) fail_line(line_no, "malformed label '" + std::string(tok) + "'");
        first = false;
        continue;
      }
      const std::size_t colon = tok.find(':');
      if (colon == std::string_view::npos) {
        fail_line(line_no, "expected idx:val, got '" + std::string(tok) + "'");
      }
      std::size_t idx;
      double val;
      if (!parse_index(tok.substr(0, colon), idx) || idx == 0) {
        fail_line(line_no, "malformed feature index in '" + std::string(tok) + "'");
      }
      if (!parse_number(tok.substr(colon + 1), val)) {
        fail_line(line_no, "malformed feature value in '" + std::string(tok) + "'");
      }
      if (idx <= last_index) fail_line(line_no, "feature indices must be strictly ascending");
      if (idx > kMaxDimension) {
        fail_line(line_no, "feature index " + std::to_string(idx) + " exceeds the dimension limit");
      }
      last_index = idx;
      row.entries.emplace_back(idx, val);
    }
    dim = std::max(dim, last_index);
    rows.push_back(std::move(row));
  }

  Dataset data;
  data.X = RowMatrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  data.y.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    data.y[i] = rows[i].label;
    for (const auto& [idx, val] : rows[i].entries) {
      data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(idx - 1)) = val;
    }
  }
  data.validate();
  return data;
}

Dataset parse_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool have_header = false;
  while (!have_header && std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto cols = split_on(view, ',');
    if (trim(cols[0]) != "y") fail_line(line_no, "CSV header must start with 'y'");
    for (std::size_t c = 1; c < cols.size(); ++c) {
      if (trim(cols[c]) != "x" + std::to_string(c)) {
        fail_line(line_no, "CSV header column " + std::to_string(c + 1) + " must be 'x" +
                               std::to_string(c) + "'");
      }
    }
    dim = cols.size() - 1;
    have_header = true;
  }
  if (!have_header) throw DataError("CSV input is missing the header row");

  std::vector<double> values;
  std::vector<double> labels;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto cols = split_on(view, ',');
    if (cols.size() != dim + 1) {
      fail_line(line_no, "expected " + std::to_string(dim + 1) + " columns, got " +
                             std::to_string(cols.size()));
    }
    double v;
    if (!parse_number(trim(cols[0]), v)) fail_line(line_no, "malformed target");
    labels.push_back(v);
    for (std::size_t c = 1; c < cols.size(); ++c) {
      if (!parse_number(trim(cols[c]), v)) {
        fail_line(line_no, "malformed value in column " + std::to_string(c + 1));
      }
      values.push_back(v);
    }
  }

  Dataset data;
  data.X.resize(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(dim));
  std::copy(values.begin(), values.end(), data.X.data());
  data.y = std::move(labels);
  data.validate();
  return data;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_libsvm(const Dataset& data, std::ostream& out) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << format_double(data.y[i]);
    for (std::size_t j = 0; j < data.dim(); ++j) {
      const double v = data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (v != 0.0 || std::signbit(v)) out << ' ' << (j + 1) << ':' << format_double(v);
    }
    out << '\n';
  }
}

void write_csv(const Dataset& data, std::ostream& out) {
  out << 'y';
  for (std::size_t j = 0; j < data.dim(); ++j) out << ",x" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << format_double(data.y[i]);
    for (std::size_t j = 0; j < data.dim(); ++j) {
      out << ',' << format_double(data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& path, DataFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path.string() + "'");
  return format == DataFormat::libsvm ? parse_libsvm(in) : parse_csv(in);
}

double synth_regression_target(std::span<const double> x) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  const double r = std::sqrt(sq);
  return std::cos(0.5 * std::numbers::pi * r) * std::exp(-0.1 * std::numbers::pi * r);
}

Dataset synth_regression(std::size_t n, std::uint64_t seed, bool noiseless) {
  if (n < 1) throw InvalidArgument("synth_regression: n must be positive");
  Dataset data;
  data.X.resize(static_cast<Eigen::Index>(n), 2);
  data.y.resize(n);
  RandomStream stream = derive_stream(domain_key(seed, domains::kSynth), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = stream.uniform(-5.0, 5.0);
    const double x1 = stream.uniform(-5.0, 5.0);
    const double noise = stream.normal();
    data.X(static_cast<Eigen::Index>(i), 0) = x0;
    data.X(static_cast<Eigen::Index>(i), 1) = x1;
    const double pt[2] = {x0, x1};
    data.y[i] = synth_regression_target(pt) + (noiseless ? 0.0 : 0.1 * noise);
  }
  return data;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double holdout_fraction,
                                  std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw InvalidArgument("holdout fraction must lie in (0, 1)");
  }
  const std::size_t n = data.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  RandomStream stream = derive_stream(domain_key(seed, domains::kSplit), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = stream.below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  const auto holdout_n = static_cast<std::size_t>(std::llround(static_cast<double>(n) * holdout_fraction));
  const std::span<const std::size_t> all(perm);
  return {data.subset(all.subspan(holdout_n)), data.subset(all.first(holdout_n))};
}

}  // namespace dsgd
