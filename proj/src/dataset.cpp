#include "arft/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace arft {

namespace {

// Splits one CSV record on commas. No quoting support: the metric tables this
// project consumes are plain numeric CSVs.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ParseError("row " + std::to_string(row) + ", column '" + col + "': cannot parse '" +
                     cell + "' as a number");
  if (!std::isfinite(v))
    throw ParseError("row " + std::to_string(row) + ", column '" + col + "': value '" + cell +
                     "' is not finite");
  return v;
}

std::string file_stem(const std::string& path) {
  const std::size_t slash = path.find_last_of("/\\");
  std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
  const std::size_t dot = name.find_last_of('.');
  if (dot != std::string::npos && dot > 0) name = name.substr(0, dot);
  return name;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void Dataset::validate() const {
  std::set<std::string> seen;
  for (const auto& name : metric_names)
    if (!seen.insert(name).second) throw SchemaError("duplicate metric name '" + name + "'");
  for (std::size_t r = 0; r < features.size(); ++r) {
    if (features[r].size() != metric_names.size())
      throw SchemaError("row " + std::to_string(r + 1) + " has " +
                        std::to_string(features[r].size()) + " values, expected " +
                        std::to_string(metric_names.size()));
    for (double v : features[r])
      if (!std::isfinite(v))
        throw SchemaError("row " + std::to_string(r + 1) + " contains a non-finite value");
  }
  if (labels) {
    if (labels->size() != features.size())
      throw SchemaError("label count " + std::to_string(labels->size()) +
                        " does not match row count " + std::to_string(features.size()));
    for (int y : *labels)
      if (y != 0 && y != 1)
        throw SchemaError("label value " + std::to_string(y) + " is not 0 or 1");
  }
}

Dataset load_csv(const std::string& path, const std::optional<std::string>& label_column) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file, expected a header row");

  const std::vector<std::string> header = split_csv_line(strip_cr(line));
  {
    std::set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second) throw SchemaError(path + ": duplicate header column '" + h + "'");
  }

  std::size_t label_idx = header.size();  // sentinel: no label column
  if (label_column) {
    const auto it = std::find(header.begin(), header.end(), *label_column);
    if (it == header.end())
      throw SchemaError(path + ": label column '" + *label_column + "' not found in header");
    label_idx = static_cast<std::size_t>(it - header.begin());
  }

  Dataset d;
  d.project_id = file_stem(path);
  for (std::size_t i = 0; i < header.size(); ++i)
    if (i != label_idx) d.metric_names.push_back(header[i]);
  if (label_column) d.labels.emplace();

  std::size_t row = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row;
    line = strip_cr(line);
    if (line.empty()) continue;  // tolerate a trailing blank line
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(path + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    std::vector<double> feat;
    feat.reserve(d.metric_names.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const double v = parse_cell(cells[i], row, header[i]);
      if (i == label_idx) {
        if (v != 0.0 && v != 1.0)
          throw ParseError(path + ": row " + std::to_string(row) + ", column '" + header[i] +
                           "': label '" + cells[i] + "' is not 0 or 1");
        d.labels->push_back(static_cast<int>(v));
      } else {
        feat.push_back(v);
      }
    }
    d.features.push_back(std::move(feat));
  }

  d.validate();
  return d;
}

void write_csv(const Dataset& d, const std::string& path, bool with_labels) {
  if (with_labels && !d.labels)
    throw ContractError("write_csv: dataset '" + d.project_id + "' has no labels");
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open file for writing: " + path);

  for (std::size_t i = 0; i < d.metric_names.size(); ++i) {
    if (i) out << ',';
    out << d.metric_names[i];
  }
  if (with_labels) out << ",label";
  out << '\n';

  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    for (std::size_t c = 0; c < d.features[r].size(); ++c) {
      if (c) out << ',';
      out << fmt_double(d.features[r][c]);
    }
    if (with_labels) out << ',' << (*d.labels)[r];
    out << '\n';
  }
  if (!out) throw ParseError("write failed: " + path);
}

GlobalNormalizeResult global_normalize(const Dataset& source, const Dataset& target, double eps) {
  if (eps <= 0.0) throw ConfigError("global_normalize: eps must be > 0");
  if (source.metric_names != target.metric_names)
    throw SchemaError("global_normalize: source and target metric schemas differ");

  const std::size_t p = source.n_features();
  const std::size_t n = source.n_rows() + target.n_rows();
  if (n == 0) throw ContractError("global_normalize: no rows");

  NormalizationStats stats;
  stats.eps = eps;
  stats.mean.assign(p, 0.0);
  stats.std.assign(p, 0.0);

  for (const auto* d : {&source, &target})
    for (const auto& row : d->features)
      for (std::size_t j = 0; j < p; ++j) stats.mean[j] += row[j];
  for (std::size_t j = 0; j < p; ++j) stats.mean[j] /= static_cast<double>(n);

  for (const auto* d : {&source, &target})
    for (const auto& row : d->features)
      for (std::size_t j = 0; j < p; ++j) {
        const double c = row[j] - stats.mean[j];
        stats.std[j] += c * c;
      }
  for (std::size_t j = 0; j < p; ++j)
    stats.std[j] = std::sqrt(stats.std[j] / static_cast<double>(n));

  auto apply = [&](const Dataset& d) {
    Dataset out = d;
    for (auto& row : out.features)
      for (std::size_t j = 0; j < p; ++j)
        row[j] = (row[j] - stats.mean[j]) / (stats.std[j] + eps);
    return out;
  };
  return GlobalNormalizeResult{apply(source), apply(target), std::move(stats)};
}

Dataset random_oversample(const Dataset& d, Rng& rng) {
  if (!d.labels) throw ContractError("random_oversample: dataset has no labels");

  std::vector<std::size_t> idx0, idx1;
  for (std::size_t i = 0; i < d.labels->size(); ++i)
    ((*d.labels)[i] == 1 ? idx1 : idx0).push_back(i);
  if (idx0.empty() || idx1.empty())
    throw ContractError("random_oversample: dataset '" + d.project_id +
                        "' has a single class, nothing to balance");

  const std::vector<std::size_t>& minority = idx1.size() < idx0.size() ? idx1 : idx0;
  const std::size_t deficit =
      (idx1.size() < idx0.size() ? idx0.size() - idx1.size() : idx1.size() - idx0.size());

  std::vector<std::size_t> order(d.n_rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t k = 0; k < deficit; ++k)
    order.push_back(minority[rng.uniform_int(minority.size())]);
  rng.shuffle(order);

  Dataset out;
  out.project_id = d.project_id;
  out.metric_names = d.metric_names;
  out.labels.emplace();
  out.features.reserve(order.size());
  out.labels->reserve(order.size());
  for (std::size_t i : order) {
    out.features.push_back(d.features[i]);
    out.labels->push_back((*d.labels)[i]);
  }
  return out;
}

Dataset concat_projects(const std::vector<Dataset>& datasets) {
  if (datasets.empty()) throw ContractError("concat_projects: empty dataset list");
  for (const auto& d : datasets) {
    if (!d.labels)
      throw ContractError("concat_projects: dataset '" + d.project_id + "' has no labels");
    if (d.metric_names != datasets[0].metric_names)
      throw SchemaError("concat_projects: metric schema of '" + d.project_id +
                        "' differs from '" + datasets[0].project_id + "'");
  }

  Dataset out;
  out.metric_names = datasets[0].metric_names;
  out.labels.emplace();
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    if (k) out.project_id += '+';
    out.project_id += datasets[k].project_id;
    out.features.insert(out.features.end(), datasets[k].features.begin(),
                        datasets[k].features.end());
    out.labels->insert(out.labels->end(), datasets[k].labels->begin(), datasets[k].labels->end());
  }
  return out;
}

}  // namespace arft
