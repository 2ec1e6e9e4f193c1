#include "mile/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mile/rng.hpp"

namespace mile {

namespace {

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  const auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc{} && res.ptr == end;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) cells.push_back("");
  return cells;
}

}  // namespace

RawData parse_delimited(const DatasetSpec& spec) {
  std::ifstream in(spec.path);
  if (!in) throw Error(ErrorKind::Data, "cannot open dataset file " + spec.path);

  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_line(line, spec.delimiter));
  }
  if (rows.empty()) throw Error(ErrorKind::Data, spec.path + ": no rows");

  const std::size_t ncols = rows[0].size();
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].size() != ncols) {
      std::ostringstream msg;
      msg << spec.path << ": row " << r + 1 << " has " << rows[r].size()
          << " cells, expected " << ncols;
      throw Error(ErrorKind::Data, msg.str());
    }

  bool has_header;
  switch (spec.header) {
    case DatasetSpec::Header::Yes: has_header = true; break;
    case DatasetSpec::Header::No: has_header = false; break;
    default: {
      has_header = false;
      double tmp;
      for (const auto& cell : rows[0])
        if (!parse_double(cell, tmp)) {
          has_header = true;
          break;
        }
    }
  }
  const std::size_t first = has_header ? 1 : 0;
  const std::size_t n = rows.size() - first;
  if (n < 10) throw Error(ErrorKind::Data, spec.path + ": needs at least 10 data rows");

  int target = spec.target_column >= 0 ? spec.target_column : static_cast<int>(ncols) - 1;
  if (target < 0 || target >= static_cast<int>(ncols))
    throw Error(ErrorKind::Data, spec.path + ": target column out of range");

  // column typing from the first data row
  std::vector<std::size_t> feature_cols;
  std::vector<bool> numeric_col(ncols, true);
  for (std::size_t c = 0; c < ncols; ++c) {
    if (static_cast<int>(c) == target) continue;
    double tmp;
    numeric_col[c] = parse_double(rows[first][c], tmp);
    feature_cols.push_back(c);
  }

  // category dictionaries (first-appearance order) for string-valued columns
  std::vector<std::vector<std::string>> categories(ncols);
  for (std::size_t c : feature_cols) {
    if (numeric_col[c]) continue;
    for (std::size_t r = first; r < rows.size(); ++r) {
      const auto& cell = rows[r][c];
      if (std::find(categories[c].begin(), categories[c].end(), cell) == categories[c].end())
        categories[c].push_back(cell);
    }
  }

  std::size_t width = 0;
  for (std::size_t c : feature_cols)
    width += numeric_col[c] ? 1 : categories[c].size();

  RawData raw;
  raw.x = Matrix(n, width);
  if (spec.task == TaskKind::Regression)
    raw.y_real.resize(n);
  else
    raw.y_class.resize(n);

  for (std::size_t r = first; r < rows.size(); ++r) {
    const std::size_t i = r - first;
    std::size_t j = 0;
    for (std::size_t c : feature_cols) {
      const auto& cell = rows[r][c];
      if (numeric_col[c]) {
        double v;
        if (!parse_double(cell, v)) {
          std::ostringstream msg;
          msg << spec.path << ": unparseable cell at row " << r + 1 << " column " << c + 1;
          throw Error(ErrorKind::Data, msg.str());
        }
        raw.x(i, j++) = v;
      } else {
        const auto it = std::find(categories[c].begin(), categories[c].end(), cell);
        for (std::size_t k = 0; k < categories[c].size(); ++k)
          raw.x(i, j + k) = (it - categories[c].begin()) == static_cast<std::ptrdiff_t>(k)
                                ? 1.0
                                : 0.0;
        j += categories[c].size();
      }
    }
    const auto& tcell = rows[r][static_cast<std::size_t>(target)];
    if (spec.task == TaskKind::Regression) {
      double v;
      if (!parse_double(tcell, v)) {
        std::ostringstream msg;
        msg << spec.path << ": unparseable cell at row " << r + 1 << " column " << target + 1;
        throw Error(ErrorKind::Data, msg.str());
      }
      raw.y_real[i] = v;
    } else {
      auto it = std::find(raw.class_names.begin(), raw.class_names.end(), tcell);
      if (it == raw.class_names.end()) {
        raw.class_names.push_back(tcell);
        it = raw.class_names.end() - 1;
      }
      raw.y_class[i] = static_cast<int>(it - raw.class_names.begin());
    }
  }
  raw.num_classes = static_cast<int>(raw.class_names.size());
  return raw;
}

namespace {

Dataset gather(const RawData& raw, const std::vector<std::size_t>& idx, std::size_t begin,
               std::size_t end, TaskKind task) {
  Dataset out;
  out.x = Matrix(end - begin, raw.x.cols);
  if (task == TaskKind::Regression)
    out.y_real.resize(end - begin);
  else
    out.y_class.resize(end - begin);
  for (std::size_t r = begin; r < end; ++r) {
    const std::size_t src = idx[r];
    std::copy(raw.x.row(src), raw.x.row(src) + raw.x.cols, out.x.row(r - begin));
    if (task == TaskKind::Regression)
      out.y_real[r - begin] = raw.y_real[src];
    else
      out.y_class[r - begin] = raw.y_class[src];
  }
  return out;
}

}  // namespace

SplitData split_and_standardize(const RawData& raw, TaskKind task, std::uint64_t seed) {
  const std::size_t n = raw.x.rows;
  if (n < 10) throw Error(ErrorKind::Data, "dataset needs at least 10 rows");
  if (task == TaskKind::Classification && raw.num_classes < 2)
    throw Error(ErrorKind::Data, "classification needs at least 2 classes");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(rng, idx);

  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_val = n / 10;

  SplitData split;
  split.task = task;
  split.num_classes = raw.num_classes;
  split.train = gather(raw, idx, 0, n_train, task);
  split.val = gather(raw, idx, n_train, n_train + n_val, task);
  split.test = gather(raw, idx, n_train + n_val, n, task);

  // feature statistics from the train split only
  const std::size_t p = raw.x.cols;
  auto& st = split.standardization;
  st.feature_mean.assign(p, 0.0);
  st.feature_scale.assign(p, 1.0);
  for (std::size_t j = 0; j < p; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) mean += split.train.x(i, j);
    mean /= static_cast<double>(n_train);
    double var = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) {
      const double r = split.train.x(i, j) - mean;
      var += r * r;
    }
    var /= static_cast<double>(n_train);
    st.feature_mean[j] = mean;
    if (var > 0.0) {
      st.feature_scale[j] = std::sqrt(var);
    } else {
      st.feature_scale[j] = 1.0;
      st.constant_features.push_back(static_cast<int>(j));
    }
  }
  auto standardize_x = [&](Dataset& d) {
    for (std::size_t i = 0; i < d.x.rows; ++i)
      for (std::size_t j = 0; j < p; ++j)
        d.x(i, j) = (d.x(i, j) - st.feature_mean[j]) / st.feature_scale[j];
  };
  standardize_x(split.train);
  standardize_x(split.val);
  standardize_x(split.test);

  if (task == TaskKind::Regression) {
    double mean = 0.0;
    for (double y : split.train.y_real) mean += y;
    mean /= static_cast<double>(n_train);
    double var = 0.0;
    for (double y : split.train.y_real) var += (y - mean) * (y - mean);
    var /= static_cast<double>(n_train);
    st.target_mean = mean;
    st.target_scale = var > 0.0 ? std::sqrt(var) : 1.0;
    auto standardize_y = [&](Dataset& d) {
      for (double& y : d.y_real) y = (y - st.target_mean) / st.target_scale;
    };
    standardize_y(split.train);
    standardize_y(split.val);
    standardize_y(split.test);
  }
  return split;
}

SplitData load_and_split(const DatasetSpec& spec, std::uint64_t seed) {
  const RawData raw = parse_delimited(spec);
  return split_and_standardize(raw, spec.task, seed);
}

}  // namespace mile
