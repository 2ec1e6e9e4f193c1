#include "mile/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mile {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

std::string join_doubles(const std::vector<double>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << fmt17(v[i]);
  return out.str();
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

}  // namespace

void RunManifest::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot open " + path + " for writing");

  out << "[dataset]\n";
  out << "path = " << dataset.path << "\n";
  out << "target_column = " << dataset.target_column << "\n";
  out << "task = " << (dataset.task == TaskKind::Regression ? "regression" : "classification")
      << "\n";
  out << "delimiter = " << (dataset.delimiter == '\t' ? std::string("tab")
                                                      : std::string(1, dataset.delimiter))
      << "\n";
  const char* header = dataset.header == DatasetSpec::Header::Auto
                           ? "auto"
                           : (dataset.header == DatasetSpec::Header::Yes ? "yes" : "no");
  out << "header = " << header << "\n";
  out << "split_seed = " << split_seed << "\n";

  out << "\n[model]\n";
  out << "hidden_widths = " << join_ints(hidden_widths) << "\n";
  out << "prior_variance = " << fmt17(prior_variance) << "\n";

  const TrainConfig& tc = run.training;
  out << "\n[training]\n";
  out << "learning_rate = " << fmt17(tc.learning_rate) << "\n";
  out << "beta1 = " << fmt17(tc.beta1) << "\n";
  out << "beta2 = " << fmt17(tc.beta2) << "\n";
  out << "eps = " << fmt17(tc.eps) << "\n";
  out << "weight_decay = " << fmt17(tc.weight_decay) << "\n";
  out << "max_epochs = " << tc.max_epochs << "\n";
  out << "patience = " << tc.patience << "\n";
  out << "minibatch_threshold = " << tc.minibatch_threshold << "\n";
  out << "minibatch_size = " << tc.minibatch_size << "\n";

  const TuningConfig& tu = run.tuning;
  out << "\n[tuning]\n";
  out << "phase1_steps = " << tu.phase1_steps << "\n";
  out << "phase2_steps = " << tu.phase2_steps << "\n";
  out << "phase3_steps = " << tu.phase3_steps << "\n";
  out << "ev_schedule_start = " << fmt17(tu.ev_schedule_start) << "\n";
  out << "ev_schedule_end = " << fmt17(tu.ev_schedule_end) << "\n";
  out << "desired_ess_fraction = " << fmt17(tu.desired_ess_fraction) << "\n";
  out << "ess_floor = " << fmt17(tu.ess_floor) << "\n";
  out << "eevpd_window_samples = " << fmt17(tu.eevpd_window_samples) << "\n";
  out << "trust_in_estimate = " << fmt17(tu.trust_in_estimate) << "\n";
  out << "phase3_param_cap = " << tu.phase3_param_cap << "\n";
  out << "phase3_sample_cap = " << tu.phase3_sample_cap << "\n";
  out << "phase3_L_factor = " << fmt17(tu.phase3_L_factor) << "\n";
  out << "step_size_ceiling = " << fmt17(tu.step_size_ceiling) << "\n";

  out << "\n[run]\n";
  out << "chains = " << run.chains << "\n";
  out << "sampling_steps = " << run.sampling_steps << "\n";
  out << "thinning_interval = " << run.thinning_interval << "\n";
  out << "base_seed = " << run.base_seed << "\n";

  out << "\n[output]\n";
  out << "dir = " << output_dir << "\n";

  if (has_standardization) {
    out << "\n[standardization]\n";
    out << "feature_mean = " << join_doubles(standardization.feature_mean) << "\n";
    out << "feature_scale = " << join_doubles(standardization.feature_scale) << "\n";
    out << "target_mean = " << fmt17(standardization.target_mean) << "\n";
    out << "target_scale = " << fmt17(standardization.target_scale) << "\n";
    out << "constant_features = " << join_ints(standardization.constant_features) << "\n";
  }
}

RunManifest RunManifest::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open manifest " + path);

  RunManifest m;
  std::string section;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      if (section != "dataset" && section != "model" && section != "training" &&
          section != "tuning" && section != "run" && section != "output" &&
          section != "standardization")
        throw Error(ErrorKind::Config, path + ": unknown section [" + section + "]");
      if (section == "standardization") m.has_standardization = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      std::ostringstream msg;
      msg << path << ":" << lineno << ": expected key = value";
      throw Error(ErrorKind::Config, msg.str());
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    auto bad_key = [&]() {
      std::ostringstream msg;
      msg << path << ":" << lineno << ": unknown key '" << key << "' in [" << section << "]";
      return Error(ErrorKind::Config, msg.str());
    };

    try {
      if (section == "dataset") {
        if (key == "path") m.dataset.path = value;
        else if (key == "target_column") m.dataset.target_column = std::stoi(value);
        else if (key == "task") {
          if (value == "regression") m.dataset.task = TaskKind::Regression;
          else if (value == "classification") m.dataset.task = TaskKind::Classification;
          else throw Error(ErrorKind::Config, path + ": task must be regression or classification");
        } else if (key == "delimiter") {
          if (value == "tab") m.dataset.delimiter = '\t';
          else if (value.size() == 1) m.dataset.delimiter = value[0];
          else throw Error(ErrorKind::Config, path + ": delimiter must be one character or 'tab'");
        } else if (key == "header") {
          if (value == "auto") m.dataset.header = DatasetSpec::Header::Auto;
          else if (value == "yes") m.dataset.header = DatasetSpec::Header::Yes;
          else if (value == "no") m.dataset.header = DatasetSpec::Header::No;
          else throw Error(ErrorKind::Config, path + ": header must be auto, yes or no");
        } else if (key == "split_seed") m.split_seed = std::stoull(value);
        else throw bad_key();
      } else if (section == "model") {
        if (key == "hidden_widths") m.hidden_widths = parse_ints(value);
        else if (key == "prior_variance") m.prior_variance = std::stod(value);
        else throw bad_key();
      } else if (section == "training") {
        TrainConfig& tc = m.run.training;
        if (key == "learning_rate") tc.learning_rate = std::stod(value);
        else if (key == "beta1") tc.beta1 = std::stod(value);
        else if (key == "beta2") tc.beta2 = std::stod(value);
        else if (key == "eps") tc.eps = std::stod(value);
        else if (key == "weight_decay") tc.weight_decay = std::stod(value);
        else if (key == "max_epochs") tc.max_epochs = std::stoull(value);
        else if (key == "patience") tc.patience = std::stoull(value);
        else if (key == "minibatch_threshold") tc.minibatch_threshold = std::stoull(value);
        else if (key == "minibatch_size") tc.minibatch_size = std::stoull(value);
        else throw bad_key();
      } else if (section == "tuning") {
        TuningConfig& tu = m.run.tuning;
        if (key == "phase1_steps") tu.phase1_steps = std::stoull(value);
        else if (key == "phase2_steps") tu.phase2_steps = std::stoull(value);
        else if (key == "phase3_steps") tu.phase3_steps = std::stoull(value);
        else if (key == "ev_schedule_start") tu.ev_schedule_start = std::stod(value);
        else if (key == "ev_schedule_end") tu.ev_schedule_end = std::stod(value);
        else if (key == "desired_ess_fraction") tu.desired_ess_fraction = std::stod(value);
        else if (key == "ess_floor") tu.ess_floor = std::stod(value);
        else if (key == "eevpd_window_samples") tu.eevpd_window_samples = std::stod(value);
        else if (key == "trust_in_estimate") tu.trust_in_estimate = std::stod(value);
        else if (key == "phase3_param_cap") tu.phase3_param_cap = std::stoull(value);
        else if (key == "phase3_sample_cap") tu.phase3_sample_cap = std::stoull(value);
        else if (key == "phase3_L_factor") tu.phase3_L_factor = std::stod(value);
        else if (key == "step_size_ceiling") tu.step_size_ceiling = std::stod(value);
        else throw bad_key();
      } else if (section == "run") {
        if (key == "chains") {
          m.run.chains = std::stoi(value);
          m.run.training.ensemble_size = m.run.chains;
        } else if (key == "sampling_steps") m.run.sampling_steps = std::stoull(value);
        else if (key == "thinning_interval") m.run.thinning_interval = std::stoull(value);
        else if (key == "base_seed") m.run.base_seed = std::stoull(value);
        else throw bad_key();
      } else if (section == "output") {
        if (key == "dir") m.output_dir = value;
        else throw bad_key();
      } else if (section == "standardization") {
        Standardization& st = m.standardization;
        if (key == "feature_mean") st.feature_mean = parse_doubles(value);
        else if (key == "feature_scale") st.feature_scale = parse_doubles(value);
        else if (key == "target_mean") st.target_mean = std::stod(value);
        else if (key == "target_scale") st.target_scale = std::stod(value);
        else if (key == "constant_features") st.constant_features = parse_ints(value);
        else throw bad_key();
      } else {
        throw Error(ErrorKind::Config, path + ": key outside any section");
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      std::ostringstream msg;
      msg << path << ":" << lineno << ": cannot parse value for '" << key << "'";
      throw Error(ErrorKind::Config, msg.str());
    }
  }
  return m;
}

}  // namespace mile
