#include "mile/sample_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mile {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw Error(ErrorKind::Data, "sample file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw Error(ErrorKind::Data, "sample file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_samples(const std::string& path, const PosteriorSamples& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Data, "cannot open " + path + " for writing");

  out.write("MILE", 4);
  put_u32(out, kSampleFormatVersion);
  put_u64(out, samples.num_chains);
  put_u64(out, samples.samples_per_chain);
  put_u64(out, samples.dim);
  put_u64(out, samples.thinning);
  put_u64(out, samples.base_seed);
  for (double v : samples.data) put_f64(out, v);

  // trailing chain-report block; wallclock lives in the run log only so two
  // identical runs produce byte-identical files
  out << "[meta]\n";
  out << "arch =";
  for (std::size_t i = 0; i < samples.arch_widths.size(); ++i)
    out << (i ? "," : " ") << samples.arch_widths[i];
  out << "\n";
  for (const auto& r : samples.reports) {
    out << "[chain " << r.chain_id << "]\n";
    out << "failed = " << (r.failed ? 1 : 0) << "\n";
    out << "failure_reason = " << r.failure_reason << "\n";
    out << "step_size = " << fmt17(r.step_size) << "\n";
    out << "decoherence_length = " << fmt17(r.decoherence_length) << "\n";
    out << "initial_L = " << fmt17(r.initial_L) << "\n";
    out << "final_eevpd = " << fmt17(r.final_eevpd) << "\n";
    out << "halving_events = " << r.halving_events << "\n";
    out << "steps_executed = " << r.steps_executed << "\n";
    out << "retained_samples = " << r.retained_samples << "\n";
    out << "gradient_evals = " << r.gradient_evals << "\n";
    out << "setup_gradient_evals = " << r.setup_gradient_evals << "\n";
    out << "recovery_gradient_evals = " << r.recovery_gradient_evals << "\n";
  }
  if (!out) throw Error(ErrorKind::Data, "failed writing " + path);
}

PosteriorSamples load_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Data, "cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MILE", 4) != 0)
    throw Error(ErrorKind::Data, path + ": not a MILE sample file (bad magic)");
  const std::uint32_t version = get_u32(in);
  if (version != kSampleFormatVersion)
    throw Error(ErrorKind::Data, path + ": unsupported sample format version");

  PosteriorSamples samples;
  samples.num_chains = get_u64(in);
  samples.samples_per_chain = get_u64(in);
  samples.dim = get_u64(in);
  samples.thinning = get_u64(in);
  samples.base_seed = get_u64(in);

  const std::size_t total = samples.num_chains * samples.samples_per_chain * samples.dim;
  samples.data.resize(total);
  for (std::size_t i = 0; i < total; ++i) samples.data[i] = get_f64(in);

  samples.reports.resize(samples.num_chains);
  samples.tuned.resize(samples.num_chains);
  ChainReport* current = nullptr;
  std::string line;
  bool in_meta = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "[meta]") {
      in_meta = true;
      continue;
    }
    if (line.rfind("[chain ", 0) == 0) {
      in_meta = false;
      const int id = std::stoi(line.substr(7));
      if (id < 0 || static_cast<std::size_t>(id) >= samples.num_chains)
        throw Error(ErrorKind::Data, path + ": chain id out of range");
      current = &samples.reports[id];
      current->chain_id = id;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Data, path + ": malformed report line");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    if (!value.empty() && value.front() == ' ') value.erase(0, 1);
    if (in_meta) {
      if (key == "arch") {
        samples.arch_widths.clear();
        std::istringstream ss(value);
        std::string tok;
        while (std::getline(ss, tok, ','))
          if (!tok.empty()) samples.arch_widths.push_back(std::stoi(tok));
      }
      continue;
    }
    if (!current) throw Error(ErrorKind::Data, path + ": report line outside a chain block");
    if (key == "failed")
      current->failed = value == "1";
    else if (key == "failure_reason")
      current->failure_reason = value;
    else if (key == "step_size")
      current->step_size = std::stod(value);
    else if (key == "decoherence_length")
      current->decoherence_length = std::stod(value);
    else if (key == "initial_L")
      current->initial_L = std::stod(value);
    else if (key == "final_eevpd")
      current->final_eevpd = std::stod(value);
    else if (key == "halving_events")
      current->halving_events = std::stoull(value);
    else if (key == "steps_executed")
      current->steps_executed = std::stoull(value);
    else if (key == "retained_samples")
      current->retained_samples = std::stoull(value);
    else if (key == "gradient_evals")
      current->gradient_evals = std::stoull(value);
    else if (key == "setup_gradient_evals")
      current->setup_gradient_evals = std::stoull(value);
    else if (key == "recovery_gradient_evals")
      current->recovery_gradient_evals = std::stoull(value);
    else
      throw Error(ErrorKind::Data, path + ": unknown report key '" + key + "'");
  }
  return samples;
}

}  // namespace mile
