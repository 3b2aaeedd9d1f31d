#include "spgs/survival_data.hpp"

#include "spgs/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

namespace spgs {

Dataset::Dataset(std::vector<SubjectRecord> records) : records_(std::move(records)) {
  p_ = records_.empty() ? 0 : static_cast<int>(records_.front().covariates.size());
  std::unordered_set<std::string> seen;
  for (const auto& r : records_) {
    auto fail = [&](const std::string& why) {
      throw ValidationError("subject '" + r.id + "': " + why);
    };
    if (!std::isfinite(r.entry) || r.entry < 0.0) fail("entry must be finite and >= 0");
    if (!std::isfinite(r.time_on_study) || r.time_on_study < 0.0)
      fail("time on study must be finite and >= 0");
    if (static_cast<int>(r.covariates.size()) != p_)
      fail("expected " + std::to_string(p_) + " covariates, found " +
           std::to_string(r.covariates.size()));
    for (double z : r.covariates)
      if (!std::isfinite(z)) fail("covariates must be finite");
    if (r.arm != Arm::control && r.arm != Arm::treatment) fail("arm must be 0 or 1");
    if (!seen.insert(r.id).second) fail("duplicate id");
  }
}

double Dataset::last_observation_time() const {
  double last = 0.0;
  for (const auto& r : records_) last = std::max(last, r.entry + r.time_on_study);
  return last;
}

Snapshot::Snapshot(double calendar_time, std::vector<SnapshotRecord> records,
                   Eigen::MatrixXd covariates)
    : u_(calendar_time), records_(std::move(records)), z_(std::move(covariates)) {
  for (const auto& r : records_) {
    if (!r.enrolled) continue;
    ++enrolled_[arm_index(r.arm)];
    if (r.event_observed) ++events_[arm_index(r.arm)];
  }
}

Snapshot snapshot(const Dataset& data, double u) {
  if (!(u >= 0.0) || !std::isfinite(u))
    throw DomainError("calendar time must be finite and >= 0");
  const int p = data.num_covariates();
  std::vector<SnapshotRecord> out;
  out.reserve(data.size());
  Eigen::MatrixXd z(static_cast<Eigen::Index>(data.size()), p);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data[i];
    const double elapsed = std::max(0.0, u - r.entry);
    SnapshotRecord s{};
    s.arm = r.arm;
    s.enrolled = elapsed > 0.0;
    s.follow_up = std::min(r.time_on_study, elapsed);
    s.event_observed = s.enrolled && r.event && r.time_on_study <= elapsed;
    out.push_back(s);
    for (int k = 0; k < p; ++k) z(static_cast<Eigen::Index>(i), k) = r.covariates[k];
  }
  return Snapshot(u, std::move(out), std::move(z));
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    auto field = line.substr(start, pos == std::string_view::npos ? pos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
    fields.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

double parse_number(std::string_view text, int line, const std::string& column) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ValidationError("line " + std::to_string(line) + ": column '" + column +
                          "' is not a finite number: '" + std::string(text) + "'");
  return value;
}

int parse_flag(std::string_view text, int line, const std::string& column) {
  const double v = parse_number(text, line, column);
  if (v != 0.0 && v != 1.0)
    throw ValidationError("line " + std::to_string(line) + ": " + column + " must be 0 or 1");
  return static_cast<int>(v);
}

}  // namespace

Dataset parse_csv(const std::string& text, const CsvOptions& options) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
      line.erase(0, 3);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    for (auto f : split_commas(line)) header.emplace_back(f);
    break;
  }
  if (header.empty()) throw ValidationError("missing header row");

  const std::vector<std::string> required = {"id", "arm", "entry", "time", "event"};
  std::vector<int> idx(required.size(), -1);
  std::vector<int> cov_cols;
  std::unordered_set<std::string> names;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const auto& h = header[c];
    if (!names.insert(h).second) throw ValidationError("duplicate column '" + h + "'");
    auto it = std::find(required.begin(), required.end(), h);
    if (it != required.end()) {
      idx[it - required.begin()] = c;
    } else if (!options.covariate_prefix.empty() &&
               h.rfind(options.covariate_prefix, 0) == 0) {
      cov_cols.push_back(c);
    } else {
      throw ValidationError("line " + std::to_string(line_no) + ": unknown column '" + h + "'");
    }
  }
  for (std::size_t k = 0; k < required.size(); ++k)
    if (idx[k] < 0) throw ValidationError("missing required column '" + required[k] + "'");

  std::vector<SubjectRecord> records;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = split_commas(line);
    if (fields.size() != header.size())
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
    SubjectRecord r;
    r.id = std::string(fields[idx[0]]);
    if (r.id.empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty id");
    if (!ids.insert(r.id).second)
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate id '" + r.id + "'");
    const double arm = parse_number(fields[idx[1]], line_no, "arm");
    if (arm != 0.0 && arm != 1.0)
      throw ValidationError("line " + std::to_string(line_no) + ": arm must be 0 or 1");
    r.arm = arm == 0.0 ? Arm::control : Arm::treatment;
    r.entry = parse_number(fields[idx[2]], line_no, "entry");
    r.time_on_study = parse_number(fields[idx[3]], line_no, "time");
    r.event = parse_flag(fields[idx[4]], line_no, "event") == 1;
    if (r.entry < 0.0 || r.time_on_study < 0.0)
      throw ValidationError("line " + std::to_string(line_no) + ": times must be >= 0");
    for (int c : cov_cols) r.covariates.push_back(parse_number(fields[c], line_no, header[c]));
    records.push_back(std::move(r));
  }
  return Dataset(std::move(records));
}

Dataset read_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), options);
}

std::string to_csv(const Dataset& data) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "id,arm,entry,time,event";
  for (int k = 0; k < data.num_covariates(); ++k) out << ",z" << (k + 1);
  out << '\n';
  for (const auto& r : data.records()) {
    out << r.id << ',' << arm_index(r.arm) << ',' << r.entry << ',' << r.time_on_study << ','
        << (r.event ? 1 : 0);
    for (double z : r.covariates) out << ',' << z;
    out << '\n';
  }
  return out.str();
}

}  // namespace spgs
