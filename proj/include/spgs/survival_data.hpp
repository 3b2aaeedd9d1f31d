#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace spgs {

enum class Arm : std::uint8_t { control = 0, treatment = 1 };

inline int arm_index(Arm a) { return static_cast<int>(a); }

/// One enrolled subject on the two time scales.
///
/// `entry` is the calendar time of randomization. `time_on_study` is the
/// (possibly censored) event time measured from entry, min(T, C), and
/// `event` flags T <= C. Administrative censoring by calendar analysis time
/// is never baked into a record; it is applied by `snapshot`.
struct SubjectRecord {
  std::string id;
  Arm arm = Arm::control;
  double entry = 0.0;
  double time_on_study = 0.0;
  bool event = false;
  std::vector<double> covariates;
};

/// A validated, immutable collection of subjects sharing one covariate dimension.
class Dataset {
 public:
  Dataset() = default;

  /// Validates every record. Throws ValidationError naming the offending id
  /// on negative or non-finite times, ragged covariates, or duplicate ids.
  explicit Dataset(std::vector<SubjectRecord> records);

  std::span<const SubjectRecord> records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  int num_covariates() const { return p_; }
  const SubjectRecord& operator[](std::size_t i) const { return records_[i]; }

  /// Largest calendar time at which any subject is still under observation.
  double last_observation_time() const;

 private:
  std::vector<SubjectRecord> records_;
  int p_ = 0;
};

/// A subject's data as visible at one calendar analysis time.
struct SnapshotRecord {
  Arm arm;
  double follow_up;     // X(u) = min(X*, (u - E)^+)
  bool event_observed;  // delta(u)
  bool enrolled;        // E < u
};

/// The dataset administratively censored at calendar time `u`.
///
/// Subjects not yet enrolled (E >= u) are kept with zero follow-up and no
/// event; they are excluded from every risk set and from the enrolled
/// sample size used for covariate averaging.
class Snapshot {
 public:
  Snapshot() = default;
  Snapshot(double calendar_time, std::vector<SnapshotRecord> records,
           Eigen::MatrixXd covariates);

  double calendar_time() const { return u_; }
  std::span<const SnapshotRecord> records() const { return records_; }
  const SnapshotRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  int num_covariates() const { return static_cast<int>(z_.cols()); }

  /// n x p covariate matrix, one row per record (enrolled or not).
  const Eigen::MatrixXd& covariates() const { return z_; }

  /// Number of enrolled subjects in an arm, n_i(u).
  int enrolled(Arm a) const { return enrolled_[arm_index(a)]; }
  int enrolled_total() const { return enrolled_[0] + enrolled_[1]; }
  int events(Arm a) const { return events_[arm_index(a)]; }

 private:
  double u_ = 0.0;
  std::vector<SnapshotRecord> records_;
  Eigen::MatrixXd z_;
  int enrolled_[2] = {0, 0};
  int events_[2] = {0, 0};
};

/// Applies administrative censoring at calendar time `u` (u >= 0).
Snapshot snapshot(const Dataset& data, double u);

struct CsvOptions {
  /// Covariate columns are those whose header starts with this prefix.
  std::string covariate_prefix = "z";
};

/// Reads `id,arm,entry,time,event,z1,...,zp`. Throws ValidationError with
/// the offending line number on any schema violation.
Dataset read_csv(const std::filesystem::path& path, const CsvOptions& options = {});
Dataset parse_csv(const std::string& text, const CsvOptions& options = {});

std::string to_csv(const Dataset& data);

}  // namespace spgs
