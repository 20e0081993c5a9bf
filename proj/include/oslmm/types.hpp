#ifndef OSLMM_TYPES_HPP
#define OSLMM_TYPES_HPP

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace oslmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Configuration problems: malformed options, inconsistent shapes requested
/// by the caller. Maps to CLI exit code 2.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input-data problems: unreadable or malformed files, shape mismatches
/// between datasets and fitted models. Maps to CLI exit code 3.
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical breakdowns: failed factorizations, rank-deficient polar maps,
/// diverging integrations. Maps to CLI exit code 4.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One trial of regularly or irregularly sampled multi-channel data.
/// `observations` is P x T with column t holding the P-channel sample y_t.
struct Dataset {
  Vector times;         // strictly increasing, length T
  Matrix observations;  // P x T

  Eigen::Index channels() const { return observations.rows(); }
  Eigen::Index samples() const { return observations.cols(); }

  void validate() const;
};

/// Observation-noise covariance. Homogeneous sigma_y2 * I throughout, plus
/// an optional per-channel diagonal used by the SLMM.
struct NoiseModel {
  double sigma_y2 = 1.0;
  std::optional<Vector> per_channel;  // length P when present

  void validate(Eigen::Index channels) const;
};

/// Pseudo-observations T_t y_t (rows indexed by latent dimension) and the
/// matching diagonal noise variances. Row q holds ytilde_q and diag(Sigma_q).
struct ProjectedData {
  Matrix projected;   // Q x T
  Matrix noise_diag;  // Q x T, strictly positive
};

inline void Dataset::validate() const {
  if (observations.rows() < 1 || observations.cols() < 1)
    throw data_error("dataset must have at least one channel and one sample");
  if (times.size() != observations.cols())
    throw data_error("dataset time and observation counts disagree");
  if (!times.allFinite() || !observations.allFinite())
    throw data_error("dataset contains non-finite entries");
  for (Eigen::Index t = 1; t < times.size(); ++t)
    if (!(times[t] > times[t - 1]))
      throw data_error("dataset times must be strictly increasing");
}

inline void NoiseModel::validate(Eigen::Index channels) const {
  if (!(sigma_y2 > 0.0))
    throw config_error("noise variance must be positive");
  if (per_channel) {
    if (per_channel->size() != channels)
      throw config_error("per-channel noise size mismatch");
    if ((per_channel->array() <= 0.0).any())
      throw config_error("per-channel noise variances must be positive");
  }
}

}  // namespace oslmm

#endif
