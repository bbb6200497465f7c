#pragma once

#include "sketchdav/linalg.hpp"

#include <memory>

namespace sketchdav {

/// Frozen linearization of a model trajectory. tlm_range propagates a
/// perturbation through inner steps [begin, end); adj_range is its exact
/// transpose, sweeping backwards. state_at is valid at the checkpoint stride
/// requested from linearize (and at step 0 and the final step). All methods
/// are const and safe to call concurrently.
class LinearizedTrajectory {
 public:
  virtual ~LinearizedTrajectory() = default;

  virtual int total_steps() const = 0;
  virtual Vector state_at(int step) const = 0;
  virtual Vector tlm_range(int begin, int end, const Vector& dx) const = 0;
  virtual Vector adj_range(int begin, int end, const Vector& lambda) const = 0;
};

/// Time-discrete dynamical model with exact discrete tangent linear and
/// adjoint operators. Model objects are immutable after construction.
class DynamicalModel {
 public:
  virtual ~DynamicalModel() = default;

  virtual Eigen::Index dim() const = 0;
  virtual double inner_dt() const = 0;

  /// Integrates `steps` inner steps. Throws on NaN/Inf (instability).
  virtual Vector forward(const Vector& x0, int steps) const = 0;

  /// Records the nonlinear trajectory through x0 so tangent linear and
  /// adjoint sweeps can be evaluated along it. checkpoint_stride bounds the
  /// spacing of stored states (implementations may store more).
  virtual std::shared_ptr<const LinearizedTrajectory> linearize(
      const Vector& x0, int steps, int checkpoint_stride) const = 0;
};

}  // namespace sketchdav
