#pragma once

// Seeded sampling of training data: interpolation datasets, residual noise
// and noisy clouds around a trajectory for extrapolation training.

#include <array>
#include <string>
#include <vector>

#include "cgan/constraints.hpp"
#include "cgan/random.hpp"

namespace cgan {

enum class Split { Train, Val, Test };

const char* split_name(Split split);

// Samples of one split, stored column-wise.
struct SampleSet {
  Matrix inputs;   // generator inputs (z, or the possibly noisy current state)
  Matrix targets;  // true data the generator must reproduce
  Vector z;        // coordinate of each sample (grid point for clouds)

  Index size() const { return inputs.cols(); }
};

struct Dataset {
  SampleSet train;
  SampleSet val;
  SampleSet test;

  const SampleSet& split(Split s) const;
  Index size() const { return train.size() + val.size() + test.size(); }
};

struct CloudConfig {
  double r_range = 0.0;  // half-width of the centre-offset perturbation
  double v_range = 0.0;  // half-width of the rate-amplitude perturbation
  Index n_cloud = 1;     // points per trajectory sample
};

std::vector<double> sample_uniform(Index n, double lo, double hi, Random& rng);

// One draw from N(0, c^2 / M).
double residual_noise(Random& rng, double c, Index M);

// M samples with z ~ U[domain]; floor(M/3) train, floor(M/3) val, rest test.
Dataset build_interp_dataset(const ConstraintSpec& spec, Index M, Random& rng);

// z_j = j * Z / n_points for j = 0 .. n_points - 1.
std::vector<double> make_trajectory_grid(double Z, Index n_points);

struct NoisyCloud {
  Matrix inputs;  // one perturbed state per column
  Vector output;  // exact state at z + dz
};

NoisyCloud make_noisy_cloud(double z, const ConstraintSpec& spec, const CloudConfig& cloud,
                            Random& rng);

// Clouds on the uniform grid over the extrapolation domain. Every cloud is
// split into train/val/test thirds (remainder goes to train, then val).
Dataset build_extrap_dataset(const ConstraintSpec& spec, const CloudConfig& cloud, Index M,
                             Random& rng);

// Sizes of the three per-cloud parts.
std::array<Index, 3> cloud_split_sizes(Index n_cloud);

// CSV with columns split,in0..,target0..
void write_dataset_csv(const Dataset& data, const std::string& path);

}  // namespace cgan
