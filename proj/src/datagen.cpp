#include "cgan/datagen.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "cgan/csv.hpp"

namespace cgan {

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

const SampleSet& Dataset::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  throw std::invalid_argument("unknown split");
}

std::vector<double> sample_uniform(Index n, double lo, double hi, Random& rng) {
  if (!(lo < hi)) throw std::invalid_argument("sample_uniform: need lo < hi");
  if (n < 0) throw std::invalid_argument("sample_uniform: negative count");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = rng.uniform(lo, hi);
  return out;
}

double residual_noise(Random& rng, double c, Index M) {
  if (M <= 0) throw std::invalid_argument("residual_noise: M must be positive");
  const double g = rng.normal();
  if (c == 0.0) return 0.0;
  return g * c / std::sqrt(static_cast<double>(M));
}

namespace {

SampleSet make_set(const ConstraintSpec& spec, const std::vector<double>& z, std::size_t begin,
                   std::size_t end) {
  SampleSet set;
  const Index n = static_cast<Index>(end - begin);
  set.inputs.resize(spec.generator_input_width(), n);
  set.targets.resize(spec.generator_output_width(), n);
  set.z.resize(n);
  for (Index j = 0; j < n; ++j) {
    const double zj = z[begin + static_cast<std::size_t>(j)];
    set.z(j) = zj;
    set.inputs(0, j) = zj;
    set.targets.col(j) = exact_target(spec, zj);
  }
  return set;
}

}  // namespace

Dataset build_interp_dataset(const ConstraintSpec& spec, Index M, Random& rng) {
  if (spec.kind == ConstraintKind::CircleExtrap)
    throw std::invalid_argument("build_interp_dataset: use build_extrap_dataset for extrapolation");
  if (M < 3) throw std::invalid_argument("build_interp_dataset: need at least 3 samples");
  const auto z = sample_uniform(M, spec.domain_lo, spec.domain_hi, rng);
  // floor(M/3) each for train and val; test takes the remainder.
  const auto third = static_cast<std::size_t>(M / 3);
  Dataset d;
  d.train = make_set(spec, z, 0, third);
  d.val = make_set(spec, z, third, 2 * third);
  d.test = make_set(spec, z, 2 * third, static_cast<std::size_t>(M));
  return d;
}

std::vector<double> make_trajectory_grid(double Z, Index n_points) {
  if (n_points < 2) throw std::invalid_argument("make_trajectory_grid: need at least 2 points");
  const double dz = Z / static_cast<double>(n_points);
  std::vector<double> grid(static_cast<std::size_t>(n_points));
  for (Index j = 0; j < n_points; ++j) grid[static_cast<std::size_t>(j)] = static_cast<double>(j) * dz;
  return grid;
}

NoisyCloud make_noisy_cloud(double z, const ConstraintSpec& spec, const CloudConfig& cloud,
                            Random& rng) {
  if (spec.kind != ConstraintKind::CircleExtrap)
    throw std::invalid_argument("make_noisy_cloud: extrapolation spec required");
  if (cloud.r_range < 0.0 || cloud.v_range < 0.0 || cloud.n_cloud < 1)
    throw std::invalid_argument("make_noisy_cloud: invalid cloud config");
  const double s = std::sin(z);
  const double c = std::cos(z);
  const double R = spec.radius;
  NoisyCloud out;
  out.inputs.resize(spec.generator_input_width(), cloud.n_cloud);
  for (Index k = 0; k < cloud.n_cloud; ++k) {
    const double r = rng.uniform(R - cloud.r_range, R + cloud.r_range);
    const double v = rng.uniform(1.0 - cloud.v_range, 1.0 + cloud.v_range);
    if (spec.mode == StateMode::StateRate) {
      out.inputs.col(k) << r - v * s, -v * c, r - v * c, v * s;
    } else {
      out.inputs.col(k) << r - v * s, r - v * c;
    }
  }
  out.output = exact_target(spec, z + spec.step);
  return out;
}

std::array<Index, 3> cloud_split_sizes(Index n_cloud) {
  const Index base = n_cloud / 3;
  const Index rem = n_cloud % 3;
  return {base + (rem > 0 ? 1 : 0), base + (rem > 1 ? 1 : 0), base};
}

Dataset build_extrap_dataset(const ConstraintSpec& spec, const CloudConfig& cloud, Index M,
                             Random& rng) {
  if (cloud.n_cloud < 1 || M <= 0 || M % cloud.n_cloud != 0)
    throw std::invalid_argument("build_extrap_dataset: n_cloud must divide M");
  const Index n_points = M / cloud.n_cloud;
  const double span = spec.domain_hi - spec.domain_lo;
  const double dz = span / static_cast<double>(n_points);
  if (std::abs(dz - spec.step) > 1e-12 * std::max(1.0, std::abs(dz)))
    throw std::invalid_argument("build_extrap_dataset: spec step does not match the grid spacing");
  const auto grid = make_trajectory_grid(span, n_points);
  const auto sizes = cloud_split_sizes(cloud.n_cloud);
  const Index in_w = spec.generator_input_width();
  const Index out_w = spec.generator_output_width();

  Dataset d;
  SampleSet* sets[3] = {&d.train, &d.val, &d.test};
  for (int s = 0; s < 3; ++s) {
    sets[s]->inputs.resize(in_w, n_points * sizes[s]);
    sets[s]->targets.resize(out_w, n_points * sizes[s]);
    sets[s]->z.resize(n_points * sizes[s]);
  }
  for (Index j = 0; j < n_points; ++j) {
    const double z = spec.domain_lo + grid[static_cast<std::size_t>(j)];
    const NoisyCloud c = make_noisy_cloud(z, spec, cloud, rng);
    Index offset = 0;
    for (int s = 0; s < 3; ++s) {
      for (Index k = 0; k < sizes[s]; ++k) {
        const Index col = j * sizes[s] + k;
        sets[s]->inputs.col(col) = c.inputs.col(offset + k);
        sets[s]->targets.col(col) = c.output;
        sets[s]->z(col) = z;
      }
      offset += sizes[s];
    }
  }
  return d;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const Index in_w = data.train.inputs.rows();
  const Index out_w = data.train.targets.rows();
  out << "split";
  for (Index i = 0; i < in_w; ++i) out << ",in" << i;
  for (Index i = 0; i < out_w; ++i) out << ",target" << i;
  out << '\n';
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    const auto& set = data.split(s);
    for (Index j = 0; j < set.size(); ++j) {
      out << split_name(s);
      for (Index i = 0; i < in_w; ++i) out << ',' << format_real(set.inputs(i, j));
      for (Index i = 0; i < out_w; ++i) out << ',' << format_real(set.targets(i, j));
      out << '\n';
    }
  }
}

}  // namespace cgan
