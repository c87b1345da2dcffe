#pragma once

#include "brsmfg/measures.hpp"

#include <cstdint>
#include <vector>

namespace brsmfg {

/// How a particle sees its own population: without itself (the N-player
/// game) or through the full empirical measure (the McKean-Vlasov particle
/// approximation).
enum class CouplingMode { leave_one_out, full_empirical };

/// Particle positions of every population at one time.
struct EnsembleState {
  std::vector<RowMatrix> positions;  ///< per population, N x d
  Scalar t0 = 0.0;
  Scalar t = 0.0;
  std::uint64_t seed = 0;
  std::int64_t step_index = 0;

  std::size_t population_count() const { return positions.size(); }
  Eigen::Index size(std::size_t pop) const { return positions[pop].rows(); }
  int dim() const { return positions.empty() ? 0 : static_cast<int>(positions.front().cols()); }
  Point position(std::size_t pop, Eigen::Index i) const { return positions[pop].row(i).transpose(); }

  /// Measures seen by particle i of population pop.
  Coupling coupling_for(std::size_t pop, Eigen::Index i, CouplingMode mode) const {
    Coupling c = full_coupling(pop);
    if (mode == CouplingMode::leave_one_out) {
      if (positions[pop].rows() < 2) fail(ErrorKind::domain, "empty leave-one-out");
      c.replace(pop, MeasureView::particles(positions[pop], i));
    }
    return c;
  }

  /// Full empirical measures of every population, seen from pop.
  Coupling full_coupling(std::size_t pop) const {
    std::array<MeasureView, kMaxPopulations> views{};
    for (std::size_t q = 0; q < positions.size(); ++q) views[q] = MeasureView::particles(positions[q]);
    return Coupling(std::span<const MeasureView>(views.data(), positions.size()), pop);
  }
};

}  // namespace brsmfg
