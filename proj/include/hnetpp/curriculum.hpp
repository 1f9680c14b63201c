#ifndef HNETPP_CURRICULUM_HPP
#define HNETPP_CURRICULUM_HPP

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "hnetpp/errors.hpp"
#include "hnetpp/rng.hpp"

namespace hnetpp {

enum class CurriculumStage { Warmup, Growth, Full };

inline const char* stage_name(CurriculumStage s) {
  switch (s) {
    case CurriculumStage::Warmup:
      return "warmup";
    case CurriculumStage::Growth:
      return "growth";
    default:
      return "full";
  }
}

/// Stage table. `scale` divides every boundary and length, which keeps the
/// shape of the schedule on short desk runs.
struct CurriculumConfig {
  std::size_t warmup_end = 50'000;
  std::size_t growth_end = 200'000;
  std::size_t warmup_length = 256;
  std::vector<std::size_t> growth_lengths{256, 512, 1024, 2048};
  std::vector<double> growth_probs{0.4, 0.3, 0.2, 0.1};
  std::size_t max_length = 4096;
  std::size_t scale = 1;

  void validate() const {
    if (scale == 0) throw ConfigError("curriculum.scale must be positive");
    if (growth_end < warmup_end) throw ConfigError("curriculum.growth_end must not precede curriculum.warmup_end");
    if (growth_lengths.empty() || growth_lengths.size() != growth_probs.size()) {
      throw ConfigError("curriculum.growth_lengths and curriculum.growth_probs must be non-empty and equally long");
    }
    double total = 0.0;
    for (double p : growth_probs) {
      if (!(p >= 0)) throw ConfigError("curriculum.growth_probs entries must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("curriculum.growth_probs must sum to 1");
    if (warmup_length == 0 || max_length == 0) throw ConfigError("curriculum lengths must be positive");
  }

  std::size_t scaled(std::size_t v) const { return std::max<std::size_t>(1, v / scale); }
  std::size_t warmup_boundary() const { return warmup_end / scale; }
  std::size_t growth_boundary() const { return growth_end / scale; }
};

inline CurriculumStage curriculum_stage(std::size_t step, const CurriculumConfig& c) {
  if (step < c.warmup_boundary()) return CurriculumStage::Warmup;
  if (step < c.growth_boundary()) return CurriculumStage::Growth;
  return CurriculumStage::Full;
}

/// Target sequence length in bytes for `step`; the draw is a pure function
/// of (step, seed).
inline std::size_t curriculum_sample_length(std::size_t step, std::uint64_t seed, const CurriculumConfig& c) {
  switch (curriculum_stage(step, c)) {
    case CurriculumStage::Warmup:
      return c.scaled(c.warmup_length);
    case CurriculumStage::Growth: {
      Rng rng(derive_seed(seed, {step, 0x6C}));
      double u = rng.uniform();
      for (std::size_t i = 0; i < c.growth_probs.size(); ++i) {
        if (u < c.growth_probs[i]) return c.scaled(c.growth_lengths[i]);
        u -= c.growth_probs[i];
      }
      return c.scaled(c.growth_lengths.back());
    }
    default: {
      Rng rng(derive_seed(seed, {step, 0x6C}));
      return 1 + static_cast<std::size_t>(rng.below(c.scaled(c.max_length)));
    }
  }
}

}  // namespace hnetpp

#endif  // HNETPP_CURRICULUM_HPP
