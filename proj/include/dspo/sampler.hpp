#pragma once
// Cross-sectional sub-sampling: each mini-batch is m distinct trading days,
// and each day contributes a uniform k-subset of its stocks.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dspo/marketdata.hpp"

namespace dspo::sampler {

struct SubSampleSpec {
  std::size_t m = 6;
  std::size_t k = 1000;
  std::uint64_t seed = 0;

  // Throws Error(Config) unless 1 <= m <= n_days and 2 <= k <= min_stocks.
  void validate(std::size_t n_days, std::size_t min_stocks) const;
};

using Rng = std::mt19937_64;

// Uniform k-subset of {0..n-1}, returned in ascending order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

// Restriction of a cross-section to the given stock indices (in that order).
data::CrossSection restrict(const data::CrossSection& cs, std::span<const std::size_t> stocks);

// m distinct days, each independently restricted to k stocks. Throws
// Error(Data) if a drawn day has fewer than k stocks.
std::vector<data::CrossSection> draw_minibatch(std::span<const data::CrossSection> days, const SubSampleSpec& spec,
                                               Rng& rng);

// Owns its random state; successive calls give the mini-batch sequence.
class Sampler {
 public:
  explicit Sampler(SubSampleSpec spec) : spec_(spec), rng_(spec.seed) {}
  std::vector<data::CrossSection> next(std::span<const data::CrossSection> days) {
    return draw_minibatch(days, spec_, rng_);
  }

 private:
  SubSampleSpec spec_;
  Rng rng_;
};

// log10 of the binomial coefficient C(n, k). Throws Error(Config) if k > n.
double count_unique_subsamples(std::size_t n, std::size_t k);

}  // namespace dspo::sampler
