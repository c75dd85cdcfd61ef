#include "dspo/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dspo/error.hpp"

namespace dspo::sampler {

void SubSampleSpec::validate(std::size_t n_days, std::size_t min_stocks) const {
  if (m < 1 || m > n_days) {
    fail(ErrorKind::Config, "sub-sample m=" + std::to_string(m) + " must be in [1, " + std::to_string(n_days) + "]");
  }
  if (k < 2 || k > min_stocks) {
    fail(ErrorKind::Config, "sub-sample k=" + std::to_string(k) + " must be in [2, " + std::to_string(min_stocks) + "]");
  }
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) fail(ErrorKind::Data, "cannot draw " + std::to_string(k) + " of " + std::to_string(n) + " items");
  // partial Fisher-Yates
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

data::CrossSection restrict(const data::CrossSection& cs, std::span<const std::size_t> stocks) {
  data::CrossSection out;
  out.date = cs.date;
  out.hf_fields = cs.hf_fields;
  out.lf_fields = cs.lf_fields;
  out.panels.reserve(stocks.size());
  out.returns.reserve(stocks.size());
  for (std::size_t i : stocks) {
    out.panels.push_back(cs.panels.at(i));
    out.returns.push_back(cs.returns.at(i));
  }
  return out;
}

std::vector<data::CrossSection> draw_minibatch(std::span<const data::CrossSection> days, const SubSampleSpec& spec,
                                               Rng& rng) {
  if (spec.m < 1 || spec.m > days.size()) {
    fail(ErrorKind::Config, "sub-sample m=" + std::to_string(spec.m) + " exceeds the " +
                                std::to_string(days.size()) + " available days");
  }
  if (spec.k < 2) fail(ErrorKind::Config, "sub-sample k must be >= 2");
  std::vector<data::CrossSection> batch;
  batch.reserve(spec.m);
  for (std::size_t d : sample_without_replacement(days.size(), spec.m, rng)) {
    const auto& cs = days[d];
    if (spec.k > cs.size()) {
      fail(ErrorKind::Data, "sub-sample k=" + std::to_string(spec.k) + " exceeds N=" + std::to_string(cs.size()) +
                                " on " + cs.date.to_string());
    }
    batch.push_back(restrict(cs, sample_without_replacement(cs.size(), spec.k, rng)));
  }
  return batch;
}

double count_unique_subsamples(std::size_t n, std::size_t k) {
  if (k > n) fail(ErrorKind::Config, "C(n, k) needs k <= n; got n=" + std::to_string(n) + ", k=" + std::to_string(k));
  const double nn = static_cast<double>(n), kk = static_cast<double>(k);
  return (std::lgamma(nn + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0)) / std::log(10.0);
}

}  // namespace dspo::sampler
