#pragma once

#include <cstdint>

namespace msra {

/// Counter-based SplitMix64 stream.
///
/// Draw i of stream (seed, stream_id) is mix(key + (i + 1) * gamma) with
/// key = mix(seed ^ mix(stream_id + gamma)), where mix is the SplitMix64
/// finalizer and gamma = 0x9E3779B97F4A7C15. Any draw can be recomputed from
/// (seed, stream_id, i) alone, which is what makes block-parallel scenario
/// generation independent of the thread count.
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  CounterRng(std::uint64_t seed, std::uint64_t stream_id)
      : key_(mix(seed ^ mix(stream_id + kGamma))) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    ++counter_;
    return mix(key_ + counter_ * kGamma);
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal draw by inversion of the normal CDF.
  double normal();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

namespace dist {

double normal_pdf(double x);
double normal_cdf(double x);
double normal_quantile(double u);

/// Student-t with (possibly fractional) degrees of freedom, via the
/// regularized incomplete beta function.
double student_cdf(double x, double dof);
double student_quantile(double u, double dof);

/// Chi-square quantile via the inverse regularized lower incomplete gamma.
double chi_square_quantile(double u, double dof);

}  // namespace dist
}  // namespace msra
