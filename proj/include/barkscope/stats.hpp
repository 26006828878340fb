#ifndef BARKSCOPE_STATS_HPP
#define BARKSCOPE_STATS_HPP

#include <span>
#include <vector>

namespace barkscope {

double mean(std::span<const double> x);
double population_variance(std::span<const double> x);
double population_stddev(std::span<const double> x);
double sample_stddev(std::span<const double> x);
double median(std::vector<double> x);

// Linear interpolation between closest ranks, p in [0, 100].
double percentile(std::vector<double> x, double p);

// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);

// Two-tailed P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_tailed(double t, double dof);

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;
};

// r = cov / (sx sy); p two-tailed through t = r sqrt((n-2) / (1-r^2)).
// Throws ValidationError for n < 3, size mismatch or zero variance.
PearsonResult pearson(std::span<const double> x, std::span<const double> y);

}  // namespace barkscope

#endif  // BARKSCOPE_STATS_HPP
