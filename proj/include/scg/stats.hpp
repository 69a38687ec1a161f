#pragma once

namespace scg {

// Standard normal CDF.
double norm_cdf(double x);

// Standard normal quantile, p in (0,1). Accurate to ~1e-15 relative.
double norm_quantile(double p);

// Two-sided p-value for a standard-normal test statistic z.
double two_sided_p(double z);

} // namespace scg
