#include "stochlod/randfield.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <string>

#include "stochlod/rng.hpp"

namespace stochlod {

namespace {

// Chebyshev coefficients of sqrt(x) e^x K_1(x) in t = 4/x - 1, x in [2, inf).
// Fitted against a 50-digit reference; max relative error ~1e-17 on the branch.
constexpr double kK1ChebCoeffs[] = {
    2.720626190484442669447e+00,  1.039237365768172384374e-01,
    -2.857816859622779386800e-03, 1.952155184713516311077e-04,
    -1.936197974166082960020e-05, 2.406484947837217117059e-06,
    -3.501960603087812542096e-07, 5.741084125450049292307e-08,
    -1.034576246567809702666e-08, 2.015049755197034616148e-09,
    -4.190354759341925584241e-10, 9.218315187605314125826e-11,
    -2.129967838427791021553e-11, 5.139639673482343540396e-12,
    -1.289173960949822935197e-12, 3.348419666052243120096e-13,
    -8.976705182010146069151e-14, 2.477154424219598681335e-14,
    -7.019837089214768851312e-15, 2.038703166239860879929e-15,
    -6.057047270643017822781e-16, 1.838093575243045425562e-16,
    -5.689462849193648374251e-17, 1.794051047886357291430e-17,
    -5.756744482073302450286e-18, 1.877865190162326740113e-18};

double k1_cheb_tail(double x) {
  const double t = 4.0 / x - 1.0;
  double b0 = 0.0, b1 = 0.0;
  constexpr int n = static_cast<int>(std::size(kK1ChebCoeffs));
  for (int j = n - 1; j >= 1; --j) {
    const double tmp = 2.0 * t * b0 - b1 + kK1ChebCoeffs[j];
    b1 = b0;
    b0 = tmp;
  }
  const double f = t * b0 - b1 + 0.5 * kK1ChebCoeffs[0];
  return f * std::exp(-x) / std::sqrt(x);
}

// Ascending series with log term, A&S 9.6.11 specialized to order 1.
double k1_series(double x) {
  const double q = 0.25 * x * x;
  const double log_half_x = std::log(0.5 * x);
  constexpr double kEulerGamma = 0.57721566490153286060651209008240;
  double term = 1.0;              // q^k / (k! (k+1)!)
  double psi_a = -kEulerGamma;    // psi(k+1)
  double psi_b = 1.0 - kEulerGamma;  // psi(k+2)
  double i1_sum = 0.0;
  double psi_sum = 0.0;
  for (int k = 0; k < 64; ++k) {
    i1_sum += term;
    psi_sum += (psi_a + psi_b) * term;
    const double next = term * q / ((k + 1.0) * (k + 2.0));
    if (next < 1e-20 * std::abs(i1_sum) && k > 2) break;
    term = next;
    psi_a += 1.0 / (k + 1.0);
    psi_b += 1.0 / (k + 2.0);
  }
  const double i1 = 0.5 * x * i1_sum;
  return 1.0 / x + log_half_x * i1 - 0.25 * x * psi_sum;
}

}  // namespace

double bessel_k1(double x) {
  if (!(x > 0.0)) throw Error("bessel_k1 requires x > 0");
  return x <= 2.0 ? k1_series(x) : k1_cheb_tail(x);
}

double bessel_k_nu(double nu, double x) {
  if (!(x > 0.0) || !(nu > 0.0)) throw Error("bessel_k_nu requires nu, x > 0");
  // K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt.
  double tmax = std::acosh(std::max(1.0, 810.0 / x)) + 2.0;
  while (x * std::cosh(tmax) - nu * tmax < 760.0) tmax += 1.0;
  auto integrand = [&](double t) {
    const double e = -x * std::cosh(t) + std::log(std::cosh(nu * t));
    return e < -745.0 ? 0.0 : std::exp(e);
  };
  auto simpson = [&](int n) {
    const double step = tmax / n;
    double acc = integrand(0.0) + integrand(tmax);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * integrand(i * step);
    return acc * step / 3.0;
  };
  double prev = simpson(64);
  for (int n = 128; n <= (1 << 21); n *= 2) {
    const double cur = simpson(n);
    if (std::abs(cur - prev) <= 1e-13 * std::abs(cur)) return cur;
    prev = cur;
  }
  return prev;
}

void MaternParams::validate() const {
  if (!(sigma2 > 0.0) || !(nu > 0.0) || !(kappa > 0.0))
    throw Error("MaternParams requires sigma2, nu, kappa > 0");
}

double matern_cov(const MaternParams& p, double r) {
  p.validate();
  if (r < 0.0) throw Error("matern_cov requires r >= 0");
  if (r == 0.0) return p.sigma2;
  const double arg = std::sqrt(2.0 * p.nu) * r / p.kappa;
  if (arg > 740.0) return 0.0;
  if (p.nu == 1.0) return p.sigma2 * arg * bessel_k1(arg);
  const double scale = p.sigma2 / (std::pow(2.0, p.nu - 1.0) * std::tgamma(p.nu));
  return scale * std::pow(arg, p.nu) * bessel_k_nu(p.nu, arg);
}

namespace {
// The FFTW planner is not thread-safe; executing a plan on distinct buffers is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct CirculantSampler::Impl {
  MaternParams params;
  FineGrid grid;
  int n = 0;    // sampling lattice points per axis
  int M = 0;    // embedding period per axis
  int pad = 1;  // extension factor relative to the minimal even embedding
  std::vector<double> sqrt_lambda;  // M*M entries, 1/M normalization included
  fftw_plan plan = nullptr;
  fftw_complex* plan_buf = nullptr;

  ~Impl() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    if (plan) fftw_destroy_plan(plan);
    if (plan_buf) fftw_free(plan_buf);
  }
};

CirculantSampler::CirculantSampler(MaternParams params, FineGrid grid)
    : impl_(std::make_unique<Impl>()) {
  params.validate();
  impl_->params = params;
  impl_->grid = grid;
  const int n = grid.cells_per_axis();
  impl_->n = n;
  const double spacing = grid.h();

  double worst_min_eig = 0.0;
  for (int pad : {1, 2, 4}) {
    const int M = std::max(2, 2 * (n - 1) * pad);
    std::vector<std::complex<double>> cov(static_cast<std::size_t>(M) * M);
    for (int jy = 0; jy < M; ++jy) {
      const int dy = std::min(jy, M - jy);
      for (int jx = 0; jx < M; ++jx) {
        const int dx = std::min(jx, M - jx);
        const double r = spacing * std::hypot(double(dx), double(dy));
        cov[static_cast<std::size_t>(jy) * M + jx] = matern_cov(params, r);
      }
    }
    fftw_plan plan;
    fftw_complex* buf;
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      buf = fftw_alloc_complex(static_cast<std::size_t>(M) * M);
      plan = fftw_plan_dft_2d(M, M, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    std::copy(cov.begin(), cov.end(), reinterpret_cast<std::complex<double>*>(buf));
    fftw_execute(plan);
    const auto* eig = reinterpret_cast<const std::complex<double>*>(buf);

    double min_eig = std::numeric_limits<double>::infinity();
    double max_eig = -std::numeric_limits<double>::infinity();
    const std::size_t count = static_cast<std::size_t>(M) * M;
    for (std::size_t i = 0; i < count; ++i) {
      min_eig = std::min(min_eig, eig[i].real());
      max_eig = std::max(max_eig, eig[i].real());
    }
    worst_min_eig = std::min(worst_min_eig, min_eig);

    if (min_eig >= -1e-10 * max_eig) {
      impl_->M = M;
      impl_->pad = pad;
      impl_->sqrt_lambda.resize(count);
      const double norm = 1.0 / (static_cast<double>(M) * M);
      for (std::size_t i = 0; i < count; ++i)
        impl_->sqrt_lambda[i] = std::sqrt(std::max(eig[i].real(), 0.0) * norm);
      impl_->plan = plan;
      impl_->plan_buf = buf;
      return;
    }
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
    fftw_free(buf);
  }
  throw EmbeddingError(
      "embedding failed: covariance extension stays indefinite at 4x padding; "
      "most negative eigenvalue " + std::to_string(worst_min_eig),
      worst_min_eig);
}

CirculantSampler::~CirculantSampler() = default;
CirculantSampler::CirculantSampler(CirculantSampler&&) noexcept = default;
CirculantSampler& CirculantSampler::operator=(CirculantSampler&&) noexcept = default;

int CirculantSampler::padding_factor() const { return impl_->pad; }
const MaternParams& CirculantSampler::params() const { return impl_->params; }

std::pair<FieldRealization, FieldRealization> CirculantSampler::sample_pair(
    std::uint64_t seed) const {
  const int M = impl_->M;
  const int n = impl_->n;
  const std::size_t count = static_cast<std::size_t>(M) * M;

  fftw_complex* buf;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    buf = fftw_alloc_complex(count);
  }
  auto* data = reinterpret_cast<std::complex<double>*>(buf);
  CounterRng rng(derive_stream(seed, 0));
  for (std::size_t i = 0; i < count; ++i) {
    const double re = rng.gaussian();
    const double im = rng.gaussian();
    data[i] = std::complex<double>(re, im) * impl_->sqrt_lambda[i];
  }
  fftw_execute_dft(impl_->plan, buf, buf);

  FieldRealization f1, f2;
  f1.grid = impl_->grid;
  f2.grid = impl_->grid;
  f1.kind = FieldKind::gaussian;
  f2.kind = FieldKind::gaussian;
  f1.values.resize(static_cast<std::size_t>(n) * n);
  f2.values.resize(static_cast<std::size_t>(n) * n);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const std::complex<double> v = data[static_cast<std::size_t>(iy) * M + ix];
      f1.values[static_cast<std::size_t>(iy) * n + ix] = v.real();
      f2.values[static_cast<std::size_t>(iy) * n + ix] = v.imag();
    }
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_free(buf);
  }
  return {std::move(f1), std::move(f2)};
}

FieldRealization CirculantSampler::sample(std::uint64_t seed) const {
  return sample_pair(seed).first;
}

FieldRealization sample_gaussian(const MaternParams& p, const FineGrid& grid,
                                 std::uint64_t seed) {
  return CirculantSampler(p, grid).sample(seed);
}

FieldRealization to_lognormal(const FieldRealization& z) {
  if (z.kind != FieldKind::gaussian)
    throw Error("to_lognormal expects a gaussian realization");
  FieldRealization a;
  a.grid = z.grid;
  a.kind = FieldKind::lognormal;
  a.values.resize(z.values.size());
  std::transform(z.values.begin(), z.values.end(), a.values.begin(),
                 [](double v) { return std::exp(v); });
  return a;
}

double contrast(const FieldRealization& a) {
  if (a.kind != FieldKind::lognormal)
    throw Error("contrast expects a lognormal realization");
  if (a.values.empty()) throw Error("contrast of an empty field");
  const auto [lo, hi] = std::minmax_element(a.values.begin(), a.values.end());
  if (!(*lo > 0.0)) throw Error("contrast requires strictly positive values");
  return *hi / *lo;
}

void HierarchicalParams::validate() const {
  if (!(sigma2 > 0.0) || !(nu > 0.0))
    throw Error("HierarchicalParams requires sigma2, nu > 0");
  if (!(kappa_low > 0.0) || !(kappa_low <= kappa_high))
    throw Error("HierarchicalParams requires 0 < kappa_low <= kappa_high");
}

HierarchicalSample sample_hierarchical(const HierarchicalParams& hp,
                                       const FineGrid& grid, std::uint64_t seed) {
  hp.validate();
  CounterRng kappa_rng(derive_stream(seed, 0));
  const double kappa =
      hp.kappa_low + (hp.kappa_high - hp.kappa_low) * kappa_rng.uniform01();
  const MaternParams mp{hp.sigma2, hp.nu, kappa};
  HierarchicalSample s;
  s.kappa = kappa;
  s.field = to_lognormal(sample_gaussian(mp, grid, derive_stream(seed, 1)));
  return s;
}

}  // namespace stochlod
