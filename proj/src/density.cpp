#include "varstable/density.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include "varstable/error.hpp"
#include "varstable/parallel.hpp"
#include "varstable/quadrature.hpp"

namespace varstable {

namespace {

constexpr double kPi = std::numbers::pi;
// e^{-t psi} is resolved down to e^{-kSpectralDepth}.
constexpr double kSpectralDepth = 40.0;

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

bool is_power_of_two(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(double x) {
  std::size_t n = 2;
  while (double(n) < x) n <<= 1;
  return n;
}

// Sum over nonzero lattice vectors m in Z^d of |m|^{-d-alpha}.
double lattice_sum(int d, double alpha) {
  if (d == 1) return 2.0 * std::riemann_zeta(1.0 + alpha);
  double s = 0.0;
  const int m = 64;
  for (int i = -m; i <= m; ++i)
    for (int j = -m; j <= m; ++j)
      if (i != 0 || j != 0) s += std::pow(double(i * i + j * j), -0.5 * (2.0 + alpha));
  // Remainder outside the box by the integral 2 pi r^{-1-alpha}.
  return s + 2.0 * kPi * std::pow(double(m), -alpha) / alpha;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t count)
      : ptr(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * count))) {
    if (!ptr) throw ResourceError("density", "FFT buffer allocation failed");
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* ptr;
};

struct RealBuffer {
  explicit RealBuffer(std::size_t count)
      : ptr(static_cast<double*>(fftw_malloc(sizeof(double) * count))) {
    if (!ptr) throw ResourceError("density", "FFT buffer allocation failed");
  }
  ~RealBuffer() { fftw_free(ptr); }
  RealBuffer(const RealBuffer&) = delete;
  RealBuffer& operator=(const RealBuffer&) = delete;
  double* ptr;
};

double hermite(double f0, double d0, double f1, double d1, double h, double s) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * f0 + (s3 - 2 * s2 + s) * h * d0 + (-2 * s3 + 3 * s2) * f1 +
         (s3 - s2) * h * d1;
}

void finish_stats(DensityGrid& g) {
  const std::size_t total = g.values.size();
  double sum = 0.0;
  double lo = 0.0;
  double peak = 0.0;
  for (double v : g.values) {
    sum += v;
    lo = std::min(lo, v);
    peak = std::max(peak, v);
  }
  g.mass = sum * std::pow(g.dx, g.d);
  g.min_value = lo;
  double defect = 0.0;
  const std::size_t n = g.n;
  if (g.d == 1) {
    for (std::size_t j = 1; j < n; ++j) defect = std::max(defect, std::fabs(g.values[j] - g.values[n - j]));
  } else {
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t j = 1; j < n; ++j)
        defect = std::max(defect, std::fabs(g.values[i * n + j] - g.values[(n - i) * n + (n - j)]));
  }
  g.evenness_defect = defect;
  for (std::size_t j = 0; j < total; ++j) g.values[j] = std::max(g.values[j], 0.0);
}

// Values and derivatives of the 1-d density whose characteristic function
// is phi, on the grid already described by g.n and g.half_width.
void fill_spectrum_1d(DensityGrid& g, const std::function<double(double)>& phi_of,
                      int orders) {
  const std::size_t n = g.n;
  const double period = 2.0 * g.half_width;
  const double du = 2.0 * kPi / period;
  const std::size_t m = n / 2 + 1;
  std::vector<double> phi(m);
  for (std::size_t k = 0; k < m; ++k) phi[k] = phi_of(double(k) * du);
  g.spectral_floor = phi[m - 1];
  FftwBuffer in(m);
  RealBuffer out(n);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_dft_c2r_1d(int(n), in.ptr, out.ptr, FFTW_ESTIMATE);
  }
  g.derivs.clear();
  for (int order = 0; order <= orders; ++order) {
    // Coefficient (-1)^k (i u_k)^order phi_k / P; the sign undoes the
    // half-period shift of the grid origin.
    for (std::size_t k = 0; k < m; ++k) {
      const double u = double(k) * du;
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      const double mag = sign * std::pow(u, order) * phi[k] / period;
      std::complex<double> c;
      switch (order % 4) {
        case 0: c = {mag, 0.0}; break;
        case 1: c = {0.0, mag}; break;
        case 2: c = {-mag, 0.0}; break;
        default: c = {0.0, -mag}; break;
      }
      if (k == m - 1 && order % 2 == 1) c = 0.0;
      in.ptr[k][0] = c.real();
      in.ptr[k][1] = c.imag();
    }
    fftw_execute_dft_c2r(plan, in.ptr, out.ptr);
    std::vector<double> v(out.ptr, out.ptr + n);
    if (order == 0)
      g.values = std::move(v);
    else
      g.derivs.push_back(std::move(v));
  }
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
}

}  // namespace

GridSpec resolve_grid(const FrozenSymbol& sym, double t, const GridSpec& spec) {
  if (!(t > 0.0) || !std::isfinite(t)) throw InputError("density", "inversion needs t > 0");
  const int d = sym.dim();
  const double alpha = sym.alpha();
  const double scale = std::pow(t, 1.0 / alpha);
  GridSpec out = spec;
  if (out.derivatives < 1) out.derivatives = 1;
  if (spec.n != 0 && !is_power_of_two(spec.n))
    throw InputError("density", "grid size N must be a power of two");
  if (spec.half_width != 0.0 && !(spec.half_width >= 20.0 * scale))
    throw InputError("density", "grid half-width must be at least 20 t^{1/alpha}");

  // Spacing: the symbol's lower bound lambda1 C |u|^alpha reaches the
  // spectral depth at u_max; oversample twice in d = 1 for interpolation.
  const double u_max =
      std::pow(kSpectralDepth / (t * sym.lambda1() * sym.c_alpha()), 1.0 / alpha);
  const double dx_auto = (d == 1 ? 0.5 : 1.0) * kPi / u_max;
  // Period: f(x) ~ t kappa2 |x|^{-d-alpha} far out, so the folded copies at
  // x = 0 sum to t kappa2 S P^{-d-alpha}.
  const double fold = t * sym.lambda2() * lattice_sum(d, alpha);
  double period = std::pow(fold / spec.alias_target, 1.0 / (d + alpha));
  period = std::max(period, 40.0 * scale);
  // d = 2 defaults to 2^9 points per axis.
  const std::size_t cap = d == 1 ? spec.max_points : std::min<std::size_t>(512, spec.max_points);

  if (spec.n != 0 && spec.half_width != 0.0) return out;
  if (spec.n != 0) {
    out.half_width = std::max(0.5 * double(spec.n) * dx_auto, 20.0 * scale);
    return out;
  }
  if (spec.half_width != 0.0) period = 2.0 * spec.half_width;
  std::size_t n = next_power_of_two(period / dx_auto);
  n = std::max<std::size_t>(n, d == 1 ? 1024 : 64);
  out.n = n;
  if (spec.half_width != 0.0) {
    out.n = std::min(n, cap);
    return out;
  }
  if (n > cap) {
    // Out of points: give up period before resolution. In d = 1 the spacing
    // may grow up to the Nyquist limit pi / u_max.
    out.n = cap;
    const double dx = d == 1 ? std::min(period / double(cap), 2.0 * dx_auto) : dx_auto;
    out.half_width = 0.5 * double(cap) * dx;
    return out;
  }
  out.half_width = 0.5 * std::max(period, double(n) * dx_auto);
  return out;
}

DensityGrid invert_density(const FrozenSymbol& sym, double t, const GridSpec& spec) {
  const GridSpec gs = resolve_grid(sym, t, spec);
  const int d = sym.dim();
  DensityGrid g;
  g.y = sym.y();
  g.t = t;
  g.alpha = sym.alpha();
  g.d = d;
  g.n = gs.n;
  g.half_width = gs.half_width;
  g.dx = 2.0 * gs.half_width / double(gs.n);
  g.model_hash = sym.field().hash();
  g.width = std::pow(t * sym.lambda1() * sym.c_alpha(), 1.0 / g.alpha);
  const std::size_t n = g.n;
  const double period = 2.0 * g.half_width;
  const double du = 2.0 * kPi / period;

  if (d == 1) {
    fill_spectrum_1d(g, [&](double u) { return std::exp(-t * sym.exponent(u)); }, gs.derivatives);
  } else {
    const std::size_t m = n / 2 + 1;
    FftwBuffer in(n * m);
    RealBuffer out(n * n);
    double floor = 0.0;
    for (std::size_t k1 = 0; k1 < n; ++k1) {
      const double u1 = (k1 < n / 2 ? double(k1) : double(k1) - double(n)) * du;
      for (std::size_t k2 = 0; k2 < m; ++k2) {
        const double u2 = double(k2) * du;
        const double u[2] = {u1, u2};
        const double phi = std::exp(-t * sym.exponent(std::span<const double>(u, 2)));
        if (k1 == n / 2 || k2 == m - 1) floor = std::max(floor, phi);
        const double sign = ((k1 + k2) % 2 == 0) ? 1.0 : -1.0;
        in.ptr[k1 * m + k2][0] = sign * phi / (period * period);
        in.ptr[k1 * m + k2][1] = 0.0;
      }
    }
    g.spectral_floor = floor;
    fftw_plan plan;
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      plan = fftw_plan_dft_c2r_2d(int(n), int(n), in.ptr, out.ptr, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
    g.values.assign(out.ptr, out.ptr + n * n);
  }

  finish_stats(g);
  g.alias_estimate =
      t * sym.lambda2() * lattice_sum(d, g.alpha) * std::pow(period, -double(d) - g.alpha);
  g.tail_mass_estimate = t * sym.field().kernel_tail(g.y, g.alpha, g.half_width);

  if (g.spectral_floor > 1e-8) {
    std::ostringstream os;
    os << "grid too coarse: e^{-t psi} = " << g.spectral_floor
       << " at the Nyquist frequency; increase N or reduce L";
    throw GridError("density", os.str());
  }
  if (g.alias_estimate > 1e-3 * g.peak()) {
    std::ostringstream os;
    os << "aliasing: folded tails contribute " << g.alias_estimate << " against peak "
       << g.peak() << "; increase L (and N)";
    throw GridError("density", os.str());
  }
  return g;
}

DensityGrid invert_spectrum_1d(const std::function<double(double)>& phi, double t, double alpha,
                               double width, const GridSpec& spec) {
  if (spec.n == 0 || !is_power_of_two(spec.n) || !(spec.half_width > 0.0))
    throw InputError("density", "spectral inversion needs an explicit power-of-two N and L");
  DensityGrid g;
  g.t = t;
  g.alpha = alpha;
  g.d = 1;
  g.n = spec.n;
  g.half_width = spec.half_width;
  g.dx = 2.0 * spec.half_width / double(spec.n);
  g.width = width;
  fill_spectrum_1d(g, phi, std::max(spec.derivatives, 1));
  finish_stats(g);
  if (g.spectral_floor > 1e-8)
    throw GridError("density", "grid too coarse for the spectrum; increase N or reduce L");
  return g;
}

double DensityGrid::peak() const {
  double p = 0.0;
  for (double v : values) p = std::max(p, v);
  return p;
}

double DensityGrid::eval_derivative(int k, double xv) const {
  if (d != 1) throw InputError("density", "pointwise interpolation is for d = 1");
  if (k < 0 || k > int(derivs.size()))
    throw InputError("density", "derivative order not stored");
  if (!contains(xv)) {
    std::ostringstream os;
    os << "x = " << xv << " outside the grid [" << -half_width << ", " << half_width << ")";
    throw InputError("density", os.str());
  }
  const double pos = (xv + half_width) / dx;
  std::size_t j = std::min(std::size_t(pos), n - 2);
  const double s = pos - double(j);
  const std::vector<double>& f = k == 0 ? values : derivs[k - 1];
  if (k == int(derivs.size())) return (1.0 - s) * f[j] + s * f[j + 1];
  const std::vector<double>& df = derivs[k];
  return hermite(f[j], df[j], f[j + 1], df[j + 1], dx, s);
}

double DensityGrid::eval(double xv) const { return eval_derivative(0, xv); }

double DensityGrid::interpolation_error(double xv) const {
  const double fine = eval(xv);
  const double pos = (xv + half_width) / (2.0 * dx);
  std::size_t j = std::size_t(pos);
  if (2 * j + 2 > n - 1) return 0.0;
  const double s = pos - double(j);
  const std::vector<double>& df = derivs[0];
  const double coarse = hermite(values[2 * j], df[2 * j], values[2 * j + 2], df[2 * j + 2],
                                2.0 * dx, s);
  // Cubic Hermite error scales as dx^4.
  return std::fabs(fine - coarse) / 15.0;
}

double DensityGrid::eval2(double x1, double x2) const {
  if (d != 2) throw InputError("density", "eval2 is for d = 2");
  if (!contains(x1) || !contains(x2)) throw InputError("density", "point outside the grid");
  const double p1 = (x1 + half_width) / dx;
  const double p2 = (x2 + half_width) / dx;
  const std::size_t i = std::min(std::size_t(p1), n - 2);
  const std::size_t j = std::min(std::size_t(p2), n - 2);
  const double s = p1 - double(i);
  const double r = p2 - double(j);
  return (1 - s) * (1 - r) * values[i * n + j] + s * (1 - r) * values[(i + 1) * n + j] +
         (1 - s) * r * values[i * n + j + 1] + s * r * values[(i + 1) * n + j + 1];
}

void DensityGrid::write_csv(std::ostream& os) const {
  os.precision(17);
  if (d == 1) {
    os << "x,value";
    for (std::size_t k = 1; k <= derivs.size(); ++k) os << ",d" << k;
    os << '\n';
    for (std::size_t j = 0; j < n; ++j) {
      os << x(j) << ',' << values[j];
      for (const auto& dv : derivs) os << ',' << dv[j];
      os << '\n';
    }
  } else {
    os << "x1,x2,value\n";
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) os << x(i) << ',' << x(j) << ',' << values[i * n + j] << '\n';
  }
}

double density_pointwise(const FrozenSymbol& sym, double t, double xv, int k, double tol) {
  if (sym.dim() != 1) throw InputError("density", "pointwise inversion is for d = 1");
  if (!(t > 0.0)) throw InputError("density", "inversion needs t > 0");
  if (k < 0 || k > 3) throw InputError("density", "derivative order must be in [0, 3]");
  const double alpha = sym.alpha();
  const double upper =
      1.3 * std::pow(45.0 / (t * sym.lambda1() * sym.c_alpha()), 1.0 / alpha);
  // Re[(-iu)^k e^{-iux}] for k = 0..3.
  const auto f = [&](double u) {
    const double phi = std::exp(-t * sym.exponent(u));
    const double ux = u * xv;
    switch (k) {
      case 0: return std::cos(ux) * phi;
      case 1: return -u * std::sin(ux) * phi;
      case 2: return -u * u * std::cos(ux) * phi;
      default: return u * u * u * std::sin(ux) * phi;
    }
  };
  const double width = std::min(upper / 16.0, kPi / std::max(std::fabs(xv), 1e-300));
  std::vector<double> breaks;
  // Kinks of psi at u = 0 and u = 2 (the cos(2h) part of n).
  const quad::Feature feats[] = {{0.0, std::min(1.0, upper / 16.0)}, {2.0, 0.5}};
  breaks = quad::graded_breaks(0.0, std::min(upper, 4.0), feats, 20);
  for (double u = breaks.back() + width; u < upper; u += width) breaks.push_back(u);
  if (breaks.back() < upper) breaks.push_back(upper);
  return quad::integrate_panels(f, breaks, tol, 1e-16, 12).value / kPi;
}

// ---------------------------------------------------------------- cache

namespace {

constexpr char kMagic[8] = {'V', 'S', 'D', 'G', '0', '0', '0', '2'};

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
bool get(std::istream& is, T& v) {
  return bool(is.read(reinterpret_cast<char*>(&v), sizeof(T)));
}
void put_vec(std::ostream& os, const std::vector<double>& v) {
  put(os, std::uint64_t(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
}
bool get_vec(std::istream& is, std::vector<double>& v) {
  std::uint64_t size = 0;
  if (!get(is, size) || size > (std::uint64_t(1) << 32)) return false;
  v.resize(size);
  return bool(is.read(reinterpret_cast<char*>(v.data()), std::streamsize(size * sizeof(double))));
}

std::string cache_name(std::uint64_t model, std::span<const double> y, double t, std::size_t n,
                       double half_width, int derivs) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix = [&h](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (double c : y) mix(&c, sizeof c);
  mix(&t, sizeof t);
  mix(&n, sizeof n);
  mix(&half_width, sizeof half_width);
  mix(&derivs, sizeof derivs);
  std::ostringstream os;
  os << std::hex << model << '-' << h << ".bin";
  return os.str();
}

}  // namespace

void save_density(const std::filesystem::path& file, const DensityGrid& g) {
  std::filesystem::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw ResourceError("density", "cannot write cache file " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    put(os, g.model_hash);
    put(os, std::int32_t(g.d));
    put_vec(os, g.y);
    for (double v : {g.t, g.alpha, g.half_width, g.dx, g.width, g.mass, g.min_value, g.evenness_defect,
                     g.alias_estimate, g.tail_mass_estimate, g.spectral_floor})
      put(os, v);
    put(os, std::uint64_t(g.n));
    put_vec(os, g.values);
    put(os, std::uint64_t(g.derivs.size()));
    for (const auto& dv : g.derivs) put_vec(os, dv);
    if (!os) throw ResourceError("density", "short write to cache file " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

std::optional<DensityGrid> load_density(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) return std::nullopt;
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    return std::nullopt;
  DensityGrid g;
  std::int32_t d = 0;
  std::uint64_t n = 0, nd = 0;
  if (!get(is, g.model_hash) || !get(is, d) || !get_vec(is, g.y)) return std::nullopt;
  g.d = d;
  for (double* p : {&g.t, &g.alpha, &g.half_width, &g.dx, &g.width, &g.mass, &g.min_value,
                    &g.evenness_defect, &g.alias_estimate, &g.tail_mass_estimate,
                    &g.spectral_floor})
    if (!get(is, *p)) return std::nullopt;
  if (!get(is, n) || !get_vec(is, g.values) || !get(is, nd) || nd > 8) return std::nullopt;
  g.n = n;
  g.derivs.resize(nd);
  for (auto& dv : g.derivs)
    if (!get_vec(is, dv)) return std::nullopt;
  return g;
}

DensityCache::DensityCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw ResourceError("density", "cannot create cache directory " + dir_.string());
  }
}

std::filesystem::path DensityCache::default_dir() {
  const char* env = std::getenv("VARSTABLE_CACHE_DIR");
  return env ? std::filesystem::path(env) : std::filesystem::path();
}

DensityGrid DensityCache::get(const FrozenSymbol& sym, double t, const GridSpec& spec) {
  if (dir_.empty()) {
    ++misses_;
    return invert_density(sym, t, spec);
  }
  const GridSpec gs = resolve_grid(sym, t, spec);
  const std::filesystem::path file =
      dir_ / cache_name(sym.field().hash(), sym.y(), t, gs.n, gs.half_width, gs.derivatives);
  if (auto hit = load_density(file)) {
    if (hit->model_hash == sym.field().hash() && hit->y == sym.y() && hit->t == t &&
        hit->n == gs.n && hit->half_width == gs.half_width &&
        int(hit->derivs.size()) == (sym.dim() == 1 ? gs.derivatives : 0)) {
      ++hits_;
      return std::move(*hit);
    }
  }
  ++misses_;
  DensityGrid g = invert_density(sym, t, gs);
  save_density(file, g);
  return g;
}

// ------------------------------------------------------ differences

SecondDifference second_difference(const DensityGrid& g, double x, double h) {
  SecondDifference out;
  out.x = x;
  out.h = h;
  if (!g.contains(x + h) || !g.contains(x - h) || !g.contains(x))
    throw InputError("density", "second difference leaves the grid");
  if (h == 0.0) return out;
  if (std::fabs(h) < 0.1 * g.width && g.derivs.size() >= 4) {
    const double h2 = h * h;
    const double f4 = g.eval_derivative(4, x);
    out.value = g.eval_derivative(2, x) * h2 + f4 * h2 * h2 / 12.0;
    // Next term is O(f'''' h^4 (h / width)^2).
    out.interp_error = std::fabs(f4) * h2 * h2 / 12.0 * h2 / (g.width * g.width);
    return out;
  }
  out.value = g.eval(x + h) + g.eval(x - h) - 2.0 * g.eval(x);
  out.interp_error = g.interpolation_error(x + h) + g.interpolation_error(x - h) +
                     2.0 * g.interpolation_error(x);
  return out;
}

double frac_integral(const DensityGrid& g, double x, const KernelMode& mode) {
  if (g.d != 1) throw InputError("density", "fractional integrals are implemented for d = 1");
  const bool diff = mode.kind == KernelMode::kDifference;
  const double a = mode.alpha;
  const double at = mode.alpha_tilde;
  if (!(a > 0.0 && a < 2.0) || (diff && !(at > 0.0 && at < 2.0)))
    throw InputError("density", "kernel orders must lie in (0, 2)");
  if (diff && a == at) return 0.0;
  const double hmax = g.half_width - 2.0 * g.dx - std::fabs(x);
  if (!(hmax > 1.0)) throw InputError("density", "x too close to the grid edge");

  const auto weight = [&](double h) {
    if (!diff) return std::pow(h, -1.0 - a);
    return std::fabs(std::pow(h, -1.0 - at) - std::pow(h, -1.0 - a));
  };
  if (g.derivs.size() < 4) throw InputError("density", "fractional integrals need f''''");
  const double fx = g.eval(x);
  const double use_taylor = 0.1 * g.width;
  const double f2 = g.eval_derivative(2, x);
  const double f4 = g.eval_derivative(4, x);
  const auto delta = [&](double h) {
    if (h < use_taylor) return f2 * h * h + f4 * h * h * h * h / 12.0;
    return g.eval(x + h) + g.eval(x - h) - 2.0 * fx;
  };
  const auto integrand = [&](double h) { return std::fabs(delta(h)) * weight(h); };

  const double sigma = std::pow(g.t, 1.0 / g.alpha);
  std::vector<quad::Feature> feats{{0.0, sigma}};
  if (std::fabs(x) > 0.0 && std::fabs(x) < hmax) feats.push_back({std::fabs(x), sigma});
  if (diff) feats.push_back({1.0, 1.0});
  feats.push_back({use_taylor, use_taylor});
  const int depth = 30;
  std::vector<double> breaks = quad::graded_breaks(0.0, hmax, feats, depth);
  breaks.erase(breaks.begin());
  const double eps = breaks.front();

  // Inner sliver by the h^2 expansion; outer tail with |delta| -> 2 f(x).
  double inner = 0.0;
  double tail = 0.0;
  if (!diff) {
    inner = std::fabs(f2) * std::pow(eps, 2.0 - a) / (2.0 - a);
    tail = 2.0 * fx * std::pow(hmax, -a) / a;
  } else {
    inner = std::fabs(f2) *
            std::fabs(std::pow(eps, 2.0 - at) / (2.0 - at) - std::pow(eps, 2.0 - a) / (2.0 - a));
    tail = 2.0 * fx * std::fabs(std::pow(hmax, -at) / at - std::pow(hmax, -a) / a);
  }
  const double body = quad::integrate_panels(integrand, breaks, 1e-7, 1e-15, 10).value;
  return 2.0 * (inner + body + tail);
}

// ----------------------------------------------------- identity checks

BoundReport scaling_check(double alpha, double t, double a, double tol) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw InputError("density", "alpha must lie in (0, 2)");
  if (!(t > 0.0) || !(a > 0.0)) throw InputError("density", "scaling check needs t, a > 0");
  const CoefficientField field = make_constant_field(1, alpha, 1.0);
  const FrozenSymbol sym(field, {0.0});
  const DensityGrid direct = invert_density(sym, t, {});
  const double s = std::pow(a, -alpha) * t;
  const DensityGrid base = s == t ? direct : invert_density(sym, s, {});

  BoundReport rep;
  rep.lemma_id = "scaling";
  rep.coord_names = {"x"};
  std::ostringstream spec;
  spec << "alpha = " << alpha << ", t = " << t << ", a = " << a
       << ", 401 points on |x| <= 10 t^{1/alpha}";
  rep.grid_spec = spec.str();
  const double range = 10.0 * std::pow(t, 1.0 / alpha);
  double dev = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double x = -range + 2.0 * range * i / 400.0;
    BoundSample smp;
    smp.coords = {x};
    smp.lhs = direct.eval(x);
    smp.rhs = base.eval(x / a) / a;
    smp.coarse = i % 2 == 0;
    dev = std::max(dev, std::fabs(smp.lhs - smp.rhs));
    rep.samples.push_back(smp);
  }
  rep.finalize();
  rep.max_deviation = dev;
  rep.passed = dev <= 10.0 * tol;
  return rep;
}

double chapman_kolmogorov_defect(const FrozenSymbol& sym, double t, double s, double x_max) {
  if (!(s > 0.0 && s < t)) throw InputError("density", "need 0 < s < t");
  if (sym.dim() != 1) throw InputError("density", "Chapman-Kolmogorov check is for d = 1");
  const DensityGrid gs = invert_density(sym, s, {});
  const DensityGrid gr = invert_density(sym, t - s, {});
  const DensityGrid gt = invert_density(sym, t, {});
  const double ss = std::pow(s, 1.0 / sym.alpha());
  const double sr = std::pow(t - s, 1.0 / sym.alpha());
  double defect = 0.0;
  for (int i = 0; i <= 40; ++i) {
    const double x = -x_max + 2.0 * x_max * i / 40.0;
    const double zlim = std::min(gs.half_width, gr.half_width - std::fabs(x)) - 4.0 * gs.dx;
    const auto f = [&](double z) { return gs.eval(z) * gr.eval(x - z); };
    const quad::Feature feats[] = {{0.0, ss}, {x, sr}};
    const auto breaks = quad::graded_breaks(-zlim, zlim, feats, 24);
    const double conv = quad::integrate_panels(f, breaks, 1e-10, 1e-15, 12).value;
    defect = std::max(defect, std::fabs(conv - gt.eval(x)));
  }
  return defect;
}

// ------------------------------------------------------- bound checks

namespace {

bool coarse_index(long i, long n) { return i % 2 == 0 || i == n - 1; }

double rho00(double alpha, double t, double x) {
  return std::pow(std::pow(t, 1.0 / alpha) + std::fabs(x), -1.0 - alpha);
}

}  // namespace

BoundReport check_density_bounds(const std::string& lemma_id, const CoefficientField& field,
                                 const DensityBoundGrid& grid) {
  if (field.dim() != 1) throw InputError("density", "density bound checks are for d = 1");
  int k_order = -1;
  if (lemma_id.rfind("L2.6-", 0) == 0) {
    k_order = std::atoi(lemma_id.c_str() + 5);
    if (k_order < 0 || k_order > 2 || lemma_id.size() != 6)
      throw InputError("density", "L2.6 check supports k in {0, 1, 2}");
  } else if (lemma_id != "second-diff" && lemma_id != "L2.8" && lemma_id != "L2.9") {
    throw InputError("density", "unknown density lemma id '" + lemma_id + "'");
  }
  if (grid.y_points.empty() || grid.t_exp_min > grid.t_exp_max || grid.x_points < 1)
    throw InputError("density", "empty density bound grid");

  std::vector<double> xs{0.0};
  for (int i = 0; i < grid.x_points; ++i)
    xs.push_back(grid.x_points == 1 ? grid.x_max
                                    : grid.x_min * std::pow(grid.x_max / grid.x_min,
                                                            double(i) / (grid.x_points - 1)));
  std::vector<double> hs;
  for (int i = 0; i < grid.h_points; ++i)
    hs.push_back(grid.h_points == 1 ? grid.h_max
                                    : grid.h_min * std::pow(grid.h_max / grid.h_min,
                                                            double(i) / (grid.h_points - 1)));
  std::vector<double> alpha_tilde = grid.alpha_tilde;
  if (alpha_tilde.empty()) {
    const ModelParams& p = field.params();
    alpha_tilde = {p.alpha_lower, 0.5 * (p.alpha_lower + p.alpha_upper), p.alpha_upper};
  }

  BoundReport rep;
  rep.lemma_id = lemma_id;
  if (k_order >= 0 || lemma_id == "L2.8")
    rep.coord_names = {"y", "t", "x"};
  else if (lemma_id == "second-diff")
    rep.coord_names = {"y", "t", "x", "h"};
  else
    rep.coord_names = {"y", "t", "x", "alpha_tilde"};
  std::ostringstream spec;
  spec << grid.y_points.size() << " freezing points, t = 2^k for k in [" << grid.t_exp_min
       << ", " << grid.t_exp_max << "], x = 0 and " << grid.x_points << " log-spaced |x| in ["
       << grid.x_min << ", " << grid.x_max << "]";
  if (lemma_id == "second-diff")
    spec << ", " << grid.h_points << " log-spaced h in [" << grid.h_min << ", " << grid.h_max << "]";
  if (lemma_id == "L2.9") spec << ", " << alpha_tilde.size() << " values of alpha~";
  rep.grid_spec = spec.str();

  const long nt = grid.t_exp_max - grid.t_exp_min + 1;
  const std::size_t tasks = grid.y_points.size() * std::size_t(nt);
  std::vector<std::vector<BoundSample>> parts(tasks);
  GridSpec gspec = grid.spec;
  gspec.derivatives = std::max(gspec.derivatives, 4);

  parallel_for(tasks, grid.workers, [&](std::size_t task) {
    const double y = grid.y_points[task / nt];
    const long it = long(task % nt);
    const double t = std::ldexp(1.0, grid.t_exp_min + int(it));
    const FrozenSymbol sym(field, {y});
    const DensityGrid g = invert_density(sym, t, gspec);
    const double a = g.alpha;
    std::vector<BoundSample>& out = parts[task];
    const bool ct = coarse_index(it, nt);
    for (std::size_t ix = 0; ix < xs.size(); ++ix) {
      const double x = xs[ix];
      const bool cx = ct && coarse_index(long(ix), long(xs.size()));
      if (k_order >= 0) {
        const double lhs = std::fabs(g.eval_derivative(k_order, x));
        const double rhs = std::pow(t, 1.0 - k_order / a) * rho00(a, t, x);
        out.push_back({{y, t, x}, lhs, rhs, cx});
      } else if (lemma_id == "second-diff") {
        const RhoKernel rk{a, 0.0, a, 1};
        for (std::size_t ih = 0; ih < hs.size(); ++ih) {
          const double h = hs[ih];
          const double lhs = std::fabs(second_difference(g, x, h).value);
          const double rhs = std::min(std::pow(t, -2.0 / a) * h * h, 1.0) *
                             (rho_eval(rk, t, x + h) + rho_eval(rk, t, x - h) + rho_eval(rk, t, x));
          out.push_back({{y, t, x, h}, lhs, rhs, cx && coarse_index(long(ih), long(hs.size()))});
        }
      } else if (lemma_id == "L2.8") {
        const double lhs = frac_integral(g, x, {KernelMode::kSingle, a, a});
        out.push_back({{y, t, x}, lhs, rho00(a, t, x), cx});
      } else {
        for (std::size_t ia = 0; ia < alpha_tilde.size(); ++ia) {
          const double at = alpha_tilde[ia];
          const double lhs = frac_integral(g, x, {KernelMode::kDifference, a, at});
          const double gap = std::fabs(a - at);
          const double far = std::fabs(x) >= 2.0 ? std::log(std::fabs(x)) : 0.0;
          const double rhs =
              gap * (1.0 + std::fabs(std::log(t)) + far) *
                  std::max(std::pow(t, (a - at) / a), 1.0) * rho00(a, t, x) +
              gap * far * rho00(at, t, x);
          out.push_back({{y, t, x, at}, lhs, rhs,
                         cx && coarse_index(long(ia), long(alpha_tilde.size()))});
        }
      }
    }
  });
  for (auto& p : parts) rep.samples.insert(rep.samples.end(), p.begin(), p.end());
  rep.finalize();
  return rep;
}

}  // namespace varstable
