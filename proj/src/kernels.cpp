#include "varstable/kernels.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "varstable/error.hpp"
#include "varstable/parallel.hpp"
#include "varstable/quadrature.hpp"

namespace varstable {

double rho_eval(const RhoKernel& k, double t, double x_norm) {
  if (!(t > 0.0)) throw InputError("kernels", "rho needs t > 0");
  if (!(k.alpha > 0.0 && k.alpha < 2.0)) throw InputError("kernels", "rho needs alpha in (0,2)");
  const double r = std::fabs(x_norm);
  double cut = 1.0;
  if (k.beta_exp != 0.0) cut = (r == 0.0) ? (k.beta_exp > 0.0 ? 0.0 : 1.0)
                                           : std::min(std::pow(r, k.beta_exp), 1.0);
  return std::pow(t, k.gamma_exp / k.alpha) * cut *
         std::pow(std::pow(t, 1.0 / k.alpha) + r, -k.d - k.alpha);
}

double rho_eval(const RhoKernel& k, double t, std::span<const double> x) {
  double s = 0.0;
  for (double c : x) s += c * c;
  return rho_eval(k, t, std::sqrt(s));
}

namespace {

// The coarse sub-grid keeps every other index and both ends, so both grids
// span the same domain.
bool coarse_index(long i, long n) { return i % 2 == 0 || i == n - 1; }

double rho00a(double alpha, double t, double r) {
  return t * std::pow(std::pow(t, 1.0 / alpha) + std::fabs(r), -1.0 - alpha);
}

}  // namespace

double rho_mass(double alpha, double t, int d, bool log_weight) {
  if (d != 1 && d != 2) throw InputError("kernels", "rho_mass supports d in {1, 2}");
  const double scale = std::pow(t, 1.0 / alpha);
  const RhoKernel k{alpha, 0.0, alpha, d};
  // Radial integrand including the surface measure of the unit sphere.
  const double surface = d == 1 ? 2.0 : 2.0 * std::numbers::pi;
  const auto f = [&](double r) {
    const double jac = d == 1 ? 1.0 : r;
    const double w = log_weight ? (r > 0.0 ? std::fabs(std::log(r)) : 0.0) : 1.0;
    return surface * jac * w * rho_eval(k, t, r);
  };
  const double far = 1e3 * std::max(1.0, scale);
  const quad::Feature feats[] = {{0.0, scale}, {1.0, 1.0}};
  const auto breaks = quad::graded_breaks(0.0, far, feats, 40);
  return quad::integrate_panels(f, breaks, 1e-11).value + quad::integrate_tail(f, far).value;
}

double rho_convolution(double alpha_tilde, double alpha, double t, double tau, double w,
                       bool far_log_weight) {
  const auto f = [&](double eta) {
    const double z = w - eta;
    double v = rho00a(alpha_tilde, t - tau, z) * rho00a(alpha, tau, eta);
    if (far_log_weight) v *= std::fabs(z) >= 2.0 ? std::log(std::fabs(z)) : 0.0;
    return v;
  };
  const double s1 = std::pow(tau, 1.0 / alpha);
  const double s2 = std::pow(t - tau, 1.0 / alpha_tilde);
  std::vector<quad::Feature> feats{{0.0, s1}, {w, s2}};
  if (far_log_weight) {
    feats.push_back({w - 2.0, 1.0});
    feats.push_back({w + 2.0, 1.0});
  }
  const double far = 50.0 * (std::fabs(w) + 3.0);
  const auto breaks = quad::graded_breaks(-far, far, feats, 40);
  double total = quad::integrate_panels(f, breaks, 1e-11).value;
  total += quad::integrate_tail(f, far).value;
  total += quad::integrate_tail([&](double e) { return f(-e); }, far).value;
  return total;
}

BoundReport check_convolution_bound(const std::string& lemma_id, const ConvolutionGrid& g) {
  if (!(g.alpha1 > 0.0 && g.alpha1 <= g.alpha2 && g.alpha2 < 2.0))
    throw InputError("kernels", "alpha range must satisfy 0 < alpha1 <= alpha2 < 2");
  if (g.alpha_points < 1 || g.w_points < 1 || g.t_exp_min > g.t_exp_max)
    throw InputError("kernels", "empty convolution grid");

  std::vector<double> alphas;
  for (int i = 0; i < g.alpha_points; ++i)
    alphas.push_back(g.alpha_points == 1 ? g.alpha1
                                         : g.alpha1 + (g.alpha2 - g.alpha1) * i /
                                                          (g.alpha_points - 1));
  std::vector<double> ws;
  for (int i = 0; i < g.w_points; ++i)
    ws.push_back(g.w_points == 1 ? g.w_max
                                 : g.w_min * std::pow(g.w_max / g.w_min,
                                                      double(i) / (g.w_points - 1)));

  BoundReport rep;
  rep.lemma_id = lemma_id;
  std::ostringstream spec;
  spec << "alpha in [" << g.alpha1 << ", " << g.alpha2 << "] x" << g.alpha_points
       << ", t = 2^k for k in [" << g.t_exp_min << ", " << g.t_exp_max << "]";

  struct Task {
    std::vector<double> coords;
    bool coarse;
  };
  std::vector<Task> tasks;

  if (lemma_id == "L2.1") {
    rep.coord_names = {"part", "alpha", "t"};
    // The inequality holds for all t > 0; the grid extends past t = 1.
    for (int part = 1; part <= 2; ++part)
      for (std::size_t ia = 0; ia < alphas.size(); ++ia)
        for (int k = g.t_exp_min; k <= g.t_exp_max + 4; ++k)
          tasks.push_back({{double(part), alphas[ia], std::ldexp(1.0, k)},
                           coarse_index(ia, long(alphas.size())) &&
                               coarse_index(k - g.t_exp_min, g.t_exp_max + 5 - g.t_exp_min)});
    spec << " (+4 exponents), d = " << g.d;
  } else if (lemma_id == "L2.2" || lemma_id == "L2.3") {
    if (g.d != 1) throw InputError("kernels", lemma_id + " check is implemented for d = 1");
    rep.coord_names = {"alpha", "alpha_tilde", "t", "tau", "w"};
    for (std::size_t ia = 0; ia < alphas.size(); ++ia)
      for (std::size_t ib = 0; ib < alphas.size(); ++ib)
        for (int k = g.t_exp_min; k <= g.t_exp_max; ++k)
          for (double ratio : g.tau_ratios)
            for (std::size_t iw = 0; iw < ws.size(); ++iw) {
              const double t = std::ldexp(1.0, k);
              const long na = long(alphas.size());
              const bool coarse = coarse_index(ia, na) && coarse_index(ib, na) &&
                                  coarse_index(k - g.t_exp_min, g.t_exp_max + 1 - g.t_exp_min) &&
                                  coarse_index(iw, long(ws.size()));
              tasks.push_back({{alphas[ia], alphas[ib], t, ratio * t, ws[iw]}, coarse});
            }
    spec << ", tau/t in {";
    for (double r : g.tau_ratios) spec << r << ' ';
    spec << "}, |w| log-spaced in [" << g.w_min << ", " << g.w_max << "] x" << g.w_points;
    rep.notes.push_back("|w| >= " + std::to_string(g.w_min) +
                        ": below this the exp(|alpha - alpha~| |ln|w||) factor makes the "
                        "check vacuous");
  } else {
    throw InputError("kernels", "unknown convolution lemma id '" + lemma_id + "'");
  }
  rep.grid_spec = spec.str();
  rep.samples.resize(tasks.size());

  parallel_for(tasks.size(), g.workers, [&](std::size_t i) {
    const auto& c = tasks[i].coords;
    BoundSample s;
    s.coords = c;
    s.coarse = tasks[i].coarse;
    try {
      if (lemma_id == "L2.1") {
        const bool log_part = c[0] == 2.0;
        s.lhs = rho_mass(c[1], c[2], g.d, log_part);
        s.rhs = log_part ? 1.0 + std::fabs(std::log(c[2])) : 1.0;
      } else {
        const double alpha = c[0], alpha_t = c[1], t = c[2], tau = c[3], w = c[4];
        const bool far = lemma_id == "L2.3";
        s.lhs = rho_convolution(alpha_t, alpha, t, tau, w, far);
        const double growth = std::exp(std::fabs(alpha - alpha_t) * std::fabs(std::log(w)));
        s.rhs = growth * (rho00a(alpha, t, w) + rho00a(alpha_t, t, w));
        if (far) s.rhs *= 1.0 + std::fabs(std::log(tau)) + std::fabs(std::log(t - tau));
      }
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << lemma_id << " quadrature failed at (";
      for (double v : c) os << v << ' ';
      os << "): " << e.what();
      throw NumericalError("kernels", os.str());
    }
    rep.samples[i] = s;
  });
  rep.finalize();
  return rep;
}

}  // namespace varstable
