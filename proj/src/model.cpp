#include "census/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace census {

void ModelSpec::validate() const {
  if (sites < 1) throw std::invalid_argument("model needs at least one site");
  if (train_length < 1) throw std::invalid_argument("model needs at least one training day");
  if (latent == LatentKind::Gar && window < 1) throw std::invalid_argument("GAR window must be at least 1");
  if (latent == LatentKind::Ggp && sites > 1) throw std::invalid_argument("multi-site model is defined for GAR latents only");
  priors.validate();
}

std::string ModelSpec::describe() const {
  std::ostringstream out;
  out << (sites > 1 ? "multi-site " : "single-site ");
  if (latent == LatentKind::Gar) {
    out << "GAR(W=" << window << ")";
  } else {
    out << "GGP(mu_ell=" << priors.length_scale_mean() << ")";
  }
  out << (likelihood == LikelihoodKind::GenPoisson ? " genpoisson" : " poisson");
  return out.str();
}

double truncnormal_mean(const TruncNormalPrior& prior) noexcept {
  const double a = (prior.lower - prior.mean) / prior.stddev;
  const double b = (prior.upper - prior.mean) / prior.stddev;
  const auto phi = [](double z) { return std::isfinite(z) ? std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi) : 0.0; };
  const double mass = std::exp(normal_interval_logmass(prior.mean, prior.stddev, prior.lower, prior.upper));
  return prior.mean + prior.stddev * (phi(a) - phi(b)) / mass;
}

double latent_count_logpmf(Count y, double f, double lambda, LikelihoodKind kind, bool daily_floor) noexcept {
  const double theta = std::exp(f);
  if (!(theta > 0.0) || !std::isfinite(theta) || y < 0) return -kInf;
  if (kind == LikelihoodKind::Poisson) return detail::poisson_logpmf_raw(y, theta);
  if (lambda < -1.0 || lambda > 1.0 || (daily_floor && lambda < -0.25 * theta)) return -kInf;
  return detail::genpoisson_logpmf_raw(y, theta, lambda);
}

double log1m_tanh_half_sq(double z) noexcept {
  const double x = std::fabs(0.5 * z);
  const double log_cosh = x + std::log1p(std::exp(-2.0 * x)) - std::numbers::ln2;
  return -2.0 * log_cosh;
}

// ---- packing --------------------------------------------------------------

Eigen::VectorXd pack(const ModelSpec& spec, const PosteriorSample& sample) {
  spec.validate();
  if (static_cast<int>(sample.f.size()) != spec.sites) throw std::invalid_argument("sample has the wrong number of sites");
  Eigen::VectorXd v(spec.dim());
  if (spec.latent == LatentKind::Gar) {
    const auto& p = std::get<GarParams>(sample.latent_params);
    if (p.window() != spec.window) throw std::invalid_argument("GAR coefficient count does not match the window");
    v.head(spec.window + 1) = p.beta;
    v[spec.window + 1] = std::log(p.sigma);
  } else {
    const auto& p = std::get<GgpParams>(sample.latent_params);
    v[0] = p.c;
    v[1] = std::log(p.a);
    v[2] = std::log(p.ell);
  }
  Eigen::Index off = spec.alpha_dim();
  for (int h = 0; h < spec.sites; ++h) {
    if (spec.has_dispersion()) v[off++] = 2.0 * std::atanh(sample.lambda.at(h));
    if (sample.f[h].size() != spec.train_length) throw std::invalid_argument("latent sequence length does not match the training length");
    v.segment(off, spec.train_length) = sample.f[h];
    off += spec.train_length;
  }
  return v;
}

PosteriorSample unpack(const ModelSpec& spec, const Eigen::VectorXd& v) {
  spec.validate();
  if (v.size() != spec.dim()) {
    std::ostringstream msg;
    msg << "unconstrained vector has dimension " << v.size() << ", expected " << spec.dim();
    throw std::invalid_argument(msg.str());
  }
  PosteriorSample s;
  if (spec.latent == LatentKind::Gar) {
    GarParams p;
    p.beta = v.head(spec.window + 1);
    p.sigma = std::exp(v[spec.window + 1]);
    s.latent_params = p;
  } else {
    s.latent_params = GgpParams{v[0], std::exp(v[1]), std::exp(v[2])};
  }
  Eigen::Index off = spec.alpha_dim();
  for (int h = 0; h < spec.sites; ++h) {
    s.lambda.push_back(spec.has_dispersion() ? std::tanh(0.5 * v[off++]) : 0.0);
    s.f.emplace_back(v.segment(off, spec.train_length));
    off += spec.train_length;
  }
  return s;
}

std::vector<std::string> parameter_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  if (spec.latent == LatentKind::Gar) {
    for (int i = 0; i <= spec.window; ++i) names.push_back("beta." + std::to_string(i));
    names.emplace_back("sigma");
  } else {
    names.insert(names.end(), {"c", "a", "ell"});
  }
  for (int h = 0; h < spec.sites; ++h) {
    if (spec.has_dispersion()) names.push_back("lambda." + std::to_string(h));
    for (int t = 0; t < spec.train_length; ++t) names.push_back("f." + std::to_string(h) + "." + std::to_string(t));
  }
  return names;
}

Eigen::VectorXd constrained_values(const ModelSpec& spec, const PosteriorSample& sample) {
  Eigen::VectorXd v = pack(spec, sample);
  if (spec.latent == LatentKind::Gar) {
    v[spec.window + 1] = std::get<GarParams>(sample.latent_params).sigma;
  } else {
    const auto& p = std::get<GgpParams>(sample.latent_params);
    v[1] = p.a;
    v[2] = p.ell;
  }
  if (spec.has_dispersion()) {
    for (int h = 0; h < spec.sites; ++h) v[spec.alpha_dim() + h * spec.site_block()] = sample.lambda[h];
  }
  return v;
}

PosteriorSample from_constrained_values(const ModelSpec& spec, const Eigen::VectorXd& values) {
  spec.validate();
  if (values.size() != spec.dim()) throw std::invalid_argument("constrained row has the wrong number of columns");
  PosteriorSample s;
  if (spec.latent == LatentKind::Gar) {
    GarParams p;
    p.beta = values.head(spec.window + 1);
    p.sigma = values[spec.window + 1];
    s.latent_params = p;
  } else {
    s.latent_params = GgpParams{values[0], values[1], values[2]};
  }
  Eigen::Index off = spec.alpha_dim();
  for (int h = 0; h < spec.sites; ++h) {
    s.lambda.push_back(spec.has_dispersion() ? values[off++] : 0.0);
    s.f.emplace_back(values.segment(off, spec.train_length));
    off += spec.train_length;
  }
  return s;
}

// ---- posterior ------------------------------------------------------------

PosteriorModel::PosteriorModel(ModelSpec spec, SiteCounts data) : spec_(std::move(spec)), data_(std::move(data)) {
  spec_.validate();
  if (static_cast<int>(data_.size()) != spec_.sites) throw std::invalid_argument("data has a different number of sites than the model");
  for (const auto& site : data_) {
    if (static_cast<int>(site.size()) != spec_.train_length) throw std::invalid_argument("site series length differs from the training length");
    for (Count y : site) {
      if (y < 0) throw std::invalid_argument("counts must be non-negative");
    }
  }
  times_ = day_indices(spec_.train_length);
}

Eigen::VectorXd PosteriorModel::initial_point() const {
  PosteriorSample s;
  const PriorConfig& pr = spec_.priors;
  if (spec_.latent == LatentKind::Gar) {
    GarParams p;
    p.beta.resize(spec_.window + 1);
    for (int i = 0; i <= spec_.window; ++i) p.beta[i] = truncnormal_mean(pr.beta_prior(i));
    p.sigma = truncnormal_mean(pr.sigma);
    s.latent_params = p;
  } else {
    s.latent_params = GgpParams{truncnormal_mean(pr.c), truncnormal_mean(pr.a), truncnormal_mean(pr.ell)};
  }
  for (const auto& site : data_) {
    s.lambda.push_back(0.0);
    LatentSeq f(spec_.train_length);
    for (int t = 0; t < spec_.train_length; ++t) f[t] = std::log(static_cast<double>(site[t]) + 1.0);
    s.f.push_back(std::move(f));
  }
  return pack(spec_, s);
}

double PosteriorModel::site_likelihood(const double* f, const std::vector<Count>& y, double lambda, double* d_f,
                                       double* d_lambda) const {
  double ll = 0.0;
  const bool gen = spec_.has_dispersion();
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double theta = std::exp(f[t]);
    if (!(theta > 0.0) || !std::isfinite(theta)) return -kInf;
    const double yd = static_cast<double>(y[t]);
    if (!gen) {
      ll += detail::poisson_logpmf_raw(y[t], theta);
      if (d_f != nullptr) d_f[t] += yd - theta;
      continue;
    }
    if (spec_.daily_dispersion_floor && lambda < -0.25 * theta) return -kInf;
    const double lp = detail::genpoisson_logpmf_raw(y[t], theta, lambda);
    if (lp == -kInf) return -kInf;
    ll += lp;
    if (d_f != nullptr) {
      const double shifted = theta + lambda * yd;
      d_f[t] += 1.0 + theta * (yd - 1.0) / shifted - theta;
      *d_lambda += yd * (yd - 1.0) / shifted - yd;
    }
  }
  return ll;
}

Eigen::MatrixXd PosteriorModel::ggp_kernel(const GgpParams& p) const {
  // Days are evenly spaced, so K(i, j) depends on |i - j| only.
  const Eigen::Index n = spec_.train_length;
  Eigen::VectorXd by_lag(n);
  for (Eigen::Index d = 0; d < n; ++d) {
    const double dd = static_cast<double>(d);
    by_lag[d] = p.a * p.a * std::exp(-0.5 * dd * dd / (p.ell * p.ell));
  }
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) k(i, j) = by_lag[i > j ? i - j : j - i];
  }
  return k;
}

Eigen::MatrixXd PosteriorModel::ggp_cholesky(const GgpParams& p, const Eigen::MatrixXd& k) const {
  Eigen::MatrixXd cov = k;
  cov.diagonal().array() += default_jitter(p);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("GP covariance is not positive definite after jitter");
  return llt.matrixL();
}

Eigen::VectorXd PosteriorModel::noncentered_initial_point() const {
  Eigen::VectorXd x = to_noncentered(initial_point());
  if (spec_.latent == LatentKind::Ggp) {
    // Innovations that reproduce noisy log counts under a smooth kernel are
    // huge; start from the flat path at the mean log count instead.
    double mean = 0.0;
    for (const auto& site : data_) {
      for (Count y : site) mean += std::log(static_cast<double>(y) + 1.0);
    }
    mean /= static_cast<double>(spec_.sites * spec_.train_length);
    x[0] = std::clamp(mean, spec_.priors.c.lower + 0.1, spec_.priors.c.upper - 0.1);
    Eigen::Index off = spec_.alpha_dim();
    for (int h = 0; h < spec_.sites; ++h) {
      if (spec_.has_dispersion()) ++off;
      x.segment(off, spec_.train_length).setZero();
      off += spec_.train_length;
    }
  }
  return x;
}

namespace {

// Latent process parameters from the head of either coordinate vector.
LatentParams head_params(const ModelSpec& spec, const Eigen::VectorXd& v) {
  if (spec.latent == LatentKind::Gar) {
    GarParams p;
    p.beta = v.head(spec.window + 1);
    p.sigma = std::exp(v[spec.window + 1]);
    return p;
  }
  return GgpParams{v[0], std::exp(v[1]), std::exp(v[2])};
}

// Cholesky factor of `sigma` together with its directional derivative along
// `d_sigma`, in one left-looking pass. Row-major so the inner products over
// earlier columns read contiguous memory.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void cholesky_tangent(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& d_sigma, RowMatrix& l, RowMatrix& dl) {
  const Eigen::Index n = sigma.rows();
  l.setZero(n, n);
  dl.setZero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto lj = l.row(j).head(j);
    const auto dlj = dl.row(j).head(j);
    const double s = sigma(j, j) - lj.squaredNorm();
    if (!(s > 0.0)) throw NumericalError("GP covariance is not positive definite after jitter");
    const double ljj = std::sqrt(s);
    const double dljj = (d_sigma(j, j) - 2.0 * lj.dot(dlj)) / (2.0 * ljj);
    l(j, j) = ljj;
    dl(j, j) = dljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const auto li = l.row(i).head(j);
      const auto dli = dl.row(i).head(j);
      const double lij = (sigma(i, j) - li.dot(lj)) / ljj;
      l(i, j) = lij;
      dl(i, j) = (d_sigma(i, j) - dli.dot(lj) - li.dot(dlj) - lij * dljj) / ljj;
    }
  }
}

double gar_mean(const GarParams& p, const double* f, Eigen::Index t) {
  const int lags = static_cast<int>(std::min<Eigen::Index>(t, p.window()));
  double mean = p.beta[0];
  for (int tau = 1; tau <= lags; ++tau) mean += p.beta[tau] * f[t - tau];
  return mean;
}

}  // namespace

Eigen::VectorXd PosteriorModel::to_noncentered(const Eigen::VectorXd& v) const {
  if (v.size() != spec_.dim()) throw std::invalid_argument("unconstrained vector has the wrong dimension");
  Eigen::VectorXd x = v;
  const LatentParams params = head_params(spec_, v);
  const Eigen::Index n = spec_.train_length;
  Eigen::Index off = spec_.alpha_dim();
  for (int h = 0; h < spec_.sites; ++h) {
    if (spec_.has_dispersion()) ++off;
    const double* f = v.data() + off;
    if (const auto* gar = std::get_if<GarParams>(&params)) {
      for (Eigen::Index t = 0; t < n; ++t) x[off + t] = (f[t] - gar_mean(*gar, f, t)) / gar->sigma;
    } else {
      const GgpParams& ggp = std::get<GgpParams>(params);
      const Eigen::VectorXd resid = v.segment(off, n).array() - ggp.c;
      x.segment(off, n) = ggp_cholesky(ggp, ggp_kernel(ggp)).triangularView<Eigen::Lower>().solve(resid);
    }
    off += n;
  }
  return x;
}

Eigen::VectorXd PosteriorModel::from_noncentered(const Eigen::VectorXd& x) const {
  if (x.size() != spec_.dim()) throw std::invalid_argument("unconstrained vector has the wrong dimension");
  Eigen::VectorXd v = x;
  const LatentParams params = head_params(spec_, x);
  const Eigen::Index n = spec_.train_length;
  Eigen::Index off = spec_.alpha_dim();
  for (int h = 0; h < spec_.sites; ++h) {
    if (spec_.has_dispersion()) ++off;
    double* f = v.data() + off;
    if (const auto* gar = std::get_if<GarParams>(&params)) {
      for (Eigen::Index t = 0; t < n; ++t) f[t] = gar_mean(*gar, f, t) + gar->sigma * x[off + t];
    } else {
      const GgpParams& ggp = std::get<GgpParams>(params);
      v.segment(off, n) = (ggp_cholesky(ggp, ggp_kernel(ggp)).triangularView<Eigen::Lower>() * x.segment(off, n)).array() + ggp.c;
    }
    off += n;
  }
  return v;
}

double PosteriorModel::evaluate(const Eigen::VectorXd& v, Eigen::VectorXd* grad, bool noncentered) const {
  if (v.size() != spec_.dim()) throw std::invalid_argument("unconstrained vector has the wrong dimension");
  if (grad != nullptr) grad->setZero(v.size());
  const auto fail = [grad]() {
    if (grad != nullptr) grad->setZero();
    return -kInf;
  };
  if (!v.allFinite()) return fail();
  const PriorConfig& pr = spec_.priors;
  double* g = grad != nullptr ? grad->data() : nullptr;
  double lp = 0.0;
  const Eigen::Index alpha = spec_.alpha_dim();
  const Eigen::Index n = spec_.train_length;

  GarParams gar;
  GgpParams ggp;
  if (spec_.latent == LatentKind::Gar) {
    const int w = spec_.window;
    gar.beta = v.head(w + 1);
    gar.sigma = std::exp(v[w + 1]);
    if (!(gar.sigma > 0.0) || !std::isfinite(gar.sigma)) return fail();
    for (int i = 0; i <= w; ++i) {
      lp += truncnormal_logpdf(gar.beta[i], pr.beta_prior(i));
      if (g != nullptr) g[i] += truncnormal_dlogpdf(gar.beta[i], pr.beta_prior(i));
    }
    lp += truncnormal_logpdf(gar.sigma, pr.sigma) + v[w + 1];
    if (g != nullptr) g[w + 1] += truncnormal_dlogpdf(gar.sigma, pr.sigma) * gar.sigma + 1.0;
  } else {
    ggp = GgpParams{v[0], std::exp(v[1]), std::exp(v[2])};
    if (!(ggp.a > 0.0) || !(ggp.ell > 0.0) || !std::isfinite(ggp.a) || !std::isfinite(ggp.ell)) return fail();
    lp += truncnormal_logpdf(ggp.c, pr.c) + truncnormal_logpdf(ggp.a, pr.a) + truncnormal_logpdf(ggp.ell, pr.ell);
    lp += v[1] + v[2];
    if (lp == -kInf) return fail();
    if (g != nullptr) {
      g[0] += truncnormal_dlogpdf(ggp.c, pr.c);
      g[1] += truncnormal_dlogpdf(ggp.a, pr.a) * ggp.a + 1.0;
      g[2] += truncnormal_dlogpdf(ggp.ell, pr.ell) * ggp.ell + 1.0;
    }
  }
  if (lp == -kInf) return fail();

  // Shared by all sites in non-centered GGP coordinates.
  Eigen::MatrixXd ggp_l;
  RowMatrix ggp_dl_ell;  // dL / d ell
  if (noncentered && spec_.latent == LatentKind::Ggp) {
    const Eigen::MatrixXd k = ggp_kernel(ggp);
    try {
      if (g == nullptr) {
        ggp_l = ggp_cholesky(ggp, k);
      } else {
        Eigen::MatrixXd cov = k;
        cov.diagonal().array() += default_jitter(ggp);
        Eigen::MatrixXd d_sigma(n, n);
        const double ell3 = ggp.ell * ggp.ell * ggp.ell;
        for (Eigen::Index j = 0; j < n; ++j) {
          for (Eigen::Index i = 0; i < n; ++i) {
            const double d = static_cast<double>(i - j);
            d_sigma(i, j) = k(i, j) * d * d / ell3;
          }
        }
        RowMatrix l;
        cholesky_tangent(cov, d_sigma, l, ggp_dl_ell);
        ggp_l = l;
      }
    } catch (const NumericalError&) {
      return fail();
    }
  }

  Eigen::VectorXd f_buf(n);
  Eigen::VectorXd g_buf(n);
  Eigen::Index off = alpha;
  for (int h = 0; h < spec_.sites; ++h) {
    double lambda = 0.0;
    Eigen::Index z_index = -1;
    if (spec_.has_dispersion()) {
      z_index = off++;
      const double z = v[z_index];
      lambda = std::tanh(0.5 * z);
      lp += truncnormal_logpdf(lambda, pr.lambda) + log1m_tanh_half_sq(z) - std::numbers::ln2;
      if (lp == -kInf) return fail();
    }
    const double* f = v.data() + off;
    double* d_f = g != nullptr ? g + off : nullptr;

    if (noncentered) {
      // v holds innovations e; f is rebuilt and the likelihood gradient is
      // pulled back through the map.
      const double* e = v.data() + off;
      lp += -0.5 * Eigen::Map<const Eigen::VectorXd>(e, n).squaredNorm() -
            0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
      if (spec_.latent == LatentKind::Gar) {
        for (Eigen::Index t = 0; t < n; ++t) f_buf[t] = gar_mean(gar, f_buf.data(), t) + gar.sigma * e[t];
      } else {
        f_buf = (ggp_l.triangularView<Eigen::Lower>() * Eigen::Map<const Eigen::VectorXd>(e, n)).array() + ggp.c;
      }
      f = f_buf.data();
      g_buf.setZero();
    } else if (spec_.latent == LatentKind::Gar) {
      const int w = spec_.window;
      double d_sigma = 0.0;
      lp += detail::gar_logdensity_accumulate(f, n, gar, d_f, g, g != nullptr ? &d_sigma : nullptr);
      if (g != nullptr) g[w + 1] += d_sigma * gar.sigma;
    } else {
      const Eigen::Map<const Eigen::VectorXd> fv(f, n);
      const double jitter = default_jitter(ggp);
      try {
        if (g != nullptr) {
          const GgpGradient gg = ggp_grad_logdensity(fv, ggp, jitter);
          Eigen::Map<Eigen::VectorXd>(d_f, n) += gg.d_f;
          g[0] += gg.d_c;
          // jitter scales with a^2, so it contributes to the amplitude gradient.
          g[1] += (gg.d_a + gg.d_jitter * 2e-6 * ggp.a) * ggp.a;
          g[2] += gg.d_ell * ggp.ell;
        }
        lp += ggp_logdensity(fv, ggp, jitter);
      } catch (const NumericalError&) {
        return fail();
      }
    }

    double d_lambda = 0.0;
    double* d_lik = noncentered ? g_buf.data() : d_f;
    const double ll = site_likelihood(f, data_[h], lambda, g != nullptr ? d_lik : nullptr, &d_lambda);
    if (ll == -kInf) return fail();
    lp += ll;
    if (g != nullptr && z_index >= 0) {
      const double dlam_dz = 0.5 * (1.0 - lambda * lambda);
      g[z_index] += (d_lambda + truncnormal_dlogpdf(lambda, pr.lambda)) * dlam_dz - lambda;
    }

    if (noncentered && g != nullptr) {
      const double* e = v.data() + off;
      if (spec_.latent == LatentKind::Gar) {
        // Reverse sweep: g_buf[t] becomes the total derivative w.r.t. f_t.
        const int w = spec_.window;
        for (Eigen::Index t = n - 1; t >= 0; --t) {
          const double a = g_buf[t];
          d_f[t] += gar.sigma * a - e[t];
          g[0] += a;
          g[w + 1] += a * gar.sigma * e[t];
          const int lags = static_cast<int>(std::min<Eigen::Index>(t, w));
          for (int tau = 1; tau <= lags; ++tau) {
            g[tau] += a * f_buf[t - tau];
            g_buf[t - tau] += a * gar.beta[tau];
          }
        }
      } else {
        const Eigen::Map<const Eigen::VectorXd> ev(e, n);
        const Eigen::VectorXd lt_g = ggp_l.triangularView<Eigen::Lower>().transpose() * g_buf;
        Eigen::Map<Eigen::VectorXd>(d_f, n) += lt_g - ev;
        g[0] += g_buf.sum();
        // dL/da = L/a, and d log a brings back the factor a.
        g[1] += lt_g.dot(ev);
        g[2] += g_buf.dot(ggp_dl_ell.triangularView<Eigen::Lower>() * ev) * ggp.ell;
      }
    }
    off += n;
  }
  if (!std::isfinite(lp)) return fail();
  return lp;
}

double PosteriorModel::log_density(const Eigen::VectorXd& v) const { return evaluate(v, nullptr, false); }

double PosteriorModel::log_density_gradient(const Eigen::VectorXd& v, Eigen::VectorXd& grad) const {
  return evaluate(v, &grad, false);
}

double PosteriorModel::noncentered_log_density(const Eigen::VectorXd& x) const { return evaluate(x, nullptr, true); }

double PosteriorModel::noncentered_log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  return evaluate(x, &grad, true);
}

double log_joint(const ModelSpec& spec, const Eigen::VectorXd& v, const SiteCounts& data) {
  return PosteriorModel(spec, data).log_density(v);
}

Eigen::VectorXd grad_log_joint(const ModelSpec& spec, const Eigen::VectorXd& v, const SiteCounts& data) {
  Eigen::VectorXd grad;
  PosteriorModel(spec, data).log_density_gradient(v, grad);
  return grad;
}

}  // namespace census
