#include "census/nuts.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace census {

namespace {

constexpr double kMaxEnergyError = 1000.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus, const Eigen::VectorXd& rho) {
  return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
}

// Welford accumulator for the per-coordinate variance of warmup draws.
class VarianceEstimator {
 public:
  explicit VarianceEstimator(Eigen::Index dim) : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}
  void add(const Eigen::VectorXd& q) {
    ++n_;
    const Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(q - mean_);
  }
  int count() const { return n_; }
  Eigen::VectorXd variance() const { return m2_ / static_cast<double>(n_ - 1); }
  void restart() {
    n_ = 0;
    mean_.setZero();
    m2_.setZero();
  }

 private:
  int n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

class Chain {
 public:
  Chain(const LogDensityGradient& target, const Eigen::VectorXd& init, const SamplerConfig& cfg, int chain_index)
      : target_(target), cfg_(cfg), rng_(make_seed(cfg.seed, chain_index)), inv_mass_(Eigen::VectorXd::Ones(init.size())) {
    z_.q = init;
    z_.p = Eigen::VectorXd::Zero(init.size());
    z_.grad = Eigen::VectorXd::Zero(init.size());
    z_.log_density = target_(z_.q, z_.grad);
    if (!std::isfinite(z_.log_density) || !z_.grad.allFinite()) {
      throw std::invalid_argument("NUTS initial point has a non-finite log density or gradient");
    }
  }

  ChainResult run(int chain_index) {
    const Eigen::Index dim = z_.q.size();
    ChainResult out;
    out.chain = chain_index;
    out.draws.resize(cfg_.n_draws, dim);
    out.log_density.resize(cfg_.n_draws);
    out.accept_stat.resize(cfg_.n_draws);
    out.tree_depth.resize(static_cast<std::size_t>(cfg_.n_draws));

    DualAveraging step_adapt(cfg_.target_accept);
    WindowedAdaptation windows(cfg_.n_warmup);
    VarianceEstimator var_est(dim);

    step_ = 1.0;
    init_step_size();
    step_adapt.restart(step_);

    for (int it = 0; it < cfg_.n_warmup; ++it) {
      const double accept = transition();
      if (divergent_) ++out.warmup_divergences;
      step_ = step_adapt.update(accept);
      if (windows.in_slow_window(it)) var_est.add(z_.q);
      if (windows.window_ends(it)) {
        windows.next_window();
        const double n = var_est.count();
        if (n >= 2) {
          inv_mass_ = (n / (n + 5.0)) * var_est.variance().array() + 1e-3 * (5.0 / (n + 5.0));
        }
        var_est.restart();
        init_step_size();
        step_adapt.restart(step_);
      }
    }
    if (cfg_.n_warmup > 0) step_ = step_adapt.final_step();

    for (int d = 0; d < cfg_.n_draws; ++d) {
      out.accept_stat[d] = transition();
      if (divergent_) ++out.divergences;
      out.tree_depth[static_cast<std::size_t>(d)] = depth_;
      out.draws.row(d) = z_.q.transpose();
      out.log_density[d] = z_.log_density;
    }
    out.step_size = step_;
    out.inv_mass = inv_mass_;
    out.divergence_warning = out.divergences > cfg_.n_draws / 10;
    return out;
  }

 private:
  static std::mt19937_64 make_seed(std::uint64_t seed, int chain) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chain), 0x9e3779b9u};
    return std::mt19937_64(seq);
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

  void sample_momentum(PhasePoint& z) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < z.p.size(); ++i) z.p[i] = normal(rng_) / std::sqrt(inv_mass_[i]);
  }

  double energy(const PhasePoint& z) const {
    const double h = hamiltonian(z, inv_mass_);
    return std::isnan(h) ? std::numeric_limits<double>::infinity() : h;
  }

  // Doubles or halves the step until one leapfrog step crosses an
  // acceptance probability of 0.8.
  void init_step_size() {
    const PhasePoint start = z_;
    auto trial = [&]() {
      z_ = start;
      sample_momentum(z_);
      const double h0 = energy(z_);
      leapfrog(z_, inv_mass_, step_, target_);
      return h0 - energy(z_);
    };
    const int direction = trial() > std::log(0.8) ? 1 : -1;
    for (int guard = 0; guard < 200; ++guard) {
      const double delta_h = trial();
      if (direction == 1 && !(delta_h > std::log(0.8))) break;
      if (direction == -1 && !(delta_h < std::log(0.8))) break;
      step_ = direction == 1 ? 2.0 * step_ : 0.5 * step_;
      if (step_ > 1e7) throw std::runtime_error("NUTS step size diverged during initialization; posterior may be improper");
      if (step_ == 0.0) throw std::runtime_error("NUTS step size underflowed during initialization");
    }
    z_ = start;
  }

  // Returns the mean acceptance statistic of the trajectory.
  double transition() {
    sample_momentum(z_);
    const Eigen::Index dim = z_.q.size();
    PhasePoint z_fwd = z_;
    PhasePoint z_bck = z_;
    PhasePoint z_sample = z_;
    PhasePoint z_propose = z_;

    Eigen::VectorXd p_fwd_fwd = z_.p;
    Eigen::VectorXd p_sharp_fwd_fwd = inv_mass_.cwiseProduct(z_.p);
    Eigen::VectorXd p_fwd_bck = z_.p;
    Eigen::VectorXd p_sharp_fwd_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_fwd = z_.p;
    Eigen::VectorXd p_sharp_bck_fwd = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_bck = z_.p;
    Eigen::VectorXd p_sharp_bck_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd rho = z_.p;

    double log_sum_weight = 0.0;
    const double h0 = energy(z_);
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    depth_ = 0;
    divergent_ = false;

    while (depth_ < cfg_.max_tree_depth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(dim);
      bool valid_subtree;
      double log_sum_weight_subtree = kNegInf;

      if (uniform() > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid_subtree = build_tree(depth_, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd,
                                   h0, 1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid_subtree = build_tree(depth_, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck,
                                   h0, -1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_bck = z_;
      }
      if (!valid_subtree) break;
      ++depth_;

      // Biased progressive sampling between the old trajectory and the new subtree.
      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
      persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
      if (!persist) break;
    }
    z_ = z_sample;
    return n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
  }

  bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg, Eigen::VectorXd& p_sharp_end,
                  Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double h0, double sign,
                  int& n_leapfrog, double& log_sum_weight, double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(z_, inv_mass_, sign * step_, target_);
      ++n_leapfrog;
      const double h = energy(z_);
      if (h - h0 > kMaxEnergyError) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      p_sharp_beg = inv_mass_.cwiseProduct(z_.p);
      p_sharp_end = p_sharp_beg;
      rho += z_.p;
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    const Eigen::Index dim = z_.q.size();
    double log_sum_weight_init = kNegInf;
    Eigen::VectorXd p_init_end(dim);
    Eigen::VectorXd p_sharp_init_end(dim);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(dim);
    if (!build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, h0, sign,
                    n_leapfrog, log_sum_weight_init, sum_metro_prob)) {
      return false;
    }

    PhasePoint z_propose_final = z_;
    double log_sum_weight_final = kNegInf;
    Eigen::VectorXd p_final_beg(dim);
    Eigen::VectorXd p_sharp_final_beg(dim);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(dim);
    if (!build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end, h0, sign,
                    n_leapfrog, log_sum_weight_final, sum_metro_prob)) {
      return false;
    }

    // Multinomial (uniform within subtree) choice between the two halves.
    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
    persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
    return persist;
  }

  const LogDensityGradient& target_;
  SamplerConfig cfg_;
  std::mt19937_64 rng_;
  Eigen::VectorXd inv_mass_;
  PhasePoint z_;
  double step_ = 1.0;
  int depth_ = 0;
  bool divergent_ = false;
};

}  // namespace

void SamplerConfig::validate() const {
  if (n_chains < 1 || n_draws < 1 || n_warmup < 0) throw std::invalid_argument("sampler needs at least one chain and one draw");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw std::invalid_argument("target acceptance must lie in (0, 1)");
  if (max_tree_depth < 1) throw std::invalid_argument("max tree depth must be at least 1");
}

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_mass) {
  return -z.log_density + 0.5 * z.p.cwiseProduct(inv_mass).dot(z.p);
}

void leapfrog(PhasePoint& z, const Eigen::VectorXd& inv_mass, double eps, const LogDensityGradient& target) {
  z.p += 0.5 * eps * z.grad;
  z.q += eps * inv_mass.cwiseProduct(z.p);
  z.log_density = target(z.q, z.grad);
  if (std::isnan(z.log_density)) z.log_density = kNegInf;
  if (z.log_density == kNegInf) {
    z.grad.setZero();
    return;
  }
  z.p += 0.5 * eps * z.grad;
}

double DualAveraging::update(double accept_stat) {
  counter_ += 1.0;
  accept_stat = std::min(accept_stat, 1.0);
  const double eta = 1.0 / (counter_ + t0_);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
  const double x_eta = std::pow(counter_, -kappa_);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

WindowedAdaptation::WindowedAdaptation(int n_warmup, int init_buffer, int term_buffer, int base_window)
    : n_warmup_(n_warmup), init_buffer_(init_buffer), term_buffer_(term_buffer), window_size_(base_window) {
  if (n_warmup < 20) {
    enabled_ = false;
    next_window_end_ = -1;
    return;
  }
  if (init_buffer_ + base_window + term_buffer_ > n_warmup) {
    init_buffer_ = static_cast<int>(0.15 * n_warmup);
    term_buffer_ = static_cast<int>(0.1 * n_warmup);
    window_size_ = n_warmup - (init_buffer_ + term_buffer_);
  }
  next_window_end_ = init_buffer_ + window_size_ - 1;
}

bool WindowedAdaptation::in_slow_window(int iteration) const {
  return enabled_ && iteration >= init_buffer_ && iteration < n_warmup_ - term_buffer_;
}

bool WindowedAdaptation::window_ends(int iteration) const {
  return enabled_ && iteration == next_window_end_ && iteration < n_warmup_;
}

void WindowedAdaptation::next_window() {
  const int last_end = n_warmup_ - term_buffer_ - 1;
  if (next_window_end_ == last_end) {
    next_window_end_ = -1;
    return;
  }
  window_size_ *= 2;
  next_window_end_ += window_size_;
  if (next_window_end_ != last_end && next_window_end_ + 2 * window_size_ >= n_warmup_ - term_buffer_) {
    next_window_end_ = last_end;
  }
}

ChainResult nuts_chain(const LogDensityGradient& target, const Eigen::VectorXd& init, const SamplerConfig& cfg,
                       int chain_index) {
  cfg.validate();
  Chain chain(target, init, cfg, chain_index);
  return chain.run(chain_index);
}

std::vector<ChainResult> nuts_sample(const LogDensityGradient& target, const Eigen::VectorXd& init,
                                     const SamplerConfig& cfg) {
  cfg.validate();
  std::vector<ChainResult> results(static_cast<std::size_t>(cfg.n_chains));
  if (!cfg.parallel_chains || cfg.n_chains == 1) {
    for (int c = 0; c < cfg.n_chains; ++c) results[static_cast<std::size_t>(c)] = nuts_chain(target, init, cfg, c);
    return results;
  }
  std::vector<std::exception_ptr> errors(results.size());
  std::vector<std::thread> workers;
  for (int c = 0; c < cfg.n_chains; ++c) {
    workers.emplace_back([&, c] {
      try {
        results[static_cast<std::size_t>(c)] = nuts_chain(target, init, cfg, c);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace census
