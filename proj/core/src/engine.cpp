#include "raisor/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "raisor/errors.hpp"

namespace raisor {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kRedrawStream = 0x5245'4452'4157'0000ULL;
constexpr std::uint64_t kFitStream = 0x4649'5400'0000'0000ULL;
constexpr std::uint64_t kInitStream = 0x494E'4954'0000'0000ULL;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double finite_or_neg_inf(double v) { return std::isnan(v) ? kNegInf : v; }

// RESS that maps fully degenerate weights to 0 instead of throwing.
double safe_ress(const Eigen::Ref<const Eigen::VectorXd>& log_weights) {
  try {
    return std::min(1.0, ress_of_log_weights(log_weights));
  } catch (const DegenerateWeights&) {
    return 0.0;
  }
}

}  // namespace

std::string to_string(ReplenishPolicy policy) {
  return policy == ReplenishPolicy::threshold ? "threshold" : "exponential";
}

ReplenishPolicy replenish_policy_from_string(const std::string& name) {
  if (name == "threshold") return ReplenishPolicy::threshold;
  if (name == "exponential") return ReplenishPolicy::exponential;
  throw ConfigError("unknown replenish policy '" + name + "'");
}

void EngineConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("engine config: " + msg); };
  if (M < 2) fail("M must be at least 2");
  if (!(r_min > 0.0 && r_min < r && r < 1.0)) fail("need 0 < r_min < r < 1");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
  if (K_mix == 0) fail("K_mix must be positive");
  if (N_reduce < 2 || N_reduce >= M) fail("N_reduce must satisfy 2 <= N_reduce < M");
  if (static_cast<double>(M) * r_min < static_cast<double>(N_reduce)) {
    fail("M * r_min must be at least N_reduce");
  }
  if (anneal_max_steps == 0) fail("anneal_max_steps must be positive");
  if (!(inflation >= 1.0) || !std::isfinite(inflation)) fail("inflation must be >= 1");
}

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::init: return "init";
    case EventKind::update: return "update";
    case EventKind::replenish: return "replenish";
    case EventKind::anneal_step: return "anneal_step";
  }
  return "update";
}

EventKind event_kind_from_string(const std::string& name) {
  if (name == "init") return EventKind::init;
  if (name == "update") return EventKind::update;
  if (name == "replenish") return EventKind::replenish;
  if (name == "anneal_step") return EventKind::anneal_step;
  throw InvalidArgument("unknown trace event '" + name + "'");
}

std::size_t RessTrace::count(EventKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [&](const TraceEvent& e) { return e.kind == kind; }));
}

void RessTrace::write_csv(std::ostream& out) const {
  out << "n,ress,event,seconds,n_evals,temperature\n";
  std::ostringstream line;
  line.precision(17);
  for (const auto& e : events) {
    line.str("");
    line << e.n << ',' << e.ress << ',' << to_string(e.kind) << ',' << e.seconds << ',' << e.n_evals
         << ',' << e.temperature << '\n';
    out << line.str();
  }
}

RessTrace RessTrace::read_csv(std::istream& in) {
  RessTrace trace;
  std::string line;
  if (!std::getline(in, line) || line.rfind("n,ress,event", 0) != 0) {
    throw InvalidArgument("trace CSV: missing header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string n, ress, event, seconds, evals, temperature;
    std::getline(fields, n, ',');
    std::getline(fields, ress, ',');
    std::getline(fields, event, ',');
    std::getline(fields, seconds, ',');
    std::getline(fields, evals, ',');
    std::getline(fields, temperature, ',');
    TraceEvent e;
    try {
      e.n = std::stoull(n);
      e.ress = std::stod(ress);
      e.kind = event_kind_from_string(event);
      e.seconds = std::stod(seconds);
      e.n_evals = std::stoull(evals);
      e.temperature = temperature.empty() ? 1.0 : std::stod(temperature);
    } catch (const std::logic_error&) {
      throw InvalidArgument("trace CSV: malformed row '" + line + "'");
    }
    trace.events.push_back(e);
  }
  return trace;
}

std::vector<std::size_t> plan_batches(std::size_t n_current, std::size_t n_total,
                                      const EngineConfig& config) {
  if (n_current >= n_total) throw InvalidArgument("plan_batches: already at n_total");
  // The small offset keeps ceil(100 / (2/3)) at 150 despite rounding in alpha.
  const double reach = std::ceil(static_cast<double>(n_current) / config.alpha - 1e-9);
  const std::size_t lo = n_current + 1;
  const std::size_t hi = std::min(std::max(static_cast<std::size_t>(reach), lo), n_total);
  std::vector<std::size_t> out;
  out.reserve(config.B + 1);
  const double ratio = static_cast<double>(hi) / static_cast<double>(lo);
  for (std::size_t j = 0; j <= config.B; ++j) {
    const double t = config.B == 0 ? 1.0 : static_cast<double>(j) / static_cast<double>(config.B);
    auto c = static_cast<std::size_t>(std::llround(static_cast<double>(lo) * std::pow(ratio, t)));
    c = std::clamp(c, lo, hi);
    if (out.empty() || c > out.back()) out.push_back(c);
  }
  if (out.back() != hi) out.push_back(hi);
  return out;
}

std::uint64_t recursive_update(WeightedSample& sample, const Model& model, std::size_t n1,
                               const ThreadPool& pool) {
  sample.validate();
  const std::size_t n0 = sample.prefix_len;
  if (n1 < n0) throw InvalidArgument("recursive_update: target prefix precedes current prefix");
  if (n1 > model.n_obs()) throw InvalidArgument("recursive_update: target prefix beyond data");
  if (n1 == n0) return 0;
  const Transform& tr = model.transform();
  pool.parallel_for(sample.size(), [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t m = begin; m < end; ++m) {
      const auto i = static_cast<Eigen::Index>(m);
      const Eigen::VectorXd theta = tr.to_model(sample.particles.col(i));
      const double ll = finite_or_neg_inf(model.batch_loglik(theta, n0, n1));
      sample.log_weights[i] += ll;
      sample.cum_loglik[i] += ll;
    }
  });
  sample.prefix_len = n1;
  return static_cast<std::uint64_t>(sample.size()) * (n1 - n0);
}

Engine::Engine(const Model& model, EngineConfig config, std::size_t threads)
    : model_(model), config_(std::move(config)), pool_(threads) {
  config_.validate();
  if (model_.n_obs() == 0) throw ConfigError("model has no observations");
  if (config_.n0_init > model_.n_obs()) throw ConfigError("n0_init exceeds the number of observations");
}

void Engine::record(EventKind kind, const WeightedSample& sample, double seconds, double temperature) {
  TraceEvent e;
  e.n = sample.prefix_len;
  e.ress = safe_ress(sample.log_weights);
  e.kind = kind;
  e.seconds = seconds;
  e.n_evals = n_evals_;
  e.temperature = temperature;
  trace_.events.push_back(e);
  if (observer_) observer_(e, sample);
}

WeightedSample Engine::initialize() {
  const auto start = Clock::now();
  Rng rng(config_.seed, kInitStream);
  WeightedSample sample;
  if (initializer_) {
    sample = initializer_(model_, config_, rng);
    sample.validate();
    if (sample.size() != config_.M || sample.dim() != model_.dim()) {
      throw InvalidArgument("initializer returned a sample of the wrong shape");
    }
  } else {
    const Eigen::MatrixXd theta = model_.prior_sample(config_.M, rng);
    Eigen::MatrixXd x(theta.rows(), theta.cols());
    for (Eigen::Index m = 0; m < theta.cols(); ++m) x.col(m) = model_.transform().to_unconstrained(theta.col(m));
    sample = WeightedSample::equally_weighted(std::move(x), Eigen::VectorXd::Zero(theta.cols()), 0);
    n_evals_ += recursive_update(sample, model_, config_.n0_init, pool_);
    sample.replenish_prefix = 0;
  }
  record(EventKind::init, sample, seconds_since(start));
  return sample;
}

MixtureProposal Engine::fit_proposal(const WeightedSample& sample, std::size_t K, Rng& rng) const {
  const Eigen::VectorXd w = normalize(sample.log_weights);
  require_support(w);
  const auto positive = static_cast<std::size_t>((w.array() > 0.0).count());
  const std::size_t target = std::min(config_.N_reduce, positive - 1);
  WeightedSample reduced = weighted_sir(sample, target, rng);
  const Eigen::VectorXd rw = normalize(reduced.log_weights);
  while (true) {
    try {
      MixtureProposal fit = fit_weighted_em(reduced.particles, rw, K, rng, {}, model_.transform());
      return config_.inflation == 1.0 ? fit : fit.inflated(config_.inflation);
    } catch (const ComponentStarvation& e) {
      if (K == 1) throw ReplenishFailed(std::string("mixture fit failed: ") + e.what());
      K = std::max<std::size_t>(1, K / 2);
    }
  }
}

MixtureProposal Engine::build_proposal(const WeightedSample& sample, std::size_t K) {
  Rng rng(config_.seed, kFitStream ^ redraws_);
  try {
    return fitter_ ? fitter_(sample, K, rng) : fit_proposal(sample, K, rng);
  } catch (const ReplenishFailed&) {
    throw;
  } catch (const Error& e) {
    throw ReplenishFailed(std::string("replenishment failed: ") + e.what());
  }
}

void Engine::redraw(WeightedSample& sample, const MixtureProposal& proposal, std::size_t extra_to,
                    double temperature, Eigen::VectorXd* batch_ll) {
  const std::size_t n = sample.prefix_len;
  const std::size_t M = config_.M;
  const auto d = static_cast<Eigen::Index>(model_.dim());
  if (proposal.dim() != model_.dim()) throw ReplenishFailed("proposal dimension does not match model");
  const std::uint64_t event = redraws_++;
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(M));
  Eigen::VectorXd log_w(static_cast<Eigen::Index>(M));
  Eigen::VectorXd cum(static_cast<Eigen::Index>(M));
  Eigen::VectorXd extra = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(M));
  const Transform& tr = model_.transform();
  pool_.parallel_for(M, [&](std::size_t begin, std::size_t end, std::size_t) {
    Eigen::VectorXd xm(d);
    for (std::size_t m = begin; m < end; ++m) {
      const auto i = static_cast<Eigen::Index>(m);
      Rng rng(config_.seed, kRedrawStream ^ event, m);
      proposal.sample_into(rng, xm);
      x.col(i) = xm;
      const Eigen::VectorXd theta = tr.to_model(xm);
      const double lp = model_.log_prior(theta);
      if (!std::isfinite(lp)) {
        log_w[i] = cum[i] = kNegInf;
        continue;
      }
      cum[i] = finite_or_neg_inf(model_.batch_loglik(theta, 0, n));
      if (extra_to > n) extra[i] = finite_or_neg_inf(model_.batch_loglik(theta, n, extra_to));
      const double tempered = temperature == 0.0 ? 0.0 : temperature * extra[i];
      log_w[i] = finite_or_neg_inf(cum[i] + tempered + lp + tr.log_abs_det_jacobian(xm) -
                                   proposal.log_density(xm));
    }
  });
  n_evals_ += static_cast<std::uint64_t>(M) * std::max(n, extra_to);
  sample.particles = std::move(x);
  sample.log_weights = std::move(log_w);
  sample.cum_loglik = std::move(cum);
  sample.replenish_prefix = n;
  if (batch_ll) *batch_ll = std::move(extra);
  if (!(sample.log_weights.maxCoeff() > kNegInf)) {
    throw ReplenishFailed("every redrawn particle has zero target density");
  }
}

void Engine::replenish_impl(WeightedSample& sample, std::size_t extra_to, double temperature,
                            Eigen::VectorXd* batch_ll) {
  std::optional<WeightedSample> best;
  std::optional<MixtureProposal> best_proposal;
  Eigen::VectorXd best_ll;
  double best_ress = -1.0;
  for (std::size_t K = config_.K_mix;; K /= 2) {
    MixtureProposal proposal = build_proposal(sample, K);
    WeightedSample candidate = sample;
    Eigen::VectorXd ll;
    redraw(candidate, proposal, extra_to, temperature, &ll);
    const double value = safe_ress(candidate.log_weights);
    if (value > best_ress) {
      best_ress = value;
      best = std::move(candidate);
      best_proposal = std::move(proposal);
      best_ll = std::move(ll);
    }
    if (best_ress >= config_.r || K <= 1 || fitter_) break;
  }
  sample = std::move(*best);
  proposal_ = std::move(best_proposal);
  if (batch_ll) *batch_ll = std::move(best_ll);
}

void Engine::replenish(WeightedSample& sample) {
  sample.validate();
  const auto start = Clock::now();
  replenish_impl(sample, sample.prefix_len, 1.0, nullptr);
  record(EventKind::replenish, sample, seconds_since(start));
}

Eigen::MatrixXd Engine::ladder(const WeightedSample& sample, const std::vector<std::size_t>& candidates) {
  const std::size_t n = sample.prefix_len;
  const auto C = static_cast<Eigen::Index>(candidates.size());
  Eigen::MatrixXd ll(static_cast<Eigen::Index>(sample.size()), C);
  const Transform& tr = model_.transform();
  pool_.parallel_for(sample.size(), [&](std::size_t begin, std::size_t end, std::size_t) {
    std::vector<double> row(candidates.size());
    for (std::size_t m = begin; m < end; ++m) {
      const auto i = static_cast<Eigen::Index>(m);
      const Eigen::VectorXd theta = tr.to_model(sample.particles.col(i));
      model_.ladder_logliks(theta, n, candidates, row);
      for (Eigen::Index j = 0; j < C; ++j) ll(i, j) = finite_or_neg_inf(row[static_cast<std::size_t>(j)]);
    }
  });
  n_evals_ += static_cast<std::uint64_t>(sample.size()) * (candidates.back() - n);
  return ll;
}

void Engine::advance(WeightedSample& sample) {
  sample.validate();
  const std::size_t n_total = model_.n_obs();
  if (sample.prefix_len >= n_total) throw InvalidArgument("advance: sample already at n_total");
  const auto start = Clock::now();
  const auto candidates = plan_batches(sample.prefix_len, n_total, config_);
  const Eigen::MatrixXd ll = ladder(sample, candidates);

  std::optional<Eigen::Index> chosen;
  Eigen::Index best = 0;
  double best_ress = -1.0;
  for (Eigen::Index j = 0; j < ll.cols(); ++j) {
    const double value = safe_ress(sample.log_weights + ll.col(j));
    if (value >= config_.r_min) chosen = j;
    if (value >= best_ress) {
      best_ress = value;
      best = j;
    }
  }
  if (!chosen) {
    anneal_rescue_with(sample, candidates[static_cast<std::size_t>(best)], ll.col(best));
    return;
  }
  const Eigen::Index j = *chosen;
  sample.log_weights += ll.col(j);
  sample.cum_loglik += ll.col(j);
  sample.prefix_len = candidates[static_cast<std::size_t>(j)];
  const double post = safe_ress(sample.log_weights);
  record(EventKind::update, sample, seconds_since(start));
  const bool replenish_now = config_.policy == ReplenishPolicy::threshold
                                 ? post <= config_.r
                                 : sample.prefix_len < n_total;
  if (replenish_now) replenish(sample);
}

void Engine::anneal_rescue(WeightedSample& sample, std::size_t target_prefix) {
  sample.validate();
  if (target_prefix <= sample.prefix_len || target_prefix > model_.n_obs()) {
    throw InvalidArgument("anneal_rescue: target prefix must lie beyond the current prefix");
  }
  const std::vector<std::size_t> single{target_prefix};
  const Eigen::MatrixXd ll = ladder(sample, single);
  anneal_rescue_with(sample, target_prefix, ll.col(0));
}

void Engine::anneal_rescue_with(WeightedSample& sample, std::size_t target_prefix, Eigen::VectorXd ll) {
  double t = 0.0;
  std::size_t steps = 0;
  while (true) {
    if (steps++ >= config_.anneal_max_steps) {
      throw AnnealFailed("anneal rescue exceeded " + std::to_string(config_.anneal_max_steps) +
                         " steps at temperature " + std::to_string(t));
    }
    const auto start = Clock::now();
    const Eigen::VectorXd base = sample.log_weights;
    auto ress_at = [&](double s) { return safe_ress(base + (s - t) * ll); };
    double s = 1.0;
    if (ress_at(1.0) < config_.r) {
      double lo = t, hi = 1.0;
      for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        (ress_at(mid) >= config_.r ? lo : hi) = mid;
      }
      s = lo;
      if (s - t <= 1e-12) {
        // Geometric fallback: halve the increment until RESS clears r_min.
        double step = 1.0 - t;
        for (int it = 0; it < 30; ++it) {
          step *= 0.5;
          if (ress_at(t + step) >= config_.r_min) break;
        }
        s = t + step;
      }
    }
    sample.log_weights = base + (s - t) * ll;
    t = s;
    if (t >= 1.0) {
      sample.cum_loglik += ll;
      sample.prefix_len = target_prefix;
      record(EventKind::anneal_step, sample, seconds_since(start), 1.0);
      break;
    }
    record(EventKind::anneal_step, sample, seconds_since(start), t);
    const auto refit = Clock::now();
    replenish_impl(sample, target_prefix, t, &ll);
    record(EventKind::replenish, sample, seconds_since(refit), t);
  }
  if (safe_ress(sample.log_weights) < config_.r) replenish(sample);
}

WeightedSample Engine::run(std::optional<WeightedSample> start) {
  WeightedSample sample = start ? std::move(*start) : initialize();
  sample.validate();
  while (sample.prefix_len < model_.n_obs()) advance(sample);
  return sample;
}

void write_posterior_csv(std::ostream& out, const Model& model, const WeightedSample& sample) {
  sample.validate();
  const Eigen::VectorXd w = normalize(sample.log_weights);
  const auto names = model.parameter_names();
  for (const auto& name : names) out << name << ',';
  out << "weight\n";
  std::ostringstream line;
  line.precision(17);
  for (Eigen::Index m = 0; m < sample.particles.cols(); ++m) {
    const Eigen::VectorXd theta = model.transform().to_model(sample.particles.col(m));
    line.str("");
    for (Eigen::Index j = 0; j < theta.size(); ++j) line << theta[j] << ',';
    line << w[m] << '\n';
    out << line.str();
  }
}

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// JSON has no infinities; -inf log-weights are stored as null.
nlohmann::json encode(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (double x : v) out.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
  return out;
}

Eigen::VectorXd decode(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = j[i].is_null() ? kNegInf : j[i].get<double>();
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  const auto& s = checkpoint.sample;
  s.validate();
  nlohmann::json doc;
  doc["format"] = "raisor.checkpoint";
  doc["version"] = 1;
  doc["dim"] = s.dim();
  doc["size"] = s.size();
  doc["prefix_len"] = s.prefix_len;
  doc["replenish_prefix"] = s.replenish_prefix;
  doc["n_evals"] = checkpoint.n_evals;
  doc["particles"] = to_vector(Eigen::Map<const Eigen::VectorXd>(s.particles.data(), s.particles.size()));
  doc["log_weights"] = encode(s.log_weights);
  doc["cum_loglik"] = encode(s.cum_loglik);
  if (checkpoint.proposal) doc["proposal"] = nlohmann::json::parse(checkpoint.proposal->to_json());
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write checkpoint '" + path + "'");
  out << doc.dump();
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read checkpoint '" + path + "'");
  try {
    const auto doc = nlohmann::json::parse(in);
    if (doc.at("format") != "raisor.checkpoint" || doc.at("version") != 1) {
      throw InvalidArgument("checkpoint '" + path + "' has an unsupported format");
    }
    Checkpoint c;
    const auto d = doc.at("dim").get<Eigen::Index>();
    const auto m = doc.at("size").get<Eigen::Index>();
    const auto flat = doc.at("particles").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != d * m) throw InvalidArgument("checkpoint: particle count mismatch");
    c.sample.particles = Eigen::Map<const Eigen::MatrixXd>(flat.data(), d, m);
    c.sample.log_weights = decode(doc.at("log_weights"));
    c.sample.cum_loglik = decode(doc.at("cum_loglik"));
    c.sample.prefix_len = doc.at("prefix_len").get<std::size_t>();
    c.sample.replenish_prefix = doc.at("replenish_prefix").get<std::size_t>();
    c.n_evals = doc.at("n_evals").get<std::uint64_t>();
    if (doc.contains("proposal")) c.proposal = MixtureProposal::from_json(doc.at("proposal").dump());
    c.sample.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("checkpoint '" + path + "' is malformed: " + e.what());
  }
}

}  // namespace raisor
