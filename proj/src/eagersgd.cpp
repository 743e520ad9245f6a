#include "pcoll/eagersgd.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "json.hpp"
#include "pcoll/rng.hpp"
#include "pcoll/sim_cluster.hpp"

namespace pcoll {

void LrBoundParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::invalid_argument, std::string(name) + " must be > 0");
  };
  positive(L, "L");
  positive(M, "M");
  positive(tau, "tau");
  positive(eps, "eps");
  positive(f0_minus_m, "f0_minus_m");
  if (p < 1 || q < 1) throw Error(ErrorCode::invalid_argument, "p and q must be >= 1");
  if (q > p) throw Error(ErrorCode::invalid_argument, "q must not exceed p");
}

double max_learning_rate(const LrBoundParams& k) {
  k.validate();
  const double inf = std::numeric_limits<double>::infinity();
  const double P = k.p;
  const double gap = static_cast<double>(k.p - k.q);
  const double t1 = gap == 0 ? inf : std::sqrt(k.eps) * P / std::sqrt(12.0 * k.L * k.L * k.tau * k.M * k.M * gap);
  const double t2 = gap == 0 ? inf : std::sqrt(k.eps) * P / std::sqrt(4.0 * k.L * k.tau * k.M * k.M * gap);
  const double t3 = k.eps / (12.0 * k.M * k.M * k.L);
  return std::min({t1, t2, t3});
}

std::uint64_t min_iterations(const LrBoundParams& k, double alpha) {
  const double amax = max_learning_rate(k);
  if (!(alpha > 0.0)) throw Error(ErrorCode::invalid_argument, "alpha must be > 0");
  // one ulp-scale tolerance so that alpha == alpha_max computed another way is accepted
  if (alpha > amax * (1.0 + 1e-12)) {
    throw Error(ErrorCode::alpha_too_large, "alpha " + std::to_string(alpha) + " exceeds bound " + std::to_string(amax));
  }
  const long double x = 24.0L * k.f0_minus_m / (static_cast<long double>(alpha) * k.eps);
  const long double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9L * x) return static_cast<std::uint64_t>(nearest);
  return static_cast<std::uint64_t>(std::ceil(x));
}

bool GradientBuffer::is_null() const {
  if (!pending_rounds.empty()) return false;
  for (double v : data) {
    if (v != 0.0) return false;
  }
  return true;
}

void GradientBuffer::add(std::span<const double> g, Generation round) {
  if (data.empty()) data.assign(g.size(), 0.0);
  if (g.size() != data.size()) throw Error(ErrorCode::dimension_mismatch, "gradient length");
  for (std::size_t i = 0; i < g.size(); ++i) data[i] += g[i];
  pending_rounds.push_back(round);
}

void GradientBuffer::reset() {
  std::fill(data.begin(), data.end(), 0.0);
  pending_rounds.clear();
}

void apply_update(TrainState& st, std::span<const double> u) {
  if (u.size() != st.model.w.size()) throw Error(ErrorCode::dimension_mismatch, "update length");
  for (std::size_t i = 0; i < u.size(); ++i) {
    st.model.w[i] -= st.lr * u[i];
    if (!std::isfinite(st.model.w[i])) {
      throw Error(ErrorCode::non_finite, "rank " + std::to_string(st.rank) + " weight " + std::to_string(i) +
                                             " became non-finite in round " + std::to_string(st.t));
    }
  }
}

std::optional<Generation> staleness_guard(const TrainState& st, AllreduceHandle& collective) {
  if (!st.tau) return std::nullopt;
  if (*st.tau < 1) throw Error(ErrorCode::config_invalid, "tau must be >= 1");
  const Generation g = st.t + static_cast<Generation>(*st.tau);
  collective.hold_round(g);
  return g;
}

void resync_models(std::vector<TrainState>& states) {
  if (states.empty()) return;
  const int p = static_cast<int>(states.size());
  CollectiveConfig cfg;
  cfg.p = p;
  cfg.flavor = Flavor::sync;
  cfg.vector_len = states[0].model.w.size();
  SimCluster cluster(p);
  auto& g = cluster.add_collective(cfg);
  std::vector<ContributionPayload> pl;
  for (int r = 0; r < p; ++r) {
    pl.push_back(ContributionPayload::fresh(cfg, Rank(r), states[static_cast<std::size_t>(r)].model.w));
  }
  run_round(cluster, g, 0, std::vector<SimTime>(static_cast<std::size_t>(p), 0), pl);
  for (int r = 0; r < p; ++r) states[static_cast<std::size_t>(r)].model.w = g.record(0, r).result->u;
}

namespace {

constexpr char kCkptMagic[4] = {'P', 'C', 'K', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, std::span<const double> w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot open " + path);
  const std::uint64_t dim = w.size();
  out.write(kCkptMagic, 4);
  out.write(reinterpret_cast<const char*>(&kCkptVersion), 4);
  out.write(reinterpret_cast<const char*>(&dim), 8);
  out.write(reinterpret_cast<const char*>(w.data()), static_cast<std::streamsize>(w.size_bytes()));
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path);
}

std::vector<double> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t dim = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&dim), 8);
  if (!in || std::memcmp(magic, kCkptMagic, 4) != 0) throw Error(ErrorCode::io_error, "not a checkpoint");
  if (version != kCkptVersion) throw Error(ErrorCode::io_error, "unsupported checkpoint version");
  if (dim > (1ull << 32)) throw Error(ErrorCode::io_error, "implausible checkpoint size");
  std::vector<double> w(dim);
  in.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  if (!in) throw Error(ErrorCode::io_error, "truncated checkpoint");
  return w;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& why) { throw Error(ErrorCode::config_invalid, why); };
  if (p < 1) bad("p must be >= 1");
  if (dim < 1) bad("dim must be >= 1");
  if (n < 5) bad("n must be >= 5");
  if (batch < 1) bad("batch must be >= 1");
  if (!rounds && epochs < 1) bad("epochs must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) bad("alpha must be > 0");
  if (!(sigma >= 0.0)) bad("sigma must be >= 0");
  if (tau && *tau < 1) bad("tau must be >= 1");
  if (resync_period < 0) bad("resync_period must be >= 0");
  if (!(compute_ms >= 0.0)) bad("compute_ms must be >= 0");
  if (link_latency_us < 0) bad("link_latency_us must be >= 0");
  delay.validate(p);
}

std::size_t TrainConfig::steps_per_epoch() const {
  const std::size_t train = n - n / 5;
  const std::size_t global = static_cast<std::size_t>(p) * batch;
  return std::max<std::size_t>(1, (train + global - 1) / global);
}

std::size_t TrainConfig::total_rounds() const {
  return rounds ? *rounds : static_cast<std::size_t>(epochs) * steps_per_epoch();
}

std::string to_json_line(const MetricRecord& m) {
  nlohmann::json j;
  j["round"] = m.round;
  j["epoch"] = m.epoch;
  j["rank"] = m.rank;
  j["loss"] = m.loss;
  j["nap"] = m.nap;
  j["staleness_max"] = m.staleness_max;
  j["sim_time_ms"] = m.sim_time_ms;
  return j.dump();
}

namespace {

constexpr std::uint32_t kMainCollective = 1;
constexpr std::uint32_t kResyncCollective = 2;

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, TrainReport& rep)
      : cfg_(cfg),
        rep_(rep),
        ds_(gen_dataset(cfg.dim, cfg.n, cfg.sigma, cfg.data_seed, cfg.bias)),
        cluster_(cfg.p, cfg.link_latency_us),
        spe_(cfg.steps_per_epoch()),
        total_(cfg.total_rounds()) {
    const std::size_t params = cfg.dim + (cfg.bias ? 1 : 0);
    CollectiveConfig main;
    main.p = cfg.p;
    main.flavor = cfg.flavor;
    main.vector_len = params;
    main.seed = cfg.seed;
    main.collective_id = kMainCollective;
    main_ = &cluster_.add_collective(main);

    CollectiveConfig sync = main;
    sync.flavor = Flavor::sync;
    sync.collective_id = kResyncCollective;
    resync_ = &cluster_.add_collective(sync);

    if (cfg.resync_period > 0) {
      const std::size_t every = static_cast<std::size_t>(cfg.resync_period) * spe_;
      for (std::size_t b = every; b < total_; b += every) boundaries_.push_back(b);
    }

    epoch_val_.assign(static_cast<std::size_t>(epochs()), 0.0);
    epoch_time_.assign(static_cast<std::size_t>(epochs()), 0.0);
    epoch_loss_.assign(static_cast<std::size_t>(epochs()), 0.0);
    epoch_steps_.assign(static_cast<std::size_t>(epochs()), 0);

    for (int r = 0; r < cfg.p; ++r) {
      Proc pr;
      pr.st.rank = r;
      pr.st.model = LinearModel::zeros(cfg.dim, cfg.bias);
      pr.st.lr = cfg.alpha;
      pr.st.resync_period = cfg.resync_period;
      pr.st.tau = cfg.tau;
      pr.rng.seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
      procs_.push_back(std::move(pr));
    }
    for (int r = 0; r < cfg.p; ++r) {
      main_->at(r).on_complete([this, r](const CollectiveResult& res) { on_main_complete(r, res); });
      main_->at(r).on_contribution(
          [this, r](Generation g, const ContributionPayload&) { on_contribution(r, g); });
      resync_->at(r).on_complete([this, r](const CollectiveResult& res) { on_resync_complete(r, res); });
    }
  }

  void run() {
    for (int r = 0; r < cfg_.p; ++r) {
      cluster_.net().schedule_at(0, Rank(r), [this, r] { start_round(r); });
    }
    cluster_.net().run();
    for (const auto& pr : procs_) {
      if (!pr.done) {
        throw Error(ErrorCode::invalid_argument,
                    "training stalled: rank " + std::to_string(pr.st.rank) + " at round " + std::to_string(pr.st.t));
      }
    }
    finish();
  }

 private:
  struct Proc {
    TrainState st;
    std::mt19937_64 rng;
    std::optional<Generation> waiting;
    std::optional<Generation> resync_waiting;
    std::size_t next_resync = 0;
    std::map<Generation, Generation> holds;  // generated round -> held round
    std::vector<std::size_t> pending_ids;
    Generation step_round = 0;
    std::vector<double> w_used;
    std::vector<double> grad;
    double loss = 0.0;
    bool late = false;
    int epochs_seen = 0;
    bool done = false;
    SimTime done_at = 0;
  };

  int epochs() const { return static_cast<int>((total_ + spe_ - 1) / spe_); }
  SimTime now() { return cluster_.net().now(); }
  double now_ms() { return static_cast<double>(now()) / 1000.0; }
  Proc& proc(int r) { return procs_[static_cast<std::size_t>(r)]; }

  void record_epochs(Proc& pr) {
    while (pr.epochs_seen < epochs() && static_cast<std::size_t>(pr.epochs_seen + 1) * spe_ <= pr.st.t) {
      const auto e = static_cast<std::size_t>(pr.epochs_seen);
      epoch_val_[e] += validation_mse(pr.st.model, ds_);
      epoch_time_[e] = std::max(epoch_time_[e], now_ms());
      ++pr.epochs_seen;
    }
  }

  void start_round(int r) {
    Proc& pr = proc(r);
    record_epochs(pr);
    if (pr.st.t >= total_) {
      begin_resync(r);
      return;
    }
    if (pr.next_resync < boundaries_.size() && pr.st.t >= boundaries_[pr.next_resync]) {
      begin_resync(r);
      return;
    }
    if (auto held = staleness_guard(pr.st, main_->at(r))) pr.holds[pr.st.t] = *held;
    pr.step_round = pr.st.t;
    pr.w_used = pr.st.model.w;
    const SimTime compute = static_cast<SimTime>(std::llround(cfg_.compute_ms * 1000.0)) +
                            inject_delay(Rank(r), pr.st.t, cfg_.delay, cfg_.p);
    cluster_.net().schedule_after(compute, Rank(r), [this, r] { arrive(r); });
  }

  void arrive(int r) {
    Proc& pr = proc(r);
    std::uniform_int_distribution<std::size_t> pick(0, ds_.train_count() - 1);
    std::vector<std::size_t> batch(cfg_.batch);
    for (auto& i : batch) i = pick(pr.rng);
    LinearModel at{pr.w_used, cfg_.bias};
    auto lg = loss_and_grad(at, ds_, batch);
    bool finite = std::isfinite(lg.mse);
    for (double g : lg.grad) finite = finite && std::isfinite(g);
    if (!finite) {
      throw Error(ErrorCode::divergence,
                  "rank " + std::to_string(r) + " round " + std::to_string(pr.step_round) + ": non-finite loss or gradient");
    }
    pr.grad = lg.grad;
    pr.loss = lg.mse;
    pr.pending_ids.push_back(rep_.ledger.add(r, pr.step_round, cfg_.keep_trace ? lg.grad : std::vector<double>{}));
    pr.st.send_buf.add(lg.grad, pr.step_round);

    auto& h = main_->at(r);
    pr.waiting = pr.step_round;
    pr.late = false;
    const auto status = h.join(pr.step_round, ContributionPayload::fresh(main_->cfg, Rank(r), lg.grad), LatePolicy::keep);
    if (status == JoinStatus::on_time) return;

    ++rep_.late_joins;
    pr.late = true;
    Engine& e = h.engine();
    const Generation cur = e.generation(h.handle());
    if (e.snapshot_taken(h.handle())) {
      // the current round is in flight without us: take its result
      pr.waiting = cur;
      return;
    }
    pr.waiting.reset();
    finish_step(r, h.latest_result());
  }

  void on_main_complete(int r, const CollectiveResult& res) {
    if (r == 0) {
      RoundSummary s;
      s.round = res.round;
      s.nap = res.nap;
      s.included = res.included;
      if (cfg_.keep_trace) s.u = res.u;
      rep_.rounds.push_back(std::move(s));
    }
    Proc& pr = proc(r);
    if (pr.waiting && *pr.waiting == res.round) {
      pr.waiting.reset();
      finish_step(r, res);
    }
  }

  void on_contribution(int r, Generation g) {
    Proc& pr = proc(r);
    for (auto id : pr.pending_ids) {
      rep_.ledger.deliver(id, g);
      const Generation gen = rep_.ledger.records()[id].generated;
      pr.st.staleness_ledger[gen] = g;
      pr.st.staleness_max = std::max(pr.st.staleness_max, g - gen);
      auto it = pr.holds.find(gen);
      if (it != pr.holds.end()) {
        main_->at(r).unhold_round(it->second);
        pr.holds.erase(it);
      }
    }
    pr.pending_ids.clear();
    pr.st.send_buf.reset();
  }

  void finish_step(int r, const CollectiveResult& res) {
    Proc& pr = proc(r);
    apply_or_diverge(pr, res.u);
    if (cfg_.keep_trace) {
      rep_.steps.push_back(StepRecord{r, pr.step_round, res.round, pr.late, pr.w_used, pr.grad});
    }
    if (cfg_.keep_metrics) {
      rep_.metrics.push_back(MetricRecord{res.round, static_cast<int>(pr.step_round / spe_), r, pr.loss, res.nap,
                                          pr.st.staleness_max, now_ms()});
    }
    const auto e = static_cast<std::size_t>(std::min<std::size_t>(pr.step_round / spe_, epoch_loss_.size() - 1));
    epoch_loss_[e] += pr.loss;
    ++epoch_steps_[e];
    rep_.skipped_rounds += res.round - pr.step_round;
    pr.st.t = res.round + 1;
    start_round(r);
  }

  void apply_or_diverge(Proc& pr, std::span<const double> u) {
    try {
      apply_update(pr.st, u);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::non_finite) throw Error(ErrorCode::divergence, e.what());
      throw;
    }
  }

  void begin_resync(int r) {
    Proc& pr = proc(r);
    const Generation k = pr.next_resync;
    const bool final_sync = pr.st.t >= total_;
    if (final_sync) {
      rep_.weights_before_sync[static_cast<std::size_t>(r)] = pr.st.model.w;
      pr.next_resync = boundaries_.size();
    }
    pr.resync_waiting = final_sync ? boundaries_.size() : k;
    resync_->at(r).join(*pr.resync_waiting, ContributionPayload::fresh(resync_->cfg, Rank(r), pr.st.model.w));
  }

  void on_resync_complete(int r, const CollectiveResult& res) {
    Proc& pr = proc(r);
    if (!pr.resync_waiting || *pr.resync_waiting != res.round) return;
    pr.resync_waiting.reset();
    pr.st.model.w = res.u;
    if (r == 0) ++rep_.resyncs;
    if (res.round == boundaries_.size()) {
      pr.done = true;
      pr.done_at = now();
      return;
    }
    ++pr.next_resync;
    start_round(r);
  }

  void finish() {
    const auto n = static_cast<std::size_t>(epochs());
    for (std::size_t e = 0; e < n; ++e) {
      EpochMetrics m;
      m.epoch = static_cast<int>(e) + 1;
      m.train_loss = epoch_steps_[e] ? epoch_loss_[e] / static_cast<double>(epoch_steps_[e]) : 0.0;
      m.validation_mse = epoch_val_[e] / cfg_.p;
      m.sim_time_ms = epoch_time_[e];
      rep_.epochs.push_back(m);
    }
    SimTime end = 0;
    for (const auto& pr : procs_) end = std::max(end, pr.done_at);
    rep_.collective = main_->cfg;
    if (cfg_.keep_trace) rep_.collective_log = main_->log;
    rep_.final_w = procs_[0].st.model.w;
    LinearModel fin{rep_.final_w, cfg_.bias};
    rep_.final_validation_mse = validation_mse(fin, ds_);
    rep_.final_train_mse = train_mse(fin, ds_);
    rep_.total_time_ms = static_cast<double>(end) / 1000.0;
    rep_.rounds_run = total_;
    rep_.steps_per_s = end > 0 ? static_cast<double>(total_) / (static_cast<double>(end) / 1e6) : 0.0;
  }

  const TrainConfig& cfg_;
  TrainReport& rep_;
  HyperplaneDataset ds_;
  SimCluster cluster_;
  std::size_t spe_;
  std::size_t total_;
  CollectiveGroup* main_ = nullptr;
  CollectiveGroup* resync_ = nullptr;
  std::vector<std::size_t> boundaries_;
  std::vector<Proc> procs_;
  std::vector<double> epoch_val_, epoch_time_, epoch_loss_;
  std::vector<std::size_t> epoch_steps_;

 public:
  void prepare() { rep_.weights_before_sync.assign(static_cast<std::size_t>(cfg_.p), {}); }
};

}  // namespace

TrainReport run_eager_sgd(const TrainConfig& cfg) {
  cfg.validate();
  TrainReport rep;
  rep.config = cfg;
  Trainer t(rep.config, rep);
  t.prepare();
  t.run();
  return rep;
}

}  // namespace pcoll
