#pragma once

/// @file sim_engine.hpp
/// @brief Event-driven network loading: node updates, link updates, origin
/// point queues, and the sequential and two-stage distributed schedulers.
///
/// Every event carries an EventKey. The sequential scheduler processes events
/// in key order. The distributed scheduler advances in steps of length dt:
/// first every node processes the events in the zones next to it (the part of
/// each incident link from which a package can still reach the node before
/// the step ends), then every link processes the rest. Events processed in
/// different tasks touch disjoint state, so both schedulers produce the same
/// results; the log is sorted by key to make that visible.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipm/cumulative_curve.hpp"
#include "ipm/events.hpp"
#include "ipm/information_packages.hpp"
#include "ipm/link_engine.hpp"
#include "ipm/network.hpp"
#include "ipm/node_engine.hpp"
#include "ipm/scenario.hpp"
#include "ipm/thread_pool.hpp"

namespace ipm {

enum class Mode { Sequential, Distributed };

inline Mode parse_mode(const std::string& s) {
  if (s == "sequential") return Mode::Sequential;
  if (s == "distributed") return Mode::Distributed;
  throw std::invalid_argument("unknown mode '" + s + "' (expected sequential or distributed)");
}

inline const char* to_string(Mode m) { return m == Mode::Sequential ? "sequential" : "distributed"; }

struct SimOptions {
  Mode mode = Mode::Sequential;
  double dt_h = 0.0;      // distributed step; 0 selects the largest admissible step
  unsigned workers = 4;   // distributed mode only
  bool trace = true;      // keep the event log
  bool record_history = false;  // per-link state after every event (sequential mode)
};

/// Flow tolerance used when comparing node allocations to boundary flows.
inline constexpr double kNodeFlowTol = 1e-6;  // veh/h
/// Slack on event times when checking that stage-two work stays inside a step.
inline constexpr double kStepSlack = 1e-9;    // h

struct LogEntry {
  EventKey key;
  std::uint32_t seq = 0;
  std::string text;
};

inline std::string fmt_num(double v, int prec = 9) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

inline std::string fmt_vec(const Vector& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    s += (i ? " " : "") + fmt_num(v(i));
  }
  return s + "]";
}

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::External: return "external";
    case EventKind::QueueDrain: return "queue-drain";
    case EventKind::BoundaryArrival: return "arrival";
    case EventKind::Intersection: return "intersection";
    case EventKind::LinkScript: return "script";
  }
  return "?";
}

inline std::uint64_t key_hash(const EventKey& k) {
  std::uint64_t h = derive_id(std::bit_cast<std::uint64_t>(k.time),
                              (static_cast<std::uint64_t>(k.owner_kind) << 32) ^ static_cast<std::uint32_t>(k.owner));
  h = derive_id(h, static_cast<std::uint64_t>(k.kind));
  h = derive_id(h, std::bit_cast<std::uint64_t>(k.position));
  h = derive_id(h, k.a);
  return derive_id(h, k.b);
}

/// Log lines produced while processing one event.
class EventLogger {
 public:
  explicit EventLogger(std::vector<LogEntry>* sink) : sink_(sink) {}
  void begin(const EventKey& key) {
    key_ = key;
    seq_ = 0;
  }
  void add(std::string text) {
    if (sink_) {
      sink_->push_back({key_, seq_++, std::move(text)});
    }
  }
  void add_all(std::vector<std::string>& lines) {
    for (auto& l : lines) {
      add(std::move(l));
    }
    lines.clear();
  }
  bool enabled() const { return sink_ != nullptr; }

 private:
  std::vector<LogEntry>* sink_;
  EventKey key_;
  std::uint32_t seq_ = 0;
};

struct LinkSnapshot {
  double t = 0.0;
  std::vector<InformationPackage> ips;
  std::vector<Region> regions;
};

/// Vehicles waiting at an origin, grouped by the route mix they arrived with.
struct Batch {
  double remaining = 0.0;
  std::vector<double> comp;
  std::uint64_t serial = 0;
};

struct OriginState {
  double arrival = 0.0;           // veh/h
  std::vector<double> comp;       // arrival mix over the origin's routes
  double outflow = 0.0;           // veh/h
  std::deque<Batch> queue;
  double last_t = 0.0;
  std::uint64_t next_serial = 1;
  CumulativeCurve arrivals;
  CumulativeCurve departures;

  double queued() const {
    double q = 0.0;
    for (const auto& b : queue) {
      q += b.remaining;
    }
    return q;
  }
  const std::vector<double>& outflow_mix() const { return queue.empty() ? comp : queue.front().comp; }

  void advance(double t) {
    const double dt = t - last_t;
    if (dt <= 0.0) {
      return;
    }
    last_t = t;
    if (queue.empty()) {
      if (arrival > outflow + kNodeFlowTol) {
        queue.push_back({(arrival - outflow) * dt, comp, next_serial++});
      }
      return;
    }
    if (!same_routes(queue.back().comp, comp, 0.0)) {
      queue.push_back({0.0, comp, next_serial++});
    }
    queue.back().remaining += arrival * dt;
    double out = outflow * dt;
    while (out > 0.0 && !queue.empty()) {
      double take = std::min(out, queue.front().remaining);
      queue.front().remaining -= take;
      out -= take;
      if (queue.front().remaining <= 1e-9) {
        pop_front();
      } else {
        break;
      }
    }
  }

  /// Removes the head batch; a rounding residue moves to the next batch.
  void pop_front() {
    double residue = std::max(0.0, queue.front().remaining);
    queue.pop_front();
    if (!queue.empty()) {
      queue.front().remaining += residue;
    }
  }

  std::optional<double> drain_time() const {
    if (queue.empty()) {
      return std::nullopt;
    }
    double rate = queue.size() == 1 ? outflow - arrival : outflow;
    if (!(rate > kNodeFlowTol)) {
      return std::nullopt;
    }
    return last_t + std::max(0.0, queue.front().remaining) / rate;
  }
};

enum class ExternalKind { Init, Demand, IncidentStart, IncidentEnd, Priority };

struct ExternalEvent {
  double t = 0.0;
  ExternalKind kind = ExternalKind::Init;
  int index = 0;  // into the scenario list matching `kind`
};

struct ScriptEvent {
  double t = 0.0;
  bool create = true;
  int index = 0;
};

class Simulator {
 public:
  Simulator(const Scenario& scenario, SimOptions opts, double t0 = 0.0)
      : scenario_(scenario), net_(compile_network(scenario)), opts_(opts), t0_(t0), now_(t0) {
    for (auto& n : net_.nodes) {
      n.topo.validate();
    }
    const double bound = net_.max_dt();
    dt_ = opts_.dt_h > 0.0 ? opts_.dt_h : bound;
    if (opts_.mode == Mode::Distributed && dt_ > bound * (1.0 + 1e-12)) {
      throw ScenarioError("step " + fmt_num(dt_) + " h exceeds the largest admissible step " + fmt_num(bound) +
                          " h (half the shortest link crossing time)");
    }
    if (opts_.mode == Mode::Distributed && opts_.record_history) {
      throw std::invalid_argument("state history is only recorded in sequential mode");
    }
    links_.reserve(net_.links.size());
    for (const auto& cl : net_.links) {
      links_.emplace_back(cl.id, cl.length, &cl.fd, cl.routes.size(), t0);
      const auto& spec = scenario_.link(cl.id);
      if (!spec.initial_regions.empty()) {
        std::vector<FlowRegime> regimes;
        std::vector<double> cuts;
        for (std::size_t i = 0; i < spec.initial_regions.size(); ++i) {
          regimes.push_back(cl.fd.regime(spec.initial_regions[i].density));
          if (i > 0) {
            cuts.push_back(spec.initial_regions[i].start_km);
          }
        }
        links_.back().set_initial(t0, regimes, cuts);
      }
    }
    for (const auto& l : links_) {
      initial_vehicles_.push_back(l.vehicles(t0));
    }
    exit_factor_.assign(links_.size(), 1.0);
    active_incidents_.assign(links_.size(), {});
    origins_.resize(net_.nodes.size());
    for (std::size_t n = 0; n < net_.nodes.size(); ++n) {
      auto& o = origins_[n];
      o.last_t = t0;
      o.comp.assign(net_.nodes[n].origin_routes.size(), 0.0);
      o.arrivals = CumulativeCurve(t0);
      o.departures = CumulativeCurve(t0);
    }
    build_externals();
    build_scripts();
    link_mu_ = std::make_unique<std::mutex[]>(links_.size());
    link_dirty_ = std::make_unique<std::atomic<bool>[]>(links_.size());
    link_next_.assign(links_.size(), std::nullopt);
    for (std::size_t l = 0; l < links_.size(); ++l) {
      link_dirty_[l] = true;
    }
    for (std::size_t n = 0; n < net_.nodes.size(); ++n) {
      std::vector<int> inc = net_.nodes[n].up;
      inc.insert(inc.end(), net_.nodes[n].down.begin(), net_.nodes[n].down.end());
      std::sort(inc.begin(), inc.end());
      inc.erase(std::unique(inc.begin(), inc.end()), inc.end());
      incident_.push_back(std::move(inc));
    }
    if (opts_.record_history) {
      history_.resize(links_.size());
      for (std::size_t l = 0; l < links_.size(); ++l) {
        snapshot(static_cast<int>(l), t0);
      }
    }
    if (opts_.mode == Mode::Distributed && opts_.workers > 0) {
      pool_ = std::make_unique<ThreadPool>(opts_.workers);
    }
  }

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  const Scenario& scenario() const { return scenario_; }
  const CompiledNetwork& network() const { return net_; }
  const SimOptions& options() const { return opts_; }
  double dt() const { return dt_; }
  double now() const { return now_; }
  double start_time() const { return t0_; }
  const std::vector<LinkState>& links() const { return links_; }
  const LinkState& link(int id) const { return links_[static_cast<std::size_t>(net_.link_of(id))]; }
  const OriginState& origin(int node_id) const { return origins_[static_cast<std::size_t>(net_.node_of(node_id))]; }
  std::uint64_t events_processed() const { return events_.load(); }
  double initial_vehicles(int link_id) const {
    return initial_vehicles_[static_cast<std::size_t>(net_.link_of(link_id))];
  }
  const std::vector<LinkSnapshot>& history(int link_id) const {
    return history_.at(static_cast<std::size_t>(net_.link_of(link_id)));
  }

  /// Processes every event with time < t.
  void run_until(double t) {
    if (opts_.mode == Mode::Sequential) {
      run_sequential(t, std::nullopt);
    } else {
      run_distributed(t);
    }
    now_ = std::max(now_, t);
  }

  void run() { run_until(scenario_.horizon_h); }

  /// Log lines sorted by event key, then by order within the event.
  std::vector<std::string> event_log() const {
    std::vector<const LogEntry*> sorted;
    sorted.reserve(log_.size());
    for (const auto& e : log_) {
      sorted.push_back(&e);
    }
    std::sort(sorted.begin(), sorted.end(), [](const LogEntry* a, const LogEntry* b) {
      if (a->key == b->key) {
        return a->seq < b->seq;
      }
      return a->key < b->key;
    });
    std::vector<std::string> out;
    out.reserve(sorted.size());
    for (const auto* e : sorted) {
      char head[96];
      std::snprintf(head, sizeof head, "%.12f %c%d %s ", e->key.time, e->key.owner_kind == OwnerKind::Node ? 'N' : 'L',
                    e->key.owner, to_string(e->key.kind));
      out.push_back(head + e->text);
    }
    return out;
  }

  /// Largest |cum_in - cum_out - vehicles| over links at time t (veh).
  double link_conservation_error(double t) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < links_.size(); ++i) {
      const auto& l = links_[i];
      double d = initial_vehicles_[i] + l.cum_in().value(t) - l.cum_out().value(t) - l.vehicles(t);
      worst = std::max(worst, std::abs(d));
    }
    return worst;
  }

  struct NetworkBalance {
    double initial = 0.0;  // on links at the start time
    double entered = 0.0;
    double exited = 0.0;
    double on_network = 0.0;
    double queued = 0.0;
    double error() const { return initial + entered - exited - on_network; }
  };

  /// Vehicles that entered links from origins, left links into sinks, and
  /// are on links at time t.
  NetworkBalance network_balance(double t) const {
    NetworkBalance b;
    for (std::size_t l = 0; l < links_.size(); ++l) {
      const auto& cl = net_.links[l];
      if (net_.nodes[static_cast<std::size_t>(cl.from)].kind == NodeKind::Origin) {
        b.entered += links_[l].cum_in().value(t);
      }
      if (net_.nodes[static_cast<std::size_t>(cl.to)].kind == NodeKind::Sink) {
        b.exited += links_[l].cum_out().value(t);
      }
      b.on_network += links_[l].vehicles(t);
      b.initial += initial_vehicles_[l];
    }
    for (const auto& o : origins_) {
      b.queued += o.arrivals.value(t) - o.departures.value(t);
    }
    return b;
  }

 private:
  // ---- setup -------------------------------------------------------------

  void build_externals() {
    externals_.assign(net_.nodes.size(), {});
    ext_cursor_.assign(net_.nodes.size(), 0);
    for (std::size_t n = 0; n < net_.nodes.size(); ++n) {
      externals_[n].push_back({t0_, ExternalKind::Init, 0});
    }
    for (std::size_t i = 0; i < scenario_.ods.size(); ++i) {
      const auto& od = scenario_.ods[i];
      auto n = static_cast<std::size_t>(net_.node_of(od.origin));
      for (const auto& d : od.demand) {
        if (d.t > t0_) {
          externals_[n].push_back({d.t, ExternalKind::Demand, static_cast<int>(i)});
        }
      }
      for (const auto& p : od.route_proportions) {
        if (p.t > t0_) {
          externals_[n].push_back({p.t, ExternalKind::Demand, static_cast<int>(i)});
        }
      }
    }
    for (std::size_t i = 0; i < scenario_.incidents.size(); ++i) {
      const auto& in = scenario_.incidents[i];
      auto n = static_cast<std::size_t>(net_.links[static_cast<std::size_t>(net_.link_of(in.link))].to);
      externals_[n].push_back({std::max(in.start_h, t0_), ExternalKind::IncidentStart, static_cast<int>(i)});
      externals_[n].push_back({in.start_h + in.duration_h, ExternalKind::IncidentEnd, static_cast<int>(i)});
    }
    for (std::size_t i = 0; i < scenario_.priority_changes.size(); ++i) {
      const auto& pc = scenario_.priority_changes[i];
      auto n = static_cast<std::size_t>(net_.node_of(pc.node));
      externals_[n].push_back({std::max(pc.t, t0_), ExternalKind::Priority, static_cast<int>(i)});
    }
    for (auto& list : externals_) {
      std::stable_sort(list.begin(), list.end(), [](const ExternalEvent& a, const ExternalEvent& b) {
        if (a.t != b.t) {
          return a.t < b.t;
        }
        if (a.kind != b.kind) {
          return a.kind < b.kind;
        }
        return a.index < b.index;
      });
    }
  }

  void build_scripts() {
    for (std::size_t i = 0; i < scenario_.bottlenecks.size(); ++i) {
      scripts_.push_back({scenario_.bottlenecks[i].t, true, static_cast<int>(i)});
    }
    for (std::size_t i = 0; i < scenario_.bottleneck_updates.size(); ++i) {
      scripts_.push_back({scenario_.bottleneck_updates[i].t, false, static_cast<int>(i)});
    }
    std::stable_sort(scripts_.begin(), scripts_.end(), [](const ScriptEvent& a, const ScriptEvent& b) {
      if (a.t != b.t) {
        return a.t < b.t;
      }
      if (a.create != b.create) {
        return a.create;
      }
      return a.index < b.index;
    });
  }

  static IpId bottleneck_ip_id(int spec_id) { return derive_id(0xB077'1E4E'C0DEULL, static_cast<std::uint64_t>(spec_id)); }

  // ---- event discovery ---------------------------------------------------

  EventKey script_key(std::size_t i) const {
    return {scripts_[i].t, OwnerKind::Link, -1, EventKind::LinkScript, 0.0, i, 0};
  }

  std::optional<EventKey> node_next_key(std::size_t n) const {
    std::optional<EventKey> best;
    const int id = net_.nodes[n].id;
    if (ext_cursor_[n] < externals_[n].size()) {
      best = EventKey{externals_[n][ext_cursor_[n]].t, OwnerKind::Node, id, EventKind::External, 0.0,
                      ext_cursor_[n], 0};
    }
    if (net_.nodes[n].kind == NodeKind::Origin) {
      const auto& o = origins_[n];
      if (auto td = o.drain_time()) {
        EventKey k{*td, OwnerKind::Node, id, EventKind::QueueDrain, 0.0, o.queue.front().serial, 0};
        if (!best || k < *best) {
          best = k;
        }
      }
    }
    return best;
  }

  const std::optional<LinkEvent>& cached_link_event(std::size_t l) {
    if (link_dirty_[l].load(std::memory_order_relaxed)) {
      link_next_[l] = links_[l].next_event();
      link_dirty_[l].store(false, std::memory_order_relaxed);
    }
    return link_next_[l];
  }

  void touch(int l) { link_dirty_[static_cast<std::size_t>(l)].store(true, std::memory_order_relaxed); }

  // ---- sequential --------------------------------------------------------

  /// Processes events with time < t_end (and key <= limit when given).
  void run_sequential(double t_end, std::optional<EventKey> limit) {
    EventLogger log(opts_.trace ? &log_ : nullptr);
    for (;;) {
      enum class Src { None, Script, Node, Link } src = Src::None;
      EventKey best;
      std::size_t which = 0;
      auto offer = [&](const EventKey& k, Src s, std::size_t w) {
        if (!(k.time < t_end) || (limit && *limit < k)) {
          return;
        }
        if (src == Src::None || k < best) {
          best = k;
          src = s;
          which = w;
        }
      };
      if (script_cursor_ < scripts_.size()) {
        offer(script_key(script_cursor_), Src::Script, script_cursor_);
      }
      for (std::size_t n = 0; n < net_.nodes.size(); ++n) {
        if (auto k = node_next_key(n)) {
          offer(*k, Src::Node, n);
        }
      }
      for (std::size_t l = 0; l < links_.size(); ++l) {
        if (const auto& ev = cached_link_event(l)) {
          offer(ev->key, Src::Link, l);
        }
      }
      if (src == Src::None) {
        return;
      }
      log.begin(best);
      switch (src) {
        case Src::Script: process_script(script_cursor_++, log); break;
        case Src::Node: process_node_event(which, best, log); break;
        case Src::Link: process_link_event(which, *link_next_[which], log); break;
        case Src::None: break;
      }
      ++events_;
    }
  }

  // ---- distributed -------------------------------------------------------

  double next_step_boundary(double t) const {
    double k = std::floor((t - t0_) / dt_ + 1e-9);
    double b = t0_ + (k + 1.0) * dt_;
    return b > t ? b : t0_ + (k + 2.0) * dt_;
  }

  void run_distributed(double t_limit) {
    while (now_ < t_limit) {
      double ts = script_cursor_ < scripts_.size() ? scripts_[script_cursor_].t : std::numeric_limits<double>::infinity();
      if (ts <= now_) {
        // Scripted changes inside links are applied in a serial pass at their instant.
        std::size_t last = script_cursor_;
        while (last + 1 < scripts_.size() && scripts_[last + 1].t == scripts_[script_cursor_].t) {
          ++last;
        }
        run_sequential(std::numeric_limits<double>::infinity(), script_key(last));
        continue;
      }
      double t_end = std::min({next_step_boundary(now_), t_limit, ts});
      distributed_step(t_end);
      now_ = t_end;
    }
  }

  bool in_zone(std::size_t l, LinkEnd end, double tau, double x, double t_end) const {
    const auto& cl = net_.links[l];
    double reach = cl.max_speed() * (t_end - tau) + kPositionTol;
    return end == LinkEnd::Upstream ? x <= reach : cl.length - x <= reach;
  }

  void distributed_step(double t_end) {
    std::vector<std::vector<LogEntry>> logs(std::max(net_.nodes.size(), links_.size()));
    std::vector<std::function<void()>> tasks;
    tasks.reserve(net_.nodes.size());
    for (std::size_t n = 0; n < net_.nodes.size(); ++n) {
      tasks.emplace_back([this, n, t_end, &logs] { node_zone_task(n, t_end, opts_.trace ? &logs[n] : nullptr); });
    }
    run_tasks(tasks);
    merge_logs(logs);
    tasks.clear();
    for (std::size_t l = 0; l < links_.size(); ++l) {
      tasks.emplace_back([this, l, t_end, &logs] { middle_zone_task(l, t_end, opts_.trace ? &logs[l] : nullptr); });
    }
    run_tasks(tasks);
    merge_logs(logs);
  }

  void run_tasks(const std::vector<std::function<void()>>& tasks) {
    if (pool_) {
      pool_->run(tasks);
    } else {
      for (const auto& t : tasks) {
        t();
      }
    }
  }

  void merge_logs(std::vector<std::vector<LogEntry>>& logs) {
    for (auto& v : logs) {
      std::move(v.begin(), v.end(), std::back_inserter(log_));
      v.clear();
    }
  }

  void node_zone_task(std::size_t n, double t_end, std::vector<LogEntry>* sink) {
    EventLogger log(sink);
    const auto& node = net_.nodes[n];
    for (;;) {
      std::vector<std::unique_lock<std::mutex>> locks;
      for (int l : incident_[n]) {
        locks.emplace_back(link_mu_[static_cast<std::size_t>(l)]);
      }
      std::optional<EventKey> best;
      std::optional<LinkEvent> best_link;
      std::size_t best_l = 0;
      if (auto k = node_next_key(n); k && k->time < t_end) {
        best = *k;
      }
      auto scan = [&](int li, LinkEnd end) {
        auto l = static_cast<std::size_t>(li);
        auto ev = links_[l].next_event([&](const LinkEvent& e) {
          if (!(e.time() < t_end)) {
            return false;
          }
          if (e.kind() == EventKind::BoundaryArrival) {
            return e.end == end;
          }
          return in_zone(l, end, e.time(), e.position(), t_end);
        });
        if (ev && (!best || ev->key < *best)) {
          best = ev->key;
          best_link = ev;
          best_l = l;
        }
      };
      for (int l : node.up) {
        scan(l, LinkEnd::Downstream);
      }
      for (int l : node.down) {
        scan(l, LinkEnd::Upstream);
      }
      if (!best) {
        return;
      }
      log.begin(*best);
      if (best_link && best_link->key == *best) {
        process_link_event(best_l, *best_link, log);
      } else {
        process_node_event(n, *best, log);
      }
      ++events_;
    }
  }

  void middle_zone_task(std::size_t l, double t_end, std::vector<LogEntry>* sink) {
    EventLogger log(sink);
    std::lock_guard lock(link_mu_[l]);
    for (;;) {
      auto ev = links_[l].next_event([&](const LinkEvent& e) {
        if (!(e.time() < t_end)) {
          return false;
        }
        bool zone = e.kind() == EventKind::BoundaryArrival ||
                    in_zone(l, LinkEnd::Upstream, e.time(), e.position(), t_end) ||
                    in_zone(l, LinkEnd::Downstream, e.time(), e.position(), t_end);
        if (zone) {
          if (e.time() < t_end - kStepSlack) {
            throw std::logic_error("zone soundness violated on link " + std::to_string(links_[l].id()) + " at t=" +
                                   fmt_num(e.time(), 15));
          }
          return false;
        }
        return true;
      });
      if (!ev) {
        return;
      }
      log.begin(ev->key);
      process_link_event(l, *ev, log);
      ++events_;
    }
  }

  // ---- event processing --------------------------------------------------

  void snapshot(int l, double t) {
    if (!opts_.record_history) {
      return;
    }
    const auto& ls = links_[static_cast<std::size_t>(l)];
    history_[static_cast<std::size_t>(l)].push_back({t, ls.ips(), ls.regions()});
  }

  void process_script(std::size_t i, EventLogger& log) {
    const auto& sc = scripts_[i];
    std::vector<std::string> lines;
    std::vector<std::string>* lp = log.enabled() ? &lines : nullptr;
    if (sc.create) {
      const auto& b = scenario_.bottlenecks[static_cast<std::size_t>(sc.index)];
      int l = net_.link_of(b.link);
      BottleneckPayload p;
      p.free_speed = b.free_speed;
      p.capacity = b.capacity;
      p.route = b.route.empty() ? std::vector<LinkId>{b.link} : b.route;
      p.route_index = 0;
      links_[static_cast<std::size_t>(l)].insert_bottleneck(sc.t, b.position_km, bottleneck_ip_id(b.id), p, lp);
      touch(l);
      snapshot(l, sc.t);
    } else {
      const auto& u = scenario_.bottleneck_updates[static_cast<std::size_t>(sc.index)];
      bool found = false;
      for (std::size_t l = 0; l < links_.size() && !found; ++l) {
        if (links_[l].update_bottleneck(sc.t, bottleneck_ip_id(u.id), u.free_speed, u.capacity, lp)) {
          found = true;
          touch(static_cast<int>(l));
          snapshot(static_cast<int>(l), sc.t);
        }
      }
      if (!found && lp) {
        lines.push_back("bottleneck " + std::to_string(u.id) + " not on the network; update ignored");
      }
    }
    log.add_all(lines);
  }

  void process_node_event(std::size_t n, const EventKey& key, EventLogger& log) {
    auto& o = origins_[n];
    if (key.kind == EventKind::External) {
      // Everything scheduled at this node for this instant shares one update.
      const auto& list = externals_[n];
      while (ext_cursor_[n] < list.size() && list[ext_cursor_[n]].t == key.time) {
        apply_external(n, list[ext_cursor_[n]++], log);
      }
    } else if (key.kind == EventKind::QueueDrain) {
      o.advance(key.time);
      if (!o.queue.empty() && o.queue.front().serial == key.a) {
        o.pop_front();
      }
      if (log.enabled()) {
        log.add("queue head drained, queued " + fmt_num(o.queued()));
      }
    }
    node_update(n, key.time, key_hash(key), log);
  }

  void set_origin_arrivals(std::size_t n, double t) {
    auto& o = origins_[n];
    const auto& node = net_.nodes[n];
    double total = 0.0;
    std::vector<double> flows(node.origin_routes.size(), 0.0);
    for (const auto& od : scenario_.ods) {
      if (od.origin != node.id) {
        continue;
      }
      double rate = od.rate_at(t);
      auto p = od.proportions_at(t);
      for (std::size_t k = 0; k < od.routes.size(); ++k) {
        flows[static_cast<std::size_t>(node.origin_route_index.at(scenario_.route(od.routes[k]).links))] +=
            rate * p[k];
      }
      total += rate;
    }
    o.advance(t);
    o.arrival = total;
    if (total > 0.0) {
      for (auto& f : flows) {
        f /= total;
      }
      o.comp = flows;
    } else if (o.comp.empty() || std::all_of(o.comp.begin(), o.comp.end(), [](double v) { return v == 0.0; })) {
      // No traffic yet: any mix will do until the first vehicles arrive.
      o.comp.assign(flows.size(), flows.empty() ? 0.0 : 1.0 / static_cast<double>(flows.size()));
    }
    o.arrivals.set_slope(t, total);
  }

  void apply_external(std::size_t n, const ExternalEvent& ev, EventLogger& log) {
    switch (ev.kind) {
      case ExternalKind::Init:
      case ExternalKind::Demand:
        if (net_.nodes[n].kind == NodeKind::Origin) {
          set_origin_arrivals(n, ev.t);
          if (log.enabled()) {
            log.add("arrival rate " + fmt_num(origins_[n].arrival));
          }
        }
        break;
      case ExternalKind::IncidentStart:
      case ExternalKind::IncidentEnd: {
        const auto& in = scenario_.incidents[static_cast<std::size_t>(ev.index)];
        auto l = static_cast<std::size_t>(net_.link_of(in.link));
        auto& act = active_incidents_[l];
        if (ev.kind == ExternalKind::IncidentStart) {
          act.push_back(ev.index);
        } else {
          act.erase(std::remove(act.begin(), act.end(), ev.index), act.end());
        }
        double f = 1.0;
        for (int idx : act) {
          const auto& a = scenario_.incidents[static_cast<std::size_t>(idx)];
          double fi = a.capacity_factor ? *a.capacity_factor
                                        : static_cast<double>(net_.links[l].lanes - *a.blocked_lanes) /
                                              static_cast<double>(net_.links[l].lanes);
          f = std::min(f, fi);
        }
        exit_factor_[l] = f;
        if (log.enabled()) {
          log.add("link " + std::to_string(in.link) + " exit factor " + fmt_num(f));
        }
        break;
      }
      case ExternalKind::Priority: {
        const auto& pc = scenario_.priority_changes[static_cast<std::size_t>(ev.index)];
        net_.nodes[n].topo.W = build_priorities(net_, net_.nodes[n], pc.priorities);
        if (log.enabled()) {
          log.add("priorities changed");
        }
        break;
      }
    }
  }

  double exit_capacity(std::size_t l) const { return net_.links[l].exit_capacity * exit_factor_[l]; }

  void process_link_event(std::size_t l, const LinkEvent& ev, EventLogger& log) {
    std::vector<std::string> lines;
    std::vector<std::string>* lp = log.enabled() ? &lines : nullptr;
    auto& ls = links_[l];
    touch(static_cast<int>(l));
    if (ev.kind() == EventKind::Intersection) {
      if (!ls.resolve_intersection(ev, lp) && lp) {
        lines.push_back("stale intersection ignored");
      }
      log.add_all(lines);
      snapshot(static_cast<int>(l), ev.time());
      return;
    }
    auto note = ls.boundary_arrival(ev);
    if (!note) {
      if (lp) {
        log.add("stale arrival ignored");
      }
      return;
    }
    if (lp) {
      log.add(std::string("exit ") + to_string(note->end) + " " + format_ip(note->ip) + " boundary " +
              format_regime(note->current));
      for (const auto& ip : note->coincident) {
        log.add("exit with " + format_ip(ip));
      }
    }
    snapshot(static_cast<int>(l), ev.time());
    const auto& cl = net_.links[l];
    const auto n = static_cast<std::size_t>(note->end == LinkEnd::Downstream ? cl.to : cl.from);
    node_update(n, ev.time(), key_hash(ev.key), log);
    if (note->ip.kind == IpKind::MovingBottleneck) {
      auto payload = note->ip.bottleneck();
      if (note->end == LinkEnd::Downstream && payload.route_index + 1 < payload.route.size()) {
        payload.route_index += 1;
        const int next = net_.link_of(payload.route[payload.route_index]);
        links_[static_cast<std::size_t>(next)].insert_bottleneck(ev.time(), 0.0, note->ip.id, payload, lp);
        touch(next);
        snapshot(next, ev.time());
        log.add_all(lines);
      } else if (lp) {
        log.add("bottleneck retired");
      }
    }
  }

  /// Rebalances node n at time t and injects the resulting boundary changes.
  void node_update(std::size_t n, double t, std::uint64_t seed, EventLogger& log) {
    auto& node = net_.nodes[n];
    const auto& topo = node.topo;
    const Eigen::Index I = topo.I();
    const Eigen::Index J = topo.J();
    Vector D = Vector::Zero(I);
    Vector P_R = Vector::Zero(topo.R());
    Vector C = Vector::Zero(J);
    Vector prev_PS = Vector::Zero(topo.S());
    for (Eigen::Index j = 0; j < J; ++j) {
      auto lj = static_cast<std::size_t>(node.down[static_cast<std::size_t>(j)]);
      const auto& head = links_[lj].head();
      C(j) = net_.links[lj].fd.inflow_capacity(head.regime.density);
      for (std::size_t k = 0; k < head.routes.size(); ++k) {
        prev_PS(node.s_offset[static_cast<std::size_t>(j)] + static_cast<Eigen::Index>(k)) = head.routes[k];
      }
    }
    OriginState* origin = nullptr;
    if (node.kind == NodeKind::Origin) {
      origin = &origins_[n];
      origin->advance(t);
      const auto& mix = origin->outflow_mix();
      for (std::size_t k = 0; k < mix.size(); ++k) {
        P_R(static_cast<Eigen::Index>(k)) = mix[k];
      }
      if (origin->queue.empty()) {
        D(0) = origin->arrival;
      } else {
        // Queued vehicles press on every turn they use.
        Matrix p = turn_proportions(topo, P_R);
        double d = origin->arrival;
        for (Eigen::Index j = 0; j < J; ++j) {
          if (p(0, j) > 0.0) {
            d = std::max(d, C(j) / p(0, j));
          }
        }
        D(0) = d;
      }
    } else {
      for (Eigen::Index i = 0; i < I; ++i) {
        auto li = static_cast<std::size_t>(node.up[static_cast<std::size_t>(i)]);
        const auto& tail = links_[li].tail();
        D(i) = std::min(net_.links[li].fd.sending_flow(tail.regime.density), exit_capacity(li));
        for (std::size_t k = 0; k < tail.routes.size(); ++k) {
          P_R(node.r_offset[static_cast<std::size_t>(i)] + static_cast<Eigen::Index>(k)) = tail.routes[k];
        }
      }
    }

    Vector F_I;
    Vector F_J;
    Vector P_S = prev_PS;
    if (node.kind == NodeKind::Sink) {
      F_I = D.unaryExpr([](double f) { return snap_flow(f); });
    } else {
      Matrix F = allocate_flows(topo, D, P_R, C);
      auto agg = aggregate_flows(F);
      F_I = agg.F_I;
      F_J = agg.F_J;
      P_S = downstream_route_state(topo, F_I, P_R, prev_PS).P_S;
    }
    if (log.enabled()) {
      std::string line = "node " + std::to_string(node.id) + " D=" + fmt_vec(D) + " F_I=" + fmt_vec(F_I);
      if (J > 0) {
        line += " C=" + fmt_vec(C) + " F_J=" + fmt_vec(F_J);
      }
      log.add(std::move(line));
    }

    std::vector<std::string> lines;
    std::vector<std::string>* lp = log.enabled() ? &lines : nullptr;
    if (origin) {
      origin->outflow = F_I(0);
      origin->departures.set_slope(t, F_I(0));
    } else {
      for (Eigen::Index i = 0; i < I; ++i) {
        const int li = node.up[static_cast<std::size_t>(i)];
        auto& ls = links_[static_cast<std::size_t>(li)];
        const auto& fd = net_.links[static_cast<std::size_t>(li)].fd;
        const auto& tail = ls.tail().regime;
        const double f = F_I(i);
        bool keep = !fd.is_congested(tail.density) && f >= tail.flow - kNodeFlowTol;
        if (keep) {
          continue;
        }
        FlowRegime target = fd.congested_regime(std::min(f, fd.max_flow()));
        if (same_regime(target, tail)) {
          continue;
        }
        if (lp) {
          lines.push_back("link " + std::to_string(ls.id()) + " downstream boundary -> " + format_regime(target));
        }
        ls.inject_downstream(t, target, derive_id(seed, static_cast<std::uint64_t>(li) * 2 + 1), lp);
        touch(li);
        snapshot(li, t);
      }
    }
    for (Eigen::Index j = 0; j < J; ++j) {
      const int lj = node.down[static_cast<std::size_t>(j)];
      auto& ls = links_[static_cast<std::size_t>(lj)];
      const auto& fd = net_.links[static_cast<std::size_t>(lj)].fd;
      const Region& head = ls.head();
      const double f = F_J(j);
      FlowRegime target = fd.is_congested(head.regime.density) && std::abs(f - head.regime.flow) <= kNodeFlowTol
                              ? head.regime
                              : fd.free_regime(std::min(f, fd.max_flow()));
      std::vector<double> routes = head.routes;
      if (f > 0.0) {
        for (std::size_t k = 0; k < routes.size(); ++k) {
          routes[k] = P_S(node.s_offset[static_cast<std::size_t>(j)] + static_cast<Eigen::Index>(k));
        }
      }
      if (same_regime(target, head.regime) && same_routes(routes, head.routes)) {
        continue;
      }
      if (lp) {
        lines.push_back("link " + std::to_string(ls.id()) + " upstream boundary -> " + format_regime(target));
      }
      ls.inject_upstream(t, Region{target, std::move(routes)}, derive_id(seed, static_cast<std::uint64_t>(lj) * 2), lp);
      touch(lj);
      snapshot(lj, t);
    }
    log.add_all(lines);
  }

  Scenario scenario_;
  CompiledNetwork net_;
  SimOptions opts_;
  double t0_ = 0.0;
  double now_ = 0.0;
  double dt_ = 0.0;
  std::vector<LinkState> links_;
  std::vector<double> initial_vehicles_;
  std::vector<double> exit_factor_;
  std::vector<std::vector<int>> active_incidents_;
  std::vector<OriginState> origins_;
  std::vector<std::vector<ExternalEvent>> externals_;
  std::vector<std::size_t> ext_cursor_;
  std::vector<ScriptEvent> scripts_;
  std::size_t script_cursor_ = 0;
  std::vector<std::vector<int>> incident_;
  std::vector<LogEntry> log_;
  std::unique_ptr<std::mutex[]> link_mu_;
  std::unique_ptr<std::atomic<bool>[]> link_dirty_;
  std::vector<std::optional<LinkEvent>> link_next_;
  std::vector<std::vector<LinkSnapshot>> history_;
  std::unique_ptr<ThreadPool> pool_;
  std::atomic<std::uint64_t> events_{0};
};

}  // namespace ipm
