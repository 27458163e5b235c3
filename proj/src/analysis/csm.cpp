#include "cslab/analysis/csm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "cslab/common/errors.hpp"

namespace cslab::analysis {

using nlohmann::json;

namespace {

double entropy_bits(const std::map<int, long long>& counts, long long total) {
  double h = 0.0;
  for (const auto& [k, n] : counts) {
    const double p = double(n) / double(total);
    h -= p * std::log2(p);
  }
  return h;
}

const std::vector<CsmEntry> kEmptyRow;

}  // namespace

int ObservationLabeler::label(const envs::Observation& obs) {
  if (const int* s = std::get_if<int>(&obs)) return *s;
  const auto& v = std::get<std::vector<double>>(obs);
  return vectors_.try_emplace(v, int(vectors_.size())).first->second;
}

// ---- EmpiricalCsm -------------------------------------------------------------------

EmpiricalCsm::EmpiricalCsm(int n_states, int n_actions, int n_symbols)
    : n_states_(n_states), n_actions_(n_actions), n_symbols_(n_symbols) {
  if (n_states < 0 || n_actions < 0 || n_symbols < 0) throw ValidationError("csm: negative size");
  rows_.resize(std::size_t(n_states) * std::size_t(n_actions));
  row_totals_.assign(rows_.size(), 0);
  in_totals_.assign(std::size_t(n_states), 0);
}

void EmpiricalCsm::check_state(int s) const {
  if (s < 0 || s >= n_states_) {
    throw ValidationError("csm: state " + std::to_string(s) + " outside [0, " + std::to_string(n_states_) + ")");
  }
}

std::vector<CsmEntry>& EmpiricalCsm::row(int s, int a) {
  return rows_[std::size_t(s) * std::size_t(n_actions_) + std::size_t(a)];
}

void EmpiricalCsm::add(const LabeledTransition& tr) {
  check_state(tr.state);
  check_state(tr.next_state);
  if (tr.action < 0 || tr.action >= n_actions_ || tr.symbol < 0 || tr.symbol >= n_symbols_) {
    throw ValidationError("csm: action or symbol label out of range");
  }
  auto& r = row(tr.state, tr.action);
  auto it = std::lower_bound(r.begin(), r.end(), std::pair(tr.symbol, tr.next_state),
                             [](const CsmEntry& e, const std::pair<int, int>& key) {
                               return std::pair(e.symbol, e.next_state) < key;
                             });
  if (it == r.end() || it->symbol != tr.symbol || it->next_state != tr.next_state) {
    it = r.insert(it, CsmEntry{tr.symbol, tr.next_state});
  }
  ++it->count;
  it->reward_sum += tr.reward;
  it->terminal_count += tr.terminal ? 1 : 0;
  ++row_totals_[std::size_t(tr.state) * std::size_t(n_actions_) + std::size_t(tr.action)];
  ++in_totals_[std::size_t(tr.next_state)];
}

const std::vector<CsmEntry>& EmpiricalCsm::entries(int s, int a) const {
  if (s < 0 || s >= n_states_ || a < 0 || a >= n_actions_) return kEmptyRow;
  return rows_[std::size_t(s) * std::size_t(n_actions_) + std::size_t(a)];
}

long long EmpiricalCsm::row_total(int s, int a) const {
  if (s < 0 || s >= n_states_ || a < 0 || a >= n_actions_) return 0;
  return row_totals_[std::size_t(s) * std::size_t(n_actions_) + std::size_t(a)];
}

long long EmpiricalCsm::outgoing(int s) const {
  long long n = 0;
  for (int a = 0; a < n_actions_; ++a) n += row_total(s, a);
  return n;
}

long long EmpiricalCsm::incoming(int s) const {
  return s < 0 || s >= n_states_ ? 0 : in_totals_[std::size_t(s)];
}

long long EmpiricalCsm::visits(int s) const { return std::max(outgoing(s), incoming(s)); }

long long EmpiricalCsm::total() const { return std::accumulate(row_totals_.begin(), row_totals_.end(), 0LL); }

double EmpiricalCsm::probability(int s, int a, int o, int s_next) const {
  const long long n = row_total(s, a);
  if (n == 0) return 0.0;
  for (const auto& e : entries(s, a)) {
    if (e.symbol == o && e.next_state == s_next) return double(e.count) / double(n);
  }
  return 0.0;
}

std::vector<double> EmpiricalCsm::next_symbol_distribution(int s, int a) const {
  const long long n = row_total(s, a);
  if (n == 0) return {};
  std::vector<double> p(std::size_t(n_symbols_), 0.0);
  for (const auto& e : entries(s, a)) p[std::size_t(e.symbol)] += double(e.count);
  for (double& v : p) v /= double(n);
  return p;
}

EmpiricalCsm EmpiricalCsm::relabeled(std::span<const int> mapping, int n) const {
  if (mapping.size() != std::size_t(n_states_)) throw ValidationError("csm: mapping size differs from state count");
  EmpiricalCsm out(n, n_actions_, n_symbols_);
  for (int s = 0; s < n_states_; ++s) {
    for (int a = 0; a < n_actions_; ++a) {
      for (const auto& e : entries(s, a)) {
        LabeledTransition tr{mapping[std::size_t(s)], a, e.symbol, mapping[std::size_t(e.next_state)]};
        out.check_state(tr.state);
        out.check_state(tr.next_state);
        auto& r = out.row(tr.state, a);
        auto it = std::find_if(r.begin(), r.end(), [&](const CsmEntry& x) {
          return x.symbol == tr.symbol && x.next_state == tr.next_state;
        });
        if (it == r.end()) {
          r.push_back(CsmEntry{tr.symbol, tr.next_state});
          it = r.end() - 1;
        }
        it->count += e.count;
        it->reward_sum += e.reward_sum;
        it->terminal_count += e.terminal_count;
        out.row_totals_[std::size_t(tr.state) * std::size_t(n_actions_) + std::size_t(a)] += e.count;
        out.in_totals_[std::size_t(tr.next_state)] += e.count;
      }
    }
  }
  for (auto& r : out.rows_) {
    std::sort(r.begin(), r.end(), [](const CsmEntry& x, const CsmEntry& y) {
      return std::pair(x.symbol, x.next_state) < std::pair(y.symbol, y.next_state);
    });
  }
  return out;
}

EmpiricalCsm estimate_csm(std::span<const LabeledTransition> transitions, int n_states, int n_actions,
                          int n_symbols) {
  if (transitions.empty()) throw ValidationError("csm: no transitions");
  for (const auto& tr : transitions) {
    if (tr.state < 0 || tr.next_state < 0 || tr.action < 0 || tr.symbol < 0) {
      throw ValidationError("csm: negative label (unknown states must be removed or relabeled first)");
    }
    n_states = std::max({n_states, tr.state + 1, tr.next_state + 1});
    n_actions = std::max(n_actions, tr.action + 1);
    n_symbols = std::max(n_symbols, tr.symbol + 1);
  }
  EmpiricalCsm csm(n_states, n_actions, n_symbols);
  for (const auto& tr : transitions) csm.add(tr);
  return csm;
}

// ---- unifilarity / purity ----------------------------------------------------------------

UnifilarityReport unifilarity_entropy(const EmpiricalCsm& csm, long long min_visits) {
  UnifilarityReport rep;
  double weighted = 0.0;
  for (int s = 0; s < csm.num_states(); ++s) {
    const long long v = csm.visits(s);
    if (v == 0) continue;
    if (v < min_visits) {
      ++rep.excluded_states;
      rep.excluded_transitions += csm.outgoing(s);
      continue;
    }
    for (int a = 0; a < csm.num_actions(); ++a) {
      const auto& row = csm.entries(s, a);
      for (std::size_t i = 0; i < row.size();) {
        SuccessorDistribution d{s, a, row[i].symbol};
        for (; i < row.size() && row[i].symbol == d.symbol; ++i) {
          if (csm.visits(row[i].next_state) < min_visits) {
            rep.excluded_transitions += row[i].count;
            continue;
          }
          d.successors[row[i].next_state] += row[i].count;
          d.count += row[i].count;
        }
        if (d.count == 0) continue;
        d.entropy_bits = entropy_bits(d.successors, d.count);
        weighted += double(d.count) * d.entropy_bits;
        rep.counted_transitions += d.count;
        if (d.entropy_bits > 0.0 &&
            (!rep.worst || double(d.count) * d.entropy_bits > double(rep.worst->count) * rep.worst->entropy_bits)) {
          rep.worst = d;
        }
        rep.triples.push_back(std::move(d));
      }
    }
  }
  rep.entropy_bits = rep.counted_transitions > 0 ? weighted / double(rep.counted_transitions) : 0.0;
  return rep;
}

PurityReport refinement_purity(std::span<const int> learned, std::span<const int> oracle) {
  if (learned.size() != oracle.size()) {
    throw ValidationError("purity: " + std::to_string(learned.size()) + " learned labels vs " +
                          std::to_string(oracle.size()) + " oracle labels");
  }
  if (learned.empty()) throw ValidationError("purity: no labels");
  PurityReport rep;
  rep.learned_labels.assign(learned.begin(), learned.end());
  rep.oracle_labels.assign(oracle.begin(), oracle.end());
  for (auto* v : {&rep.learned_labels, &rep.oracle_labels}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  auto index = [](const std::vector<int>& labels, int x) {
    return std::size_t(std::lower_bound(labels.begin(), labels.end(), x) - labels.begin());
  };
  rep.table.assign(rep.learned_labels.size(), std::vector<long long>(rep.oracle_labels.size(), 0));
  for (std::size_t i = 0; i < learned.size(); ++i) {
    ++rep.table[index(rep.learned_labels, learned[i])][index(rep.oracle_labels, oracle[i])];
  }
  long long hits = 0;
  for (const auto& row : rep.table) hits += *std::max_element(row.begin(), row.end());
  rep.total = (long long)learned.size();
  rep.purity = double(hits) / double(rep.total);
  return rep;
}

// ---- merge -----------------------------------------------------------------------------------

namespace {

// Per-action counts over (symbol, successor block).
using Distribution = std::map<std::pair<int, int>, double>;
using Signature = std::vector<Distribution>;

Signature signature(const EmpiricalCsm& csm, int s, const std::vector<int>& block,
                    const std::vector<bool>& eligible) {
  Signature sig(std::size_t(csm.num_actions()));
  for (int a = 0; a < csm.num_actions(); ++a) {
    for (const auto& e : csm.entries(s, a)) {
      if (!eligible[std::size_t(e.next_state)]) continue;
      sig[std::size_t(a)][{e.symbol, block[std::size_t(e.next_state)]}] += double(e.count);
    }
  }
  return sig;
}

double mass(const Distribution& p) {
  double n = 0.0;
  for (const auto& [k, v] : p) n += v;
  return n;
}

// Total variation and the size of the joint support.
std::pair<double, int> total_variation(const Distribution& p, const Distribution& q) {
  const double np = mass(p), nq = mass(q);
  double d = 0.0;
  int support = 0;
  auto i = p.begin();
  auto j = q.begin();
  while (i != p.end() || j != q.end()) {
    ++support;
    if (j == q.end() || (i != p.end() && i->first < j->first)) {
      d += i->second / np;
      ++i;
    } else if (i == p.end() || j->first < i->first) {
      d += j->second / nq;
      ++j;
    } else {
      d += std::abs(i->second / np - j->second / nq);
      ++i;
      ++j;
    }
  }
  return {0.5 * d, support};
}

// Half the L1 deviation bound P(|p_hat - p|_1 >= e) <= 2^K exp(-n e^2 / 2).
double sampling_allowance(double n, int support, double delta) {
  if (delta <= 0.0) return 0.0;
  return 0.5 * std::sqrt(2.0 * (double(support) * std::log(2.0) + std::log(1.0 / delta)) / n);
}

// Largest per-action excess of the distance over its sampling allowance;
// actions unobserved on either side carry no evidence.
double excess(const Signature& x, const Signature& y, double delta) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < x.size(); ++a) {
    if (x[a].empty() || y[a].empty()) continue;
    const auto [tv, support] = total_variation(x[a], y[a]);
    const double allow = sampling_allowance(mass(x[a]), support, delta) + sampling_allowance(mass(y[a]), support, delta);
    worst = std::max(worst, tv - allow);
  }
  return worst;
}

// Dense block ids ordered by each block's smallest member.
int renumber(std::vector<int>& block) {
  std::map<int, int> first;
  for (std::size_t s = 0; s < block.size(); ++s) first.try_emplace(block[s], int(first.size()));
  for (int& b : block) b = first[b];
  return int(first.size());
}

}  // namespace

MergeResult merge_equivalent_states(const EmpiricalCsm& csm, const MergeOptions& options) {
  if (options.tau < 0.0 || options.delta < 0.0 || options.delta >= 1.0) {
    throw ValidationError("merge: need tau >= 0 and delta in [0, 1)");
  }
  const int n = csm.num_states();
  std::vector<bool> eligible(static_cast<std::size_t>(n));
  std::vector<int> block(std::size_t(n), 0);
  int next_id = 1;
  for (int s = 0; s < n; ++s) {
    eligible[std::size_t(s)] = csm.visits(s) >= options.min_visits;
    if (!eligible[std::size_t(s)]) block[std::size_t(s)] = next_id++;
  }
  int blocks = renumber(block);
  MergeResult out;
  for (bool changed = true; changed;) {
    changed = false;
    ++out.rounds;
    std::vector<std::vector<int>> members(static_cast<std::size_t>(blocks));
    for (int s = 0; s < n; ++s) members[std::size_t(block[std::size_t(s)])].push_back(s);
    std::vector<int> next = block;
    int fresh = blocks;
    for (auto& m : members) {
      if (m.size() < 2) continue;
      // Heaviest states seed the clusters; each member joins the nearest
      // cluster (by pooled distribution) within tolerance.
      std::stable_sort(m.begin(), m.end(), [&](int a, int b) { return csm.visits(a) > csm.visits(b); });
      std::vector<Signature> pooled;
      std::vector<int> cluster_id;
      for (int s : m) {
        const Signature sig = signature(csm, s, block, eligible);
        std::size_t best = pooled.size();
        double best_excess = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < pooled.size(); ++c) {
          const double e = excess(sig, pooled[c], options.delta);
          if (e <= options.tau && e < best_excess) {
            best = c;
            best_excess = e;
          }
        }
        if (best == pooled.size()) {
          pooled.push_back(sig);
          cluster_id.push_back(best == 0 ? block[std::size_t(s)] : fresh++);
        } else {
          for (std::size_t a = 0; a < sig.size(); ++a) {
            for (const auto& [k, v] : sig[a]) pooled[best][a][k] += v;
          }
        }
        next[std::size_t(s)] = cluster_id[best];
      }
      if (pooled.size() > 1) changed = true;
    }
    block = std::move(next);
    blocks = renumber(block);
  }
  out.mapping = block;
  out.csm = csm.relabeled(block, blocks);
  return out;
}

double next_step_mi(std::span<const LabeledTransition> transitions) {
  if (transitions.empty()) return 0.0;
  std::map<std::pair<int, int>, std::map<int, long long>> joint;
  std::map<int, long long> marginal;
  for (const auto& tr : transitions) {
    ++joint[{tr.state, tr.action}][tr.symbol];
    ++marginal[tr.symbol];
  }
  const double n = double(transitions.size());
  double mi = 0.0;
  for (const auto& [ctx, row] : joint) {
    long long nc = 0;
    for (const auto& [o, c] : row) nc += c;
    for (const auto& [o, c] : row) {
      mi += double(c) / n * std::log2(double(c) * n / (double(nc) * double(marginal[o])));
    }
  }
  return std::max(0.0, mi);
}

// ---- export --------------------------------------------------------------------------------

json csm_to_json(const EmpiricalCsm& csm) {
  json states = json::array();
  for (int s = 0; s < csm.num_states(); ++s) states.push_back({{"id", s}, {"visits", csm.visits(s)}});
  json transitions = json::array();
  for (int s = 0; s < csm.num_states(); ++s) {
    for (int a = 0; a < csm.num_actions(); ++a) {
      for (const auto& e : csm.entries(s, a)) {
        transitions.push_back({{"state", s},
                               {"action", a},
                               {"symbol", e.symbol},
                               {"next_state", e.next_state},
                               {"count", e.count},
                               {"probability", csm.probability(s, a, e.symbol, e.next_state)},
                               {"mean_reward", e.reward_sum / double(e.count)},
                               {"terminal_count", e.terminal_count}});
      }
    }
  }
  return {{"units", "probabilities; counts are transitions"},
          {"num_states", csm.num_states()},
          {"num_actions", csm.num_actions()},
          {"num_symbols", csm.num_symbols()},
          {"states", states},
          {"transitions", transitions}};
}

EmpiricalCsm csm_from_json(const json& j) {
  try {
    EmpiricalCsm csm(j.at("num_states").get<int>(), j.at("num_actions").get<int>(), j.at("num_symbols").get<int>());
    for (const auto& t : j.at("transitions")) {
      const long long count = t.at("count").get<long long>();
      const long long terminal = t.value("terminal_count", 0LL);
      const double mean_reward = t.value("mean_reward", 0.0);
      for (long long i = 0; i < count; ++i) {
        csm.add({t.at("state").get<int>(), t.at("action").get<int>(), t.at("symbol").get<int>(),
                 t.at("next_state").get<int>(), mean_reward, i < terminal});
      }
    }
    return csm;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("csm json: ") + e.what());
  }
}

json unifilarity_to_json(const UnifilarityReport& r) {
  auto triple = [](const SuccessorDistribution& d) {
    json succ = json::object();
    for (const auto& [s, n] : d.successors) succ[std::to_string(s)] = n;
    return json{{"state", d.state}, {"action", d.action}, {"symbol", d.symbol},
                {"count", d.count}, {"entropy_bits", d.entropy_bits}, {"successors", succ}};
  };
  json triples = json::array();
  for (const auto& d : r.triples) triples.push_back(triple(d));
  return {{"units", "bits"},
          {"entropy_bits", r.entropy_bits},
          {"counted_transitions", r.counted_transitions},
          {"excluded_states", r.excluded_states},
          {"worst", r.worst ? triple(*r.worst) : json(nullptr)},
          {"triples", triples}};
}

json purity_to_json(const PurityReport& r) {
  return {{"purity", r.purity},
          {"total", r.total},
          {"learned_states", r.learned_labels.size()},
          {"oracle_states", r.oracle_labels.size()},
          {"learned_labels", r.learned_labels},
          {"oracle_labels", r.oracle_labels},
          {"table", r.table}};
}

std::string csm_to_dot(const EmpiricalCsm& csm) {
  std::ostringstream os;
  os << "digraph csm {\n  rankdir=LR;\n";
  for (int s = 0; s < csm.num_states(); ++s) {
    if (csm.visits(s) == 0) continue;
    os << "  s" << s << " [label=\"" << s << "\"];\n";
  }
  os << std::fixed << std::setprecision(3);
  for (int s = 0; s < csm.num_states(); ++s) {
    for (int a = 0; a < csm.num_actions(); ++a) {
      for (const auto& e : csm.entries(s, a)) {
        os << "  s" << s << " -> s" << e.next_state << " [label=\"" << a << '/' << e.symbol << " : "
           << csm.probability(s, a, e.symbol, e.next_state) << "\"];\n";
      }
    }
  }
  os << "}\n";
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_file(const std::filesystem::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace cslab::analysis
