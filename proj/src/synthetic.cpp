#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ctdgm/error.hpp"
#include "ctdgm/trace_io.hpp"

namespace ctdgm {

namespace {

// mt19937_64's output is pinned by the standard; the distributions in
// <random> are not, so the two mappings below are written out by hand.
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

  // Uniform integer in [0, n) by rejection of the biased tail.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = (0 - n) % n;
    while (true) {
      std::uint64_t x = engine_();
      if (x >= limit) return x % n;
    }
  }

  // Uniform double in [0, 1) from the top 53 bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

struct Unit {
  std::vector<std::size_t> members;  // datum ids
  double intra = 0.0;
};

}  // namespace

void validate(const SyntheticSpec& spec) {
  if (spec.num_data == 0) throw ConfigError("synthetic: num_data must be positive");
  if (spec.size_align == 0) throw ConfigError("synthetic: size_align must be positive");
  if (spec.size_min == 0 || spec.size_max < spec.size_min)
    throw ConfigError("synthetic: need 0 < size_min <= size_max");
  if ((spec.size_max / spec.size_align) * spec.size_align < spec.size_min)
    throw ConfigError("synthetic: no aligned size between size_min and size_max");
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(spec.locality) || !in_unit(spec.write_fraction))
    throw ConfigError("synthetic: locality and write_fraction must be in [0,1]");
  if (spec.zipf < 0.0) throw ConfigError("synthetic: zipf must be non-negative");
  std::size_t planted = 0;
  for (const auto& g : spec.groups) {
    if (g.count == 0 || g.size == 0) throw ConfigError("synthetic: group count and size must be positive");
    if (!in_unit(g.intra_probability)) throw ConfigError("synthetic: group probability must be in [0,1]");
    planted += g.count * g.size;
  }
  if (planted > spec.num_data)
    throw ConfigError("synthetic: planted groups need " + std::to_string(planted) + " data but num_data is " +
                      std::to_string(spec.num_data));
}

SyntheticSpec parse_synthetic_spec(const KeyValues& kv) {
  SyntheticSpec s;
  s.num_data = kv.get_u64("num_data", s.num_data);
  s.num_accesses = kv.get_u64("num_accesses", s.num_accesses);
  s.size_min = kv.get_bytes("size_min", s.size_min);
  s.size_max = kv.get_bytes("size_max", std::max(s.size_max, s.size_min));
  s.size_align = kv.get_bytes("size_align", s.size_align);
  s.zipf = kv.get_double("zipf", s.zipf);
  s.locality = kv.get_double("locality", s.locality);
  s.write_fraction = kv.get_double("write_fraction", s.write_fraction);
  s.rng_seed = kv.get_u64("seed", kv.get_u64("rng_seed", s.rng_seed));
  auto order = kv.get_string("run_order", "fixed");
  if (order == "fixed") {
    s.run_order = RunOrder::Fixed;
  } else if (order == "shuffled") {
    s.run_order = RunOrder::Shuffled;
  } else {
    throw ConfigError("synthetic: run_order must be fixed|shuffled");
  }
  if (auto groups = kv.get("groups")) {
    for (const auto& item : split_list(*groups)) {
      auto colon = item.find(':');
      if (colon == std::string::npos) throw ConfigError("synthetic: group entry '" + item + "' needs SIZE:PROB");
      std::string shape = item.substr(0, colon);
      PlantedGroupSpec g;
      if (auto x = shape.find('x'); x != std::string::npos) {
        g.count = parse_u64(shape.substr(0, x), "group count");
        g.size = parse_u64(shape.substr(x + 1), "group size");
      } else {
        g.size = parse_u64(shape, "group size");
      }
      g.intra_probability = parse_double(item.substr(colon + 1), "group probability");
      s.groups.push_back(g);
    }
  }
  validate(s);
  return s;
}

SyntheticTrace synthesize_trace(const SyntheticSpec& spec) {
  validate(spec);
  if (spec.num_accesses == 0) throw EmptyTraceError("synthetic spec requests zero accesses");
  PortableRng rng(spec.rng_seed);

  const std::uint64_t lo_units = (spec.size_min + spec.size_align - 1) / spec.size_align;
  const std::uint64_t hi_units = spec.size_max / spec.size_align;
  std::vector<std::uint64_t> sizes(spec.num_data);
  for (auto& s : sizes) s = spec.size_align * (lo_units + rng.below(hi_units - lo_units + 1));

  // Access units: planted groups first (consuming datum ids in order), then
  // one singleton unit per remaining datum.
  std::vector<Unit> units;
  std::size_t next_id = 0;
  for (const auto& g : spec.groups) {
    for (std::size_t c = 0; c < g.count; ++c) {
      Unit u;
      u.intra = g.intra_probability;
      for (std::size_t k = 0; k < g.size; ++k) u.members.push_back(next_id++);
      units.push_back(std::move(u));
    }
  }
  const std::size_t planted_units = units.size();
  for (; next_id < spec.num_data; ++next_id) units.push_back(Unit{{next_id}, 0.0});

  // Address layout: a group kept local occupies adjacent slots; other groups
  // have their members placed independently.
  std::vector<std::vector<std::size_t>> placements;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const bool local = u >= planted_units || rng.unit() < spec.locality;
    if (local) {
      placements.push_back(units[u].members);
    } else {
      for (auto id : units[u].members) placements.push_back({id});
    }
  }
  rng.shuffle(placements);
  const std::uint64_t stride = hi_units * spec.size_align;
  std::vector<BlockAddress> address(spec.num_data);
  std::uint64_t slot = 0;
  for (const auto& p : placements)
    for (auto id : p) address[id] = (slot++) * stride;

  // Popularity: a random rank per unit, weight 1/(rank+1)^zipf.
  std::vector<std::size_t> rank(units.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  rng.shuffle(rank);
  std::vector<double> cdf(units.size());
  double total = 0.0;
  for (std::size_t u = 0; u < units.size(); ++u) {
    total += std::pow(static_cast<double>(rank[u] + 1), -spec.zipf);
    cdf[u] = total;
  }

  SyntheticTrace out;
  out.trace.source_label = "synthetic-" + std::to_string(spec.rng_seed);
  auto& recs = out.trace.records;
  recs.reserve(spec.num_accesses);
  std::vector<std::size_t> run;
  auto emit = [&](std::size_t id) {
    AccessRecord r;
    r.timestamp = 10000 * recs.size();
    r.block_address = address[id];
    r.size = sizes[id];
    r.op = rng.unit() < spec.write_fraction ? Op::Write : Op::Read;
    recs.push_back(r);
  };
  while (recs.size() < spec.num_accesses) {
    const double pick = rng.unit() * total;
    auto u = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin());
    if (u >= units.size()) u = units.size() - 1;
    const auto& unit = units[u];
    if (unit.members.size() == 1) {
      emit(unit.members[0]);
      continue;
    }
    if (rng.unit() < unit.intra) {
      run = unit.members;
      if (spec.run_order == RunOrder::Shuffled) rng.shuffle(run);
      for (auto id : run) {
        if (recs.size() == spec.num_accesses) break;
        emit(id);
      }
    } else {
      emit(unit.members[rng.below(unit.members.size())]);
    }
  }

  for (std::size_t u = 0; u < planted_units; ++u) {
    std::vector<BlockAddress> g;
    for (auto id : units[u].members) g.push_back(address[id]);
    std::sort(g.begin(), g.end());
    out.planted.push_back(std::move(g));
  }
  return out;
}

}  // namespace ctdgm
