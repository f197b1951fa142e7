#include "ctdgm/grouper.hpp"

#include <algorithm>
#include <exception>
#include <numeric>

#include "ctdgm/error.hpp"

namespace ctdgm {

void validate(const GrouperConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha must be in [0,1], got " + std::to_string(cfg.alpha));
  if (!(cfg.mu >= 0.0 && cfg.mu <= 1.0)) throw ConfigError("mu must be in [0,1], got " + std::to_string(cfg.mu));
}

RelationCounts::RelationCounts(std::vector<std::size_t> offsets, std::vector<std::uint32_t> partners,
                               std::vector<std::uint32_t> counts, std::vector<std::size_t> chunk_frequency)
    : offsets_(std::move(offsets)),
      partners_(std::move(partners)),
      counts_(std::move(counts)),
      chunk_frequency_(std::move(chunk_frequency)) {}

std::uint32_t RelationCounts::get(std::uint32_t a, std::uint32_t b) const {
  if (a == b) return 0;
  if (b < a) std::swap(a, b);
  if (a + 1 >= offsets_.size()) return 0;
  auto first = partners_.begin() + static_cast<std::ptrdiff_t>(offsets_[a]);
  auto last = partners_.begin() + static_cast<std::ptrdiff_t>(offsets_[a + 1]);
  auto it = std::lower_bound(first, last, b);
  if (it == last || *it != b) return 0;
  return counts_[static_cast<std::size_t>(it - partners_.begin())];
}

namespace {

std::uint32_t resolve(const std::unordered_map<BlockAddress, std::uint32_t>& chunk_of, BlockAddress a,
                      std::size_t num_chunks) {
  auto it = chunk_of.find(a);
  if (it == chunk_of.end())
    throw DataError("block address " + std::to_string(a) + " has no chunk (chunk/transaction config mismatch?)");
  if (it->second >= num_chunks) throw DataError("chunk id out of range for " + std::to_string(a));
  return it->second;
}

// Per-transaction chunk projections in CSR form.
struct Projection {
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> chunks;
};

Projection project(std::span<const CacheTransaction> transactions,
                   const std::unordered_map<BlockAddress, std::uint32_t>& chunk_of, std::size_t num_chunks) {
  Projection p;
  p.offsets.reserve(transactions.size() + 1);
  std::vector<std::uint32_t> buf;
  for (const auto& t : transactions) {
    buf.clear();
    for (auto a : t.members) buf.push_back(resolve(chunk_of, a, num_chunks));
    std::sort(buf.begin(), buf.end());
    buf.erase(std::unique(buf.begin(), buf.end()), buf.end());
    p.chunks.insert(p.chunks.end(), buf.begin(), buf.end());
    p.offsets.push_back(p.chunks.size());
  }
  return p;
}

}  // namespace

RelationCounts count_cooccurrence_serial(std::span<const CacheTransaction> transactions,
                                         const std::unordered_map<BlockAddress, std::uint32_t>& chunk_of,
                                         std::size_t num_chunks) {
  std::unordered_map<std::uint64_t, std::uint32_t> pairs;
  std::vector<std::size_t> freq(num_chunks, 0);
  std::vector<std::uint32_t> s;
  for (const auto& t : transactions) {
    s.clear();
    for (auto a : t.members) s.push_back(resolve(chunk_of, a, num_chunks));
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    for (std::size_t i = 0; i < s.size(); ++i) {
      ++freq[s[i]];
      for (std::size_t j = i + 1; j < s.size(); ++j) ++pairs[static_cast<std::uint64_t>(s[i]) << 32 | s[j]];
    }
  }
  std::vector<std::pair<std::uint64_t, std::uint32_t>> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> offsets(num_chunks + 1, 0);
  std::vector<std::uint32_t> partners;
  std::vector<std::uint32_t> counts;
  partners.reserve(sorted.size());
  counts.reserve(sorted.size());
  for (const auto& [key, c] : sorted) {
    ++offsets[(key >> 32) + 1];
    partners.push_back(static_cast<std::uint32_t>(key & 0xffffffffu));
    counts.push_back(c);
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  return RelationCounts(std::move(offsets), std::move(partners), std::move(counts), std::move(freq));
}

RelationCounts count_cooccurrence(std::span<const CacheTransaction> transactions,
                                  const std::unordered_map<BlockAddress, std::uint32_t>& chunk_of,
                                  std::size_t num_chunks) {
  const Projection proj = project(transactions, chunk_of, num_chunks);

  // Chunk -> transactions containing it.
  std::vector<std::size_t> inv_off(num_chunks + 1, 0);
  for (auto c : proj.chunks) ++inv_off[c + 1];
  std::partial_sum(inv_off.begin(), inv_off.end(), inv_off.begin());
  std::vector<std::uint32_t> inv(proj.chunks.size());
  {
    std::vector<std::size_t> cursor(inv_off.begin(), inv_off.end() - 1);
    for (std::size_t j = 0; j + 1 < proj.offsets.size(); ++j)
      for (std::size_t k = proj.offsets[j]; k < proj.offsets[j + 1]; ++k)
        inv[cursor[proj.chunks[k]]++] = static_cast<std::uint32_t>(j);
  }
  std::vector<std::size_t> freq(num_chunks);
  for (std::size_t c = 0; c < num_chunks; ++c) freq[c] = inv_off[c + 1] - inv_off[c];

  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> rows(num_chunks);
  const auto n = static_cast<std::int64_t>(num_chunks);
#pragma omp parallel
  {
    std::vector<std::uint32_t> scratch(num_chunks, 0);
    std::vector<std::uint32_t> touched;
#pragma omp for schedule(dynamic, 64)
    for (std::int64_t xi = 0; xi < n; ++xi) {
      const auto x = static_cast<std::uint32_t>(xi);
      touched.clear();
      for (std::size_t t = inv_off[x]; t < inv_off[x + 1]; ++t) {
        const auto j = inv[t];
        // Projection rows ascend, so partners above x form a suffix.
        auto first = proj.chunks.begin() + static_cast<std::ptrdiff_t>(proj.offsets[j]);
        auto last = proj.chunks.begin() + static_cast<std::ptrdiff_t>(proj.offsets[j + 1]);
        for (auto it = std::upper_bound(first, last, x); it != last; ++it) {
          if (scratch[*it]++ == 0) touched.push_back(*it);
        }
      }
      std::sort(touched.begin(), touched.end());
      auto& row = rows[x];
      row.reserve(touched.size());
      for (auto y : touched) {
        row.emplace_back(y, scratch[y]);
        scratch[y] = 0;
      }
    }
  }

  std::vector<std::size_t> offsets(num_chunks + 1, 0);
  for (std::size_t x = 0; x < num_chunks; ++x) offsets[x + 1] = offsets[x] + rows[x].size();
  std::vector<std::uint32_t> partners(offsets.back());
  std::vector<std::uint32_t> counts(offsets.back());
  for (std::size_t x = 0; x < num_chunks; ++x) {
    for (std::size_t k = 0; k < rows[x].size(); ++k) {
      partners[offsets[x] + k] = rows[x][k].first;
      counts[offsets[x] + k] = rows[x][k].second;
    }
    std::vector<std::pair<std::uint32_t, std::uint32_t>>().swap(rows[x]);
  }
  return RelationCounts(std::move(offsets), std::move(partners), std::move(counts), std::move(freq));
}

RelationOrder parse_relation_order(std::string_view text) {
  if (text == "descending") return RelationOrder::Descending;
  if (text == "ascending") return RelationOrder::Ascending;
  throw ConfigError("sort must be descending|ascending, got '" + std::string(text) + "'");
}

std::string_view to_string(RelationOrder o) { return o == RelationOrder::Ascending ? "ascending" : "descending"; }

std::vector<Relation> legal_relations(const RelationCounts& counts, double alpha, RelationOrder order) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
  const auto freq = counts.chunk_frequency();
  std::vector<Relation> out;
  counts.for_each([&](std::uint32_t x, std::uint32_t y, std::uint32_t r) {
    const double bound = static_cast<double>(std::max(freq[x], freq[y])) * alpha;
    if (static_cast<double>(r) >= bound) out.push_back({x, y, r});
  });
  std::sort(out.begin(), out.end(), [order](const Relation& a, const Relation& b) {
    if (a.count != b.count) return order == RelationOrder::Descending ? a.count > b.count : a.count < b.count;
    if (a.x != b.x) return a.x < b.x;
    return a.y < b.y;
  });
  return out;
}

GroupState::GroupState(std::size_t num_chunks, double mu)
    : mu_(mu), parent_(num_chunks), size_(num_chunks, 1), edges_(num_chunks) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError("mu must be in [0,1]");
  std::iota(parent_.begin(), parent_.end(), 0u);
}

std::uint32_t GroupState::find(std::uint32_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

std::uint32_t GroupState::group_of(std::uint32_t chunk) { return find(chunk); }
std::size_t GroupState::group_size(std::uint32_t chunk) { return size_[find(chunk)]; }

std::uint64_t GroupState::counter(std::uint32_t chunk_a, std::uint32_t chunk_b) {
  const auto a = find(chunk_a);
  const auto b = find(chunk_b);
  if (a == b) return 0;
  auto it = edges_[a].find(b);
  return it == edges_[a].end() ? 0 : it->second;
}

bool GroupState::process(const Relation& r) {
  if (r.x >= parent_.size() || r.y >= parent_.size()) throw DataError("relation names an unknown chunk");
  auto gx = find(r.x);
  auto gy = find(r.y);
  if (gx == gy) {
    ++skipped_;
    return false;
  }
  ++processed_;
  processed_relations_.push_back(r);
  const auto c = ++edges_[gx][gy];
  ++edges_[gy][gx];
  ++live_total_;
  const double bound = static_cast<double>(size_[gx]) * static_cast<double>(size_[gy]) * mu_;
  if (static_cast<double>(c) < bound) return false;

  merges_.push_back({r.x, r.y, c, size_[gx], size_[gy]});
  // Fold the smaller edge map into the larger; counters toward any third
  // group are summed.
  if (edges_[gx].size() < edges_[gy].size()) std::swap(gx, gy);
  edges_[gx].erase(gy);
  edges_[gy].erase(gx);
  internalized_ += c;
  live_total_ -= c;
  for (const auto& [other, cnt] : edges_[gy]) {
    edges_[gx][other] += cnt;
    auto& back = edges_[other];
    back.erase(gy);
    back[gx] += cnt;
  }
  std::unordered_map<std::uint32_t, std::uint64_t>().swap(edges_[gy]);
  parent_[gy] = gx;
  size_[gx] += size_[gy];
  return true;
}

Grouping merge_groups(std::span<const Relation> relations, std::span<const Chunk> chunks, double mu) {
  GroupState state(chunks.size(), mu);
  for (const auto& r : relations) state.process(r);

  std::map<BlockAddress, std::uint32_t> first_member_of_root;
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> by_root;
  for (std::uint32_t c = 0; c < chunks.size(); ++c) {
    if (chunks[c].id != c) throw InvariantError("chunk ids must equal positions");
    if (chunks[c].members.empty()) throw InvariantError("empty chunk " + std::to_string(c));
    by_root[state.group_of(c)].push_back(c);
  }
  for (const auto& [root, cs] : by_root) {
    BlockAddress lo = chunks[cs.front()].members.front();
    for (auto c : cs) lo = std::min(lo, chunks[c].members.front());
    first_member_of_root.emplace(lo, root);
  }

  Grouping g;
  g.group_of_chunk.assign(chunks.size(), 0);
  std::unordered_map<std::uint32_t, std::uint32_t> id_of_root;
  for (const auto& [lo, root] : first_member_of_root) {
    Group grp;
    grp.id = static_cast<std::uint32_t>(g.groups.size());
    grp.chunks = by_root[root];
    std::sort(grp.chunks.begin(), grp.chunks.end());
    for (auto c : grp.chunks) {
      grp.members.insert(grp.members.end(), chunks[c].members.begin(), chunks[c].members.end());
      g.group_of_chunk[c] = grp.id;
    }
    std::sort(grp.members.begin(), grp.members.end());
    id_of_root[root] = grp.id;
    g.groups.push_back(std::move(grp));
  }
  for (const auto& r : state.processed_relations()) {
    const auto a = g.group_of_chunk[r.x];
    if (a == g.group_of_chunk[r.y]) ++g.groups[a].internal_edges;
  }
  g.merges = state.merges();
  g.processed = state.processed();
  g.internalized = state.internalized();
  g.live_counter_total = state.live_counter_total();
  return g;
}

std::vector<std::uint32_t> replay_group_merges(std::size_t num_chunks, std::span<const GroupMerge> merges, double mu) {
  std::vector<std::uint32_t> parent(num_chunks);
  std::vector<std::size_t> size(num_chunks, 1);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& m : merges) {
    if (m.chunk_x >= num_chunks || m.chunk_y >= num_chunks) throw InvariantError("replay: unknown chunk in merge");
    const auto a = find(m.chunk_x);
    const auto b = find(m.chunk_y);
    if (a == b) throw InvariantError("replay: merge joins chunks already in one group");
    if (size[a] != m.size_x || size[b] != m.size_y) throw InvariantError("replay: recorded group sizes disagree");
    if (static_cast<double>(m.counter) < static_cast<double>(size[a]) * static_cast<double>(size[b]) * mu)
      throw InvariantError("replay: merge counter below |Gx||Gy|mu");
    const auto lo = std::min(a, b);
    const auto hi = std::max(a, b);
    parent[hi] = lo;
    size[lo] += size[hi];
  }
  std::vector<std::uint32_t> label(num_chunks);
  for (std::uint32_t c = 0; c < num_chunks; ++c) label[c] = find(c);
  return label;
}

GroupingReport grouping_report(const Grouping& grouping) {
  GroupingReport rep;
  rep.group_count = grouping.groups.size();
  for (const auto& g : grouping.groups) {
    rep.chunk_count += g.chunks.size();
    rep.data_count += g.members.size();
    ++rep.size_histogram[g.members.size()];
    ++rep.chunk_size_histogram[g.chunks.size()];
    const auto n = g.chunks.size();
    if (n < 2) {
      rep.density.push_back(std::nullopt);
    } else {
      rep.density.push_back(static_cast<double>(g.internal_edges) / (static_cast<double>(n * (n - 1)) / 2.0));
    }
  }
  return rep;
}

}  // namespace ctdgm
