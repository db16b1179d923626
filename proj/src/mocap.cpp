#include "keyprop/mocap.hpp"

#include "keyprop/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace keyprop {

namespace {

constexpr std::array<std::pair<int, int>, 6> kPairs{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

std::vector<std::array<int, 4>> all_permutations() {
  std::vector<std::array<int, 4>> perms;
  std::array<int, 4> p{0, 1, 2, 3};
  do {
    perms.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return perms;
}

const std::vector<std::array<int, 4>>& permutations() {
  static const auto perms = all_permutations();
  return perms;
}

std::array<double, 6> sorted_distances(const std::array<Point3, 4>& pts) {
  std::array<double, 6> d{};
  for (std::size_t k = 0; k < kPairs.size(); ++k) d[k] = (pts[kPairs[k].first] - pts[kPairs[k].second]).norm();
  std::sort(d.begin(), d.end());
  return d;
}

double pattern_distance(const std::array<double, 6>& a, const std::array<double, 6>& b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sum += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(sum);
}

// Slot order for a 4-marker cluster: the permutation whose rigid fit to the
// template has the smallest residual.
std::array<std::size_t, 4> best_slot_order(const MarkerFrame& frame, const MarkerCluster& cluster,
                                           const RigidBodyDef& def, double* residual_out = nullptr) {
  std::array<std::size_t, 4> best{};
  double best_residual = std::numeric_limits<double>::infinity();
  std::array<Point3, 4> observed;
  for (const auto& perm : permutations()) {
    for (int slot = 0; slot < 4; ++slot) observed[slot] = *frame.markers[cluster.members[perm[slot]]].position;
    const auto fit = rigid_fit(def.marker_template, observed);
    if (fit.rms_residual < best_residual) {
      best_residual = fit.rms_residual;
      for (int slot = 0; slot < 4; ++slot) best[slot] = cluster.members[perm[slot]];
    }
  }
  if (residual_out) *residual_out = best_residual;
  return best;
}

struct Candidate {
  double score;
  std::size_t cluster;
  std::size_t def;
};

// Pattern-based identification of the given 4-marker clusters among the given
// definitions. Ambiguous clusters are reported through `ambiguous` instead of
// throwing when it is non-null.
std::vector<std::pair<std::size_t, std::size_t>> match_patterns(const MarkerFrame& frame,
                                                                const std::vector<MarkerCluster>& clusters,
                                                                const std::vector<std::size_t>& cluster_ids,
                                                                std::span<const RigidBodyDef> defs,
                                                                const std::vector<std::size_t>& def_ids,
                                                                const TrackingOptions& options,
                                                                std::vector<std::size_t>* ambiguous) {
  std::vector<std::array<double, 6>> def_patterns(defs.size());
  for (auto d : def_ids) {
    auto dist = defs[d].pairwise_distances();
    std::sort(dist.begin(), dist.end());
    def_patterns[d] = dist;
  }

  std::vector<Candidate> candidates;
  std::vector<std::size_t> skip;
  for (auto c : cluster_ids) {
    const auto& cluster = clusters[c];
    if (cluster.members.size() != 4) continue;
    std::array<Point3, 4> pts;
    for (int k = 0; k < 4; ++k) pts[k] = *frame.markers[cluster.members[k]].position;
    const auto observed = sorted_distances(pts);

    double best = std::numeric_limits<double>::infinity();
    double second = std::numeric_limits<double>::infinity();
    std::vector<Candidate> local;
    for (auto d : def_ids) {
      const double score = pattern_distance(observed, def_patterns[d]);
      if (score < best) {
        second = best;
        best = score;
      } else if (score < second) {
        second = score;
      }
      if (score <= options.max_pattern_distance_mm) local.push_back({score, c, d});
    }
    if (best > options.max_pattern_distance_mm) continue;
    if (second - best < options.ambiguity_margin_mm) {
      if (!ambiguous) {
        throw Error(ErrorCode::AmbiguousIdentity,
                    fmt::format("frame {}: cluster matches two bodies within {:.3f} mm", frame.frame_index,
                                second - best));
      }
      ambiguous->push_back(c);
      continue;
    }
    candidates.insert(candidates.end(), local.begin(), local.end());
  }

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.score, a.cluster, a.def) < std::tie(b.score, b.cluster, b.def);
  });
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  std::vector<bool> cluster_used(clusters.size(), false);
  std::vector<bool> def_used(defs.size(), false);
  for (const auto& cand : candidates) {
    if (cluster_used[cand.cluster] || def_used[cand.def]) continue;
    cluster_used[cand.cluster] = true;
    def_used[cand.def] = true;
    matches.emplace_back(cand.cluster, cand.def);
  }
  return matches;
}

}  // namespace

std::string_view part_name(BodyPart part) { return part == BodyPart::Head ? "head" : "backpack"; }

BodyPart parse_part(std::string_view name) {
  if (name == "head") return BodyPart::Head;
  if (name == "backpack" || name == "body") return BodyPart::Backpack;
  throw Error(ErrorCode::ParseError, fmt::format("unknown body part '{}'", name));
}

const MarkerObservation* MarkerFrame::find(std::string_view id) const {
  for (const auto& m : markers) {
    if (m.id == id) return &m;
  }
  return nullptr;
}

MarkerObservation* MarkerFrame::find(std::string_view id) {
  for (auto& m : markers) {
    if (m.id == id) return &m;
  }
  return nullptr;
}

std::array<double, 6> RigidBodyDef::pairwise_distances() const {
  std::array<double, 6> d{};
  for (std::size_t k = 0; k < kPairs.size(); ++k) {
    d[k] = (marker_template[kPairs[k].first] - marker_template[kPairs[k].second]).norm();
  }
  return d;
}

void validate_body(const RigidBodyDef& def, double separation_margin_mm) {
  for (const auto& p : def.marker_template) {
    if (!p.allFinite()) throw Error(ErrorCode::InvalidArgument, fmt::format("body {}: non-finite template", def.body_id));
  }
  if (def.part != BodyPart::Backpack) return;
  auto d = def.pairwise_distances();
  std::sort(d.begin(), d.end());
  for (std::size_t k = 1; k < d.size(); ++k) {
    if (d[k] - d[k - 1] < separation_margin_mm) {
      throw Error(ErrorCode::InvalidArgument,
                  fmt::format("body {}: marker distances {:.2f} and {:.2f} mm are not distinguishable", def.body_id,
                              d[k - 1], d[k]));
    }
  }
}

// ---------------------------------------------------------------------------

PoseFit fit_body_pose(const MarkerFrame& frame, const RigidBodyDef& def, std::span<const std::string, 4> assignment,
                      double residual_threshold_mm) {
  std::vector<Point3> source;
  std::vector<Point3> target;
  for (std::size_t slot = 0; slot < 4; ++slot) {
    const auto* marker = frame.find(assignment[slot]);
    if (marker == nullptr || !marker->valid()) continue;
    source.push_back(def.marker_template[slot]);
    target.push_back(*marker->position);
  }
  PoseFit out;
  if (source.size() < 3) {
    out.status = FitStatus::InsufficientMarkers;
    return out;
  }
  try {
    const auto fit = rigid_fit(source, target);
    out.pose = fit.transform;
    out.residual = fit.rms_residual;
    out.status = fit.rms_residual > residual_threshold_mm ? FitStatus::HighResidual : FitStatus::Ok;
  } catch (const Error&) {
    out.status = FitStatus::Degenerate;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string RepairEntry::cycles() const {
  std::string out;
  std::array<bool, 4> seen{};
  for (int start = 0; start < 4; ++start) {
    if (seen[start] || permutation[start] == start) continue;
    out += '(';
    int k = start;
    bool first = true;
    while (!seen[k]) {
      seen[k] = true;
      if (!first) out += ' ';
      out += std::to_string(k + 1);
      first = false;
      k = permutation[k];
    }
    out += ')';
  }
  return out.empty() ? "()" : out;
}

RepairResult repair_labels(std::span<const MarkerFrame> frames, const RigidBodyDef& def, double tolerance_mm) {
  const auto expected = def.pairwise_distances();
  RepairResult result;
  result.frames.assign(frames.begin(), frames.end());

  for (auto& frame : result.frames) {
    std::array<MarkerObservation*, 4> slots{};
    std::array<std::optional<Point3>, 4> observed;
    int valid = 0;
    for (int k = 0; k < 4; ++k) {
      slots[k] = frame.find(def.marker_ids[k]);
      if (slots[k] && slots[k]->valid()) {
        observed[k] = slots[k]->position;
        ++valid;
      }
    }
    if (valid < 2) continue;

    auto deviation = [&](const std::array<int, 4>& perm, double& worst) {
      double total = 0.0;
      worst = 0.0;
      for (std::size_t p = 0; p < kPairs.size(); ++p) {
        const auto& a = observed[perm[kPairs[p].first]];
        const auto& b = observed[perm[kPairs[p].second]];
        if (!a || !b) continue;
        const double dev = std::abs((*a - *b).norm() - expected[p]);
        total += dev;
        worst = std::max(worst, dev);
      }
      return total;
    };

    double worst = 0.0;
    deviation(permutations().front(), worst);
    if (worst <= tolerance_mm) continue;

    const std::array<int, 4>* best = nullptr;
    double best_total = std::numeric_limits<double>::infinity();
    double best_worst = 0.0;
    for (const auto& perm : permutations()) {
      double perm_worst = 0.0;
      const double total = deviation(perm, perm_worst);
      if (total < best_total) {
        best_total = total;
        best_worst = perm_worst;
        best = &perm;
      }
    }

    if (best_worst > tolerance_mm) {
      for (auto* slot : slots) {
        if (slot) slot->position.reset();
      }
      result.unrepairable.push_back(frame.frame_index);
      continue;
    }
    for (int k = 0; k < 4; ++k) {
      if (!slots[k]) {
        if (!observed[(*best)[k]]) continue;
        frame.markers.push_back({def.marker_ids[k], std::nullopt});
        slots[k] = &frame.markers.back();
        // push_back may have moved earlier slots; re-resolve them.
        for (int j = 0; j < 4; ++j) slots[j] = frame.find(def.marker_ids[j]);
      }
      slots[k]->position = observed[(*best)[k]];
    }
    result.log.push_back({frame.frame_index, *best});
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<MarkerCluster> cluster_markers(const MarkerFrame& frame, double radius_mm) {
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < frame.markers.size(); ++i) {
    if (frame.markers[i].valid()) valid.push_back(i);
  }
  const std::size_t n = valid.size();
  std::vector<MarkerCluster> clusters(n);
  for (std::size_t i = 0; i < n; ++i) {
    clusters[i].members = {valid[i]};
    clusters[i].centroid = *frame.markers[valid[i]].position;
  }
  // Complete-linkage distances, updated in place (Lance-Williams with max).
  std::vector<double> link(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = (clusters[i].centroid - clusters[j].centroid).norm();
      link[i * n + j] = link[j * n + i] = d;
    }
  }
  std::vector<bool> alive(n, true);

  auto merged_radius = [&](std::size_t a, std::size_t b, Point3& centroid) {
    centroid.setZero();
    for (auto m : clusters[a].members) centroid += *frame.markers[m].position;
    for (auto m : clusters[b].members) centroid += *frame.markers[m].position;
    centroid /= static_cast<double>(clusters[a].members.size() + clusters[b].members.size());
    double r = 0.0;
    for (auto m : clusters[a].members) r = std::max(r, (*frame.markers[m].position - centroid).norm());
    for (auto m : clusters[b].members) r = std::max(r, (*frame.markers[m].position - centroid).norm());
    return r;
  };

  while (true) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_a = n;
    std::size_t best_b = n;
    Point3 best_centroid;
    for (std::size_t a = 0; a < n; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!alive[b] || link[a * n + b] >= best || link[a * n + b] > 2.0 * radius_mm) continue;
        if (clusters[a].members.size() + clusters[b].members.size() > 4) continue;
        Point3 centroid;
        if (merged_radius(a, b, centroid) > radius_mm) continue;
        best = link[a * n + b];
        best_a = a;
        best_b = b;
        best_centroid = centroid;
      }
    }
    if (best_a == n) break;
    auto& keep = clusters[best_a];
    keep.members.insert(keep.members.end(), clusters[best_b].members.begin(), clusters[best_b].members.end());
    keep.centroid = best_centroid;
    alive[best_b] = false;
    for (std::size_t c = 0; c < n; ++c) {
      if (!alive[c] || c == best_a) continue;
      const double d = std::max(link[best_a * n + c], link[best_b * n + c]);
      link[best_a * n + c] = link[c * n + best_a] = d;
    }
  }

  std::vector<MarkerCluster> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!alive[i]) continue;
    std::sort(clusters[i].members.begin(), clusters[i].members.end());
    out.push_back(std::move(clusters[i]));
  }
  return out;
}

std::vector<ClusterAssignment> identify_individuals(const MarkerFrame& frame, std::span<const RigidBodyDef> defs,
                                                    const TrackingOptions& options) {
  const auto clusters = cluster_markers(frame, options.cluster_radius_mm);
  std::vector<std::size_t> cluster_ids(clusters.size());
  std::iota(cluster_ids.begin(), cluster_ids.end(), 0);
  std::vector<std::size_t> def_ids(defs.size());
  std::iota(def_ids.begin(), def_ids.end(), 0);

  const auto matches = match_patterns(frame, clusters, cluster_ids, defs, def_ids, options, nullptr);
  std::vector<ClusterAssignment> out;
  for (const auto& [c, d] : matches) {
    ClusterAssignment a;
    a.body_id = defs[d].body_id;
    a.centroid = clusters[c].centroid;
    const auto order = best_slot_order(frame, clusters[c], defs[d]);
    for (int slot = 0; slot < 4; ++slot) a.marker_ids[slot] = frame.markers[order[slot]].id;
    std::array<Point3, 4> pts;
    for (int k = 0; k < 4; ++k) pts[k] = *frame.markers[clusters[c].members[k]].position;
    auto expected = defs[d].pairwise_distances();
    std::sort(expected.begin(), expected.end());
    a.pattern_distance = pattern_distance(sorted_distances(pts), expected);
    out.push_back(std::move(a));
  }
  std::sort(out.begin(), out.end(),
            [](const ClusterAssignment& a, const ClusterAssignment& b) { return a.body_id < b.body_id; });
  return out;
}

// ---------------------------------------------------------------------------

const TrackedPose* BodyTrack::at(std::int64_t frame_index) const {
  auto it = std::lower_bound(poses.begin(), poses.end(), frame_index,
                             [](const TrackedPose& p, std::int64_t f) { return p.frame_index < f; });
  if (it == poses.end() || it->frame_index != frame_index) return nullptr;
  return &*it;
}

TrackingResult track_sequence(std::span<const MarkerFrame> frames, std::span<const RigidBodyDef> defs,
                              const TrackingOptions& options) {
  TrackingResult result;
  result.tracks.resize(defs.size());
  for (std::size_t d = 0; d < defs.size(); ++d) {
    result.tracks[d].body_id = defs[d].body_id;
    result.tracks[d].individual_id = defs[d].individual_id;
    result.tracks[d].part = defs[d].part;
    result.tracks[d].poses.reserve(frames.size());
  }
  std::vector<std::optional<RigidTransform>> previous(defs.size());
  std::int64_t previous_frame = std::numeric_limits<std::int64_t>::min();

  for (const auto& frame : frames) {
    const auto clusters = cluster_markers(frame, options.cluster_radius_mm);
    std::vector<std::optional<std::array<std::string, 4>>> assignment(defs.size());
    std::vector<bool> cluster_used(clusters.size(), false);
    const bool consecutive = frame.frame_index == previous_frame + 1;

    // Sticky pass: a body keeps the cluster that sits where its previous pose
    // predicts its markers.
    struct Sticky {
      double cost;
      std::size_t def;
      std::size_t cluster;
      std::array<int, 4> slot_of_member;
    };
    std::vector<Sticky> sticky;
    if (consecutive) {
      for (std::size_t d = 0; d < defs.size(); ++d) {
        if (!previous[d]) continue;
        std::array<Point3, 4> predicted;
        for (int k = 0; k < 4; ++k) predicted[k] = previous[d]->apply(defs[d].marker_template[k]);
        for (std::size_t c = 0; c < clusters.size(); ++c) {
          const auto& members = clusters[c].members;
          if (members.size() < 3) continue;
          double best_cost = std::numeric_limits<double>::infinity();
          std::array<int, 4> best_map{};
          for (const auto& perm : permutations()) {
            double cost = 0.0;
            double worst = 0.0;
            for (std::size_t m = 0; m < members.size(); ++m) {
              const double dist = (*frame.markers[members[m]].position - predicted[perm[m]]).norm();
              cost += dist * dist;
              worst = std::max(worst, dist);
            }
            if (worst < options.stickiness_mm && cost < best_cost) {
              best_cost = cost;
              best_map = perm;
            }
          }
          if (std::isfinite(best_cost)) sticky.push_back({best_cost, d, c, best_map});
        }
      }
    }
    std::sort(sticky.begin(), sticky.end(), [](const Sticky& a, const Sticky& b) {
      return std::tie(a.cost, a.def, a.cluster) < std::tie(b.cost, b.def, b.cluster);
    });
    for (const auto& s : sticky) {
      if (assignment[s.def] || cluster_used[s.cluster]) continue;
      std::array<std::string, 4> ids{};
      const auto& members = clusters[s.cluster].members;
      for (std::size_t m = 0; m < members.size(); ++m) ids[s.slot_of_member[m]] = frame.markers[members[m]].id;
      assignment[s.def] = ids;
      cluster_used[s.cluster] = true;
    }

    // Pattern pass for whatever is left.
    std::vector<std::size_t> free_clusters;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (!cluster_used[c]) free_clusters.push_back(c);
    }
    std::vector<std::size_t> free_defs;
    for (std::size_t d = 0; d < defs.size(); ++d) {
      if (!assignment[d]) free_defs.push_back(d);
    }
    if (!free_clusters.empty() && !free_defs.empty()) {
      std::vector<std::size_t> ambiguous;
      const auto matches = match_patterns(frame, clusters, free_clusters, defs, free_defs, options, &ambiguous);
      if (!ambiguous.empty()) {
        result.warnings.push_back(
            fmt::format("frame {}: {} ambiguous cluster(s) left unassigned", frame.frame_index, ambiguous.size()));
      }
      for (const auto& [c, d] : matches) {
        const auto order = best_slot_order(frame, clusters[c], defs[d]);
        std::array<std::string, 4> ids;
        for (int slot = 0; slot < 4; ++slot) ids[slot] = frame.markers[order[slot]].id;
        assignment[d] = ids;
      }
    }

    for (std::size_t d = 0; d < defs.size(); ++d) {
      TrackedPose tp;
      tp.frame_index = frame.frame_index;
      if (assignment[d]) {
        const auto fit = fit_body_pose(frame, defs[d], *assignment[d], options.residual_threshold_mm);
        tp.pose = fit.pose;
        tp.residual = fit.residual;
        tp.valid = fit.valid();
      }
      previous[d] = tp.valid ? std::optional<RigidTransform>(tp.pose) : std::nullopt;
      result.tracks[d].poses.push_back(tp);
    }
    previous_frame = frame.frame_index;
  }
  return result;
}

}  // namespace keyprop
