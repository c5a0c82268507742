#pragma once

// Stage I: metadata pre-selection. Every record is checked against each
// predicate independently; the kept set is the intersection.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "triselect/metadata.hpp"

namespace triselect {

enum class Filter : std::uint8_t { Format, Time, Gps, Altitude, Resolution, TaskMismatch };

inline constexpr std::array<Filter, 6> kAllFilters = {Filter::Format,   Filter::Time,       Filter::Gps,
                                                      Filter::Altitude, Filter::Resolution, Filter::TaskMismatch};

inline constexpr std::string_view filter_name(Filter f) {
  switch (f) {
    case Filter::Format: return "format";
    case Filter::Time: return "time";
    case Filter::Gps: return "gps";
    case Filter::Altitude: return "altitude";
    case Filter::Resolution: return "resolution";
    case Filter::TaskMismatch: return "task_mismatch";
  }
  return "?";
}

/// Bit set over Filter values.
class FilterSet {
 public:
  void insert(Filter f) noexcept { bits_ |= bit(f); }
  bool contains(Filter f) const noexcept { return (bits_ & bit(f)) != 0; }
  bool empty() const noexcept { return bits_ == 0; }

  std::vector<Filter> members() const {
    std::vector<Filter> out;
    for (Filter f : kAllFilters) {
      if (contains(f)) out.push_back(f);
    }
    return out;
  }

  friend bool operator==(const FilterSet&, const FilterSet&) = default;

 private:
  static constexpr std::uint8_t bit(Filter f) noexcept { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(f)); }
  std::uint8_t bits_ = 0;
};

struct RejectedRecord {
  std::uint64_t pid = 0;
  FilterSet failed;
};

struct FilterReport {
  std::size_t original_count = 0;
  std::size_t kept_count = 0;
  /// Indexed by Filter; counts records whose predicate held.
  std::array<std::size_t, kAllFilters.size()> per_filter_pass_counts{};
  std::vector<RejectedRecord> rejected;
  double reduction_rate = 0.0;

  std::size_t pass_count(Filter f) const { return per_filter_pass_counts[static_cast<std::size_t>(f)]; }
};

inline bool filter_format(const ImageRecord& r, const TaskSpec& task) {
  return task.formats.contains(detail::lower(r.format));
}

struct SpatiotemporalCheck {
  bool time_ok = false;
  bool gps_ok = false;
};

inline SpatiotemporalCheck filter_spatiotemporal(const ImageRecord& r, const TaskSpec& task) {
  const double d = geo_distance(r.locat, task.whr);
  return {task.whn.contains(r.time), task.d_min <= d && d <= task.d_max};
}

inline bool filter_altitude(const ImageRecord& r, const TaskSpec& task) {
  return !task.alt_range || task.alt_range->contains(r.heig);
}

inline bool filter_resolution(const ImageRecord& r, const TaskSpec& task) {
  return r.resol.p_class() >= task.resol_min;
}

/// Failed predicates for one record (empty when it passes everything).
inline FilterSet evaluate_filters(const ImageRecord& r, const TaskSpec& task) {
  FilterSet failed;
  if (!filter_format(r, task)) failed.insert(Filter::Format);
  const auto st = filter_spatiotemporal(r, task);
  if (!st.time_ok) failed.insert(Filter::Time);
  if (!st.gps_ok) failed.insert(Filter::Gps);
  if (!filter_altitude(r, task)) failed.insert(Filter::Altitude);
  if (!filter_resolution(r, task)) failed.insert(Filter::Resolution);
  if (r.tid != task.tid) failed.insert(Filter::TaskMismatch);
  return failed;
}

struct PreselectResult {
  std::vector<ImageRecord> kept;
  FilterReport report;
};

/// Keeps the records passing every predicate, in input order.
inline PreselectResult preselect(const std::vector<ImageRecord>& records, const TaskSpec& task) {
  PreselectResult out;
  auto& rep = out.report;
  rep.original_count = records.size();
  for (const auto& r : records) {
    const FilterSet failed = evaluate_filters(r, task);
    for (Filter f : kAllFilters) {
      if (!failed.contains(f)) ++rep.per_filter_pass_counts[static_cast<std::size_t>(f)];
    }
    if (failed.empty()) {
      out.kept.push_back(r);
    } else {
      rep.rejected.push_back({r.pid, failed});
    }
  }
  rep.kept_count = out.kept.size();
  rep.reduction_rate =
      rep.original_count == 0 ? 0.0 : 1.0 - static_cast<double>(rep.kept_count) / static_cast<double>(rep.original_count);
  return out;
}

}  // namespace triselect
