#pragma once

#include <cstdint>
#include <tuple>

namespace ipm {

enum class OwnerKind : std::uint8_t { Node = 0, Link = 1 };

enum class EventKind : std::uint8_t {
  External = 0,         // scripted change at a node (demand step, incident, priorities)
  QueueDrain = 1,       // origin point-queue batch exhausted
  BoundaryArrival = 2,  // an IP reaches a link end
  Intersection = 3,     // two adjacent IPs meet
  LinkScript = 4,       // scripted change inside a link (moving bottleneck)
};

/// Total order on events. Simultaneous events are ordered by owner, kind,
/// position and package ids so that every execution mode replays the same
/// sequence.
struct EventKey {
  double time = 0.0;
  OwnerKind owner_kind = OwnerKind::Node;
  int owner = 0;
  EventKind kind = EventKind::External;
  double position = 0.0;
  std::uint64_t a = 0;
  std::uint64_t b = 0;

  friend bool operator<(const EventKey& l, const EventKey& r) {
    return std::tie(l.time, l.owner_kind, l.owner, l.kind, l.position, l.a, l.b) <
           std::tie(r.time, r.owner_kind, r.owner, r.kind, r.position, r.a, r.b);
  }
  friend bool operator==(const EventKey& l, const EventKey& r) {
    return std::tie(l.time, l.owner_kind, l.owner, l.kind, l.position, l.a, l.b) ==
           std::tie(r.time, r.owner_kind, r.owner, r.kind, r.position, r.a, r.b);
  }
};

}  // namespace ipm
