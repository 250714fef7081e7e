"""Independent replay of the tracking rules over a plain event schedule.

Recomputes, with precomputed bucket membership instead of the streaming
bookkeeping of the production classes, which windows trigger, how the
phone's classification evolves, and which RTS ticks are suppressed.
Serves as the equivalence oracle for the protocol state machine.
"""

import math


def replay_mac(frames, t0, delta_t, drain_t, classify_factor=2):
    """Replay one MAC's frames (time-ordered (t, kind, rssi_by_ap), all
    with t >= t0).

    Returns (transitions, triggers):
      transitions: [(t, classification), ...] starting (t0, "unknown")
      triggers: [(t_end, frame_count, data_count, rssi_mean, cls), ...]
    """
    window = classify_factor * delta_t
    buckets = {}
    for t, kind, rssi in frames:
        k = int(math.floor((t - t0) / delta_t))
        buckets.setdefault(k, []).append((t, kind, rssi))

    data_seen = []
    transitions = [(t0, "unknown")]
    cls = "unknown"
    triggers = []

    def classify(end):
        for d in data_seen:
            if end - window < d <= end:
                return "active"
        return "inactive"

    def flush_through(limit, next_k):
        # every bucket whose end falls at or before the limit reports,
        # stamped with its own end time, provided it saw any frame
        nonlocal cls
        while t0 + (next_k + 1) * delta_t <= limit:
            end = t0 + (next_k + 1) * delta_t
            members = buckets.get(next_k, ())
            if members:
                new = classify(end)
                if new != cls:
                    cls = new
                    transitions.append((end, new))
                sums, counts = {}, {}
                n_data = 0
                for t, kind, rssi in members:
                    if kind == "data":
                        n_data += 1
                    for ap, v in rssi.items():
                        sums[ap] = sums.get(ap, 0.0) + v
                        counts[ap] = counts.get(ap, 0) + 1
                means = {ap: sums[ap] / counts[ap] for ap in sorted(sums)}
                triggers.append((end, len(members), n_data, means, cls))
            next_k += 1
        return next_k

    next_k = 0
    for t, kind, rssi in frames:
        next_k = flush_through(t, next_k)
        if kind == "data":
            data_seen.append(t)
            if cls != "active":
                cls = "active"
                transitions.append((t, "active"))
    flush_through(drain_t, next_k)
    return transitions, triggers


def classification_from(transitions, t):
    out = transitions[0][1]
    for when, c in transitions:
        if when <= t:
            out = c
        else:
            break
    return out


def rts_commands(transitions, interval, burst, t_start, t_end, capable_aps,
                 enabled=True):
    """Poll ticks over (t_start, t_end], suppressed while classified
    active; each capable AP sends `burst` commands per surviving tick."""
    if not enabled:
        return []
    out = []
    k = 1
    while True:
        t = t_start + k * interval
        if t > t_end:
            break
        if classification_from(transitions, t) != "active":
            for ap in capable_aps:
                out.extend([(t, ap)] * burst)
        k += 1
    return out


def expected_tracks(schedule, registrations):
    """Which MACs end up tracked, and each track's start time.

    A MAC is tracked from its registration, or from its first probe
    request; frames before that are dropped on the floor.
    """
    t0 = dict(registrations)
    for t, kind, mac, _ in schedule:
        if mac not in t0 and kind == "probe_request":
            t0[mac] = t
    return t0


def frames_for(schedule, mac, t0):
    return [(t, kind, rssi) for t, kind, m, rssi in schedule
            if m == mac and t >= t0]
