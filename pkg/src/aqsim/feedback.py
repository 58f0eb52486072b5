"""Analytical view of a run: stall, notification and reactive functions.

Per queue q the derived time series are:

  stall indicator      w(t)  in {0,1}: a packet in q stalled in round t
  notification map     D(t): the round the feedback about the stall at t
                       arrives, always within [t, t + delay]
  notification counts  n(t): how many notifications arrive in round t
  reactive indicator   s(t) in {0,1}: rounds the adversary is constrained

The reactive indicator spreads each notification onto its own round: a
moving pointer starts at 1; when c notifications arrive at round t the
pointer jumps to max(t, pointer), the next c rounds are marked, and the
pointer advances past the whole marked block. Advancing by one less (so
blocks may overlap their predecessor's last mark) would lose marks and
break the count-preservation the bound checks rely on, so the pointer
always clears the block.

The admissibility condition bounds, for every queue and every contiguous
round interval T, the packets injected across the queue by
rate * (|T| - marked rounds in T) + burstiness. All checks run in exact
integer arithmetic scaled by the rate denominator.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import ModelViolation

FAST = "fast"
QUADRATIC = "quadratic"


@dataclass
class StallTrace:
    rounds: dict[str, list[int]]  # queue -> sorted stalled rounds

    def indicator(self, queue: str, horizon: int) -> list[int]:
        w = [0] * (horizon + 1)  # 1-based; w[0] unused
        for t in self.rounds.get(queue, ()):
            if t <= horizon:
                w[t] = 1
        return w


@dataclass
class NotificationSchedule:
    arrival: dict[str, dict[int, int]]  # queue -> stall round -> feedback round


@dataclass
class DelayedCountTrace:
    counts: dict[str, dict[int, int]]  # queue -> round -> notifications arriving


@dataclass
class ReactiveTrace:
    marks: dict[str, tuple[int, ...]]  # queue -> sorted marked rounds (may pass horizon)
    horizon: int

    def indicator(self, queue: str, horizon: int) -> list[int]:
        s = [0] * (horizon + 1)
        for t in self.marks.get(queue, ()):
            if t <= horizon:
                s[t] = 1
        return s

    def total_marks(self, queue: str) -> int:
        return len(self.marks.get(queue, ()))


@dataclass
class InjectionTrace:
    counts: dict[str, dict[int, int]]  # queue -> round -> packets crossing it injected


# -- derivations from an execution trace -------------------------------------


def derive_stall_trace(trace) -> StallTrace:
    rounds: dict[str, list[int]] = {}
    for _, rnd, edge, _pid, _gid in trace.events_of("stall"):
        rounds.setdefault(edge, []).append(rnd)
    for lst in rounds.values():
        lst.sort()
    return StallTrace(rounds)


def derive_injection_trace(trace) -> InjectionTrace:
    counts: dict[str, dict[int, int]] = {}
    for _, rnd, _pid, path, _pri in trace.events_of("inject"):
        for edge in path:
            per_round = counts.setdefault(edge, {})
            per_round[rnd] = per_round.get(rnd, 0) + 1
    return InjectionTrace(counts)


def derive_notification_schedule(trace) -> NotificationSchedule:
    """Map each stall to the round its group annihilated.

    The engine drains pending groups past the horizon, so a missing or
    out-of-window annihilation is a model violation, not an input error.
    """
    annihilated: dict[int, int] = {}
    for _, rnd, gid, _how in trace.events_of("annihilate"):
        annihilated[gid] = rnd
    delay = trace.config.adversary.delay
    arrival: dict[str, dict[int, int]] = {}
    for _, rnd, edge, _pid, gid in trace.events_of("stall"):
        got = annihilated.get(gid)
        if got is None:
            raise ModelViolation(f"group {gid} never annihilated within horizon+delay")
        if not rnd <= got <= rnd + delay:
            raise ModelViolation(
                f"feedback for stall ({edge}, {rnd}) arrived at {got}, "
                f"outside [{rnd}, {rnd + delay}]")
        arrival.setdefault(edge, {})[rnd] = got
    return NotificationSchedule(arrival)


def delayed_counts(schedule: NotificationSchedule) -> DelayedCountTrace:
    counts: dict[str, dict[int, int]] = {}
    for queue, arrivals in schedule.arrival.items():
        per_round = counts.setdefault(queue, {})
        for arrive in arrivals.values():
            per_round[arrive] = per_round.get(arrive, 0) + 1
    return DelayedCountTrace(counts)


def compute_reactive(wd: DelayedCountTrace, horizon: int) -> ReactiveTrace:
    """Spread notification counts onto distinct reactive rounds."""
    marks: dict[str, tuple[int, ...]] = {}
    for queue, per_round in wd.counts.items():
        out: list[int] = []
        pointer = 1
        for t in sorted(per_round):
            count = per_round[t]
            if count <= 0:
                continue
            pointer = max(t, pointer)
            out.extend(range(pointer, pointer + count))
            pointer += count
        marks[queue] = tuple(out)
    return ReactiveTrace(marks, horizon)


def reactive_for_trace(trace) -> ReactiveTrace:
    """Pipeline shortcut: stall feedback of a run as a reactive trace."""
    schedule = derive_notification_schedule(trace)
    return compute_reactive(delayed_counts(schedule), trace.horizon)


# -- interval checks -----------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    queue: str | None = None
    interval: tuple[int, int] | None = None
    lhs: Fraction | None = None
    rhs: Fraction | None = None

    def __bool__(self):
        return self.ok

    @property
    def slack(self):
        if self.lhs is None:
            return None
        return self.rhs - self.lhs


def _max_interval_fast(values):
    """Best nonempty contiguous sum with its 1-based interval (Kadane)."""
    best = None
    best_span = (1, 1)
    cur = 0
    cur_start = 1
    for t in range(1, len(values)):
        v = values[t]
        if cur <= 0:
            cur = v
            cur_start = t
        else:
            cur += v
        if best is None or cur > best:
            best = cur
            best_span = (cur_start, t)
    return best, best_span


def _max_interval_quadratic(values):
    """Exhaustive interval scan; the oracle the fast form is checked against."""
    horizon = len(values) - 1
    prefix = [0] * (horizon + 1)
    for t in range(1, horizon + 1):
        prefix[t] = prefix[t - 1] + values[t]
    best = None
    best_span = (1, 1)
    for t1 in range(1, horizon + 1):
        base = prefix[t1 - 1]
        for t2 in range(t1, horizon + 1):
            total = prefix[t2] - base
            if best is None or total > best:
                best = total
                best_span = (t1, t2)
    return best, best_span


_SCANNERS = {FAST: _max_interval_fast, QUADRATIC: _max_interval_quadratic}


def _scan_queues(per_queue_values, threshold, method):
    """Worst interval across queues against a shared integer threshold."""
    scan = _SCANNERS[method]
    worst = None  # (margin, queue, span, total)
    for queue in sorted(per_queue_values):
        total, span = scan(per_queue_values[queue])
        if total is None:
            continue
        margin = total - threshold
        if worst is None or margin > worst[0]:
            worst = (margin, queue, span, total)
    return worst


def check_admissibility(inj: InjectionTrace, reactive: ReactiveTrace,
                        rate: Fraction, burst: int, horizon: int,
                        method: str = FAST) -> CheckResult:
    """Verify the delayed-feedback admissibility inequality everywhere.

    For every queue and contiguous interval T within the horizon:
    injected packets crossing the queue during T stay at or below
    rate * (rounds of T not marked reactive) + burstiness.
    """
    num, den = rate.numerator, rate.denominator
    per_queue = {}
    for queue, per_round in inj.counts.items():
        values = [0] * (horizon + 1)
        for t in range(1, horizon + 1):
            values[t] = -num
        for t in reactive.marks.get(queue, ()):
            if t <= horizon:
                values[t] = 0
        for t, count in per_round.items():
            values[t] += den * count
        per_queue[queue] = values
    worst = _scan_queues(per_queue, den * burst, method)
    if worst is None:
        return CheckResult(True)
    margin, queue, (t1, t2), _total = worst
    s = reactive.indicator(queue, horizon)
    lhs = Fraction(sum(inj.counts[queue].get(t, 0) for t in range(t1, t2 + 1)))
    rhs = rate * sum(1 - s[t] for t in range(t1, t2 + 1)) + burst
    return CheckResult(margin <= 0, queue, (t1, t2), lhs, rhs)


def check_regular_admissibility(inj: InjectionTrace, rate: Fraction, burst: int,
                                horizon: int, method: str = FAST) -> CheckResult:
    """Plain leaky-bucket admissibility: no reactive rounds at all."""
    return check_admissibility(inj, ReactiveTrace({}, horizon), rate, burst,
                               horizon, method)


def check_stall_reaction_bound(stalls: StallTrace, reactive: ReactiveTrace,
                               delay: int, horizon: int,
                               method: str = FAST) -> CheckResult:
    """Stalls never outrun reactions by more than the feedback delay.

    For every queue and interval T: stalled rounds in T never exceed
    reactive rounds in T plus the delay.
    """
    per_queue = {}
    for queue, rounds in stalls.rounds.items():
        values = [0] * (horizon + 1)
        for t in rounds:
            if t <= horizon:
                values[t] = 1
        for t in reactive.marks.get(queue, ()):
            if t <= horizon:
                values[t] -= 1
        per_queue[queue] = values
    worst = _scan_queues(per_queue, delay, method)
    if worst is None:
        return CheckResult(True)
    margin, queue, (t1, t2), _total = worst
    w = stalls.indicator(queue, horizon)
    s = reactive.indicator(queue, horizon)
    lhs = Fraction(sum(w[t1:t2 + 1]))
    rhs = Fraction(sum(s[t1:t2 + 1]) + delay)
    return CheckResult(margin <= 0, queue, (t1, t2), lhs, rhs)
