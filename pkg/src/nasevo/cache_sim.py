"""Replay a trace against a model-cache admission policy.

Policies:

``store_all``
    every evaluated candidate is written to the repository.
``skip_bottom``
    a candidate is written only once it ranks at least ``sample_size`` in a
    full population, i.e. once it could win a sample.  Candidates that stay
    in the bottom ``sample_size - 1`` for their whole residence are never
    written and can never be requested.
``probability_threshold``
    like ``skip_bottom`` but the candidate is written once its per-draw
    selection bound reaches ``epsilon``.
``tier_threshold``
    a candidate is written after ``min_donations`` donor requests within the
    trailing ``window`` dispatches; the earlier requests are misses.

Replay does not change which donor the recorded search used: a miss is
counted, nothing else.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields

from .engine import Population
from .repo import TransferRepo
from .trace import TraceEvent, has_transfer

POLICY_KINDS = ("store_all", "skip_bottom", "probability_threshold", "tier_threshold")


@dataclass(frozen=True)
class CachePolicy:
    kind: str = "store_all"
    epsilon: float | None = None
    min_donations: int | None = None
    window: int | None = None
    capacity: int | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.kind == "probability_threshold":
            if self.epsilon is None or not 0 < self.epsilon < 1:
                raise ValueError("probability_threshold needs epsilon in (0, 1)")
        if self.kind == "tier_threshold":
            if self.min_donations is None or self.min_donations < 1:
                raise ValueError("tier_threshold needs min_donations >= 1")
            if self.window is None or self.window < self.min_donations:
                raise ValueError("tier_threshold needs window >= min_donations")
        if self.capacity is not None and self.capacity < 1:
            raise ValueError("capacity must be positive")

    @classmethod
    def parse(cls, text: str, capacity: int | None = None) -> "CachePolicy":
        """Parse ``store-all``, ``skip-bottom``, ``prob:EPS`` or ``tier:MIN:WINDOW``."""
        parts = text.strip().lower().replace("_", "-").split(":")
        head = parts[0]
        try:
            if head == "store-all" and len(parts) == 1:
                return cls("store_all", capacity=capacity)
            if head == "skip-bottom" and len(parts) == 1:
                return cls("skip_bottom", capacity=capacity)
            if head in ("prob", "probability-threshold") and len(parts) == 2:
                return cls("probability_threshold", epsilon=float(parts[1]), capacity=capacity)
            if head in ("tier", "tier-threshold") and len(parts) == 3:
                return cls("tier_threshold", min_donations=int(parts[1]), window=int(parts[2]), capacity=capacity)
        except ValueError as exc:
            raise ValueError(f"bad policy {text!r}: {exc}") from None
        raise ValueError(f"bad policy {text!r}; expected store-all, skip-bottom, prob:EPS or tier:MIN:WINDOW")

    @property
    def label(self) -> str:
        if self.kind == "probability_threshold":
            base = f"prob:{self.epsilon:g}"
        elif self.kind == "tier_threshold":
            base = f"tier:{self.min_donations}:{self.window}"
        else:
            base = self.kind.replace("_", "-")
        return base if self.capacity is None else f"{base}@{self.capacity}"


@dataclass
class CacheReport:
    policy: str
    total_candidates: int
    stores_made: int
    stores_skipped: int
    donor_requests: int
    donor_hits: int
    donor_misses: int
    wasted_stores: int
    miss_penalty_prefix_slots: int
    evictions: int = 0

    @property
    def hit_rate(self) -> float:
        return self.donor_hits / self.donor_requests if self.donor_requests else 1.0

    def check(self):
        if self.stores_made + self.stores_skipped != self.total_candidates:
            raise RuntimeError(f"store counters do not add up: {self}")
        if self.donor_hits + self.donor_misses != self.donor_requests:
            raise RuntimeError(f"request counters do not add up: {self}")

    def rows(self) -> list[tuple[str, object]]:
        out = [(f.name, getattr(self, f.name)) for f in fields(self)]
        out.append(("hit_rate", f"{self.hit_rate:.6f}"))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["counter", "value"])
        w.writerows(self.rows())
        return buf.getvalue()

    def summary(self) -> str:
        return (
            f"policy {self.policy}: stored {self.stores_made}/{self.total_candidates} "
            f"(skipped {self.stores_skipped}), donor requests {self.donor_requests}: "
            f"{self.donor_hits} hits, {self.donor_misses} misses "
            f"(hit rate {self.hit_rate:.3f}); wasted stores {self.wasted_stores}; "
            f"prefix slots lost to misses {self.miss_penalty_prefix_slots}; evictions {self.evictions}"
        )


def replay(
    events: list[TraceEvent],
    policy: CachePolicy,
    population_size: int = 100,
    sample_size: int = 5,
) -> CacheReport:
    """Replay a transfer-enabled trace (in file order) against ``policy``."""
    if events and not has_transfer(events):
        raise ValueError("trace has no donor fields; record it with transfer enabled")
    repo = TransferRepo(policy, population_size, sample_size, scope="history")
    population = Population(population_size)
    # dispatches in the order the engine issued them; completions in file order
    dispatches = sorted(events, key=lambda e: (e.begin_ts, e.candidate_id))
    hits = misses = penalty = 0
    ci = 0
    for d in dispatches:
        while ci < len(events) and events[ci].end_ts <= d.begin_ts:
            c = events[ci]
            entry, retired = population.replace_oldest(c.candidate_id, c.sequence, c.quality)
            repo.on_complete(entry, retired, population)
            ci += 1
        if d.donor_id is None:
            continue
        if d.donor_id not in repo.entries:
            raise ValueError(f"candidate {d.candidate_id} names donor {d.donor_id} that had not completed")
        if repo.request(d.donor_id, d.candidate_id):
            hits += 1
        else:
            misses += 1
            penalty += d.donor_prefix_len or 0
    while ci < len(events):
        c = events[ci]
        entry, retired = population.replace_oldest(c.candidate_id, c.sequence, c.quality)
        repo.on_complete(entry, retired, population)
        ci += 1

    stored = [e for e in repo.entries.values() if e.stored]
    report = CacheReport(
        policy=policy.label,
        total_candidates=len(events),
        stores_made=len(stored),
        stores_skipped=len(events) - len(stored),
        donor_requests=hits + misses,
        donor_hits=hits,
        donor_misses=misses,
        wasted_stores=sum(1 for e in stored if e.donor_count == 0),
        miss_penalty_prefix_slots=penalty,
        evictions=repo.evictions,
    )
    report.check()
    return report


def reports_to_csv(reports: list[CacheReport]) -> str:
    buf = io.StringIO()
    names = [f.name for f in fields(CacheReport)] + ["hit_rate"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in reports:
        d = asdict(r)
        w.writerow([d[n] for n in names[:-1]] + [f"{r.hit_rate:.6f}"])
    return buf.getvalue()
