"""Parallel regularized evolution on a simulated asynchronous worker pool.

Stage 1 fills the population with ``population_size`` uniformly sampled
candidates.  Stage 2 repeatedly picks the best of a random sample of
``sample_size`` members, mutates it, evaluates the child and retires the
oldest member.  Evaluations run on ``num_workers`` simulated workers whose
wall times come from the configured duration model.

Population updates happen inside single event handlers, so every stage-2
sampling sees exactly ``population_size`` members.  Stage-2 candidates are
only generated once ``population_size`` evaluations have finished; workers
that free up earlier wait.
"""
from __future__ import annotations

import bisect
import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import space as sp
from .repo import TransferRepo, transferable_prefix
from .trace import TraceEvent, round_sig


@dataclass(frozen=True)
class DurationModel:
    kind: str = "normal"  # "normal" or "lognormal"
    mean: float = 60.0
    stddev: float = 10.0
    minimum: float = 1.0  # truncation point for the normal model

    def __post_init__(self):
        if self.kind not in ("normal", "lognormal"):
            raise ValueError(f"unknown duration model {self.kind!r}")
        if self.mean <= 0 or self.stddev < 0 or self.minimum <= 0:
            raise ValueError("duration model needs mean > 0, stddev >= 0, minimum > 0")

    def draw(self, rng: np.random.Generator) -> float:
        if self.stddev == 0:
            return max(self.mean, self.minimum)
        if self.kind == "lognormal":
            # parameters chosen so the draw has the requested mean and stddev
            var = math.log1p((self.stddev / self.mean) ** 2)
            mu = math.log(self.mean) - var / 2
            return max(float(rng.lognormal(mu, math.sqrt(var))), self.minimum)
        for _ in range(10_000):
            d = float(rng.normal(self.mean, self.stddev))
            if d >= self.minimum:
                return d
        return self.minimum


@dataclass(frozen=True)
class SearchConfig:
    total_candidates: int = 1000
    population_size: int = 100
    sample_size: int = 5
    num_workers: int = 25
    duration: DurationModel = field(default_factory=DurationModel)
    scheduling: str = "continuous"  # or "quanta"
    s_wait: int = 1
    transfer_enabled: bool = True
    donor_scope: str = "parent"
    cache_policy: object = None  # CachePolicy; None means store everything
    transfer_bonus: float = 0.0
    rng_seed: int = 0
    epochs: int = 50
    debug: bool = False
    allow_degenerate: bool = False  # permits total_candidates == population_size

    def __post_init__(self):
        N, p, s = self.total_candidates, self.population_size, self.sample_size
        if min(N, p, s, self.num_workers) < 1:
            raise ValueError("total_candidates, population_size, sample_size, num_workers must be positive")
        if not (s < p < N or (self.allow_degenerate and s < p <= N)):
            raise ValueError(f"need sample_size < population_size < total_candidates, got s={s}, p={p}, N={N}")
        if self.scheduling not in ("continuous", "quanta"):
            raise ValueError(f"unknown scheduling mode {self.scheduling!r}")
        if self.scheduling == "quanta" and not 1 <= self.s_wait <= self.num_workers:
            raise ValueError(f"s_wait must lie in [1, num_workers], got {self.s_wait}")
        if self.donor_scope not in ("parent", "population", "history"):
            raise ValueError(f"unknown donor_scope {self.donor_scope!r}")
        if self.transfer_bonus < 0:
            raise ValueError("transfer_bonus must be nonnegative")


@dataclass
class PopulationEntry:
    candidate_id: int
    sequence: tuple[int, ...]
    quality: float
    insertion_index: int

    @property
    def key(self):
        # higher quality wins; among equals the older entry wins
        return (self.quality, -self.insertion_index)


class Population:
    """FIFO population with rank queries (rank 1 = worst)."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._entries: deque[PopulationEntry] = deque()
        self._keys: list = []
        self._by_id: dict[int, PopulationEntry] = {}
        self._next_index = 0

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __getitem__(self, i):
        return self._entries[i]

    @property
    def full(self) -> bool:
        return len(self._entries) >= self.capacity

    def append(self, candidate_id: int, sequence, quality: float) -> PopulationEntry:
        e = PopulationEntry(candidate_id, tuple(sequence), quality, self._next_index)
        self._next_index += 1
        self._entries.append(e)
        bisect.insort(self._keys, e.key)
        self._by_id[candidate_id] = e
        return e

    def _popleft(self) -> PopulationEntry:
        e = self._entries.popleft()
        del self._keys[bisect.bisect_left(self._keys, e.key)]
        del self._by_id[e.candidate_id]
        return e

    def replace_oldest(self, candidate_id: int, sequence, quality: float):
        """Retire the oldest member (when full) and append; returns (new, retired)."""
        retired = retire_oldest(self) if self.full else None
        return self.append(candidate_id, sequence, quality), retired

    def rank_of(self, e: PopulationEntry) -> int:
        return bisect.bisect_left(self._keys, e.key) + 1

    def rank_of_id(self, candidate_id: int) -> int:
        return self.rank_of(self._by_id[candidate_id])

    def __contains__(self, candidate_id) -> bool:
        return candidate_id in self._by_id


def retire_oldest(population) -> PopulationEntry:
    if len(population) == 0:
        raise IndexError("cannot retire from an empty population")
    if isinstance(population, Population):
        return population._popleft()
    # plain list/deque of PopulationEntry
    i = min(range(len(population)), key=lambda j: population[j].insertion_index)
    e = population[i]
    del population[i]
    return e


def sample_parent(population, s: int, rng: np.random.Generator):
    """Return (best, sampled) for a uniform without-replacement sample of size ``s``."""
    n = len(population)
    if n < s:
        raise ValueError(f"population of {n} is smaller than sample size {s}")
    idx = rng.choice(n, size=s, replace=False)
    sampled = [population[int(i)] for i in idx]
    return max(sampled, key=lambda e: e.key), sampled


def select_parent(population, s: int, rng: np.random.Generator) -> PopulationEntry:
    return sample_parent(population, s, rng)[0]


@dataclass
class DelayReport:
    waits: list[float]  # one per dispatch after the initial one
    per_worker: dict[int, float]

    @property
    def mean_wait(self) -> float:
        return float(np.mean(self.waits)) if self.waits else 0.0


@dataclass
class SearchResult:
    events: list[TraceEvent]
    delay: DelayReport
    retired_insertion_indices: list[int]
    sample_population_sizes: list[int]
    repo: TransferRepo | None

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)


def _store_all_policy():
    from .cache_sim import CachePolicy

    return CachePolicy("store_all")


def run_search(config: SearchConfig, spec: sp.SpaceSpec) -> SearchResult:
    N, p, s, w = config.total_candidates, config.population_size, config.sample_size, config.num_workers
    if config.epochs not in spec.epoch_levels:
        raise ValueError(f"epochs={config.epochs} is not one of the space's epoch levels {list(spec.epoch_levels)}")
    search_ss, duration_ss = np.random.SeedSequence(config.rng_seed).spawn(2)
    rng = np.random.default_rng(search_ss)
    dur_rng = np.random.default_rng(duration_ss)

    population = Population(p)
    repo = None
    if config.transfer_enabled:
        repo = TransferRepo(config.cache_policy or _store_all_policy(), p, s, config.donor_scope)

    quanta = config.s_wait if config.scheduling == "quanta" else 1
    running: list = []  # heap of (end_time, seq, worker, pending)
    idle: deque = deque((wid, None) for wid in range(w))  # (worker, idle since)
    per_worker = {wid: 0.0 for wid in range(w)}
    waits: list[float] = []
    events: list[TraceEvent] = []
    retired_idx: list[int] = []
    sample_sizes: list[int] = []
    next_id = 0
    completed = 0
    seq_no = 0

    def can_generate():
        return next_id < N and (next_id < p or completed >= p)

    def dispatch(now: float):
        nonlocal next_id, seq_no
        wid, since = idle.popleft()
        if since is not None:
            waits.append(now - since)
            per_worker[wid] += now - since
        cid = next_id
        next_id += 1
        parent = mutation_index = sampled_ids = None
        if cid < p:
            stage = 1
            child = sp.sample_uniform(spec, rng)
        else:
            stage = 2
            sample_sizes.append(len(population))
            parent, sampled = sample_parent(population, s, rng)
            child, mutation_index = sp.mutate(parent.sequence, spec, rng)
            sampled_ids = tuple(e.candidate_id for e in sampled)
        donor_id = donor_len = None
        if repo is not None:
            found = repo.find_donor(child, parent.candidate_id if parent is not None else None)
            donor_len = 0
            if found is not None:
                donor, donor_len = found
                donor_id = donor.candidate_id
                repo.request(donor_id, cid)
            elif repo.scope == "parent" and parent is not None and parent.candidate_id in repo.entries:
                # unsatisfied request still counts toward tier admission
                if transferable_prefix(child, parent.sequence) > 0:
                    repo.request(parent.candidate_id, cid)
        duration = config.duration.draw(dur_rng)
        pending = {
            "cid": cid,
            "seq": child,
            "stage": stage,
            "begin": now,
            "parent": parent.candidate_id if parent is not None else None,
            "mutation_index": mutation_index,
            "sampled": sampled_ids,
            "donor_id": donor_id,
            "donor_len": donor_len,
        }
        heapq.heappush(running, (now + duration, seq_no, wid, pending))
        seq_no += 1

    def try_dispatch(now: float):
        if not can_generate():
            return
        if len(idle) >= quanta or not running:
            while idle and can_generate():
                dispatch(now)

    try_dispatch(0.0)
    while running:
        end, _, wid, job = heapq.heappop(running)
        q = sp.quality(job["seq"], config.epochs, spec)
        if config.transfer_bonus and job["donor_len"]:
            q = min(1.0, q + config.transfer_bonus * math.sqrt(job["donor_len"] / spec.num_slots))
        q = round_sig(q)
        # atomic region: retire + append
        entry, retired = population.replace_oldest(job["cid"], job["seq"], q)
        if retired is not None:
            retired_idx.append(retired.insertion_index)
        if repo is not None:
            repo.on_complete(entry, retired, population)
        completed += 1
        events.append(
            TraceEvent(
                candidate_id=job["cid"],
                begin_ts=round_sig(job["begin"]),
                end_ts=round_sig(end),
                worker_id=wid,
                stage=job["stage"],
                sequence=job["seq"],
                quality=q,
                donor_id=job["donor_id"],
                donor_prefix_len=job["donor_len"],
                parent_id=job["parent"] if config.debug else None,
                mutation_index=job["mutation_index"] if config.debug else None,
                sampled_ids=job["sampled"] if config.debug else None,
            )
        )
        idle.append((wid, end))
        try_dispatch(end)

    return SearchResult(events, DelayReport(waits, per_worker), retired_idx, sample_sizes, repo)


def simulate_quanta(config: SearchConfig, spec: sp.SpaceSpec) -> tuple[list[TraceEvent], DelayReport]:
    if config.scheduling != "quanta":
        raise ValueError("simulate_quanta needs scheduling='quanta'")
    res = run_search(config, spec)
    return res.events, res.delay
