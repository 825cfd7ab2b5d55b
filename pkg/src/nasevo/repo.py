"""Model repository: stored candidates, admission decisions and donor lookup.

Transfer is modelled at sequence granularity.  A child can reuse the leading
slots it shares with a stored donor; everything from the first differing slot
onwards has to be trained from scratch.
"""
from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

from .prob import transfer_prob_bound

if TYPE_CHECKING:
    from .cache_sim import CachePolicy
    from .engine import Population, PopulationEntry


@dataclass
class RepoEntry:
    candidate_id: int
    sequence: tuple[int, ...]
    quality: float
    stored: bool = False
    donor_count: int = 0
    decided: bool = False  # admission decision is final
    resident: bool = False  # currently held (stored and not evicted)


@dataclass
class AdmissionContext:
    rank: int | None = None  # 1 = worst; None while the population is still filling
    population_size: int = 100
    sample_size: int = 5
    recent_donations: int = 0


def transferable_prefix(child, parent) -> int:
    """Number of leading slots shared by ``child`` and ``parent``."""
    if len(child) != len(parent):
        raise ValueError(f"length mismatch: {len(child)} vs {len(parent)}")
    n = 0
    for a, b in zip(child, parent):
        if a != b:
            break
        n += 1
    return n


def _donor_key(entry: RepoEntry):
    return (entry.quality, -entry.candidate_id)


def find_donor(child, entries: Iterable[RepoEntry]) -> tuple[RepoEntry, int] | None:
    """Linear scan: stored entry with the longest common prefix with ``child``.

    Ties go to higher quality, then lower candidate id.  Returns None when
    nothing shares at least one leading slot.
    """
    best = None
    best_key = None
    for e in entries:
        if not e.stored:
            continue
        k = (transferable_prefix(child, e.sequence),) + _donor_key(e)
        if best_key is None or k > best_key:
            best, best_key = e, k
    if best is None or best_key[0] == 0:
        return None
    return best, best_key[0]


def admit(entry: RepoEntry, policy: "CachePolicy", context: AdmissionContext) -> bool:
    """Apply ``policy`` to ``entry``; sets ``entry.stored`` when admitted.

    Rank-based policies defer: a False answer just means "not yet".  The
    caller marks the decision final when the entry leaves the population.
    """
    if entry.stored:
        return True
    kind = policy.kind
    if kind == "store_all":
        ok = True
    elif kind == "skip_bottom":
        ok = context.rank is not None and context.rank >= context.sample_size
    elif kind == "probability_threshold":
        ok = context.rank is not None and (
            transfer_prob_bound(context.population_size, context.rank, context.sample_size) >= policy.epsilon
        )
    elif kind == "tier_threshold":
        ok = context.recent_donations >= policy.min_donations
    else:
        raise ValueError(f"unknown policy kind {kind!r}")
    if ok:
        entry.stored = True
        entry.decided = True
    return ok


class _PrefixIndex:
    """Trie over stored sequences; each node keeps the ids passing through it."""

    def __init__(self):
        self.root: dict = {}

    def add(self, entry: RepoEntry):
        node = self.root
        for v in entry.sequence:
            node = node.setdefault(v, {"ids": set(), "kids": {}})
            node["ids"].add(entry.candidate_id)
            node = node["kids"]

    def remove(self, entry: RepoEntry):
        node = self.root
        for v in entry.sequence:
            nxt = node.get(v)
            if nxt is None:
                return
            nxt["ids"].discard(entry.candidate_id)
            if not nxt["ids"]:
                del node[v]
                return
            node = nxt["kids"]

    def deepest(self, child) -> tuple[set, int]:
        node = self.root
        ids: set = set()
        depth = 0
        for v in child:
            nxt = node.get(v)
            if nxt is None:
                break
            ids = nxt["ids"]
            depth += 1
            node = nxt["kids"]
        return ids, depth


class TransferRepo:
    """Repository used by the engine (closed loop) and by trace replay.

    ``scope`` picks the donor candidates: ``"parent"`` uses the selected
    parent only, ``"population"`` the stored members of the current
    population and ``"history"`` everything stored so far.
    """

    def __init__(self, policy: "CachePolicy", population_size: int, sample_size: int, scope: str = "parent"):
        if scope not in ("parent", "population", "history"):
            raise ValueError(f"unknown donor scope {scope!r}")
        self.policy = policy
        self.population_size = population_size
        self.sample_size = sample_size
        self.scope = scope
        self.entries: dict[int, RepoEntry] = {}
        self._resident: OrderedDict[int, None] = OrderedDict()  # store order
        self._history_index = _PrefixIndex()
        self._population_index = _PrefixIndex()
        self._in_population: set[int] = set()
        self._pending: set[int] = set()  # in population, undecided
        self._requests: dict[int, deque] = {}
        self.stores_made = 0
        self.evictions = 0

    # -- admission ---------------------------------------------------------
    def _context(self, entry: RepoEntry, population: "Population | None", now: int | None = None) -> AdmissionContext:
        rank = None
        if population is not None and population.full:
            rank = population.rank_of_id(entry.candidate_id)
        recent = 0
        window = getattr(self.policy, "window", None)
        reqs = self._requests.get(entry.candidate_id)
        if reqs and window is not None and now is not None:
            while reqs and reqs[0] <= now - window:
                reqs.popleft()
            recent = len(reqs)
        return AdmissionContext(rank, self.population_size, self.sample_size, recent)

    def _store(self, entry: RepoEntry):
        capacity = self.policy.capacity
        if capacity is not None and len(self._resident) >= capacity:
            self._evict()
        entry.resident = True
        self._resident[entry.candidate_id] = None
        self._history_index.add(entry)
        if entry.candidate_id in self._in_population:
            self._population_index.add(entry)
        self.stores_made += 1

    def _evict(self):
        victim = None
        for cid in self._resident:
            if self.entries[cid].donor_count == 0:
                victim = cid
                break
        if victim is None:
            victim = next(iter(self._resident))
        e = self.entries[victim]
        e.resident = False
        del self._resident[victim]
        self._history_index.remove(e)
        self._population_index.remove(e)
        self.evictions += 1

    def _try_admit(self, entry: RepoEntry, population, now=None) -> bool:
        if entry.stored:
            return True
        if admit(entry, self.policy, self._context(entry, population, now)):
            self._pending.discard(entry.candidate_id)
            self._store(entry)
            return True
        return False

    # -- population events -------------------------------------------------
    def on_complete(self, pe: "PopulationEntry", retired: "PopulationEntry | None", population: "Population"):
        """Register a finished candidate; ``population`` already reflects the update."""
        entry = RepoEntry(pe.candidate_id, tuple(pe.sequence), pe.quality)
        self.entries[entry.candidate_id] = entry
        self._in_population.add(entry.candidate_id)
        if retired is not None:
            self._in_population.discard(retired.candidate_id)
            old = self.entries.get(retired.candidate_id)
            if old is not None:
                self._population_index.remove(old)
                if old.candidate_id in self._pending:
                    self._pending.discard(old.candidate_id)
                    if self.policy.kind in ("skip_bottom", "probability_threshold"):
                        old.decided = True
        self._pending.add(entry.candidate_id)
        if self.policy.kind != "tier_threshold":
            for cid in sorted(self._pending):
                self._try_admit(self.entries[cid], population)

    # -- donor traffic -----------------------------------------------------
    def request(self, donor_id: int, now: int) -> bool:
        """Record a donor request at dispatch index ``now``; True on a hit."""
        entry = self.entries[donor_id]
        self._requests.setdefault(donor_id, deque()).append(now)
        if entry.resident:
            entry.donor_count += 1
            return True
        if self.policy.kind == "tier_threshold" and not entry.stored:
            self._try_admit(entry, None, now)
        return False

    def find_donor(self, child, parent_id: int | None = None) -> tuple[RepoEntry, int] | None:
        if self.scope == "parent":
            if parent_id is None:
                return None
            parent = self.entries[parent_id]
            if not parent.resident:
                return None
            n = transferable_prefix(child, parent.sequence)
            return (parent, n) if n > 0 else None
        index = self._population_index if self.scope == "population" else self._history_index
        ids, depth = index.deepest(child)
        if depth == 0 or not ids:
            return None
        best = max((self.entries[i] for i in ids), key=_donor_key)
        return best, depth

    def resident_entries(self) -> list[RepoEntry]:
        return [self.entries[c] for c in self._resident]

    def dump(self) -> list[dict]:
        """Plain records for the trace sidecar file."""
        return [
            {
                "candidate_id": e.candidate_id,
                "sequence": list(e.sequence),
                "quality": e.quality,
                "stored": e.stored,
                "resident": e.resident,
                "donor_count": e.donor_count,
            }
            for e in sorted(self.entries.values(), key=lambda e: e.candidate_id)
        ]
