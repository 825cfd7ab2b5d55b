"""Architecture search space, synthetic quality oracle and mutation operator.

A candidate architecture is a fixed-length tuple of per-slot choices.  Some
prefixes may be declared invalid; the space is everything else.

The quality oracle is a deterministic, seeded table.  Each (sequence, epochs)
pair gets a structured score: per-(slot, choice) effects, weighted so that
earlier slots matter more (``slot_decay``), plus a per-sequence hashed
normal term.  ``heritability`` is the share of score variance carried by the
slot effects; it is what lets a mutated child resemble its parent.  The score
is then pushed through its own distribution function over uniformly drawn
sequences and the inverse normal CDF, so the quality of a random sequence is
Normal(quality_mean, quality_stddev) clamped to [0, 1] while the ordering of
sequences (all that selection looks at) is unchanged.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from statistics import NormalDist

import numpy as np

MAX_REJECTIONS = 1_000_000

_STD_NORMAL = NormalDist()

ArchSequence = tuple[int, ...]


class DegenerateSpaceError(RuntimeError):
    """Raised when rejection sampling cannot find a valid sequence."""


@dataclass(frozen=True)
class SpaceSpec:
    num_slots: int = 6
    choices_per_slot: tuple[int, ...] = (5, 5, 5, 5, 5, 5)
    validity_rules: tuple[tuple[int, ...], ...] = ()
    quality_seed: int = 0
    quality_mean: float = 0.7
    quality_stddev: float = 0.1
    epoch_levels: tuple[int, ...] = (50, 150)
    heritability: float = 0.99
    slot_decay: float = 0.5

    def __post_init__(self):
        # normalise list inputs so the spec stays hashable
        object.__setattr__(self, "choices_per_slot", tuple(int(c) for c in self.choices_per_slot))
        object.__setattr__(
            self, "validity_rules", tuple(tuple(int(v) for v in r) for r in self.validity_rules)
        )
        object.__setattr__(self, "epoch_levels", tuple(int(e) for e in self.epoch_levels))

        if self.num_slots < 1:
            raise ValueError("num_slots must be positive")
        if len(self.choices_per_slot) != self.num_slots:
            raise ValueError(
                f"choices_per_slot has {len(self.choices_per_slot)} entries, expected {self.num_slots}"
            )
        if any(c < 2 for c in self.choices_per_slot):
            raise ValueError("every slot needs at least 2 choices")
        for rule in self.validity_rules:
            if not 1 <= len(rule) <= self.num_slots:
                raise ValueError(f"validity rule {list(rule)} has bad length")
            if any(not 0 <= v < c for v, c in zip(rule, self.choices_per_slot)):
                raise ValueError(f"validity rule {list(rule)} is outside the slot ranges")
        if self.quality_stddev < 0:
            raise ValueError("quality_stddev must be nonnegative")
        if not self.epoch_levels or any(e < 1 for e in self.epoch_levels):
            raise ValueError("epoch_levels must be a non-empty list of positive integers")
        if not 0.0 <= self.heritability <= 1.0:
            raise ValueError("heritability must lie in [0, 1]")
        if not 0.0 < self.slot_decay <= 1.0:
            raise ValueError("slot_decay must lie in (0, 1]")
        if space_size(self) == 0:
            raise ValueError("validity_rules forbid every sequence")

    @classmethod
    def uniform(cls, num_slots: int, choices: int, **kw) -> "SpaceSpec":
        return cls(num_slots=num_slots, choices_per_slot=(choices,) * num_slots, **kw)

    @property
    def _rules_by_length(self) -> dict[int, frozenset]:
        return _group_rules(self.validity_rules)


@lru_cache(maxsize=64)
def _group_rules(rules) -> dict[int, frozenset]:
    out: dict[int, set] = {}
    for r in rules:
        out.setdefault(len(r), set()).add(r)
    return {k: frozenset(v) for k, v in out.items()}


def _minimal_rules(rules) -> set[tuple[int, ...]]:
    uniq = set(rules)
    return {r for r in uniq if not any(r[:k] in uniq for k in range(1, len(r)))}


def space_size(spec: SpaceSpec) -> int:
    """Number of valid sequences (exact integer)."""
    total = math.prod(spec.choices_per_slot)
    # minimal forbidden prefixes cover pairwise-disjoint blocks of the space
    forbidden = sum(math.prod(spec.choices_per_slot[len(r):]) for r in _minimal_rules(spec.validity_rules))
    return total - forbidden


def is_valid(seq, spec: SpaceSpec) -> bool:
    if len(seq) != spec.num_slots:
        return False
    if any(not 0 <= v < c for v, c in zip(seq, spec.choices_per_slot)):
        return False
    seq = tuple(seq)
    for length, rules in spec._rules_by_length.items():
        if seq[:length] in rules:
            return False
    return True


def sample_uniform(spec: SpaceSpec, rng: np.random.Generator) -> ArchSequence:
    highs = spec.choices_per_slot
    for _ in range(MAX_REJECTIONS):
        seq = tuple(int(rng.integers(c)) for c in highs)
        if not spec.validity_rules or is_valid(seq, spec):
            return seq
    raise DegenerateSpaceError(f"{MAX_REJECTIONS} consecutive rejections while sampling")


def mutate(seq, spec: SpaceSpec, rng: np.random.Generator) -> tuple[ArchSequence, int]:
    """Change one uniformly chosen slot to a different uniformly chosen value.

    Returns the child and the mutated slot index.  With validity rules the
    draw is conditioned on the child being valid, which is what re-drawing
    index and value until valid would give.
    """
    seq = tuple(seq)
    L = spec.num_slots
    if not spec.validity_rules:
        idx = int(rng.integers(L))
        cur = seq[idx]
        val = int(rng.integers(spec.choices_per_slot[idx] - 1))
        if val >= cur:
            val += 1
        return seq[:idx] + (val,) + seq[idx + 1:], idx
    moves, weights = [], []
    for idx, c in enumerate(spec.choices_per_slot):
        for val in range(c):
            if val == seq[idx]:
                continue
            child = seq[:idx] + (val,) + seq[idx + 1:]
            if is_valid(child, spec):
                moves.append((child, idx))
                weights.append(1.0 / (c - 1))
    if not moves:
        raise DegenerateSpaceError(f"no valid single-slot mutation of {list(seq)}")
    w = np.asarray(weights)
    return moves[int(rng.choice(len(moves), p=w / w.sum()))]


def _hash_normal(seed: int, *parts: int) -> float:
    h = hashlib.blake2b(digest_size=8, key=(seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little"))
    h.update(struct.pack(f"<{len(parts)}q", *parts))
    bits = int.from_bytes(h.digest(), "little") >> 11  # 53 bits
    u = (bits + 0.5) / (1 << 53)
    return _STD_NORMAL.inv_cdf(u)


_BIN = 0.002  # score grid resolution for the distribution table


@lru_cache(maxsize=256)
def _slot_effects(spec: SpaceSpec, epochs: int) -> tuple[tuple[float, ...], ...]:
    """Weighted per-slot choice effects; their sum has unit variance over the space."""
    weights = np.array([spec.slot_decay**i for i in range(spec.num_slots)])
    weights /= np.sqrt((weights**2).sum())
    table = []
    for slot, n in enumerate(spec.choices_per_slot):
        raw = np.array([_hash_normal(spec.quality_seed, 1, epochs, slot, v) for v in range(n)])
        raw -= raw.mean()
        sd = raw.std()
        if sd > 0:
            raw /= sd
        table.append(tuple(weights[slot] * raw))
    return tuple(table)


@lru_cache(maxsize=256)
def _score_cdf(spec: SpaceSpec, epochs: int) -> tuple[np.ndarray, np.ndarray]:
    """Distribution function of the structured score under uniform sampling.

    Built by convolving binned per-slot effect distributions with the
    discretised normal term; returned as (bin upper edges, cumulative mass).
    """
    h = spec.heritability
    pmf = np.ones(1)
    offset = 0
    for effects in _slot_effects(spec, epochs):
        idx = np.rint(np.sqrt(h) * np.asarray(effects) / _BIN).astype(int)
        lo = int(idx.min())
        slot_pmf = np.zeros(int(idx.max()) - lo + 1)
        np.add.at(slot_pmf, idx - lo, 1.0 / len(effects))
        pmf = np.convolve(pmf, slot_pmf)
        offset += lo
    sigma = math.sqrt(1.0 - h)
    if sigma > 0:
        half = int(math.ceil(8 * sigma / _BIN))
        edges = (np.arange(-half, half + 2) - 0.5) * _BIN / sigma
        kernel = np.diff(np.array([_STD_NORMAL.cdf(x) for x in edges]))
        pmf = np.convolve(pmf, kernel)
        offset -= half
    upper = (offset + np.arange(len(pmf)) + 0.5) * _BIN
    cdf = np.cumsum(pmf)
    return upper, cdf / cdf[-1]


def quality(seq, epochs: int, spec: SpaceSpec) -> float:
    if epochs not in spec.epoch_levels:
        raise ValueError(f"epochs={epochs} is not one of {list(spec.epoch_levels)}")
    seq = tuple(int(v) for v in seq)
    z = _hash_normal(spec.quality_seed, 2, epochs, *seq)
    h = spec.heritability
    if h > 0:
        effects = _slot_effects(spec, epochs)
        additive = sum(effects[i][v] for i, v in enumerate(seq))
        score = math.sqrt(h) * additive + math.sqrt(1.0 - h) * z
        upper, cdf = _score_cdf(spec, epochs)
        u = float(np.interp(score, upper, cdf, left=0.0, right=1.0))
        z = _STD_NORMAL.inv_cdf(min(max(u, 1e-12), 1.0 - 1e-12))
    q = spec.quality_mean + spec.quality_stddev * z
    return min(1.0, max(0.0, q))
