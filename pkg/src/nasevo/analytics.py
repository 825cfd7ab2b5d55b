"""Trace analyses: prefix tries, sliding-window prefix histograms, popularity
tiers, quality series, donor frequency and worker locality.

Every function takes a list of :class:`~nasevo.trace.TraceEvent` in file
(completion) order and returns plain data plus CSV/DOT exporters.
"""
from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .trace import TraceEvent, has_transfer


# -- prefix trie ---------------------------------------------------------------

@dataclass
class TrieNode:
    depth: int
    choice: int | None  # None at the root
    count: int = 0
    fraction: float = 0.0
    transfers: int = 0  # events whose transferred prefix covers this node
    children: dict[int, "TrieNode"] = field(default_factory=dict)

    def walk(self, prefix=()):
        """Yield (prefix, node) for every node below the root, depth first."""
        for choice in sorted(self.children):
            child = self.children[choice]
            p = prefix + (choice,)
            yield p, child
            yield from child.walk(p)


@dataclass
class PrefixTrie:
    root: TrieNode
    total: int
    threshold: float

    def nodes(self) -> dict[tuple[int, ...], TrieNode]:
        return dict(self.root.walk())

    def to_dot(self) -> str:
        lines = [
            "digraph trie {",
            "  rankdir=LR;",
            '  node [shape=box, style=filled, fontname="Helvetica"];',
            '  root [label="root", fillcolor="#dddddd"];',
        ]
        for prefix, node in self.root.walk():
            name = "n_" + "_".join(map(str, prefix))
            parent = "root" if len(prefix) == 1 else "n_" + "_".join(map(str, prefix[:-1]))
            lines.append(
                f'  {name} [label="{node.choice} ({100 * node.fraction:.1f}%)", '
                f'fillcolor="{fraction_color(node.fraction)}", count={node.count}, '
                f"fraction={node.fraction:.6f}, transfers={node.transfers}];"
            )
            lines.append(f"  {parent} -> {name};")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["prefix", "depth", "choice", "count", "fraction", "transfers"])
        for prefix, node in self.root.walk():
            w.writerow(["-".join(map(str, prefix)), node.depth, node.choice, node.count, f"{node.fraction:.6f}", node.transfers])
        return buf.getvalue()


def fraction_color(f: float) -> str:
    """Blue (rare) to red (common) hex colour."""
    f = min(1.0, max(0.0, f))
    return f"#{round(255 * f):02x}40{round(255 * (1 - f)):02x}"


def build_trie(events: list[TraceEvent], prune_threshold: float = 0.01, depth_limit: int | None = None) -> PrefixTrie:
    """Count every sequence path, then drop nodes below ``prune_threshold``.

    Pruning happens after counting, so retained percentages are those of the
    full search.
    """
    if not events:
        raise ValueError("cannot build a trie from an empty trace")
    if not 0 <= prune_threshold < 1:
        raise ValueError("prune_threshold must lie in [0, 1)")
    root = TrieNode(0, None)
    for e in events:
        root.count += 1
        seq = e.sequence if depth_limit is None else e.sequence[:depth_limit]
        covered = (e.donor_prefix_len or 0) if e.donor_id is not None else 0
        node = root
        for depth, choice in enumerate(seq, start=1):
            node = node.children.setdefault(choice, TrieNode(depth, choice))
            node.count += 1
            if depth <= covered:
                node.transfers += 1
    total = len(events)

    def finish(node: TrieNode):
        node.fraction = node.count / total
        for choice in list(node.children):
            child = node.children[choice]
            if child.count / total < prune_threshold:
                del node.children[choice]
            else:
                finish(child)

    finish(root)
    return PrefixTrie(root, total, prune_threshold)


# -- sliding-window prefix histograms ------------------------------------------

@dataclass
class WindowHistogram:
    window_end_index: int  # 1-based index of the last event in the window
    prefix_len: int
    window_size: int
    counts: dict[tuple[int, ...], int]


def prefix_ids(events: list[TraceEvent], prefix_len: int) -> dict[tuple[int, ...], int]:
    """Stable ids for every prefix seen in the trace, in lexicographic order."""
    return {p: i for i, p in enumerate(sorted({tuple(e.sequence[:prefix_len]) for e in events}))}


def window_histograms(
    events: list[TraceEvent], window_size: int = 100, prefix_len: int = 3, stride: int = 1
) -> list[WindowHistogram]:
    if window_size < 1 or stride < 1 or prefix_len < 1:
        raise ValueError("window_size, stride and prefix_len must be positive")
    if window_size > len(events):
        raise ValueError(f"window of {window_size} is larger than the trace ({len(events)} events)")
    prefixes = [tuple(e.sequence[:prefix_len]) for e in events]
    counts = Counter(prefixes[:window_size])
    out = [WindowHistogram(window_size, prefix_len, window_size, dict(counts))]
    end = window_size
    while end + stride <= len(events):
        for i in range(end, end + stride):
            counts[prefixes[i]] += 1
            old = prefixes[i - window_size]
            counts[old] -= 1
            if counts[old] == 0:
                del counts[old]
        end += stride
        out.append(WindowHistogram(end, prefix_len, window_size, dict(counts)))
    return out


def histogram_at(events: list[TraceEvent], window_end: int, window_size: int = 100, prefix_len: int = 3) -> WindowHistogram:
    """The histogram of the window ending at (1-based) event ``window_end``."""
    if not window_size <= window_end <= len(events):
        raise ValueError(f"window ending at {window_end} does not fit the trace")
    counts = Counter(tuple(e.sequence[:prefix_len]) for e in events[window_end - window_size:window_end])
    return WindowHistogram(window_end, prefix_len, window_size, dict(counts))


def histograms_to_csv(hists: list[WindowHistogram], ids: dict[tuple[int, ...], int]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window_end", "prefix_id", "prefix", "count"])
    for h in hists:
        for p in sorted(h.counts, key=ids.__getitem__):
            w.writerow([h.window_end_index, ids[p], "-".join(map(str, p)), h.counts[p]])
    return buf.getvalue()


# -- popularity tiers ----------------------------------------------------------

@dataclass
class TierReport:
    window_end_index: int
    tiers: dict[tuple[int, ...], int]
    t1_frac: float
    t2_max_count: int
    t3_max_count: int
    # tier-2 prefixes above t2_max_count but below the tier-1 cut
    above_t2: list[tuple[int, ...]] = field(default_factory=list)

    def members(self, tier: int) -> list[tuple[int, ...]]:
        return sorted(p for p, t in self.tiers.items() if t == tier)


def classify_tiers(h: WindowHistogram, t1_frac: float = 0.30, t2_max_count: int = 25, t3_max_count: int = 3) -> TierReport:
    """Tier 1 if count >= t1_frac * window, tier 3 if count <= t3_max_count, else tier 2."""
    # 0.3 * 100 is 30.000000000000004 in binary floating point
    t1_cut = math.ceil(round(t1_frac * h.window_size, 9))
    tiers = {}
    above = []
    for p, c in h.counts.items():
        if c >= t1_cut:
            tiers[p] = 1
        elif c <= t3_max_count:
            tiers[p] = 3
        else:
            tiers[p] = 2
            if c > t2_max_count:
                above.append(p)
    return TierReport(h.window_end_index, tiers, t1_frac, t2_max_count, t3_max_count, sorted(above))


def tiers_to_csv(reports: list[TierReport], hists: list[WindowHistogram], ids) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window_end", "prefix_id", "prefix", "count", "tier"])
    for r, h in zip(reports, hists):
        for p in sorted(r.tiers, key=ids.__getitem__):
            w.writerow([r.window_end_index, ids[p], "-".join(map(str, p)), h.counts[p], r.tiers[p]])
    return buf.getvalue()


def tier_summary_csv(reports: list[TierReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window_end", "tier1", "tier2", "tier3"])
    for r in reports:
        c = Counter(r.tiers.values())
        w.writerow([r.window_end_index, c[1], c[2], c[3]])
    return buf.getvalue()


# -- quality -------------------------------------------------------------------

@dataclass
class QualitySeries:
    quality: list[float]
    cummax: list[float]
    steps: list[tuple[int, float | None, float]]  # (event index, old max, new max)

    def to_csv(self, events: list[TraceEvent]) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "candidate_id", "end_ts", "quality", "cummax"])
        for i, (e, q, m) in enumerate(zip(events, self.quality, self.cummax)):
            w.writerow([i, e.candidate_id, repr(e.end_ts), repr(q), repr(m)])
        return buf.getvalue()

    def steps_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "old_max", "new_max", "gain"])
        for i, old, new in self.steps:
            w.writerow([i, "" if old is None else repr(old), repr(new), "" if old is None else repr(new - old)])
        return buf.getvalue()


def quality_series(events: list[TraceEvent]) -> QualitySeries:
    qs = [e.quality for e in events]
    cummax = []
    steps = []
    best = None
    for i, q in enumerate(qs):
        if best is None or q > best:
            steps.append((i, best, q))
            best = q
        cummax.append(best)
    return QualitySeries(qs, cummax, steps)


# -- donors --------------------------------------------------------------------

def donor_frequency(events: list[TraceEvent], window_size: int = 100) -> list[tuple[int, dict[int, int]]]:
    """(window_end, {donor_id: count}) for every trailing window of ``window_size`` events."""
    if not has_transfer(events):
        raise ValueError("trace has no donor fields; record it with transfer enabled")
    if not 1 <= window_size <= len(events):
        raise ValueError(f"window of {window_size} does not fit a trace of {len(events)} events")
    donors = [e.donor_id for e in events]
    counts = Counter(d for d in donors[:window_size] if d is not None)
    out = [(window_size, dict(counts))]
    for end in range(window_size, len(events)):
        new, old = donors[end], donors[end - window_size]
        if new is not None:
            counts[new] += 1
        if old is not None:
            counts[old] -= 1
            if counts[old] == 0:
                del counts[old]
        out.append((end + 1, dict(counts)))
    return out


@dataclass
class LocalityReport:
    donors: list[int]  # donors analysed, most popular first
    runs: list[tuple[int, int, int, float]]  # (worker, donor, run length, first begin_ts)
    cooccurrence: dict[tuple[int, int], int]  # (time bucket, donor) -> distinct workers
    time_bucket: float

    def runs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["worker_id", "donor_id", "run_length", "start_ts"])
        w.writerows([r[0], r[1], r[2], repr(r[3])] for r in self.runs)
        return buf.getvalue()

    def cooccurrence_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bucket", "bucket_start", "donor_id", "workers"])
        for (b, d), n in sorted(self.cooccurrence.items()):
            w.writerow([b, repr(b * self.time_bucket), d, n])
        return buf.getvalue()


def worker_locality(
    events: list[TraceEvent], top_k: int = 3, time_bucket: float = 60.0, skip_most_popular: bool = False
) -> LocalityReport:
    """Per-worker repeat runs and cross-worker co-occurrence of popular donors.

    With ``skip_most_popular`` the single most frequent donor is left out and
    the next ``top_k`` are analysed.
    """
    if not has_transfer(events):
        raise ValueError("trace has no donor fields; record it with transfer enabled")
    if top_k < 1 or time_bucket <= 0:
        raise ValueError("top_k must be positive and time_bucket > 0")
    freq = Counter(e.donor_id for e in events if e.donor_id is not None)
    ranked = sorted(freq, key=lambda d: (-freq[d], d))
    start = 1 if skip_most_popular else 0
    chosen = ranked[start:start + top_k]
    chosen_set = set(chosen)

    by_worker = defaultdict(list)
    for e in sorted(events, key=lambda e: (e.begin_ts, e.candidate_id)):
        by_worker[e.worker_id].append(e)
    runs = []
    for wid in sorted(by_worker):
        cur, length, t0 = None, 0, 0.0
        for e in by_worker[wid]:
            d = e.donor_id if e.donor_id in chosen_set else None
            if d is not None and d == cur:
                length += 1
                continue
            if cur is not None:
                runs.append((wid, cur, length, t0))
            cur, length, t0 = d, (1 if d is not None else 0), e.begin_ts
        if cur is not None:
            runs.append((wid, cur, length, t0))

    workers = defaultdict(set)
    for e in events:
        if e.donor_id in chosen_set:
            workers[(int(e.begin_ts // time_bucket), e.donor_id)].add(e.worker_id)
    co = {k: len(v) for k, v in workers.items()}
    return LocalityReport(chosen, runs, co, time_bucket)


# -- donor delay ---------------------------------------------------------------

@dataclass
class DonorDelay:
    trials: int  # stage-2 samplings while some new best was exposed
    selections: int  # exposures that ended with the best being picked as parent
    exposures: int
    completed_waits: list[int]  # trial counts of the exposures that ended in a selection

    @property
    def mean(self) -> float:
        """Censoring-aware mean wait: exposure trials per selection."""
        return self.trials / self.selections if self.selections else math.inf

    @property
    def naive_mean(self) -> float:
        w = self.completed_waits
        return sum(w) / len(w) if w else math.inf


def donor_delay(events: list[TraceEvent], population_size: int) -> DonorDelay:
    """Samplings between a new cumulative best entering the population and its first use as parent.

    Needs a debug trace (``parent_id``).  An exposure starts when a candidate
    completes with a quality above every earlier one and ends at its first
    selection, or is censored when a better candidate arrives or it retires.
    """
    if any(e.stage == 2 and e.parent_id is None for e in events):
        raise ValueError("donor_delay needs a debug trace with parent_id")
    order = {e.candidate_id: i for i, e in enumerate(events)}  # completion position
    dispatches = sorted((e for e in events if e.stage == 2), key=lambda e: (e.begin_ts, e.candidate_id))
    ci = 0
    best_q = None
    champ = None  # (candidate_id, completion position, trials so far)
    trials = selections = exposures = 0
    waits = []
    for d in dispatches:
        while ci < len(events) and events[ci].end_ts <= d.begin_ts:
            e = events[ci]
            if best_q is None or e.quality > best_q:
                best_q = e.quality
                champ = [e.candidate_id, ci, 0]
                exposures += 1
            ci += 1
        if champ is None:
            continue
        if order[champ[0]] < ci - population_size:  # retired
            champ = None
            continue
        champ[2] += 1
        trials += 1
        if d.parent_id == champ[0]:
            selections += 1
            waits.append(champ[2])
            champ = None
    return DonorDelay(trials, selections, exposures, waits)
