"""Acceptance criteria 1-11.

Run with ``pytest tests/test_acceptance.py -s`` (one PASS/FAIL line per
criterion is also printed in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import os
import random
import subprocess
import sys
import time
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))
import oracles  # noqa: E402

from nasevo import analytics as an
from nasevo import prob
from nasevo.cache_sim import CachePolicy, replay
from nasevo.engine import DurationModel, SearchConfig, run_search
from nasevo.space import SpaceSpec
from nasevo.trace import read_trace, write_trace

SEEDS = range(20)


@lru_cache(maxsize=None)
def default_run(seed: int):
    return run_search(SearchConfig(rng_seed=seed, debug=True), SpaceSpec())


def criterion_01_algorithm_fidelity():
    t0 = time.perf_counter()
    res = run_search(SearchConfig(rng_seed=0, debug=True), SpaceSpec())
    elapsed = time.perf_counter() - t0
    assert len(res.events) == 1000
    assert res.sample_population_sizes and set(res.sample_population_sizes) == {100}
    assert len(res.sample_population_sizes) == 900
    assert sorted(res.retired_insertion_indices) == list(range(900))
    by_id = {e.candidate_id: e for e in res.events}
    pos = {e.candidate_id: i for i, e in enumerate(res.events)}
    for e in res.events:
        if e.stage == 2:
            sampled = [by_id[i] for i in e.sampled_ids]
            # older (earlier completed) entry wins ties
            best = max(sampled, key=lambda x: (x.quality, -pos[x.candidate_id]))
            assert e.parent_id == best.candidate_id, e
    assert elapsed < 5.0, f"default run took {elapsed:.2f}s"
    return f"900 samplings at size 100, retired 0..899, runtime {elapsed:.2f}s"


def criterion_02_never_donor():
    violations = 0
    bottoms = 0
    for seed in SEEDS:
        events = default_run(seed).events
        bottom = oracles.bottom_for_life(events, 100, 5)
        bottoms += len(bottom)
        violations += sum(1 for e in events if e.donor_id in bottom)
    assert violations == 0, f"{violations} donations from bottom-for-life candidates"
    return f"0 violations ({bottoms} bottom-for-life candidates over 20 runs)"


def criterion_03_hypergeom_exact():
    rng = random.Random(3)
    for _ in range(200):
        N = rng.randint(1, 12)
        K = rng.randint(0, N)
        n = rng.randint(0, N)
        ref = oracles.hypergeom_enum(N, K, n)
        params = prob.HypergeomParams(N, K, n)
        pmf = {k: prob.hypergeom_pmf_exact(params, k) for k in range(-1, n + 2)}
        for k, v in pmf.items():
            assert v == ref.get(k, 0), (N, K, n, k)
        assert sum(pmf.values()) == 1
    return "200 parameter sets match enumeration; sums exactly 1"


def criterion_04_transfer_bound():
    exact = prob.transfer_prob_bound(100, 96, 5)
    mc = oracles.mc_no_better_sampled(100, 96, 5, 1_000_000, seed=4)
    assert abs(exact - math.comb(96, 5) / math.comb(100, 5)) < 1e-15
    assert abs(exact - mc) <= 0.002, (exact, mc)
    return f"bound {exact:.6f}, Monte Carlo {mc:.6f}"


def criterion_05_birthday():
    v = prob.birthday_threshold(365, 2, 0.5)
    assert abs(v - 22.49) <= 0.01, v
    spec = SpaceSpec()
    c = len({s[:3] for s in oracles.enumerate_space(spec.choices_per_slot, spec.validity_rules)})
    k_star = max(k for k in range(2, 100) if prob.birthday_threshold(c, k, 0.5) <= 100)
    observed = []
    for seed in SEEDS:
        stage1 = [e for e in default_run(seed).events if e.stage == 1]
        observed.append(oracles.max_multiplicity(tuple(e.sequence[:3]) for e in stage1))
    assert max(observed) <= k_star + 1, (k_star, observed)
    return f"c=365,k=2: {v:.4f}; c={c}, predicted k={k_star}, observed max {max(observed)}"


def criterion_06_delay_bound():
    bound = prob.quanta_delay_bound(5, 25, 60.0, 10.0)
    waits = []
    for seed in range(50):
        cfg = SearchConfig(rng_seed=seed, scheduling="quanta", s_wait=5, num_workers=25,
                           duration=DurationModel("normal", 60.0, 10.0))
        waits.append(run_search(cfg, SpaceSpec()).delay.mean_wait)
    measured = sum(waits) / len(waits)
    assert measured <= bound * 1.10, (measured, bound)
    return f"mean wait {measured:.3f}s <= 1.10 x bound {bound:.3f}s"


def criterion_07_donor_delay():
    trials = selections = 0
    for seed in SEEDS:
        d = an.donor_delay(default_run(seed).events, 100)
        trials += d.trials
        selections += d.selections
    mean = trials / selections
    target = prob.expected_evals_until_donor(100, 5)
    assert abs(mean - target) <= 0.15 * target, (mean, target)
    return f"{mean:.2f} evaluations ({trials} trials / {selections} selections) vs {target:.0f}"


def criterion_08_tier_emergence():
    with_t1 = 0
    stage1_max = []
    for seed in SEEDS:
        events = default_run(seed).events
        tiers = an.classify_tiers(an.histogram_at(events, 800, 100, 3))
        with_t1 += bool(tiers.members(1))
        stage1_max.append(max(an.histogram_at(events, 100, 100, 3).counts.values()))
    assert with_t1 >= 15, f"tier-1 prefix in only {with_t1}/20 seeds"
    assert max(stage1_max) <= 8, stage1_max
    return f"tier-1 at 800 in {with_t1}/20 seeds; stage-1 max count {max(stage1_max)}"


def criterion_09_analytics_oracles(tmp_path: Path):
    for seed in range(5):
        events = default_run(seed).events
        trie = an.build_trie(events, 0.01)
        got = {p: n.count for p, n in trie.nodes().items()}
        assert got == oracles.brute_trie_nodes([e.sequence for e in events], 0.01)
        for h in an.window_histograms(events, 100, 3):
            assert sum(h.counts.values()) == 100
        qs = an.quality_series(events)
        assert qs.cummax == oracles.running_max([e.quality for e in events])
        a, b = tmp_path / f"a{seed}.jsonl", tmp_path / f"b{seed}.jsonl"
        write_trace(events, a)
        back = read_trace(a)
        assert back == events
        write_trace(back, b)
        assert a.read_bytes() == b.read_bytes()
    return "trie, histograms, cummax and byte round-trip agree on 5 traces"


def _cache_traces():
    for seed in SEEDS:
        yield f"default/{seed}", default_run(seed).events, 100, 5
    for seed in range(5):
        cfg = SearchConfig(rng_seed=seed, total_candidates=300, population_size=30, sample_size=3, num_workers=8)
        yield f"small/{seed}", run_search(cfg, SpaceSpec()).events, 30, 3
        cfg = SearchConfig(rng_seed=seed, scheduling="quanta", s_wait=5)
        yield f"quanta/{seed}", run_search(cfg, SpaceSpec()).events, 100, 5
        cfg = SearchConfig(rng_seed=seed, duration=DurationModel("lognormal", 60.0, 30.0))
        yield f"lognormal/{seed}", run_search(cfg, SpaceSpec()).events, 100, 5


def criterion_10_cache_dominance():
    policies = [CachePolicy.parse(t) for t in ("store-all", "skip-bottom", "prob:0.01", "tier:5:100")]
    policies.append(CachePolicy.parse("store-all", capacity=50))
    checked = strict = 0
    for name, events, p, s in _cache_traces():
        reports = {pol.label: replay(events, pol, p, s) for pol in policies}  # replay() checks the identities
        sa, sb = reports["store-all"], reports["skip-bottom"]
        assert sb.donor_misses == 0, name
        if oracles.bottom_for_life(events, p, s):
            assert sb.stores_made < sa.stores_made, name
            strict += 1
        checked += 1
    return f"{checked} traces: skip-bottom never misses, stores fewer on {strict}"


def criterion_11_determinism(tmp_path: Path):
    env = dict(os.environ)
    outs = []
    for i in range(2):
        out = tmp_path / f"inv{i}"
        for argv in (
            ["run", "--seed", "11", "--out", str(out / "run")],
            ["cache-sim", str(out / "run" / "trace.jsonl"), "--policy", "skip-bottom", "--policy", "tier:5:100",
             "--out", str(out / "cache")],
            ["analyze", str(out / "run" / "trace.jsonl"), "--out", str(out / "analyze")],
        ):
            subprocess.run([sys.executable, "-m", "nasevo.cli", *argv], check=True, env=env,
                           stdout=subprocess.DEVNULL)
        outs.append(out)
    n = 0
    for f in sorted(outs[0].rglob("*")):
        if f.is_file() and f.name != "manifest.json":
            assert f.read_bytes() == (outs[1] / f.relative_to(outs[0])).read_bytes(), f
            n += 1
    return f"{n} output files byte-identical across two invocations"


CRITERIA = [
    criterion_01_algorithm_fidelity,
    criterion_02_never_donor,
    criterion_03_hypergeom_exact,
    criterion_04_transfer_bound,
    criterion_05_birthday,
    criterion_06_delay_bound,
    criterion_07_donor_delay,
    criterion_08_tier_emergence,
    criterion_09_analytics_oracles,
    criterion_10_cache_dominance,
    criterion_11_determinism,
]


def _call(fn, tmp_path):
    return fn(tmp_path) if fn.__code__.co_argcount else fn()


@pytest.mark.parametrize("fn", CRITERIA, ids=[f.__name__.removeprefix("criterion_") for f in CRITERIA])
def test_criterion(fn, tmp_path, record_property):
    detail = _call(fn, tmp_path)
    record_property("detail", detail)
    print(f"\n{fn.__name__}: {detail}")


if __name__ == "__main__":
    import tempfile

    failed = 0
    for fn in CRITERIA:
        with tempfile.TemporaryDirectory() as d:
            try:
                detail = _call(fn, Path(d))
                print(f"PASS {fn.__name__}: {detail}")
            except Exception as exc:  # report and keep going
                failed += 1
                print(f"FAIL {fn.__name__}: {type(exc).__name__}: {exc}")
    sys.exit(1 if failed else 0)
