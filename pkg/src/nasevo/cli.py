"""Command line entry point: ``nasevo run|analyze|prob|cache-sim|rerun``.

Every command that writes files stages them in a temporary directory next to
the output directory and moves them into place only after everything
succeeded, together with a ``manifest.json``.  The default output directory
comes from ``$NASEVO_OUT`` (falling back to ``./nasevo_out``), with one
subdirectory per command.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import analytics as an
from . import prob
from .cache_sim import CachePolicy, replay, reports_to_csv
from .config import ConfigError, load_search_config, load_space_spec, search_to_dict, space_to_dict
from .engine import SearchConfig, run_search
from .space import SpaceSpec
from .trace import TraceFormatError, has_transfer, read_trace, write_trace

OUT_ENV = "NASEVO_OUT"
MANIFEST = "manifest.json"


class CliError(Exception):
    pass


def _default_out(command: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "nasevo_out")) / command


def _versions() -> dict:
    return {"nasevo": __version__, "python": platform.python_version(), "numpy": np.__version__}


class _Staging:
    """Collects outputs in a temp dir and publishes them atomically-ish on success."""

    def __init__(self, out: Path):
        self.out = out
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def write(self, name: str, text: str):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    def commit(self, manifest: dict):
        manifest["outputs"] = sorted(self.files + [MANIFEST])
        self.write(MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        self.out.mkdir(parents=True, exist_ok=True)
        for name in self.files:
            os.replace(self.dir / name, self.out / name)
        shutil.rmtree(self.dir, ignore_errors=True)

    def abort(self):
        shutil.rmtree(self.dir, ignore_errors=True)


def _manifest(command: str, argv: list[str], out: Path, **extra) -> dict:
    return {"command": command, "argv": argv, "out": str(out), "versions": _versions(), **extra}


def _neighbour_manifest(trace_path: Path) -> dict | None:
    p = trace_path.parent / MANIFEST
    if not p.exists():
        return None
    try:
        return json.loads(p.read_text())
    except (OSError, json.JSONDecodeError):
        return None


# -- run -----------------------------------------------------------------------

def cmd_run(args, argv, stage: _Staging) -> dict:
    spec = load_space_spec(args.space_config) if args.space_config else SpaceSpec()
    cfg = load_search_config(args.search_config) if args.search_config else SearchConfig()
    if args.seed is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    result = run_search(cfg, spec)
    write_trace(result.events, stage.path("trace.jsonl"))
    if result.repo is not None:
        stage.write("repo.jsonl", "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in result.repo.dump()))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["worker_id", "idle_wait"])
    for wid in sorted(result.delay.per_worker):
        w.writerow([wid, repr(round(result.delay.per_worker[wid], 6))])
    stage.write("idle.csv", buf.getvalue())
    print(f"{len(result.events)} candidates, best quality {max(e.quality for e in result.events):.4f}, "
          f"mean idle wait {result.delay.mean_wait:.3f}s -> {args.out}")
    return _manifest(
        "run", argv, args.out,
        config_paths={"space": args.space_config, "search": args.search_config},
        seed=cfg.rng_seed,
        config={"space": space_to_dict(spec), "search": search_to_dict(cfg)},
    )


# -- analyze -------------------------------------------------------------------

def _donor_csv(freq) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window_end", "donor_id", "count"])
    for end, counts in freq:
        for d in sorted(counts):
            w.writerow([end, d, counts[d]])
    return buf.getvalue()


def cmd_analyze(args, argv, stage: _Staging) -> dict:
    events = _read(args.trace)
    selected = {k for k in ("trie", "tiers", "quality", "locality") if getattr(args, k) not in (None, False)}
    if not selected:
        selected = {"trie", "tiers", "quality"} | ({"locality"} if has_transfer(events) else set())
    if "locality" in selected and not has_transfer(events):
        raise CliError(f"{args.trace}: --locality needs a trace recorded with transfer enabled")
    theta = args.trie if args.trie is not None else 0.01

    if "trie" in selected:
        trie = an.build_trie(events, theta)
        stage.write("trie.dot", trie.to_dot())
        stage.write("trie.csv", trie.to_csv())
    if "tiers" in selected:
        hists = an.window_histograms(events, args.window, args.prefix_len)
        ids = an.prefix_ids(events, args.prefix_len)
        stage.write("histograms.csv", an.histograms_to_csv(hists, ids))
        reports = [an.classify_tiers(h) for h in hists]
        stage.write("tier_summary.csv", an.tier_summary_csv(reports))
        snaps = [n for n in (100, 500, 800) if args.window <= n <= len(events)]
        snap_h = [hists[n - args.window] for n in snaps]
        stage.write("tiers.csv", an.tiers_to_csv([reports[n - args.window] for n in snaps], snap_h, ids))
    if "quality" in selected:
        qs = an.quality_series(events)
        stage.write("quality.csv", qs.to_csv(events))
        stage.write("steps.csv", qs.steps_csv())
    if "locality" in selected:
        rep = an.worker_locality(events)
        stage.write("locality_runs.csv", rep.runs_csv())
        stage.write("locality_cooccurrence.csv", rep.cooccurrence_csv())
        stage.write("donors.csv", _donor_csv(an.donor_frequency(events, min(args.window, len(events)))))
    print(f"analyzed {len(events)} events ({', '.join(sorted(selected))}) -> {args.out}")
    return _manifest(
        "analyze", argv, args.out, trace=str(args.trace),
        config={"trie": theta, "window": args.window, "prefix_len": args.prefix_len, "selected": sorted(selected)},
    )


def _read(path) -> list:
    try:
        return read_trace(path)
    except FileNotFoundError:
        raise CliError(f"{path}: no such trace file") from None


# -- prob ----------------------------------------------------------------------

def cmd_prob(args) -> None:
    f = args.formula
    if f == "hypergeom":
        params = prob.HypergeomParams(args.N, args.K, args.n)
        v = prob.hypergeom_pmf_exact(params, args.k) if args.exact else prob.hypergeom_pmf(params, args.k)
        print(v if args.exact else f"{v:.10g}")
    elif f == "transfer-bound":
        print(f"{prob.transfer_prob_bound(args.P, args.rank, args.s):.10g}")
    elif f == "birthday":
        print(f"{prob.birthday_threshold(args.c, args.k, args.p):.10g}")
    elif f == "order-stat":
        print(f"{prob.normal_order_stat(args.r, args.w):.10g}")
    elif f == "delay-bound":
        print(f"{prob.quanta_delay_bound(args.swait, args.w, args.mu, args.sigma):.10g}")
    elif f == "evals-until-donor":
        print(f"{prob.expected_evals_until_donor(args.P, args.s):.10g}")


# -- cache-sim -----------------------------------------------------------------

def cmd_cache_sim(args, argv, stage: _Staging) -> dict:
    events = _read(args.trace)
    p, s = args.population_size, args.sample_size
    if p is None or s is None:
        m = _neighbour_manifest(Path(args.trace)) or {}
        search = m.get("config", {}).get("search", {})
        p = p if p is not None else search.get("population_size", 100)
        s = s if s is not None else search.get("sample_size", 5)
    policies = [CachePolicy.parse(t, args.capacity) for t in (args.policy or ["store-all"])]
    reports = [replay(events, pol, p, s) for pol in policies]
    if len(reports) == 1:
        stage.write("report.csv", reports[0].to_csv())
    else:
        stage.write("report.csv", reports_to_csv(reports))
    stage.write("summary.txt", "".join(r.summary() + "\n" for r in reports))
    for r in reports:
        print(r.summary())
    return _manifest(
        "cache-sim", argv, args.out, trace=str(args.trace),
        config={"policies": [pol.label for pol in policies], "population_size": p, "sample_size": s},
    )


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nasevo", description="Simulated parallel regularized evolution and trace analytics.")
    ap.add_argument("--version", action="version", version=f"nasevo {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a simulated search and write its trace")
    r.add_argument("space_config", nargs="?", help="space TOML (default: built-in)")
    r.add_argument("search_config", nargs="?", help="search TOML (default: built-in)")
    r.add_argument("--seed", type=int, help="override rng_seed")
    r.add_argument("--out", type=Path)

    a = sub.add_parser("analyze", help="analyze a trace file")
    a.add_argument("trace", type=Path)
    a.add_argument("--trie", type=float, nargs="?", const=0.01, metavar="THETA", help="prefix trie, pruned below THETA")
    a.add_argument("--window", type=int, default=100)
    a.add_argument("--prefix-len", type=int, default=3)
    a.add_argument("--tiers", action="store_true", help="window histograms and popularity tiers")
    a.add_argument("--quality", action="store_true", help="quality and cumulative max series")
    a.add_argument("--locality", action="store_true", help="donor frequency and worker locality")
    a.add_argument("--out", type=Path)

    pr = sub.add_parser("prob", help="evaluate a probability formula")
    fs = pr.add_subparsers(dest="formula", required=True)
    f = fs.add_parser("hypergeom", help="P(X = k) for X ~ H(N, K, n)")
    for name in ("--N", "--K", "--n", "--k"):
        f.add_argument(name, type=int, required=True)
    f.add_argument("--exact", action="store_true", help="print the exact rational")
    f = fs.add_parser("transfer-bound", help="chance a rank-r member is never sampled in one draw")
    f.add_argument("--P", type=int, required=True)
    f.add_argument("--rank", type=int, required=True)
    f.add_argument("--s", type=int, required=True)
    f = fs.add_parser("birthday", help="draws needed for a k-fold collision with probability p")
    f.add_argument("--c", type=float, required=True)
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--p", type=float, default=0.5)
    f = fs.add_parser("order-stat", help="expected r-th of w standard normal order statistics")
    f.add_argument("--r", type=int, required=True)
    f.add_argument("--w", type=int, required=True)
    f = fs.add_parser("delay-bound", help="quanta scheduling idle-wait bound")
    f.add_argument("--swait", type=int, required=True)
    f.add_argument("--w", type=int, required=True)
    f.add_argument("--mu", type=float, required=True)
    f.add_argument("--sigma", type=float, required=True)
    f = fs.add_parser("evals-until-donor", help="expected evaluations before a new best is sampled")
    f.add_argument("--P", type=int, required=True)
    f.add_argument("--s", type=int, required=True)

    c = sub.add_parser("cache-sim", help="replay a transfer trace against cache admission policies")
    c.add_argument("trace", type=Path)
    c.add_argument("--policy", action="append",
                   help="store-all | skip-bottom | prob:EPS | tier:MIN:WINDOW (repeatable)")
    c.add_argument("--capacity", type=int, help="maximum resident entries (default unbounded)")
    c.add_argument("--population-size", type=int, help="default: from the trace's manifest, else 100")
    c.add_argument("--sample-size", type=int, help="default: from the trace's manifest, else 5")
    c.add_argument("--out", type=Path)

    rr = sub.add_parser("rerun", help="repeat the command recorded in a manifest")
    rr.add_argument("manifest", type=Path)
    rr.add_argument("--out", type=Path, required=True)
    return ap


_WRITERS = {"run": cmd_run, "analyze": cmd_analyze, "cache-sim": cmd_cache_sim}


def _rerun_argv(manifest_path: Path, out: Path) -> list[str]:
    try:
        m = json.loads(manifest_path.read_text())
        argv = list(m["argv"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CliError(f"{manifest_path}: not a readable manifest ({exc})") from None
    if "--out" in argv:
        i = argv.index("--out")
        del argv[i:i + 2]
    return argv + ["--out", str(out)]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            return main(_rerun_argv(args.manifest, args.out))
        if args.command == "prob":
            cmd_prob(args)
            return 0
        if args.out is None:
            args.out = _default_out(args.command)
        stage = _Staging(Path(args.out))
        try:
            manifest = _WRITERS[args.command](args, argv, stage)
            stage.commit(manifest)
        except BaseException:
            stage.abort()
            raise
    except (CliError, ConfigError, TraceFormatError, ValueError, OSError, RuntimeError) as exc:
        print(f"nasevo {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
