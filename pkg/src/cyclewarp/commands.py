"""File-level commands behind the command-line interface.

Every command reads a :class:`RunConfig`, writes into ``config.out`` and is
deterministic given the configuration and seed. Output files carry no
timestamps, so reruns are byte-identical.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .aggregate import Segment, SegmentSet, age_ci, aggregate, date_observations, timeline_rows
from .bootstrap import diagnostics, percentile_ci, relative_differences, residual_bootstrap
from .config import RunConfig
from .errors import ConfigError, CycleWarpError, NumericalError
from .formats import (read_json, read_segments, read_table, safe_label, write_json,
                      write_segments, write_table)
from .model import PARAM_KEYS, GrowthPath, ModelParams, Signal
from .preprocess import center, normalize_amplitude
from .saem import FitResult, estimate
from .simulate import draw_params, simulate_signal
from .streams import derive_int, generator, resolve_threads, substream

log = logging.getLogger(__name__)

# substream roots per command, so commands never share random numbers
_SIM, _FIT, _BOOT, _AGG, _BENCH = range(5)


def _metadata(cfg: RunConfig, command: str, **extra):
    return {"package": "cyclewarp", "version": __version__, "command": command,
            "seed": cfg.seed, **extra}


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- simulate ---------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    sc = cfg.simulate
    out = _outdir(cfg)
    explicit = sc.explicit_params()
    segments, paths, records = [], [], []
    for k in range(sc.count):
        seed_k = derive_int(cfg.seed, _SIM, k)
        rng = generator(seed_k)
        params = explicit if explicit is not None else draw_params(sc.n, rng, sc.boxes, sc.delta)
        sim = simulate_signal(params, sc.n, sc.delta, rng, sc.substeps)
        label = str(k) if sc.count > 1 else "0"
        segments.append((label, sim.signal))
        paths.append((label, sim))
        records.append({"segment": label, "seed": seed_k, "theta": sim.params.as_dict(),
                        "cycles": sim.cycles, "feller": sim.params.feller})
    write_segments(out / "signal.csv", segments)
    cols = {"segment": [], "x": [], "xi": [], "g": [], "f": []}
    for label, sim in paths:
        m = sim.signal.y.size
        cols["segment"] += [label] * m
        cols["x"] += list(sim.signal.x)
        cols["xi"] += list(sim.path.xi)
        cols["g"] += list(sim.path.g)
        cols["f"] += list(sim.noise_free)
    write_table(out / "true_path.csv", cols)
    write_json(out / "theta.json", {"metadata": _metadata(cfg, "simulate", n=sc.n, delta=sc.delta),
                                    "simulations": records})
    print(f"simulated {sc.count} signal(s) of n={sc.n} into {out}")
    return 0


# --- fit ----------------------------------------------------------------------

def preprocess_signal(signal: Signal, cfg: RunConfig) -> Signal:
    mode = cfg.preprocess.mode
    if mode == "normalize":
        return normalize_amplitude(signal, cfg.preprocess.window_fraction)[0]
    if mode == "center":
        return center(signal)
    return signal


def fit_files(out: Path, label: str):
    s = safe_label(label)
    return {"fit": out / f"fit_{s}.json", "fitted": out / f"fitted_{s}.csv",
            "trace": out / f"trace_{s}.csv", "diagnostics": out / f"diagnostics_{s}.csv",
            "bootstrap": out / f"bootstrap_{s}.csv", "reldiff": out / f"reldiff_{s}.csv"}


def write_fit(out: Path, label: str, order: int, original: Signal, signal: Signal,
              res: FitResult, meta: dict):
    files = fit_files(out, label)
    write_json(files["fit"], {
        "segment": label, "order": order, "n": signal.n, "delta": signal.delta,
        "theta_hat": res.theta_hat.as_dict(), "theta0": res.theta0.as_dict(),
        "cycles": res.cycles, "converged": res.converged, "iterations": res.iterations,
        "preprocessing": {"ybar": signal.preproc.ybar, "window": signal.preproc.window},
        "diagnostics": res.diagnostics, "metadata": meta})
    write_table(files["fitted"], {"x": signal.x, "y": signal.y, "y_hat": res.fitted,
                                  "g": res.path.g, "xi": res.path.xi, "y_input": original.y})
    if res.trace:
        keys = list(res.trace[0])
        write_table(files["trace"], {k: [row[k] for row in res.trace] for k in keys})
    d = diagnostics(signal, res)
    write_table(files["diagnostics"], {"index": np.arange(signal.y.size), "x": signal.x,
                                       "residual": d.residuals, "qq_theoretical": d.qq[:, 0],
                                       "qq_empirical": d.qq[:, 1]})


def cmd_fit(cfg: RunConfig) -> int:
    if not cfg.input:
        raise ConfigError("fit needs an input file (--input or 'input' in the config)")
    segments = read_segments(cfg.input)
    out = _outdir(cfg)
    threads = resolve_threads(cfg.threads)
    failed = []
    for order, (label, raw) in enumerate(segments):
        seed_k = derive_int(cfg.seed, _FIT, order)
        try:
            sig = preprocess_signal(raw, cfg)
            res = estimate(sig, cfg.saem, cfg.init, seed_k, threads)
        except NumericalError as exc:
            log.error("segment %s failed: %s", label, exc)
            print(f"segment {label}: fit failed: {exc}")
            failed.append(label)
            continue
        write_fit(out, label, order, raw, sig, res, _metadata(cfg, "fit", segment_seed=seed_k))
        print(f"segment {label}: cycles={res.cycles:.4f} iterations={res.iterations} "
              f"converged={str(res.converged).lower()}")
    write_json(out / "segments.json", {"segments": [lab for lab, _ in segments],
                                       "failed": failed, "metadata": _metadata(cfg, "fit")})
    if failed:
        raise NumericalError(f"{len(failed)} of {len(segments)} segment fit(s) failed: "
                             + ", ".join(failed))
    return 0


@dataclass(frozen=True)
class LoadedFit:
    label: str
    order: int
    signal: Signal
    fit: FitResult


def load_fits(out: Path):
    """Fit artifacts written by :func:`cmd_fit`, in segment order."""
    index = out / "segments.json"
    if not index.exists():
        raise ConfigError(f"no fit artifacts in {out} (run 'fit' first)")
    info = read_json(index)
    if info.get("failed"):
        raise ConfigError(f"segments without a fit: {', '.join(info['failed'])}")
    loaded = []
    for label in info["segments"]:
        files = fit_files(out, label)
        meta = read_json(files["fit"])
        tab = read_table(files["fitted"])
        sig = Signal(tab["x"], tab["y"], float(meta["delta"]))
        theta = ModelParams.from_dict(meta["theta_hat"])
        theta0 = ModelParams.from_dict(meta["theta0"])
        res = FitResult(theta_hat=theta, path=GrowthPath(tab["xi"], tab["g"]),
                        fitted=tab["y_hat"], trace=[], cycles=float(meta["cycles"]),
                        converged=bool(meta["converged"]), iterations=int(meta["iterations"]),
                        theta0=theta0)
        loaded.append(LoadedFit(label, int(meta["order"]), sig, res))
    return sorted(loaded, key=lambda f: f.order)


# --- bootstrap --------------------------------------------------------------

def cmd_bootstrap(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    bc = cfg.bootstrap
    threads = resolve_threads(cfg.threads)
    for lf in load_fits(out):
        files = fit_files(out, lf.label)
        seed_k = derive_int(cfg.seed, _BOOT, lf.order)
        run = residual_bootstrap(lf.signal, lf.fit, bc.M, cfg.saem, seed_k, cfg.init,
                                 bc.warm_start, threads, bc.max_failure_rate)
        ok = dict(zip(run.indices.tolist(), range(len(run.estimates))))
        cols = {"replicate": list(range(bc.M)), "seed": run.seeds}
        for key in PARAM_KEYS:
            cols[key] = [getattr(run.estimates[ok[k]], key) if k in ok else math.nan
                         for k in range(bc.M)]
        cols["cycles"] = [float(run.cycles[ok[k]]) if k in ok else math.nan for k in range(bc.M)]
        cols["converged"] = [bool(run.converged[ok[k]]) if k in ok else False
                             for k in range(bc.M)]
        cols["failed"] = [k not in ok for k in range(bc.M)]
        write_table(files["bootstrap"], cols)
        rel = relative_differences(lf.fit.theta_hat, run.estimates)
        rel_cols = {"replicate": run.indices}
        rel_cols.update({k: rel[k] for k in PARAM_KEYS})
        rel_cols["cycles"] = (run.cycles - lf.fit.cycles) / lf.fit.cycles
        write_table(files["reldiff"], rel_cols)
        lo, hi = percentile_ci(run.cycles, cfg.aggregate.level) if run.cycles.size else (math.nan,) * 2
        print(f"segment {lf.label}: {len(run.estimates)}/{bc.M} replicates, cycles "
              f"{lf.fit.cycles:.3f} ({lo:.3f}, {hi:.3f})")
    return 0


# --- aggregate --------------------------------------------------------------

def cmd_aggregate(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    ac = cfg.aggregate
    fits = load_fits(out)
    segs = []
    for lf in fits:
        boot = None
        if ac.with_ci:
            path = fit_files(out, lf.label)["bootstrap"]
            if not path.exists():
                raise ConfigError(f"segment {lf.label}: no bootstrap replicates at {path} "
                                  "(run 'bootstrap' or set aggregate.with_ci to false)")
            tab = read_table(path)
            boot = tab["cycles"][~tab["failed"].astype(bool)]
        segs.append(Segment(lf.signal, lf.fit.path.g, boot, lf.label))
    sset = SegmentSet(segs, ac.death_year)
    agg = aggregate(sset)
    write_table(out / "timeline.csv", timeline_rows(agg, ac.death_year))
    years = date_observations(agg, ac.death_year)
    report = {"age": agg.age, "age_rounded": int(round(agg.age)), "death_year": ac.death_year,
              "first_year": float(years[0]), "ci_low": None, "ci_high": None,
              "level": ac.level, "n_combinations": None,
              "per_segment_cycles": {lf.label: float(c) for lf, c in zip(fits, agg.segment_cycles)}}
    if ac.with_ci:
        est = age_ci(sset, ac.n_combinations, ac.level, derive_int(cfg.seed, _AGG),
                     resolve_threads(cfg.threads))
        report.update(ci_low=est.low, ci_high=est.high, n_combinations=ac.n_combinations)
    report["metadata"] = _metadata(cfg, "aggregate")
    write_json(out / "report.json", report)
    ci = f" CI ({report['ci_low']:.2f}, {report['ci_high']:.2f})" if ac.with_ci else ""
    print(f"age {agg.age:.3f} cycles (reported {report['age_rounded']}){ci}; "
          f"first year {years[0]:.2f}")
    return 0


# --- bench ------------------------------------------------------------------

def run_bench(cfg: RunConfig, callback=None):
    """Simulate, fit and score ``bench.count`` signals; returns the per-signal table."""
    bc = cfg.bench
    threads = resolve_threads(cfg.threads)
    rows = {"signal": [], "seed": [], "true_cycles": [], "est_cycles": [], "error": [],
            "converged": [], "failed": []}
    for k in range(bc.count):
        seed_k = derive_int(cfg.seed, _BENCH, k)
        rng = generator(seed_k, 0)
        params = draw_params(bc.n, rng, cfg.simulate.boxes)
        sim = simulate_signal(params, bc.n, 1.0, rng, cfg.simulate.substeps)
        try:
            res = estimate(sim.signal, cfg.saem, cfg.init, substream(seed_k, 1), threads)
            est, conv, bad = res.cycles, res.converged, False
        except CycleWarpError as exc:
            log.warning("bench signal %d failed: %s", k, exc)
            est, conv, bad = math.nan, False, True
        for key, v in zip(rows, (k, seed_k, sim.cycles, est, est - sim.cycles, conv, bad)):
            rows[key].append(v)
        if callback is not None:
            callback(k, sim.cycles, est)
    return rows


def bench_rates(rows):
    err = np.abs(np.asarray(rows["error"], dtype=float))
    err = np.where(np.isnan(err), np.inf, err)
    return float(np.mean(err <= 1.0)), float(np.mean(err <= 3.0))


def cmd_bench(cfg: RunConfig) -> int:
    out = _outdir(cfg)

    def report(k, truth, est):
        print(f"signal {k}: true {truth:.3f} estimated {est:.3f}", flush=True)

    rows = run_bench(cfg, report)
    within1, within3 = bench_rates(rows)
    write_table(out / "bench.csv", rows)
    write_json(out / "bench.json", {"count": cfg.bench.count, "n": cfg.bench.n,
                                    "within_1": within1, "within_3": within3,
                                    "metadata": _metadata(cfg, "bench")})
    print(f"within 1 cycle: {within1:.1%}; within 3 cycles: {within3:.1%}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "bootstrap": cmd_bootstrap,
            "aggregate": cmd_aggregate, "bench": cmd_bench}
