"""Experiment runner: sweeps, Monte Carlo orchestration, and persistence.

Each experiment kind reproduces one study of the evaluation suite at
configurable scale, writes a provenance-stamped CSV plus a JSON summary, and
emits a small matplotlib script for the figures (data and plotting stay
separate; the runner never renders images).

SNR convention: SNR_dB = 10 log10(P_T / sigma_n^2) with the power budget
fixed and the noise power swept.  Every output header records this.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis, estimation, txdesign
from .channel import ChannelSet, build_channels
from .estimation import EstimationResult, GridSpec
from .scene import PolarLocation, Scenario, load_scenario, polar_to_cartesian, validate_scene
from .txdesign import InfeasibleDesignError, TradeoffWeights

__all__ = [
    "EXPERIMENT_KINDS",
    "ExperimentSpec",
    "ResultTable",
    "RunResult",
    "monte_carlo",
    "run",
]

EXPERIMENT_KINDS = ("tradeoff", "beampattern", "source_count", "spectrum",
                    "rmse_crb", "kld_snr", "kld_map")

ARTIFACT_VERSION = "ldisac-0.1.0"

_DEFAULT_SNR = {
    "tradeoff": (20.0,),
    "beampattern": (20.0,),
    "source_count": (0.0, 10.0, 20.0, 30.0, 40.0),
    "spectrum": (30.0,),
    "rmse_crb": (0.0, 10.0, 20.0, 30.0, 40.0),
    "kld_snr": (0.0, 10.0, 20.0, 30.0, 40.0),
    "kld_map": (40.0,),
}

_SECURITY = TradeoffWeights(0.3, 0.7, 0.4)

_DEFAULT_WEIGHTS = {
    "tradeoff": tuple(
        TradeoffWeights(wc, round(1.0 - wc, 6), ws)
        for ws in (0.0, 0.5, 0.95)
        for wc in (0.0, 0.25, 0.5, 0.75, 1.0)
    ),
    "beampattern": (TradeoffWeights(0.5, 0.5, 0.95), TradeoffWeights(1.0, 0.0, 0.1),
                    TradeoffWeights(0.05, 0.95, 0.1), _SECURITY),
    "source_count": (_SECURITY,),
    "spectrum": (TradeoffWeights(0.3, 0.7, 0.1),),
    "rmse_crb": (_SECURITY,),
    "kld_snr": (TradeoffWeights(0.7, 0.3, 0.4), _SECURITY),
    "kld_map": (_SECURITY,),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment request; unset SNR/weight lists fall back to the
    kind-specific defaults."""

    scenario: str
    kind: str
    out_dir: str
    snr_db: tuple[float, ...] = ()
    weights: tuple[TradeoffWeights, ...] = ()
    trials: int = 50
    seed: int = 1
    smoothing: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; "
                             f"expected one of {EXPERIMENT_KINDS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def resolved_snr(self) -> tuple[float, ...]:
        return self.snr_db or _DEFAULT_SNR[self.kind]

    def resolved_weights(self) -> tuple[TradeoffWeights, ...]:
        return self.weights or _DEFAULT_WEIGHTS[self.kind]


@dataclass(frozen=True)
class ResultTable:
    """Rectangular results with a provenance header baked into the CSV."""

    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    provenance: dict

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for key in sorted(self.provenance):
                fh.write(f"# {key}={self.provenance[key]}\n")
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])


@dataclass(frozen=True)
class RunResult:
    status: int                # 0 ok, 2 nothing feasible
    tables: tuple[ResultTable, ...]
    paths: tuple[str, ...]
    summary: dict


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.12g}"
    if isinstance(v, (np.floating,)):
        return f"{float(v):.12g}"
    return str(v)


def monte_carlo(task, trials: int, seed: int, workers: int = 1):
    """Run ``task(trial_index, child_seed)`` over independent trials.

    Child seeds derive from (seed, trial_index) so results do not depend on
    execution order or parallelism.  Failed trials are returned as
    ``(index, exception)`` in a separate list.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")

    def child(i: int) -> int:
        # stable scalar seed per (seed, trial); SeedSequence mixes the pair
        return int(np.random.SeedSequence((seed, i)).generate_state(1)[0])

    results = [None] * trials
    failures: list[tuple[int, Exception]] = []

    def runner(i: int):
        try:
            return i, task(i, child(i)), None
        except Exception as exc:  # recorded, excluded from aggregates
            return i, None, exc

    if workers <= 1:
        items = list(map(runner, range(trials)))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            items = list(pool.map(runner, range(trials)))
    for i, value, exc in items:
        if exc is not None:
            failures.append((i, exc))
        else:
            results[i] = value
    return [r for r in results if r is not None], failures


# ---------------------------------------------------------------------------
# Shared design plumbing
# ---------------------------------------------------------------------------

class _Runner:
    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.scenario: Scenario = load_scenario(spec.scenario)
        self._psmax_cache: dict[tuple[str, float], float] = {}
        self._design_cache: dict = {}
        violations = validate_scene(self.scenario.config)
        self.scene_violations = violations

    def grid(self) -> GridSpec:
        return GridSpec.from_bounds(self.scenario.angle_grid_deg,
                                    self.scenario.range_grid_m)

    def arrival_grid(self) -> GridSpec:
        # eavesdropper searches its own frame; reuse the scenario extents
        return self.grid()

    def channels(self, snr_db: float) -> ChannelSet:
        cfg = self.scenario.config
        noise = cfg.power_budget / 10 ** (snr_db / 10.0)
        return build_channels(cfg.with_noise_power(noise))

    def sinr_floor(self, ch: ChannelSet, snr_db: float, weights: TradeoffWeights) -> float:
        if weights.w_s <= 0 or ch.config.n_targets == 0:
            return 0.0
        key = (self.scenario.sha256, snr_db)
        if key not in self._psmax_cache:
            self._psmax_cache[key] = txdesign.max_radar_sinr(ch)
        return weights.w_s * self._psmax_cache[key]

    def design(self, snr_db: float, weights: TradeoffWeights):
        """(channels, covariance design, hybrid design), cached per point."""
        key = (snr_db, weights)
        if key not in self._design_cache:
            ch = self.channels(snr_db)
            floor = self.sinr_floor(ch, snr_db, weights)
            cov = txdesign.optimize(ch, weights, rank_constrained=True,
                                    sinr_floor=floor)
            hyb = txdesign.hybrid_design(ch, cov)
            self._design_cache[key] = (ch, cov, hyb)
        return self._design_cache[key]

    def provenance(self, extra: dict | None = None) -> dict:
        p = {
            "scenario": self.scenario.name,
            "scenario_sha256": self.scenario.sha256,
            "seed": self.spec.seed,
            "version": ARTIFACT_VERSION,
            "snr_definition": "SNR_dB = 10*log10(power_budget/noise_power), transmit side",
        }
        if self.scene_violations:
            p["scene_violations"] = ";".join(self.scene_violations)
        if extra:
            p.update(extra)
        return p


def _alice_estimates(ch, hyb, cfg, grid, seed, n_targets, methods=("mle", "music", "capon")):
    """One trial of legitimate-side estimation; returns {method: EstimationResult}."""
    frame_a, _, x = estimation.synthesize_echoes(ch, hyb, seed)
    clean = estimation.alice_cancel(frame_a, ch, x)
    out = {}
    if "mle" in methods:
        out["mle"] = estimation.mle_estimate(clean, x, cfg, n_targets, grid=grid)
    if "music" in methods or "capon" in methods:
        cov = estimation.sample_covariance(clean)
        if "music" in methods:
            sp = estimation.music_spectrum(cov, cfg.alice_rx_array, n_targets, grid)
            pk = estimation.peak_search(sp, n_targets)
            out["music"] = EstimationResult(source_count=len(pk.peaks),
                                            locations=tuple(pk.locations()),
                                            method="music")
        if "capon" in methods:
            sp = estimation.capon_spectrum(cov, cfg.alice_rx_array, grid)
            pk = estimation.peak_search(sp, n_targets)
            out["capon"] = EstimationResult(source_count=len(pk.peaks),
                                            locations=tuple(pk.locations()),
                                            method="capon")
    return out


def _eve_estimates(ch, hyb, cfg, grid, seed, smoothing, methods=("music", "capon")):
    """One trial of eavesdropper estimation in its own polar frame."""
    _, frame_e, _ = estimation.synthesize_echoes(ch, hyb, seed)
    proc = estimation.eve_processing(frame_e, ch, smoothing=smoothing)
    out = {}
    count = proc.source_count
    if count == 0:
        empty = EstimationResult(source_count=0, locations=(), method="music",
                                 smoothing=smoothing)
        return {m: replace(empty, method=m) for m in methods}, proc
    n_sub = min(count, proc.music_covariance.shape[0] - 1)
    if "music" in methods:
        sp = estimation.music_spectrum(proc.music_covariance, proc.geometry, n_sub,
                                       grid, projector=proc.music_transform)
        pk = estimation.peak_search(sp, count)
        out["music"] = EstimationResult(source_count=len(pk.peaks),
                                        locations=tuple(pk.locations()),
                                        method="music", smoothing=smoothing)
    if "capon" in methods:
        tr = None if smoothing else proc.music_transform
        sp = estimation.capon_spectrum(proc.capon_covariance, proc.geometry, grid,
                                       projector=tr)
        pk = estimation.peak_search(sp, count)
        out["capon"] = EstimationResult(source_count=len(pk.peaks),
                                        locations=tuple(pk.locations()),
                                        method="capon", smoothing=smoothing)
    return out, proc


# ---------------------------------------------------------------------------
# Experiment kinds
# ---------------------------------------------------------------------------

def _exp_tradeoff(r: _Runner):
    spec = r.spec
    snr = r.spec.resolved_snr()[0]
    rows = []
    feasible_any = False
    for w in spec.resolved_weights():
        ch = r.channels(snr)
        try:
            floor = r.sinr_floor(ch, snr, w)
            cov = txdesign.optimize(ch, w, rank_constrained=True, sinr_floor=floor)
        except InfeasibleDesignError:
            rows.append((w.w_c, w.w_ss, w.w_s, 0, float("nan"), float("nan"),
                         float("nan")))
            continue
        feasible_any = True
        rate = txdesign.sum_rate(ch, cov)
        min_sinr = (min(txdesign.radar_sinr(ch, cov, i) for i in range(ch.config.n_targets))
                    if ch.config.n_targets else float("nan"))
        min_pc = (min(txdesign.scatterer_power(ch, cov, i)
                      for i in range(ch.config.n_scatterers))
                  if ch.config.n_scatterers else float("nan"))
        rows.append((w.w_c, w.w_ss, w.w_s, 1, rate, min_sinr, min_pc))
    table = ResultTable(
        name="tradeoff",
        columns=("w_c", "w_ss", "w_s", "feasible", "sum_rate_bps",
                 "min_target_sinr", "min_scatterer_power_w"),
        rows=tuple(rows),
        provenance=r.provenance({"snr_db": snr}),
    )
    summary = {"feasible_points": sum(row[3] for row in rows), "points": len(rows)}
    return [table], summary, (0 if feasible_any else 2)


def _exp_beampattern(r: _Runner):
    snr = r.spec.resolved_snr()[0]
    grid = r.grid()
    rows = []
    summary = {}
    for w in r.spec.resolved_weights():
        ch, cov, _ = r.design(snr, w)
        bp = txdesign.beampattern(ch.config, cov, grid.angles, grid.ranges)
        label = w.label()
        for i, ang in enumerate(grid.angles):
            for j, rng_ in enumerate(grid.ranges):
                rows.append((label, math.degrees(ang), rng_, bp[i, j]))
        summary[label] = {
            "target_sinr": [txdesign.radar_sinr(ch, cov, i)
                            for i in range(ch.config.n_targets)],
            "min_scatterer_power_w": (min(
                txdesign.scatterer_power(ch, cov, i)
                for i in range(ch.config.n_scatterers))
                if ch.config.n_scatterers else None),
        }
    table = ResultTable(
        name="beampattern",
        columns=("weights", "theta_deg", "range_m", "power_w"),
        rows=tuple(rows),
        provenance=r.provenance({"snr_db": snr}),
    )
    return [table], summary, 0


def _exp_source_count(r: _Runner):
    spec = r.spec
    w = spec.resolved_weights()[0]
    rows = []
    summary = {}
    for snr in spec.resolved_snr():
        ch, _, hyb = r.design(snr, w)

        def task(i, child_seed):
            _, frame_e, _ = estimation.synthesize_echoes(ch, hyb, child_seed)
            plain = estimation.eve_processing(frame_e, ch, smoothing=False)
            smooth = estimation.eve_processing(frame_e, ch, smoothing=True)
            return plain.source_count, smooth.source_count

        results, _ = monte_carlo(task, spec.trials, spec.seed + int(round(snr * 1000)),
                                 spec.workers)
        for i, (plain, smooth) in enumerate(results):
            rows.append((snr, i, 0, plain))
            rows.append((snr, i, 1, smooth))
        for label, vals in (("plain", [p for p, _ in results]),
                            ("smoothed", [s for _, s in results])):
            counts = np.bincount(vals) if vals else np.array([0])
            summary[f"snr{snr:g}_{label}"] = {
                "majority": int(np.argmax(counts)),
                "histogram": {str(k): int(v) for k, v in enumerate(counts) if v},
            }
    table = ResultTable(
        name="source_count",
        columns=("snr_db", "trial", "smoothing", "estimated_sources"),
        rows=tuple(rows),
        provenance=r.provenance({"weights": w.label(), "trials": spec.trials}),
    )
    return [table], summary, 0


def _spectrum_rows(sp, receiver, method):
    db = sp.to_db()
    rows = []
    for i, ang in enumerate(sp.angles):
        for j, rng_ in enumerate(sp.ranges):
            rows.append((receiver, method, math.degrees(ang), rng_, db[i, j]))
    return rows


def _exp_spectrum(r: _Runner):
    spec = r.spec
    snr = spec.resolved_snr()[0]
    w = spec.resolved_weights()[0]
    ch, cov, hyb = r.design(snr, w)
    cfg = ch.config
    grid = r.grid()
    frame_a, frame_e, x = estimation.synthesize_echoes(ch, hyb, spec.seed)
    clean = estimation.alice_cancel(frame_a, ch, x)
    cov_a = estimation.sample_covariance(clean)
    lt = cfg.n_targets

    rows = []
    peaks = {}
    sp = estimation.capon_spectrum(cov_a, cfg.alice_rx_array, grid)
    rows += _spectrum_rows(sp, "alice", "capon")
    peaks["alice_capon"] = estimation.peak_search(sp, max(lt, 1)).peaks
    sp = estimation.music_spectrum(cov_a, cfg.alice_rx_array, lt, grid)
    rows += _spectrum_rows(sp, "alice", "music")
    peaks["alice_music"] = estimation.peak_search(sp, max(lt, 1)).peaks

    proc = estimation.eve_processing(frame_e, ch, smoothing=spec.smoothing)
    count = max(proc.source_count, 1)
    sp = estimation.capon_spectrum(proc.capon_covariance, proc.geometry, grid,
                                   projector=None if spec.smoothing
                                   else proc.music_transform)
    rows += _spectrum_rows(sp, "eve", "capon")
    peaks["eve_capon"] = estimation.peak_search(sp, count).peaks
    if proc.source_count:
        n_sub = min(proc.source_count, proc.music_covariance.shape[0] - 1)
        sp = estimation.music_spectrum(proc.music_covariance, proc.geometry,
                                       n_sub, grid,
                                       projector=proc.music_transform)
        rows += _spectrum_rows(sp, "eve", "music")
        peaks["eve_music"] = estimation.peak_search(sp, count).peaks
    table = ResultTable(
        name="spectrum",
        columns=("receiver", "method", "theta_deg", "range_m", "value_db"),
        rows=tuple(rows),
        provenance=r.provenance({"snr_db": snr, "weights": w.label(),
                                 "smoothing": int(spec.smoothing)}),
    )
    summary = {
        "eve_source_count": proc.source_count,
        "targets_deg_m": [(math.degrees(t.angle), t.range) for t in cfg.targets],
        "scatterers_deg_m": [(math.degrees(s.angle), s.range) for s in cfg.scatterers],
        "eve_frame_targets_deg_m": [(math.degrees(a.angle), a.range)
                                    for a in ch.arrivals[:lt]],
        "eve_frame_scatterers_deg_m": [(math.degrees(a.angle), a.range)
                                       for a in ch.arrivals[lt:]],
        "peaks": {k: [(math.degrees(t), rr, v) for t, rr, v in pk]
                  for k, pk in peaks.items()},
    }
    return [table], summary, 0


def _exp_rmse_crb(r: _Runner):
    spec = r.spec
    w = spec.resolved_weights()[0]
    grid = r.grid()
    rows = []
    summary = {}
    for snr in spec.resolved_snr():
        ch, cov, hyb = r.design(snr, w)
        cfg = ch.config
        lt = cfg.n_targets
        bundle_a = analysis.fim_alice(ch, cov)
        bundle_e = analysis.fim_eve(ch, cov)
        targets = list(range(lt))
        rcrb = {
            "alice": (bundle_a.rcrb("angle"), bundle_a.rcrb("range")),
            "eve": (bundle_e.rcrb_subset("angle", targets),
                    bundle_e.rcrb_subset("range", targets)),
        }
        truth_alice = list(cfg.targets)
        truth_eve = list(ch.arrivals[:lt])

        def task(i, child_seed):
            alice = _alice_estimates(ch, hyb, cfg, grid, child_seed, lt)
            eve, _ = _eve_estimates(ch, hyb, cfg, grid, child_seed, spec.smoothing)
            return alice, eve

        results, _ = monte_carlo(task, spec.trials, spec.seed + int(round(snr * 1000)),
                                 spec.workers)
        alice_trials = {m: [res[0][m] for res in results] for m in ("mle", "music", "capon")}
        eve_trials = {m: [res[1][m] for res in results] for m in ("music", "capon")}
        for method, trials in alice_trials.items():
            rep = analysis.rmse(truth_alice, trials, "alice")
            rows.append((snr, "alice", method, "alice", rep.rmse_angle, rep.rmse_range,
                         rcrb["alice"][0], rcrb["alice"][1], rep.trials_used))
        for method, trials in eve_trials.items():
            for mode in ("eve_min", "eve_rand"):
                rep = analysis.rmse(truth_eve, trials, mode, seed=spec.seed)
                rows.append((snr, "eve", method, mode, rep.rmse_angle, rep.rmse_range,
                             rcrb["eve"][0], rcrb["eve"][1], rep.trials_used))
        summary[f"snr{snr:g}"] = {"rcrb": {k: list(map(float, v)) for k, v in rcrb.items()}}
    table = ResultTable(
        name="rmse_crb",
        columns=("snr_db", "receiver", "estimator", "mode", "rmse_angle_rad",
                 "rmse_range_m", "rcrb_angle_rad", "rcrb_range_m", "trials_used"),
        rows=tuple(rows),
        provenance=r.provenance({"weights": w.label(), "trials": spec.trials,
                                 "smoothing": int(spec.smoothing)}),
    )
    return [table], summary, 0


def _exp_kld_snr(r: _Runner):
    rows = []
    for snr in r.spec.resolved_snr():
        for w in r.spec.resolved_weights():
            ch, cov, _ = r.design(snr, w)
            rep = analysis.kld_report(ch, cov)
            rows.append((snr, w.label(), rep.alice_average, rep.eve_target_average,
                         rep.eve_scatterer_average, rep.gap))
    table = ResultTable(
        name="kld_snr",
        columns=("snr_db", "weights", "alice_avg_bits", "eve_target_avg_bits",
                 "eve_scatterer_avg_bits", "eve_gap_bits"),
        rows=tuple(rows),
        provenance=r.provenance(),
    )
    return [table], {}, 0


def _eve_location_grid(cfg, n: int = 9) -> list[PolarLocation]:
    pts = [polar_to_cartesian(l) for l in cfg.reflectors]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    pad_x = 0.25 * max(max(xs) - min(xs), 1e-3)
    pad_y = 0.25 * max(max(ys) - min(ys), 1e-3)
    grid = []
    for x in np.linspace(min(xs) - pad_x, max(xs) + pad_x, n):
        for y in np.linspace(min(ys) - pad_y, max(ys) + pad_y, n):
            r_ = math.hypot(x, y)
            ang = math.atan2(abs(x), y)
            if r_ <= 0 or not 0 < ang < math.pi:
                grid.append(None)
            else:
                grid.append(PolarLocation(angle=ang, range=r_))
    return grid


def _exp_kld_map(r: _Runner):
    spec = r.spec
    snr = spec.resolved_snr()[0]
    w = spec.resolved_weights()[0]
    ch, cov, _ = r.design(snr, w)
    cfg = ch.config
    rows = []
    gaps = []
    for loc in _eve_location_grid(cfg):
        if loc is None:
            continue
        try:
            cfg_e = replace(cfg, eve=loc)
            ch_e = build_channels(cfg_e)
            rep = analysis.kld_report(ch_e, cov)
            gap = rep.gap
        except Exception:
            gap = float("nan")
        rows.append((math.degrees(loc.angle), loc.range, gap))
        if not math.isnan(gap):
            gaps.append((gap, loc))
    table = ResultTable(
        name="kld_map",
        columns=("eve_theta_deg", "eve_range_m", "eve_gap_bits"),
        rows=tuple(rows),
        provenance=r.provenance({"snr_db": snr, "weights": w.label()}),
    )
    summary = {}
    if gaps:
        gmin = min(gaps, key=lambda t: t[0])
        gmax = max(gaps, key=lambda t: t[0])
        summary = {
            "min_gap_bits": gmin[0],
            "min_gap_at_deg_m": (math.degrees(gmin[1].angle), gmin[1].range),
            "max_gap_bits": gmax[0],
            "max_gap_at_deg_m": (math.degrees(gmax[1].angle), gmax[1].range),
        }
    return [table], summary, 0


_EXPERIMENTS = {
    "tradeoff": _exp_tradeoff,
    "beampattern": _exp_beampattern,
    "source_count": _exp_source_count,
    "spectrum": _exp_spectrum,
    "rmse_crb": _exp_rmse_crb,
    "kld_snr": _exp_kld_snr,
    "kld_map": _exp_kld_map,
}


def run(spec: ExperimentSpec) -> RunResult:
    """Execute one experiment and persist CSV + JSON + plot script."""
    runner = _Runner(spec)
    tables, summary, status = _EXPERIMENTS[spec.kind](runner)
    os.makedirs(spec.out_dir, exist_ok=True)
    paths = []
    for t in tables:
        path = os.path.join(spec.out_dir, f"{t.name}.csv")
        t.write_csv(path)
        paths.append(path)
    jpath = os.path.join(spec.out_dir, f"{spec.kind}.json")
    payload = {
        "kind": spec.kind,
        "provenance": runner.provenance(),
        "summary": summary,
        "status": status,
    }
    with open(jpath, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    paths.append(jpath)
    ppath = os.path.join(spec.out_dir, f"plot_{spec.kind}.py")
    with open(ppath, "w", encoding="utf-8") as fh:
        fh.write(_plot_script(spec.kind))
    paths.append(ppath)
    return RunResult(status=status, tables=tuple(tables), paths=tuple(paths),
                     summary=summary)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)!r}")


_PLOT_HEADER = '''\
#!/usr/bin/env python3
"""Plot helper emitted next to the data; reads the CSV in this directory.

Lines starting with '#' in the CSV are provenance, skipped on load."""
import csv
import os
import sys

import matplotlib.pyplot as plt
import numpy as np


def load(name):
    path = os.path.join(os.path.dirname(os.path.abspath(__file__)), name)
    with open(path) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, data = rows[0], rows[1:]
    return header, data
'''


def _plot_script(kind: str) -> str:
    bodies = {
        "tradeoff": '''
header, data = load("tradeoff.csv")
ok = [r for r in data if r[3] == "1"]
sinr = [float(r[5]) for r in ok]
pc = [float(r[6]) for r in ok]
rate = [float(r[4]) for r in ok]
ax = plt.figure().add_subplot(projection="3d")
ax.scatter(sinr, pc, rate)
ax.set_xlabel("min target SINR"); ax.set_ylabel("min scatterer power (W)")
ax.set_zlabel("sum rate (b/s/Hz)")
plt.savefig("tradeoff.png", dpi=150)
''',
        "beampattern": '''
header, data = load("beampattern.csv")
labels = sorted({r[0] for r in data})
for lb in labels:
    sel = [r for r in data if r[0] == lb]
    th = sorted({float(r[1]) for r in sel}); rr = sorted({float(r[2]) for r in sel})
    v = np.full((len(th), len(rr)), np.nan)
    ti = {t: i for i, t in enumerate(th)}; ri = {r_: j for j, r_ in enumerate(rr)}
    for r in sel:
        v[ti[float(r[1])], ri[float(r[2])]] = float(r[3])
    plt.figure()
    plt.pcolormesh(rr, th, 10*np.log10(np.maximum(v, 1e-300)), shading="auto")
    plt.xlabel("range (m)"); plt.ylabel("angle (deg)"); plt.title(lb)
    plt.colorbar(label="dB")
    plt.savefig(f"beampattern_{labels.index(lb)}.png", dpi=150)
''',
        "source_count": '''
header, data = load("source_count.csv")
for sm, style in ((0, "o-"), (1, "s--")):
    sel = [r for r in data if int(r[2]) == sm]
    snrs = sorted({float(r[0]) for r in sel})
    med = [np.median([int(r[3]) for r in sel if float(r[0]) == s]) for s in snrs]
    plt.plot(snrs, med, style, label="smoothed" if sm else "plain")
plt.xlabel("SNR (dB)"); plt.ylabel("estimated sources (median)"); plt.legend()
plt.savefig("source_count.png", dpi=150)
''',
        "spectrum": '''
header, data = load("spectrum.csv")
pairs = sorted({(r[0], r[1]) for r in data})
for rec, meth in pairs:
    sel = [r for r in data if r[0] == rec and r[1] == meth]
    th = sorted({float(r[2]) for r in sel}); rr = sorted({float(r[3]) for r in sel})
    v = np.full((len(th), len(rr)), np.nan)
    ti = {t: i for i, t in enumerate(th)}; ri = {r_: j for j, r_ in enumerate(rr)}
    for r in sel:
        v[ti[float(r[2])], ri[float(r[3])]] = float(r[4])
    plt.figure()
    plt.pcolormesh(rr, th, v, shading="auto")
    plt.xlabel("range (m)"); plt.ylabel("angle (deg)"); plt.title(f"{rec} {meth}")
    plt.colorbar(label="dB")
    plt.savefig(f"spectrum_{rec}_{meth}.png", dpi=150)
''',
        "rmse_crb": '''
header, data = load("rmse_crb.csv")
for col, name in ((5, "range_m"), (4, "angle_rad")):
    plt.figure()
    keys = sorted({(r[1], r[2], r[3]) for r in data})
    for rec, est, mode in keys:
        sel = [r for r in data if (r[1], r[2], r[3]) == (rec, est, mode)]
        snrs = [float(r[0]) for r in sel]
        plt.semilogy(snrs, [float(r[col]) for r in sel], "o-",
                     label=f"{rec}/{est}/{mode}")
    sel = [r for r in data if (r[1], r[3]) == ("alice", "alice") and r[2] == "mle"]
    plt.semilogy([float(r[0]) for r in sel],
                 [float(r[col+2]) for r in sel], "k--", label="alice RCRB")
    plt.xlabel("SNR (dB)"); plt.ylabel(f"RMSE {name}"); plt.legend(fontsize=6)
    plt.savefig(f"rmse_{name}.png", dpi=150)
''',
        "kld_snr": '''
header, data = load("kld_snr.csv")
for w in sorted({r[1] for r in data}):
    sel = [r for r in data if r[1] == w]
    snrs = [float(r[0]) for r in sel]
    for col, name in ((2, "alice"), (3, "eve targets"), (4, "eve scatterers"), (5, "eve gap")):
        plt.plot(snrs, [float(r[col]) for r in sel], "o-", label=f"{name} {w}")
plt.xlabel("SNR (dB)"); plt.ylabel("KLD (bits)"); plt.legend(fontsize=6)
plt.savefig("kld_snr.png", dpi=150)
''',
        "kld_map": '''
header, data = load("kld_map.csv")
th = sorted({float(r[0]) for r in data}); rr = sorted({float(r[1]) for r in data})
v = np.full((len(th), len(rr)), np.nan)
ti = {t: i for i, t in enumerate(th)}; ri = {r_: j for j, r_ in enumerate(rr)}
for r in data:
    v[ti[float(r[0])], ri[float(r[1])]] = float(r[2])
plt.pcolormesh(rr, th, v, shading="auto")
plt.xlabel("eve range (m)"); plt.ylabel("eve angle (deg)")
plt.colorbar(label="KLD gap (bits)")
plt.savefig("kld_map.png", dpi=150)
''',
    }
    return _PLOT_HEADER + bodies[kind]
