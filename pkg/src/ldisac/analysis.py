"""Sensing-security analytics: divergence gap, Fisher information, RMSE.

The detection-side metric is the Kullback-Leibler divergence between the
signal-absent and signal-present hypotheses of a per-reflector matched
receive filter; the eavesdropper's deception level is summarized by the gap
between its average target divergence and average scatterer divergence.
Estimation-side bounds come from closed-form Fisher information matrices
over angle, range, and complex gain of every reflector.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .channel import ChannelSet, steering_vector
from .estimation import EstimationResult, eve_null_projector
from .scene import PolarLocation
from .txdesign import design_covariances

__all__ = [
    "KldReport",
    "FimBundle",
    "RmseReport",
    "kld_report",
    "fim_alice",
    "fim_eve",
    "rmse",
]

LN2 = math.log(2.0)


@dataclass(frozen=True)
class KldReport:
    """Per-reflector divergences (bits) and the eavesdropper's gap.

    alice_divergence covers targets only; eve_divergence covers all
    reflectors (targets first).  gap = mean over targets - mean over
    scatterers at the eavesdropper; negative values mean scatterers look
    more detectable than targets.
    """

    alice_divergence: np.ndarray
    eve_divergence: np.ndarray
    alice_average: float
    eve_target_average: float
    eve_scatterer_average: float
    gap: float
    alice_variances: np.ndarray      # (L_T, 2): signal-present, signal-absent
    eve_variances: np.ndarray        # (L, 2)


def _gaussian_kld_bits(var_absent: float, var_present: float) -> float:
    ratio = var_absent / var_present
    return (ratio - 1.0 + math.log(var_present / var_absent)) / LN2


def kld_report(ch: ChannelSet, design) -> KldReport:
    """Hypothesis-testing divergences for every reflector at both receivers."""
    cfg = ch.config
    comm, radar = design_covariances(design)
    rx = comm.sum(axis=0) + radar if comm.shape[0] else radar
    s = cfg.snapshots
    sig2 = cfg.noise_power
    n_r = cfg.alice_rx_array.element_count
    n_e = cfg.eve_rx_array.element_count

    proj = eve_null_projector(ch)
    pi = proj.conj().T @ proj

    var_absent_a = s * n_r * sig2
    alice_var = np.zeros((cfg.n_targets, 2))
    alice_d = np.zeros(cfg.n_targets)
    for l in range(cfg.n_targets):
        h = ch.alice_roundtrip[l]
        a = steering_vector(cfg.alice_rx_array, cfg.reflectors[l])
        quad = np.real(a.conj() @ (h.conj().T @ rx @ h) @ a)
        var_present = s * max(quad, 0.0) + var_absent_a
        alice_var[l] = (var_present, var_absent_a)
        alice_d[l] = _gaussian_kld_bits(var_absent_a, var_present)

    var_absent_e = s * n_e * sig2
    n_l = len(cfg.reflectors)
    eve_var = np.zeros((n_l, 2))
    eve_d = np.zeros(n_l)
    for l in range(n_l):
        h = ch.eve_reflect[l]
        a = steering_vector(cfg.eve_rx_array, ch.arrivals[l])
        v = pi @ a
        quad = np.real(v.conj() @ (h.conj().T @ rx @ h) @ v)
        var_present = s * max(quad, 0.0) + var_absent_e
        eve_var[l] = (var_present, var_absent_e)
        eve_d[l] = _gaussian_kld_bits(var_absent_e, var_present)

    lt = cfg.n_targets
    eve_t = float(np.mean(eve_d[:lt])) if lt else 0.0
    eve_s = float(np.mean(eve_d[lt:])) if n_l > lt else 0.0
    return KldReport(
        alice_divergence=alice_d,
        eve_divergence=eve_d,
        alice_average=float(np.mean(alice_d)) if lt else 0.0,
        eve_target_average=eve_t,
        eve_scatterer_average=eve_s,
        gap=eve_t - eve_s,
        alice_variances=alice_var,
        eve_variances=eve_var,
    )


# ---------------------------------------------------------------------------
# Fisher information
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FimBundle:
    """FIM over [angles..., ranges..., Re gains..., Im gains...] and its inverse.

    When the FIM is numerically singular the bound is the Moore-Penrose
    pseudoinverse restricted to the identifiable subspace (``pseudo`` set).
    The eavesdropper's zero-mean model always has one exact null direction:
    a common phase rotation of all reflection gains leaves its covariance
    unchanged, so only phase differences are identifiable there.  The root
    bounds are root-traces of the corresponding CRB diagonal blocks;
    ``rcrb_subset`` restricts to a reflector subset (e.g. targets only).
    """

    labels: tuple[str, ...]
    fim: np.ndarray
    crb: np.ndarray | None
    condition: float
    n_reflectors: int
    pseudo: bool = False

    def _block(self, kind: str) -> slice:
        l = self.n_reflectors
        return {"angle": slice(0, l), "range": slice(l, 2 * l)}[kind]

    def rcrb(self, kind: str) -> float:
        return self.rcrb_subset(kind, range(self.n_reflectors))

    def rcrb_subset(self, kind: str, indices) -> float:
        if self.crb is None:
            return float("nan")
        base = self._block(kind).start
        diag = [self.crb[base + i, base + i] for i in indices]
        return math.sqrt(max(float(np.real(np.sum(diag))), 0.0))

    @property
    def rcrb_angle(self) -> float:
        return self.rcrb("angle")

    @property
    def rcrb_range(self) -> float:
        return self.rcrb("range")


def _invert_fim(fim: np.ndarray, cond_limit: float = 1e14):
    """Invert with Jacobi scaling: parameter units differ by many orders of
    magnitude (radians vs watts^-1 gains), so condition the scaled matrix.
    Numerically singular matrices fall back to the eigen-truncated
    pseudoinverse on the identifiable subspace."""
    sym = 0.5 * (fim + fim.T)
    s = np.sqrt(np.maximum(np.diag(sym), 1e-300))
    scaling = np.outer(s, s)
    scaled = sym / scaling
    ev, vec = np.linalg.eigh(scaled)
    cond = abs(ev[-1]) / max(abs(ev[0]), 1e-300)
    if ev[0] > 0 and cond < cond_limit:
        return sym, np.linalg.inv(scaled) / scaling, cond, False
    keep = ev > max(ev[-1], 0.0) / cond_limit
    if not np.any(keep):
        return sym, None, cond, False
    inv_scaled = (vec[:, keep] / ev[keep]) @ vec[:, keep].T
    return sym, inv_scaled / scaling, cond, True


def _angle_multiplier(idx_rx, d_rx, idx_tx, d_tx, loc, wavelength):
    p = idx_rx[:, None] * d_rx
    q = idx_tx[None, :] * d_tx
    return -2j * np.pi / wavelength * (
        (p - q) * math.sin(loc.angle)
        + (p**2 - q**2) * math.sin(loc.angle) * math.cos(loc.angle) / loc.range
    )


def _range_multiplier(idx_rx, d_rx, idx_tx, d_tx, loc, wavelength):
    p = idx_rx[:, None] * d_rx
    q = idx_tx[None, :] * d_tx
    return 1j * np.pi * (p**2 - q**2) * math.sin(loc.angle) ** 2 / (
        wavelength * loc.range**2
    )


def alice_jacobians(ch: ChannelSet, l: int) -> dict[str, np.ndarray]:
    """Closed-form derivatives of the conjugated round-trip channel of
    reflector l with respect to (angle, range, Re gain, Im gain)."""
    cfg = ch.config
    hh = ch.alice_roundtrip[l].conj().T  # (N_r, N_t)
    loc = cfg.reflectors[l]
    lam = cfg.wavelength
    idx_r = cfg.alice_rx_array.indices
    idx_t = cfg.tx_array.indices
    d_r = cfg.alice_rx_array.spacing
    d_t = cfg.tx_array.spacing
    gain_c = np.conj(ch.gains.roundtrip[l])
    return {
        "angle": hh * _angle_multiplier(idx_r, d_r, idx_t, d_t, loc, lam),
        "range": hh * _range_multiplier(idx_r, d_r, idx_t, d_t, loc, lam),
        "re_gain": hh / gain_c,
        "im_gain": -1j * hh / gain_c,
    }


def eve_jacobians(ch: ChannelSet, l: int, projector: np.ndarray) -> dict[str, np.ndarray]:
    """Closed-form derivatives of the projected conjugated reflection channel
    of reflector l with respect to its arrival parameters and gain.

    The element-wise multiplier acts on the full-array index before the
    projection (the projection and the derivative do not commute)."""
    cfg = ch.config
    hh = ch.eve_reflect[l].conj().T  # (N_e, N_t)
    arr = ch.arrivals[l]
    lam = cfg.wavelength
    idx_e = cfg.eve_rx_array.indices
    d_e = cfg.eve_rx_array.spacing
    m = (idx_e[:, None] * d_e)
    ang_mult = -2j * np.pi / lam * (
        m * math.sin(arr.angle)
        + m**2 * math.sin(arr.angle) * math.cos(arr.angle) / arr.range
    )
    rng_mult = 1j * np.pi * m**2 * math.sin(arr.angle) ** 2 / (lam * arr.range**2)
    gain_c = np.conj(ch.gains.eve_reflect[l])
    return {
        "angle": projector @ (hh * ang_mult),
        "range": projector @ (hh * rng_mult),
        "re_gain": projector @ (hh / gain_c),
        "im_gain": projector @ (-1j * hh / gain_c),
    }


_PARAM_KINDS = ("angle", "range", "re_gain", "im_gain")


def _labels(n_l: int) -> tuple[str, ...]:
    return tuple(f"{kind}[{l}]" for kind in _PARAM_KINDS for l in range(n_l))


def fim_alice(ch: ChannelSet, design) -> FimBundle:
    """Deterministic-mean FIM of the legitimate radar over the target
    parameters; entry (p,q) = (2S/sigma^2) Re Tr(D_p R_X D_q^H)."""
    cfg = ch.config
    lt = cfg.n_targets
    comm, radar = design_covariances(design)
    rx = comm.sum(axis=0) + radar if comm.shape[0] else radar
    derivs = []
    for kind in _PARAM_KINDS:
        for l in range(lt):
            derivs.append(alice_jacobians(ch, l)[kind])
    scale = 2.0 * cfg.snapshots / cfg.noise_power
    n = len(derivs)
    fim = np.zeros((n, n))
    drx = [d @ rx for d in derivs]
    for p in range(n):
        for q in range(p, n):
            val = scale * float(np.real(np.sum(drx[p] * derivs[q].conj())))
            fim[p, q] = fim[q, p] = val
    sym, crb, cond, pseudo = _invert_fim(fim)
    return FimBundle(labels=_labels(lt), fim=sym, crb=crb, condition=cond,
                     n_reflectors=lt, pseudo=pseudo)


def fim_eve(ch: ChannelSet, design) -> FimBundle:
    """Zero-mean (Slepian-Bangs) FIM of the eavesdropper over all reflector
    arrival parameters; entry (p,q) = S Tr(R^-1 dR_p R^-1 dR_q)."""
    cfg = ch.config
    n_l = len(cfg.reflectors)
    comm, radar = design_covariances(design)
    rx = comm.sum(axis=0) + radar if comm.shape[0] else radar
    proj = eve_null_projector(ch)
    w = proj @ ch.eve_total.conj().T          # (N_p, N_t)
    r_cov = w @ rx @ w.conj().T + cfg.noise_power * (proj @ proj.conj().T)

    d_r = []
    for kind in _PARAM_KINDS:
        for l in range(n_l):
            d = eve_jacobians(ch, l, proj)[kind]
            half = d @ rx @ w.conj().T
            d_r.append(half + half.conj().T)
    n = len(d_r)
    cho = sla.cho_factor(r_cov)
    k_mats = [sla.cho_solve(cho, dr) for dr in d_r]
    fim = np.zeros((n, n))
    for p in range(n):
        for q in range(p, n):
            val = cfg.snapshots * float(np.real(np.sum(k_mats[p] * k_mats[q].T)))
            fim[p, q] = fim[q, p] = val
    sym, crb, cond, pseudo = _invert_fim(fim)
    return FimBundle(labels=_labels(n_l), fim=sym, crb=crb, condition=cond,
                     n_reflectors=n_l, pseudo=pseudo)


# ---------------------------------------------------------------------------
# RMSE over estimator trials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RmseReport:
    """Root-mean-square location errors over trials.

    Per the aggregate definition, each trial contributes the squared-error
    sum over its min(L_T, L_hat) matched pairs and the mean is over trials.
    """

    rmse_angle: float
    rmse_range: float
    mode: str
    per_trial_angle_sq: tuple[float, ...]
    per_trial_range_sq: tuple[float, ...]
    trials_used: int
    trials_skipped: int


def _pair_errors(truth: list[PolarLocation], est: list[PolarLocation],
                 pairs: list[tuple[int, int]]) -> tuple[float, float]:
    ang = sum((est[i].angle - truth[j].angle) ** 2 for i, j in pairs)
    rng = sum((est[i].range - truth[j].range) ** 2 for i, j in pairs)
    return ang, rng


def _best_assignment(truth: list[PolarLocation], est: list[PolarLocation],
                     n_pairs: int) -> list[tuple[int, int]]:
    best, best_cost = None, np.inf
    for est_sub in itertools.combinations(range(len(est)), n_pairs):
        for truth_perm in itertools.permutations(range(len(truth)), n_pairs):
            pairs = list(zip(est_sub, truth_perm))
            a, r = _pair_errors(truth, est, pairs)
            cost = a + r
            if cost < best_cost:
                best, best_cost = pairs, cost
    return best or []


def rmse(truth, trials, mode: str, seed: int = 0) -> RmseReport:
    """Aggregate location RMSE over estimator trials.

    Modes: 'alice' and 'eve_min' both use the error-minimizing assignment of
    estimates to ground truth (nearest-neighbor alignment; exhaustive over
    the small index sets); 'eve_rand' draws a seeded uniformly random
    injective assignment per trial, modeling an eavesdropper that cannot
    tell targets from scatterers.
    """
    if mode not in ("alice", "eve_min", "eve_rand"):
        raise ValueError(f"unknown mode {mode!r}")
    truth = list(truth)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE5E)))
    ang_sq: list[float] = []
    rng_sq: list[float] = []
    skipped = 0
    for trial in trials:
        est = list(trial.locations) if isinstance(trial, EstimationResult) else list(trial)
        n_pairs = min(len(truth), len(est))
        if n_pairs == 0:
            skipped += 1
            continue
        if mode == "eve_rand":
            est_sub = rng.permutation(len(est))[:n_pairs]
            truth_sub = rng.permutation(len(truth))[:n_pairs]
            pairs = list(zip(est_sub.tolist(), truth_sub.tolist()))
        else:
            pairs = _best_assignment(truth, est, n_pairs)
        a, r = _pair_errors(truth, est, pairs)
        ang_sq.append(a)
        rng_sq.append(r)
    used = len(ang_sq)
    return RmseReport(
        rmse_angle=math.sqrt(np.mean(ang_sq)) if used else float("nan"),
        rmse_range=math.sqrt(np.mean(rng_sq)) if used else float("nan"),
        mode=mode,
        per_trial_angle_sq=tuple(ang_sq),
        per_trial_range_sq=tuple(rng_sq),
        trials_used=used,
        trials_skipped=skipped,
    )
