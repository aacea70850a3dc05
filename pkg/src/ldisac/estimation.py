"""Receiver-side processing for the legitimate radar and the eavesdropper.

Covers echo synthesis, clutter/self-interference cancellation, the
eavesdropper's line-of-sight null projector, spatial smoothing, information
criteria for source counting, Capon/MUSIC/beamspace-MUSIC spectra, peak
search, and a cyclic relaxation maximum-likelihood estimator for the
legitimate side.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg as sla
from scipy import optimize as sopt

from .channel import ChannelSet, steering_matrix, steering_vector
from .scene import ArrayGeometry, PolarLocation, SceneConfig
from .txdesign import HybridDesign

__all__ = [
    "SubspaceError",
    "EmptyProjectorError",
    "GridSpec",
    "EchoFrame",
    "SpectrumGrid",
    "EstimationResult",
    "PeakSearchResult",
    "EveProcessing",
    "synthesize_echoes",
    "alice_cancel",
    "eve_null_projector",
    "sample_covariance",
    "spatial_smoothing",
    "smoothing_noise_shape",
    "default_subarray_len",
    "estimate_source_count",
    "eve_processing",
    "capon_spectrum",
    "music_spectrum",
    "peak_search",
    "mle_estimate",
    "subarray_geometry",
]

MUSIC_CAP = 1e12


class SubspaceError(ValueError):
    """Requested signal-subspace dimension is impossible."""


class EmptyProjectorError(ValueError):
    """The LoS matrix has no numerical null space to project onto."""


@dataclass(frozen=True)
class GridSpec:
    """Search grid: angles in radians, ranges in meters (both strictly increasing)."""

    angles: np.ndarray
    ranges: np.ndarray

    @classmethod
    def from_bounds(cls, angle_deg: tuple[float, float, float],
                    range_m: tuple[float, float, float]) -> "GridSpec":
        a0, a1, astep = angle_deg
        r0, r1, rstep = range_m
        angles = np.deg2rad(np.arange(a0, a1 - 1e-12, astep))
        ranges = np.arange(r0, r1 + 1e-12, rstep)
        return cls(angles=angles, ranges=ranges)

    @classmethod
    def default(cls) -> "GridSpec":
        return cls.from_bounds((0.5, 180.0, 0.5), (1.0, 15.0, 0.1))


@dataclass(frozen=True)
class EchoFrame:
    """One block of receive snapshots. role is 'alice' or 'eve'."""

    samples: np.ndarray
    role: str
    seed: int

    @property
    def snapshots(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class SpectrumGrid:
    """2-D spatial (pseudo-)spectrum over an angle x range grid, linear scale."""

    angles: np.ndarray
    ranges: np.ndarray
    values: np.ndarray

    def to_db(self) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(self.values, 1e-300))


@dataclass(frozen=True)
class PeakSearchResult:
    """Peaks as (angle, range, value) triples, value-descending; short_count is
    set when fewer interior maxima exist than were requested."""

    peaks: tuple[tuple[float, float, float], ...]
    short_count: bool

    def locations(self) -> list[PolarLocation]:
        return [PolarLocation(angle=p[0], range=p[1]) for p in self.peaks]


@dataclass(frozen=True)
class EstimationResult:
    """Estimated source count and locations from one estimator run."""

    source_count: int
    locations: tuple[PolarLocation, ...]
    method: str
    smoothing: bool = False


# ---------------------------------------------------------------------------
# Echo synthesis and cancellation
# ---------------------------------------------------------------------------

def _crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def synthesize_echoes(ch: ChannelSet, hybrid: HybridDesign, seed: int,
                      ) -> tuple[EchoFrame, EchoFrame, np.ndarray]:
    """Draw Gaussian source symbols and build both receivers' snapshot blocks.

    Returns (alice frame, eve frame, transmitted block X).  Deterministic
    given the seed: the generator draws, in order, the communication symbols,
    the radar symbols, Alice's noise, Eve's noise.
    """
    cfg = ch.config
    s = cfg.snapshots
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    s_c = _crandn(rng, hybrid.digital_comm.shape[1], s)
    s_r = _crandn(rng, hybrid.digital_radar.shape[1], s)
    x = hybrid.analog @ (hybrid.digital_comm @ s_c + hybrid.digital_radar @ s_r)

    sigma = math.sqrt(cfg.noise_power)
    n_a = sigma * _crandn(rng, cfg.alice_rx_array.element_count, s)
    n_e = sigma * _crandn(rng, cfg.eve_rx_array.element_count, s)

    y_a = ch.alice_total.conj().T @ x + ch.si.conj().T @ x + n_a
    y_e = ch.eve_total.conj().T @ x + n_e
    return (EchoFrame(samples=y_a, role="alice", seed=seed),
            EchoFrame(samples=y_e, role="eve", seed=seed),
            x)


def alice_cancel(frame: EchoFrame, ch: ChannelSet, x: np.ndarray) -> EchoFrame:
    """Subtract the known scatterer echoes and self-interference from Alice's
    block, leaving target echoes plus noise."""
    y = frame.samples - ch.si.conj().T @ x
    for h in ch.roundtrip_scatterers():
        y = y - h.conj().T @ x
    return replace(frame, samples=y)


# ---------------------------------------------------------------------------
# Covariance preparation
# ---------------------------------------------------------------------------

def eve_null_projector(ch: ChannelSet, rel_tol: float = 1e-12) -> np.ndarray:
    """Rows spanning the left null space of the eavesdropper LoS channel.

    P has orthonormal rows and P @ H_los^H = 0 to the SVD tolerance; the
    numerical rank uses singular values above ``rel_tol`` times the largest.
    """
    m = ch.eve_los.conj().T  # (N_e, N_t)
    u, sv, _ = np.linalg.svd(m)
    rank = int(np.sum(sv > rel_tol * sv[0]))
    if rank >= m.shape[0]:
        raise EmptyProjectorError(
            f"LoS channel numerically full rank ({rank} of {m.shape[0]}); no null space"
        )
    return u[:, rank:].conj().T


def sample_covariance(frame: EchoFrame, projector: np.ndarray | None = None) -> np.ndarray:
    """Y Y^H / S, optionally in beamspace: (PY)(PY)^H / S."""
    y = frame.samples if projector is None else projector @ frame.samples
    return y @ y.conj().T / frame.snapshots


def default_subarray_len(n_elements: int) -> int:
    """ceil((N+1)/2), bumped to odd so the symmetric index set applies."""
    m = (n_elements + 1 + 1) // 2
    return m if m % 2 == 1 else m + 1


def spatial_smoothing(frame, subarray_len: int,
                      presumed_sources: int | None = None,
                      forward_backward: bool = True) -> np.ndarray:
    """Forward-backward averaged covariance over all sliding subarrays.

    Accepts an EchoFrame or a raw (N, S) snapshot array.  With
    ``subarray_len == N`` this is exactly the forward-backward sample
    covariance.  The near-field phase model is not shift-invariant, so the
    smoothed matrix carries a model error that is accepted here; smoothing is
    used for decorrelation only.

    ``forward_backward=False`` skips the conjugate-reversed half.  The
    backward manifold negates the spherical-wavefront curvature (there is no
    conjugate symmetry in the near field), so receiver chains that keep
    range information use the forward-only variant.
    """
    y = frame.samples if isinstance(frame, EchoFrame) else np.asarray(frame)
    n, s = y.shape
    if not 1 <= subarray_len <= n:
        raise ValueError(f"subarray length must lie in [1, {n}] (got {subarray_len})")
    if presumed_sources is not None and subarray_len < presumed_sources:
        warnings.warn(
            f"subarray length {subarray_len} below presumed source count "
            f"{presumed_sources}; counting will saturate",
            stacklevel=2,
        )
    m = subarray_len
    n_sub = n - m + 1
    r = np.zeros((m, m), complex)
    for i in range(n_sub):
        z = y[i:i + m]
        r += z @ z.conj().T
    r /= n_sub * s
    if forward_backward:
        r = 0.5 * (r + np.flipud(np.fliplr(r)).conj())
    return r


def smoothing_noise_shape(projector: np.ndarray, subarray_len: int) -> np.ndarray:
    """Noise covariance shape after projecting with P^H P and smoothing.

    For data Z = (P^H P) Y with white noise in Y, the smoothed noise
    covariance is sigma^2 times this matrix (windowed forward-backward
    average of the element-space projector).  Used to whiten the smoothed
    covariance before information-criterion counting.
    """
    pi = projector.conj().T @ projector
    n = pi.shape[0]
    m = subarray_len
    n_sub = n - m + 1
    q = sum(pi[i:i + m, i:i + m] for i in range(n_sub)) / n_sub
    return 0.5 * (q + np.flipud(np.fliplr(q)).conj())


def subarray_geometry(geom: ArrayGeometry, subarray_len: int) -> ArrayGeometry:
    return ArrayGeometry(element_count=subarray_len, spacing=geom.spacing,
                         wavelength=geom.wavelength)


# ---------------------------------------------------------------------------
# Source counting
# ---------------------------------------------------------------------------

def estimate_source_count(cov: np.ndarray, snapshots: int,
                          criterion: str = "mdl") -> int:
    """MDL/AIC source count from the covariance eigenvalue profile.

    Both criteria are scale-invariant in the eigenvalues, so pre-whitened or
    normalized covariances are fine.
    """
    if criterion not in ("mdl", "aic"):
        raise ValueError(f"criterion must be 'mdl' or 'aic' (got {criterion!r})")
    ev = np.linalg.eigvalsh(cov)[::-1]
    ev = np.maximum(ev, 1e-300)
    p = ev.size
    best_k, best_val = 0, np.inf
    for k in range(p):
        tail = ev[k:]
        m = p - k
        loglik = -snapshots * (np.sum(np.log(tail)) - m * np.log(np.mean(tail)))
        if criterion == "mdl":
            val = loglik + 0.5 * k * (2 * p - k) * math.log(snapshots)
        else:
            val = loglik + k * (2 * p - k)
        if val < best_val:
            best_k, best_val = k, val
    return best_k


# ---------------------------------------------------------------------------
# Eavesdropper covariance chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EveProcessing:
    """Prepared eavesdropper-side covariances and metadata.

    ``music_covariance``/``music_transform`` feed :func:`music_spectrum`
    (the transform plays the beamspace-projector role); ``capon_covariance``
    feeds :func:`capon_spectrum`.  ``geometry`` is the full array without
    smoothing and the subarray with it.
    """

    music_covariance: np.ndarray
    capon_covariance: np.ndarray
    music_transform: np.ndarray | None
    geometry: ArrayGeometry
    source_count: int
    snapshots_eff: int
    smoothing: bool


def eve_processing(frame: EchoFrame, ch: ChannelSet, smoothing: bool = False,
                   subarray_len: int | None = None,
                   criterion: str = "mdl") -> EveProcessing:
    """Standard eavesdropper chain: LoS handling plus optional decorrelation.

    Without smoothing the chain is the beamspace one: project the snapshots
    with the LoS null projector and count/estimate there (the noise stays
    white, the LoS is exactly removed, and the covariance rank carries the
    transmit-rank ceiling).  With smoothing, forward-only sliding-subarray
    averaging is applied to the raw snapshots: the element-space projection
    would color the subarray noise beyond repair at small apertures, so the
    stronger-receiver chain trades LoS suppression for echo decorrelation
    and the transmitter's line of sight is counted among the sources.
    """
    cfg = ch.config
    if not smoothing:
        proj = eve_null_projector(ch)
        cov = sample_covariance(frame, projector=proj)
        # counting runs on the raw covariance: every received component,
        # line of sight included, is capped by the transmit-covariance rank,
        # which is exactly the ceiling the deception scheme engineers
        count = estimate_source_count(sample_covariance(frame),
                                      frame.snapshots, criterion)
        return EveProcessing(music_covariance=cov, capon_covariance=cov,
                             music_transform=proj,
                             geometry=cfg.eve_rx_array, source_count=count,
                             snapshots_eff=frame.snapshots, smoothing=False)
    m = subarray_len or default_subarray_len(cfg.eve_rx_array.element_count)
    smoothed = spatial_smoothing(frame, m, forward_backward=False)
    n_sub = cfg.eve_rx_array.element_count - m + 1
    s_eff = frame.snapshots * n_sub
    count = estimate_source_count(smoothed, s_eff, criterion)
    count = min(count, m - 1)
    return EveProcessing(music_covariance=smoothed, capon_covariance=smoothed,
                         music_transform=None,
                         geometry=subarray_geometry(cfg.eve_rx_array, m),
                         source_count=count, snapshots_eff=s_eff, smoothing=True)


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------

def _grid_steering(geom: ArrayGeometry, grid: GridSpec) -> np.ndarray:
    return steering_matrix(geom, grid.angles, grid.ranges)


def capon_spectrum(cov: np.ndarray, geom: ArrayGeometry, grid: GridSpec,
                   load_cond: float = 1e12,
                   projector: np.ndarray | None = None) -> SpectrumGrid:
    """Minimum-variance spectrum 1 / (a^H R^-1 a); diagonal loading applied
    when the covariance condition number exceeds ``load_cond``.

    With a ``projector`` the covariance must be the beamspace covariance and
    the steering vectors are replaced by their projections."""
    r = np.asarray(cov, dtype=complex)
    n = r.shape[0]
    ev = np.linalg.eigvalsh(r)
    if ev[0] <= 0 or ev[-1] / max(ev[0], 1e-300) > load_cond:
        r = r + (1e-6 * np.real(np.trace(r)) / n) * np.eye(n)
    a = _grid_steering(geom, grid)
    flat = a.reshape(a.shape[0], -1)
    if projector is not None:
        if projector.shape[0] != n:
            raise ValueError("projector rows must match the beamspace covariance size")
        flat = projector @ flat
    cho = sla.cho_factor(r)
    solved = sla.cho_solve(cho, flat)
    denom = np.real(np.sum(flat.conj() * solved, axis=0))
    vals = 1.0 / np.maximum(denom, 1e-300)
    return SpectrumGrid(angles=grid.angles, ranges=grid.ranges,
                        values=vals.reshape(a.shape[1], a.shape[2]))


def music_spectrum(cov: np.ndarray, geom: ArrayGeometry, n_sources: int,
                   grid: GridSpec, projector: np.ndarray | None = None,
                   ) -> SpectrumGrid:
    """Subspace pseudo-spectrum from the noise subspace of the covariance.

    Element space: 1 / ||U_n^H a||^2.  With a projector P supplied the
    covariance must already be the beamspace covariance; the beamspace form
    ||Pa||^2 / ||U_n^H P a||^2 is used.  Values are capped so noiseless
    spectra stay finite.
    """
    r = np.asarray(cov, dtype=complex)
    dim = r.shape[0]
    if not 0 < n_sources < dim:
        raise SubspaceError(f"need 0 < sources < {dim} (got {n_sources})")
    _, vecs = np.linalg.eigh(r)
    u_n = vecs[:, : dim - n_sources]
    a = _grid_steering(geom, grid)
    flat = a.reshape(a.shape[0], -1)
    if projector is not None:
        if projector.shape[0] != dim:
            raise ValueError("projector rows must match the beamspace covariance size")
        b = projector @ flat
        num = np.sum(np.abs(b) ** 2, axis=0)
    else:
        b = flat
        num = 1.0
    den = np.sum(np.abs(u_n.conj().T @ b) ** 2, axis=0)
    vals = np.minimum(num / np.maximum(den, 1e-300), MUSIC_CAP)
    return SpectrumGrid(angles=grid.angles, ranges=grid.ranges,
                        values=vals.reshape(a.shape[1], a.shape[2]))


def _refine_axis(axis: np.ndarray, idx: int, vm1: float, v0: float, vp1: float) -> float:
    den = vm1 - 2.0 * v0 + vp1
    if den >= 0:  # not a concave vertex; keep the grid point
        return axis[idx]
    off = 0.5 * (vm1 - vp1) / den
    off = min(max(off, -0.5), 0.5)
    step = axis[min(idx + 1, len(axis) - 1)] - axis[idx] if idx + 1 < len(axis) \
        else axis[idx] - axis[idx - 1]
    return float(axis[idx] + off * step)


def peak_search(grid: SpectrumGrid, count: int) -> PeakSearchResult:
    """Top interior 8-neighborhood maxima, value-descending, one quadratic
    interpolation step per axis; (angle, range) tie-break for equal values."""
    if count < 1:
        raise ValueError("count must be >= 1")
    v = grid.values
    na, nr = v.shape
    cand: list[tuple[float, float, float]] = []
    for i in range(1, na - 1):
        for j in range(1, nr - 1):
            c = v[i, j]
            patch = v[i - 1:i + 2, j - 1:j + 2]
            if (patch < c).sum() == 8:  # strictly above all 8 neighbors
                ang = _refine_axis(grid.angles, i, v[i - 1, j], c, v[i + 1, j])
                rng_ = _refine_axis(grid.ranges, j, v[i, j - 1], c, v[i, j + 1])
                cand.append((ang, rng_, float(c)))
    cand.sort(key=lambda p: (-p[2], p[0], p[1]))
    return PeakSearchResult(peaks=tuple(cand[:count]), short_count=len(cand) < count)


# ---------------------------------------------------------------------------
# Cyclic relaxation MLE (legitimate side only: needs the transmitted block)
# ---------------------------------------------------------------------------

def _component_score(e: np.ndarray, rx_grid: np.ndarray, txx_grid: np.ndarray,
                     tx_norm2: np.ndarray) -> np.ndarray:
    """|u^H E v|^2 / (||u||^2 ||v||^2) over the grid (residual energy removed
    by the best rank-1 fit at each grid point)."""
    n_r = rx_grid.shape[0]
    ue = np.einsum("ig,is->gs", rx_grid.conj(), e)
    cross = np.abs(np.einsum("gs,gs->g", ue, txx_grid.conj())) ** 2
    return cross / (n_r * np.maximum(tx_norm2, 1e-300))


def _fit_gain(e: np.ndarray, u: np.ndarray, v: np.ndarray) -> complex:
    return (u.conj() @ e @ v.conj()) / (np.linalg.norm(u) ** 2 * np.linalg.norm(v) ** 2)


def mle_estimate(frame: EchoFrame, x: np.ndarray, cfg: SceneConfig, n_targets: int,
                 grid: GridSpec | None = None, sweeps: int = 20, tol: float = 1e-6,
                 refine: bool = True) -> EstimationResult:
    """Relaxation MLE: estimate one reflector at a time by 2-D search on the
    residual with the other components subtracted, gains by closed-form least
    squares, cycling until the residual stalls.

    ``refine=True`` polishes each grid estimate with a local simplex search
    so accuracy is not floor-limited by the grid step.
    """
    if grid is None:
        grid = GridSpec.default()
    y = frame.samples
    rx_geom = cfg.alice_rx_array
    tx_geom = cfg.tx_array

    rx_grid = _grid_steering(rx_geom, grid).reshape(rx_geom.element_count, -1)
    tx_grid = _grid_steering(tx_geom, grid).reshape(tx_geom.element_count, -1)
    txx_grid = np.einsum("ig,is->gs", tx_grid.conj(), x)   # v^H rows: a_t^H X
    tx_norm2 = np.real(np.sum(np.abs(txx_grid) ** 2, axis=1))
    n_ang, n_rng = grid.angles.size, grid.ranges.size

    def component_matrices(loc: PolarLocation) -> tuple[np.ndarray, np.ndarray]:
        u = steering_vector(rx_geom, loc)
        v = (steering_vector(tx_geom, loc).conj() @ x)
        return u, v

    def contribution(loc: PolarLocation, gain: complex) -> np.ndarray:
        u, v = component_matrices(loc)
        return gain * np.outer(u, v)

    def local_polish(e: np.ndarray, loc0: PolarLocation) -> PolarLocation:
        def neg_score(z):
            th, r = z
            if not (grid.angles[0] <= th <= grid.angles[-1]) or \
               not (grid.ranges[0] <= r <= grid.ranges[-1]):
                return 0.0
            u = steering_vector(rx_geom, PolarLocation(th, r))
            v = steering_vector(tx_geom, PolarLocation(th, r)).conj() @ x
            num = abs(u.conj() @ e @ v.conj()) ** 2
            return -num / (np.linalg.norm(u) ** 2 * np.linalg.norm(v) ** 2)

        dth = grid.angles[1] - grid.angles[0] if grid.angles.size > 1 else 1e-3
        dr = grid.ranges[1] - grid.ranges[0] if grid.ranges.size > 1 else 1e-3
        res = sopt.minimize(neg_score, x0=[loc0.angle, loc0.range], method="Nelder-Mead",
                            options={"xatol": 1e-7, "fatol": 1e-12, "maxiter": 200,
                                     "initial_simplex": np.array([
                                         [loc0.angle, loc0.range],
                                         [loc0.angle + 0.5 * dth, loc0.range],
                                         [loc0.angle, loc0.range + 0.5 * dr]])})
        th, r = res.x
        th = min(max(th, grid.angles[0]), grid.angles[-1])
        r = min(max(r, grid.ranges[0]), grid.ranges[-1])
        return PolarLocation(angle=float(th), range=float(r))

    comps: list[tuple[PolarLocation, complex]] = []
    prev_resid = np.linalg.norm(y) ** 2
    for sweep in range(sweeps):
        order = range(n_targets)
        for idx in order:
            e = y.copy()
            for j, (loc, g) in enumerate(comps):
                if j != idx:
                    e -= contribution(loc, g)
            score = _component_score(e, rx_grid, txx_grid, tx_norm2)
            best = int(np.argmax(score))
            loc = PolarLocation(angle=float(grid.angles[best // n_rng]),
                                range=float(grid.ranges[best % n_rng]))
            if refine:
                loc = local_polish(e, loc)
            u, v = component_matrices(loc)
            gain = _fit_gain(e, u, v)
            if idx < len(comps):
                comps[idx] = (loc, gain)
            else:
                comps.append((loc, gain))
        resid = y.copy()
        for loc, g in comps:
            resid -= contribution(loc, g)
        r2 = np.linalg.norm(resid) ** 2
        if sweep > 0 and abs(prev_resid - r2) <= tol * max(prev_resid, 1e-300):
            break
        prev_resid = r2

    return EstimationResult(source_count=n_targets,
                            locations=tuple(loc for loc, _ in comps),
                            method="mle", smoothing=False)
