"""Secure transmit-covariance design and hybrid beamforming.

The design chain: evaluate communication/sensing metrics, maximize a weighted
sum of user rate and minimum scatterer power subject to a legitimate radar
SINR floor and a power budget, via fractional programming (quadratic
transform on each SINR) + semidefinite relaxation, with an optional
fixed-rank radar covariance enforced through eigenvalue constraints and
successive convex approximation.  The relaxed covariances are then factored
into an analog/digital beamformer pair.

Solver notes.  Each convex step is a Hermitian SDP with exponential cones
(one per user-rate term).  Problems are compiled once per scene with cvxpy
parameters and re-solved across FP/SCA iterations.  Two numerical devices
keep the interior-point solver healthy at any SNR: all quadratic forms are
expressed in noise-normalized units, and each log argument is divided by its
value at the previous iterate (a constant offset of the objective).  The
linearized rank constraint confines the radar covariance to the top-K_r
eigenspace of the anchor, so that subspace is substituted exactly
(R_r = U Z U^H with Z a K_r x K_r PSD variable), which removes a degenerate
face from the cone program.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .channel import ChannelSet, steering_matrix, steering_vector
from .scene import SceneConfig

__all__ = [
    "OptimizerError",
    "InfeasibleDesignError",
    "TradeoffWeights",
    "FPState",
    "CovarianceDesign",
    "HybridDesign",
    "design_covariances",
    "bob_sinr",
    "sum_rate",
    "radar_sinr",
    "scatterer_power",
    "beampattern",
    "max_radar_sinr",
    "fp_update",
    "fp_surrogate",
    "CovarianceSolver",
    "solve_covariance_step",
    "optimize",
    "extract_beamformers",
    "hybrid_decompose",
    "radar_dbf_ls",
    "hybrid_design",
    "write_trace_csv",
]

_OK_STATUSES = ("optimal", "optimal_inaccurate")
_INFEASIBLE_STATUSES = ("infeasible", "infeasible_inaccurate")


class OptimizerError(RuntimeError):
    """Conic solver failed outright (no usable solution)."""


class InfeasibleDesignError(OptimizerError):
    """The design problem is infeasible; carries the constraint set."""

    def __init__(self, message: str, constraints: list[str]):
        super().__init__(message + "\n  " + "\n  ".join(constraints))
        self.constraints = constraints


@dataclass(frozen=True)
class TradeoffWeights:
    """Objective weights: w_c + w_ss = 1 trade rate against deception power;
    w_s in [0, 1] scales the radar SINR floor."""

    w_c: float
    w_ss: float
    w_s: float

    def __post_init__(self):
        if self.w_c < 0 or self.w_ss < 0 or not 0.0 <= self.w_s <= 1.0:
            raise ValueError(f"weights must be nonnegative with w_s in [0,1]: {self}")
        if abs(self.w_c + self.w_ss - 1.0) > 1e-9:
            raise ValueError(f"w_c + w_ss must equal 1 (got {self.w_c + self.w_ss})")

    def label(self) -> str:
        return f"[{self.w_c:g},{self.w_ss:g},{self.w_s:g}]"


@dataclass(frozen=True)
class FPState:
    """Quadratic-transform auxiliaries: beta_k = sqrt(A_k)/B_k, in physical units."""

    betas: np.ndarray
    numerators: np.ndarray
    denominators: np.ndarray


@dataclass(frozen=True)
class CovarianceDesign:
    """Optimized covariances (watts): comm_cov[k], radar_cov, slack = delta."""

    comm_cov: np.ndarray
    radar_cov: np.ndarray
    slack: float
    trajectory: tuple[float, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def total(self) -> np.ndarray:
        return self.comm_cov.sum(axis=0) + self.radar_cov


@dataclass(frozen=True)
class HybridDesign:
    """Analog/digital factorization: analog has unit-modulus entries."""

    analog: np.ndarray
    digital_comm: np.ndarray
    digital_radar: np.ndarray

    @property
    def digital(self) -> np.ndarray:
        return np.concatenate([self.digital_comm, self.digital_radar], axis=1)

    @property
    def total_covariance(self) -> np.ndarray:
        fw = self.analog @ self.digital
        return fw @ fw.conj().T


def design_covariances(design) -> tuple[np.ndarray, np.ndarray]:
    """(comm covariances stack, radar covariance) from either design form."""
    if isinstance(design, CovarianceDesign):
        return design.comm_cov, design.radar_cov
    if isinstance(design, HybridDesign):
        fwc = design.analog @ design.digital_comm
        fwr = design.analog @ design.digital_radar
        comm = np.stack([np.outer(fwc[:, k], fwc[:, k].conj()) for k in range(fwc.shape[1])])
        return comm, fwr @ fwr.conj().T
    raise TypeError(f"not a design: {type(design)!r}")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _quad(v: np.ndarray, m: np.ndarray) -> float:
    return float(np.real(v.conj() @ m @ v))


def bob_sinr(ch: ChannelSet, design, k: int) -> float:
    """Receive SINR of user k: own beam over inter-user + radar + noise power."""
    comm, radar = design_covariances(design)
    h = ch.bob[k]
    num = _quad(h, comm[k])
    den = sum(_quad(h, comm[j]) for j in range(comm.shape[0]) if j != k)
    den += _quad(h, radar) + ch.config.noise_power
    return num / den


def sum_rate(ch: ChannelSet, design) -> float:
    """Sum of log2(1 + SINR_k) over users, bits/s/Hz."""
    comm, _ = design_covariances(design)
    return sum(math.log2(1.0 + bob_sinr(ch, design, k)) for k in range(comm.shape[0]))


def _target_echo_powers(ch: ChannelSet, design) -> np.ndarray:
    cfg = ch.config
    comm, radar = design_covariances(design)
    rx = comm.sum(axis=0) + radar
    pw = np.empty(cfg.n_targets)
    for l, loc in enumerate(cfg.targets):
        a = steering_vector(cfg.tx_array, loc)
        pw[l] = abs(ch.gains.roundtrip[l]) ** 2 * _quad(a, rx)
    return pw


def radar_sinr(ch: ChannelSet, design, target_index: int) -> float:
    """Legitimate radar SINR of one target: its echo power over the other
    targets' echo power plus noise."""
    pw = _target_echo_powers(ch, design)
    other = pw.sum() - pw[target_index]
    return pw[target_index] / (other + ch.config.noise_power)


def scatterer_power(ch: ChannelSet, design, scatterer_index: int) -> float:
    """Power projected onto one scatterer (watts)."""
    cfg = ch.config
    comm, radar = design_covariances(design)
    rx = comm.sum(axis=0) + radar
    loc = cfg.scatterers[scatterer_index]
    a = steering_vector(cfg.tx_array, loc)
    return (cfg.reference_pathloss / loc.range**2) * _quad(a, rx)


def beampattern(cfg: SceneConfig, design, angles: np.ndarray, ranges: np.ndarray) -> np.ndarray:
    """Transmit beampattern a^H(theta, r) R_X a over an (angle, range) grid."""
    comm, radar = design_covariances(design)
    rx = comm.sum(axis=0) + radar
    grid = steering_matrix(cfg.tx_array, angles, ranges)
    n, na, nr = grid.shape
    flat = grid.reshape(n, -1)
    vals = np.real(np.einsum("ig,ij,jg->g", flat.conj(), rx, flat))
    return vals.reshape(na, nr)


# ---------------------------------------------------------------------------
# Solver scaffolding
# ---------------------------------------------------------------------------

def _solve_with_rescue(prob: cp.Problem) -> str:
    """CLARABEL first, then CLARABEL with heavier regularization, then SCS.

    Returns the final cvxpy status; raises OptimizerError when no backend
    produces a usable solution.
    """
    attempts = (
        ("CLARABEL", dict(solver=cp.CLARABEL)),
        ("CLARABEL(reg)", dict(solver=cp.CLARABEL, static_regularization_constant=1e-7,
                               max_iter=400)),
        ("SCS", dict(solver=cp.SCS, eps=5e-8, max_iters=200_000)),
    )
    last = None
    for name, opts in attempts:
        try:
            prob.solve(**opts)
        except cp.SolverError as exc:
            last = f"{name}: {exc}"
            continue
        if prob.status in _OK_STATUSES or prob.status in _INFEASIBLE_STATUSES:
            return prob.status
        last = f"{name}: status {prob.status}"
    raise OptimizerError(f"conic solve failed on all backends ({last})")


def _blend_anchor(ch: ChannelSet, weights: TradeoffWeights) -> np.ndarray:
    """Objective-aware rank-seed: mixes target and scatterer outer products."""
    cfg = ch.config
    nt = cfg.tx_array.element_count
    mix = np.zeros((nt, nt), dtype=complex)
    wt = max(weights.w_s, 0.0)
    wsc = max(weights.w_ss, 0.0)
    if wt == 0.0 and wsc == 0.0:
        wt = wsc = 1.0
    if cfg.n_targets and wt > 0:
        m = sum(np.outer(a, a.conj()) for a in
                (steering_vector(cfg.tx_array, l) for l in cfg.targets))
        mix += wt * m / cfg.n_targets
    if cfg.n_scatterers and wsc > 0:
        m = sum(np.outer(a, a.conj()) for a in
                (steering_vector(cfg.tx_array, l) for l in cfg.scatterers))
        mix += wsc * m / cfg.n_scatterers
    if not np.any(mix):
        mix = np.eye(nt, dtype=complex)
    kappa = cfg.power_split
    return kappa * cfg.power_budget * mix / np.real(np.trace(mix))


def _anchor_candidates(ch: ChannelSet, weights: TradeoffWeights) -> list[np.ndarray]:
    cfg = ch.config
    nt = cfg.tx_array.element_count
    kappa = cfg.power_split
    cands = [_blend_anchor(ch, weights)]
    if cfg.n_targets:
        m = sum(np.outer(a, a.conj()) for a in
                (steering_vector(cfg.tx_array, l) for l in cfg.targets))
        cands.append(kappa * cfg.power_budget * m / np.real(np.trace(m)))
    cands.append(kappa * cfg.power_budget * np.eye(nt, dtype=complex) / nt)
    return cands


def _span_basis(vectors: list[np.ndarray], n: int) -> np.ndarray:
    """Orthonormal basis of the span of the given vectors (columns)."""
    if not vectors:
        return np.eye(n, dtype=complex)
    m = np.stack(vectors, axis=1)
    u, sv, _ = np.linalg.svd(m, full_matrices=False)
    rank = max(int(np.sum(sv > 1e-12 * sv[0])), 1)
    return u[:, :rank]


class CovarianceSolver:
    """Compiled convex step for one scene; re-solved across FP/SCA iterations.

    ``rank_constrained=False`` is the plain relaxation (radar covariance a
    free PSD matrix); ``True`` substitutes R_r = U Z U^H with U the top-K_r
    eigenvectors of the running anchor.

    Every constraint touches the covariances only through quadratic forms
    with the K_c + L channel/steering vectors plus the trace, so an optimal
    solution exists with all covariances supported on that span (projecting
    any feasible point onto it preserves every quadratic form and can only
    shrink the trace).  The solver therefore works in the reduced
    coordinates R = V G V^H with V an orthonormal span basis, which keeps
    the PSD cones small at large array sizes.
    """

    def __init__(self, ch: ChannelSet, weights: TradeoffWeights, rank_constrained: bool):
        cfg = ch.config
        self.ch = ch
        self.cfg = cfg
        self.weights = weights
        self.rank_constrained = rank_constrained
        self.sigma = math.sqrt(cfg.noise_power)
        self.use_rate = weights.w_c > 0 and cfg.n_bobs > 0
        self.use_slack = weights.w_ss > 0 and cfg.n_scatterers > 0
        self._basis: np.ndarray | None = None

        kc = cfg.n_bobs
        kr = cfg.radar_streams
        # noise-normalized channel data, reduced onto the constraint span
        hn_full = [h / self.sigma for h in ch.bob]
        at_full = [steering_vector(cfg.tx_array, l) for l in cfg.targets]
        ac_full = [steering_vector(cfg.tx_array, l) for l in cfg.scatterers]
        self.span = _span_basis(hn_full + at_full + ac_full,
                                cfg.tx_array.element_count)
        nt = self.span.shape[1]
        self._hn = [self.span.conj().T @ h for h in hn_full]
        self._at = [self.span.conj().T @ a for a in at_full]
        self._ac = [self.span.conj().T @ a for a in ac_full]
        self._gt = [abs(g) ** 2 / cfg.noise_power for g in ch.gains.roundtrip[: cfg.n_targets]]
        self._gc = [cfg.reference_pathloss / (l.range**2 * cfg.noise_power)
                    for l in cfg.scatterers]

        self.Rc = [cp.Variable((nt, nt), hermitian=True) for _ in range(kc)]
        rc_sum = sum(self.Rc) if kc else 0
        cons = [R >> 0 for R in self.Rc]
        if rank_constrained:
            self.Z = cp.Variable((kr, kr), hermitian=True)
            self._mh = [cp.Parameter((kr, kr), hermitian=True) for _ in range(kc)]
            self._mt = [cp.Parameter((kr, kr), hermitian=True) for _ in range(cfg.n_targets)]
            self._mc = [cp.Parameter((kr, kr), hermitian=True) for _ in range(cfg.n_scatterers)]
            cons += [self.Z >> 0,
                     cp.lambda_min(self.Z) >= cfg.power_split * cfg.power_budget / kr]
            radar_power = cp.real(cp.trace(self.Z))

            def radar_quad(i, kind):
                m = {"h": self._mh, "t": self._mt, "c": self._mc}[kind][i]
                return cp.real(cp.trace(m @ self.Z))
        else:
            self.Rr = cp.Variable((nt, nt), hermitian=True)
            cons.append(self.Rr >> 0)
            radar_power = cp.real(cp.trace(self.Rr))

            def radar_quad(i, kind):
                v = {"h": self._hn, "t": self._at, "c": self._ac}[kind][i]
                return cp.real(cp.quad_form(v, self.Rr))

        total_power = (cp.real(cp.trace(rc_sum)) if kc else 0) + radar_power
        cons.append(total_power <= cfg.power_budget)

        # auxiliary equalities keep every parameter product DPP-affine
        self.ps = cp.Parameter(nonneg=True)
        if cfg.n_targets:
            self.et = cp.Variable(cfg.n_targets)
            for i in range(cfg.n_targets):
                expr = self._gt[i] * (cp.real(cp.quad_form(self._at[i], rc_sum)) if kc else 0)
                expr = expr + self._gt[i] * radar_quad(i, "t")
                cons.append(self.et[i] == expr)
            s_et = cp.sum(self.et)
            for i in range(cfg.n_targets):
                cons.append(self.et[i] + self.ps * self.et[i] >= self.ps * s_et + self.ps)

        objective = cp.Constant(0.0)
        if self.use_slack:
            self.delta = cp.Variable(nonneg=True)  # noise-normalized slack
            for i in range(cfg.n_scatterers):
                expr = self._gc[i] * (cp.real(cp.quad_form(self._ac[i], rc_sum)) if kc else 0)
                expr = expr + self._gc[i] * radar_quad(i, "c")
                cons.append(expr >= self.delta)
            self.wss_eff = cp.Parameter(nonneg=True)  # w_ss * sigma^2
            objective = objective + self.wss_eff * self.delta

        if self.use_rate:
            self.u = cp.Variable(kc, nonneg=True)
            self.t = cp.Variable(kc)
            self.b1 = cp.Parameter(kc, nonneg=True)   # 2 beta' / c
            self.b2 = cp.Parameter(kc, nonneg=True)   # beta'^2 / c
            self.invc = cp.Parameter(kc, nonneg=True)
            self.wc_par = cp.Parameter(nonneg=True)
            self.bq = cp.Variable(kc)                 # interference quad incl. noise(=1)
            for k in range(kc):
                a_expr = cp.real(cp.quad_form(self._hn[k], self.Rc[k]))
                interf = sum(cp.real(cp.quad_form(self._hn[k], self.Rc[j]))
                             for j in range(kc) if j != k)
                interf = interf + radar_quad(k, "h")
                cons.append(self.bq[k] == interf + 1.0)
                cons.append(cp.square(self.u[k]) <= a_expr)
                cons.append(self.t[k] <= cp.log(self.invc[k] + self.b1[k] * self.u[k]
                                                - self.b2[k] * self.bq[k]))
            objective = objective + self.wc_par * cp.sum(self.t) / math.log(2)

        self.prob = cp.Problem(cp.Maximize(objective), cons)

    # -- per-iteration parameter updates ------------------------------------
    def _set_fp(self, fp: FPState):
        if not self.use_rate:
            return
        a_n = np.maximum(fp.numerators, 0.0) / self.cfg.noise_power
        b_n = fp.denominators / self.cfg.noise_power
        beta_n = fp.betas * self.sigma
        c = 1.0 + np.divide(a_n, b_n, out=np.zeros_like(a_n), where=b_n > 0)
        self.b1.value = 2.0 * beta_n / c
        self.b2.value = beta_n**2 / c
        self.invc.value = 1.0 / c
        self.wc_par.value = self.weights.w_c

    def _set_anchor(self, anchor: np.ndarray):
        """Anchor arrives in full coordinates; the radar subspace is its
        top-K_r eigenbasis reduced onto the span."""
        if not self.rank_constrained:
            self._basis = None
            return
        kr = self.cfg.radar_streams
        reduced = self.span.conj().T @ anchor @ self.span
        _, vecs = np.linalg.eigh(0.5 * (reduced + reduced.conj().T))
        u = vecs[:, -kr:]
        self._basis = u
        for par, v in zip(self._mh, self._hn):
            w = u.conj().T @ v
            par.value = np.outer(w, w.conj())
        for par, v in zip(self._mt, self._at):
            w = u.conj().T @ v
            par.value = np.outer(w, w.conj())
        for par, v in zip(self._mc, self._ac):
            w = u.conj().T @ v
            par.value = np.outer(w, w.conj())

    def _constraint_summary(self, sinr_floor: float) -> list[str]:
        cfg = self.cfg
        out = [f"Tr(R_X) <= {cfg.power_budget} W"]
        if cfg.n_targets:
            out.append(f"target SINR >= {sinr_floor:.6g} for {cfg.n_targets} targets")
        if self.use_slack:
            out.append(f"scatterer power >= delta for {cfg.n_scatterers} scatterers")
        if self.rank_constrained:
            out.append(
                f"rank(R_r) = {cfg.radar_streams}, "
                f"Tr(R_r) >= {cfg.power_split * cfg.power_budget:.6g} W"
            )
        return out

    def solve(self, fp: FPState, sinr_floor: float,
              sca_anchor: np.ndarray | None = None) -> CovarianceDesign:
        """One convex step at fixed FP state (and fixed SCA anchor if ranked)."""
        cfg = self.cfg
        self._set_fp(fp)
        self.ps.value = max(sinr_floor, 0.0)
        if self.use_slack:
            self.wss_eff.value = self.weights.w_ss * cfg.noise_power
        if self.rank_constrained:
            if sca_anchor is None:
                raise ValueError("rank-constrained step needs an SCA anchor")
            self._set_anchor(sca_anchor)

        status = _solve_with_rescue(self.prob)
        if status in _INFEASIBLE_STATUSES:
            raise InfeasibleDesignError(
                f"covariance step infeasible (status {status})",
                self._constraint_summary(sinr_floor),
            )

        nt = cfg.tx_array.element_count
        v = self.span
        comm = (np.stack([v @ np.asarray(R.value) @ v.conj().T for R in self.Rc])
                if self.Rc else np.zeros((0, nt, nt), complex))
        if self.rank_constrained:
            u_full = v @ self._basis
            radar = u_full @ np.asarray(self.Z.value) @ u_full.conj().T
        else:
            radar = v @ np.asarray(self.Rr.value) @ v.conj().T
        slack = (float(self.delta.value) * cfg.noise_power if self.use_slack
                 else _min_scatterer_power(self.ch, comm, radar))
        return CovarianceDesign(comm_cov=comm, radar_cov=radar, slack=slack)


def _min_scatterer_power(ch: ChannelSet, comm: np.ndarray, radar: np.ndarray) -> float:
    cfg = ch.config
    if not cfg.n_scatterers:
        return 0.0
    design = CovarianceDesign(comm_cov=comm, radar_cov=radar, slack=0.0)
    return min(scatterer_power(ch, design, i) for i in range(cfg.n_scatterers))


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def fp_update(ch: ChannelSet, design) -> FPState:
    """Closed-form auxiliary update: A_k, B_k and beta_k = sqrt(A_k)/B_k."""
    cfg = ch.config
    comm, radar = design_covariances(design)
    kc = cfg.n_bobs
    a = np.zeros(kc)
    b = np.zeros(kc)
    for k in range(kc):
        h = ch.bob[k]
        a[k] = max(_quad(h, comm[k]), 0.0) if comm.shape[0] else 0.0
        b[k] = sum(_quad(h, comm[j]) for j in range(comm.shape[0]) if j != k)
        b[k] += _quad(h, radar) + cfg.noise_power
    return FPState(betas=np.sqrt(a) / b, numerators=a, denominators=b)


def fp_surrogate(fp: FPState, numerators=None, denominators=None) -> float:
    """Sum of log2(1 + 2 beta sqrt(A) - beta^2 B); equals the true rate at the
    fixed-point beta = sqrt(A)/B."""
    a = fp.numerators if numerators is None else np.asarray(numerators)
    b = fp.denominators if denominators is None else np.asarray(denominators)
    args = 1.0 + 2.0 * fp.betas * np.sqrt(np.maximum(a, 0.0)) - fp.betas**2 * b
    return float(np.sum(np.log2(np.maximum(args, 1e-300))))


def max_radar_sinr(ch: ChannelSet, tol: float = 1e-4, max_iter: int = 60) -> float:
    """Maximum achievable min-target radar SINR under the power budget alone.

    Bisection on the SINR level with an SDP feasibility check per level.
    The covariance is restricted WLOG onto the span of the target steering
    vectors (projection preserves the SINR quadratic forms and shrinks the
    trace), so each feasibility problem is only L_T x L_T.
    """
    cfg = ch.config
    if cfg.n_targets == 0:
        raise ValueError("scene has no targets")
    nt = cfg.tx_array.element_count
    at_full = [steering_vector(cfg.tx_array, l) for l in cfg.targets]
    gt = [abs(g) ** 2 / cfg.noise_power for g in ch.gains.roundtrip[: cfg.n_targets]]
    span = _span_basis(at_full, nt)
    at = [span.conj().T @ a for a in at_full]
    m = span.shape[1]

    g_var = cp.Variable((m, m), hermitian=True)
    t_par = cp.Parameter(nonneg=True)
    e = cp.Variable(cfg.n_targets)
    cons = [g_var >> 0, cp.real(cp.trace(g_var)) <= cfg.power_budget]
    for i in range(cfg.n_targets):
        cons.append(e[i] == gt[i] * cp.real(cp.quad_form(at[i], g_var)))
    s_e = cp.sum(e)
    for i in range(cfg.n_targets):
        cons.append(e[i] + t_par * e[i] >= t_par * s_e + t_par)
    prob = cp.Problem(cp.Minimize(0), cons)

    lo = 0.0
    hi = min(g * nt * cfg.power_budget for g in gt)  # single-target matched bound
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        t_par.value = mid
        try:
            status = _solve_with_rescue(prob)
            feasible = status in _OK_STATUSES
        except OptimizerError:
            feasible = False
        if feasible:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(hi, 1e-30):
            break
    return lo


def solve_covariance_step(ch: ChannelSet, weights: TradeoffWeights, fp: FPState,
                          sca_anchor: np.ndarray | None = None,
                          rank_constrained: bool = False,
                          sinr_floor: float | None = None) -> CovarianceDesign:
    """One convex design step at fixed FP auxiliaries.

    ``sinr_floor`` defaults to w_s * max_radar_sinr (recomputed; pass it
    explicitly to avoid the bisection).
    """
    if sinr_floor is None:
        sinr_floor = (weights.w_s * max_radar_sinr(ch)
                      if weights.w_s > 0 and ch.config.n_targets else 0.0)
    solver = CovarianceSolver(ch, weights, rank_constrained)
    return solver.solve(fp, sinr_floor, sca_anchor)


def _initial_design(ch: ChannelSet, rank_constrained: bool,
                    anchor: np.ndarray) -> CovarianceDesign:
    cfg = ch.config
    nt = cfg.tx_array.element_count
    kc = cfg.n_bobs
    comm_budget = (1.0 - cfg.power_split) * cfg.power_budget if rank_constrained \
        else cfg.power_budget
    comm = np.zeros((kc, nt, nt), complex)
    for k in range(kc):
        h = ch.bob[k]
        comm[k] = (comm_budget / max(kc, 1)) * np.outer(h, h.conj()) / np.linalg.norm(h) ** 2
    radar = anchor if rank_constrained else np.zeros((nt, nt), complex)
    return CovarianceDesign(comm_cov=comm, radar_cov=radar,
                            slack=_min_scatterer_power(ch, comm, radar))


def optimize(ch: ChannelSet, weights: TradeoffWeights, rank_constrained: bool = True,
             sinr_floor: float | None = None, fp_iterations: int = 15,
             sca_iterations: int = 10, tol: float = 1e-5) -> CovarianceDesign:
    """Full design loop: outer FP updates, inner SCA updates of the radar
    anchor, until the objective stalls or the iteration caps hit.

    Returns the final design with the objective trajectory attached.  A
    non-monotone step beyond solver noise is recorded as a warning, not an
    error.  Infeasibility raises :class:`InfeasibleDesignError`.
    """
    cfg = ch.config
    if sinr_floor is None:
        sinr_floor = (weights.w_s * max_radar_sinr(ch)
                      if weights.w_s > 0 and cfg.n_targets else 0.0)
    solver = CovarianceSolver(ch, weights, rank_constrained)

    anchors = _anchor_candidates(ch, weights) if rank_constrained else [None]
    design = None
    anchor = None
    first_err: InfeasibleDesignError | None = None
    for cand in anchors:
        try:
            fp0 = fp_update(ch, _initial_design(ch, rank_constrained,
                                                cand if cand is not None else np.zeros(0)))
            design = solver.solve(fp0, sinr_floor, cand)
            anchor = design.radar_cov if rank_constrained else None
            break
        except InfeasibleDesignError as exc:
            first_err = first_err or exc
    if design is None:
        raise first_err  # type: ignore[misc]

    def objective(d: CovarianceDesign) -> float:
        val = weights.w_c * sum_rate(ch, d) if weights.w_c > 0 else 0.0
        if weights.w_ss > 0 and cfg.n_scatterers:
            val += weights.w_ss * d.slack
        return val

    traj = [objective(design)]
    warns: list[str] = []
    for it in range(1, fp_iterations):
        fp = fp_update(ch, design)
        if rank_constrained:
            for _ in range(sca_iterations):
                prev_anchor = anchor
                design = solver.solve(fp, sinr_floor, anchor)
                anchor = design.radar_cov
                gap = np.linalg.norm(anchor - prev_anchor) / max(
                    np.linalg.norm(prev_anchor), 1e-30)
                if gap <= 1e-7:
                    break
        else:
            design = solver.solve(fp, sinr_floor, None)
        traj.append(objective(design))
        scale = max(1.0, abs(traj[-2]))
        if traj[-1] < traj[-2] - 1e-7 * scale:
            warns.append(
                f"objective decreased at FP iteration {it}: "
                f"{traj[-2]:.9g} -> {traj[-1]:.9g}"
            )
        if abs(traj[-1] - traj[-2]) <= tol * scale:
            break
    return CovarianceDesign(comm_cov=design.comm_cov, radar_cov=design.radar_cov,
                            slack=design.slack, trajectory=tuple(traj),
                            warnings=tuple(warns))


# ---------------------------------------------------------------------------
# Beamformer extraction
# ---------------------------------------------------------------------------

def extract_beamformers(design: CovarianceDesign,
                        radar_streams: int | None = None,
                        rank1_tol: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Fully digital beamformers from the covariances.

    Communication: w_k = sqrt(lambda_max) u_max per user; if the covariance
    is not numerically rank-1 (ratio above ``rank1_tol``) the dominant
    eigenvector is kept with the power renormalized to the full trace.
    Radar: the K_r dominant eigenpairs of the radar covariance, scaled by
    sqrt(eigenvalue).
    """
    kc, nt = design.comm_cov.shape[0], design.comm_cov.shape[-1]
    wc = np.zeros((nt, kc), complex)
    for k in range(kc):
        vals, vecs = np.linalg.eigh(design.comm_cov[k])
        lead = max(vals[-1], 0.0)
        trace = max(np.real(np.trace(design.comm_cov[k])), 0.0)
        if lead <= 0.0:
            continue
        ratio = max(vals[-2], 0.0) / lead if nt > 1 else 0.0
        power = lead if ratio < rank1_tol else trace
        wc[:, k] = math.sqrt(power) * vecs[:, -1]
    kr = radar_streams if radar_streams is not None else max(
        1, int(np.sum(np.linalg.eigvalsh(design.radar_cov) >
                      1e-9 * max(np.real(np.trace(design.radar_cov)), 1e-300))))
    vals, vecs = np.linalg.eigh(design.radar_cov)
    wr = vecs[:, -kr:] * np.sqrt(np.maximum(vals[-kr:], 0.0))
    return wc, wr


def hybrid_decompose(w_fd: np.ndarray, cfg: SceneConfig,
                     comm_power: float | None = None,
                     max_iter: int = 500, tol: float = 1e-6,
                     seed: int = 12345) -> tuple[np.ndarray, np.ndarray]:
    """Factor a fully digital beamformer into unit-modulus analog x digital.

    Alternates a least-squares digital update with projected gradient descent
    (Armijo backtracking, modulus-1 retraction) on the analog entries, then
    rescales the digital part so the hybrid product carries ``comm_power``
    (default: the communication share (1-kappa) P_T, capped so the total
    budget cannot be exceeded).
    """
    nt, ns = w_fd.shape
    nrf = cfg.rf_chains
    rng = np.random.default_rng(seed)
    f = np.exp(2j * np.pi * rng.random((nt, nrf)))
    norm_fd = np.linalg.norm(w_fd)
    if norm_fd == 0.0:
        return f, np.zeros((nrf, ns), complex)

    def ls_digital(f_mat):
        w, *_ = np.linalg.lstsq(f_mat, w_fd, rcond=None)
        return w

    w = ls_digital(f)
    best = (np.linalg.norm(f @ w - w_fd) ** 2, f.copy(), w.copy())
    prev_obj = best[0]
    step = 1.0
    for _ in range(max_iter):
        resid = f @ w - w_fd
        grad = resid @ w.conj().T
        gnorm2 = np.linalg.norm(grad) ** 2
        if gnorm2 <= 1e-30:
            break
        # Armijo backtracking on the retracted iterate
        obj = np.linalg.norm(resid) ** 2
        step = min(step * 2.0, 1e3)
        while True:
            cand = f - step * grad
            cand = cand / np.maximum(np.abs(cand), 1e-300)
            w_cand = ls_digital(cand)
            obj_cand = np.linalg.norm(cand @ w_cand - w_fd) ** 2
            if obj_cand <= obj - 1e-4 * step * gnorm2 or step < 1e-12:
                break
            step *= 0.5
        f, w = cand, w_cand
        if obj_cand < best[0]:
            best = (obj_cand, f.copy(), w.copy())
        if abs(prev_obj - obj_cand) <= tol * max(prev_obj, 1e-30):
            break
        prev_obj = obj_cand

    _, f, w = best
    if comm_power is None:
        comm_power = (1.0 - cfg.power_split) * cfg.power_budget
    comm_power = min(comm_power, cfg.power_budget)
    cur = np.linalg.norm(f @ w) ** 2
    if cur > 0 and comm_power > 0:
        w = w * math.sqrt(comm_power / cur)
    return f, w


def radar_dbf_ls(f: np.ndarray, w_r_fd: np.ndarray) -> np.ndarray:
    """Least-squares radar digital beamformer: Moore-Penrose solve of F W = W_fd."""
    return np.linalg.pinv(f, rcond=1e-10) @ w_r_fd


def hybrid_design(ch: ChannelSet, design: CovarianceDesign, **kwargs) -> HybridDesign:
    """Full extraction chain: eigen beamformers, analog/digital split, radar LS.

    The analog matrix is fitted against the stacked comm+radar digital
    beamformer: the comm-only fit leaves the unused RF-chain columns at
    their random initialization, and the radar pseudo-inverse step then
    projects away a large share of the radar power.  Fitting the stack picks
    the (non-unique) comm minimizer whose column space also spans the radar
    beamformer.  The communication rescale target is capped at P_T minus the
    hybrid radar power so the budget cannot be exceeded.
    """
    cfg = ch.config
    w_c_fd, w_r_fd = extract_beamformers(design, radar_streams=cfg.radar_streams)
    stack = np.concatenate([w_c_fd, w_r_fd], axis=1)
    f, _ = hybrid_decompose(stack, cfg, comm_power=float(np.linalg.norm(stack) ** 2),
                            **kwargs)
    w_c, *_ = np.linalg.lstsq(f, w_c_fd, rcond=None)
    comm_power = np.linalg.norm(f @ w_c) ** 2
    if comm_power > 0:
        target = min((1.0 - cfg.power_split) * cfg.power_budget, cfg.power_budget)
        w_c = w_c * math.sqrt(target / comm_power)
    w_r = radar_dbf_ls(f, w_r_fd)
    radar_power = np.linalg.norm(f @ w_r) ** 2
    comm_power = np.linalg.norm(f @ w_c) ** 2
    cap = max(cfg.power_budget - radar_power, 0.0)
    if comm_power > cap and comm_power > 0:
        w_c = w_c * math.sqrt(cap / comm_power)
    return HybridDesign(analog=f, digital_comm=w_c, digital_radar=w_r)


def write_trace_csv(design: CovarianceDesign, path: str) -> None:
    """Objective trajectory of an optimize() run as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective"])
        for i, v in enumerate(design.trajectory):
            w.writerow([i, f"{v:.12g}"])
