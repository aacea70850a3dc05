"""Deterministic channel synthesis from a validated scene.

All channels derive from the spherical-wavefront array response

    [a_N(theta, r)]_n = exp(-j 2pi/lambda (-n d cos(theta)
                                           + n^2 d^2 sin^2(theta) / (2 r)))

with the symmetric element index n.  Path gains follow the reference
pathloss law sqrt(rho0)/len * exp(-j 2pi len / lambda) for total path
length len.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .scene import (
    ArrayGeometry,
    GeometryError,
    PolarLocation,
    SceneConfig,
    departure_to_arrival,
    polar_to_cartesian,
)

__all__ = [
    "steering_vector",
    "steering_matrix",
    "pathloss_gain",
    "build_channels",
    "ChannelGains",
    "ChannelSet",
    "dump_matrix_csv",
]


def steering_vector(geom: ArrayGeometry, loc: PolarLocation) -> np.ndarray:
    """Near-field array response a_N(theta, r); unit-modulus entries, entry 1 at n=0."""
    n = geom.indices
    d = geom.spacing
    phase = -(2.0 * np.pi / geom.wavelength) * (
        -n * d * np.cos(loc.angle) + (n * d) ** 2 * np.sin(loc.angle) ** 2 / (2.0 * loc.range)
    )
    return np.exp(1j * phase)


def steering_matrix(geom: ArrayGeometry, angles: np.ndarray, ranges: np.ndarray) -> np.ndarray:
    """Vectorized grid of steering vectors, shape (N, len(angles), len(ranges))."""
    n = geom.indices[:, None, None]
    d = geom.spacing
    th = np.asarray(angles)[None, :, None]
    r = np.asarray(ranges)[None, None, :]
    phase = -(2.0 * np.pi / geom.wavelength) * (
        -n * d * np.cos(th) + (n * d) ** 2 * np.sin(th) ** 2 / (2.0 * r)
    )
    return np.exp(1j * phase)


def pathloss_gain(total_path: float, wavelength: float, reference_pathloss: float) -> complex:
    """sqrt(rho0)/len * exp(-j 2pi len/lambda) for a total path length len > 0."""
    if total_path <= 0.0:
        raise GeometryError(f"path length must be positive (got {total_path})")
    return (np.sqrt(reference_pathloss) / total_path) * np.exp(
        -2j * np.pi * total_path / wavelength
    )


@dataclass(frozen=True)
class ChannelGains:
    """All scalar path gains entering the channel matrices.

    bob_los[k], bob_nlos[k, l]: user k LoS / via reflector l.
    eve_los: magnitude-only LoS gain (per-element phases carry the exact
    pairwise distances).  eve_reflect[l], roundtrip[l]: per-reflector gains.
    """

    bob_los: np.ndarray
    bob_nlos: np.ndarray
    eve_los: float
    eve_reflect: np.ndarray
    roundtrip: np.ndarray


@dataclass(frozen=True)
class ChannelSet:
    """Every deterministic channel quantity of one scene.

    Shapes: bob (K_c, N_t); eve_los (N_t, N_e); eve_reflect (L, N_t, N_e);
    alice_roundtrip (L, N_t, N_r); si (N_t, N_r).  Reflector index order is
    targets first, then scatterers.  ``arrivals[l]`` is reflector l in the
    eavesdropper's polar frame.
    """

    config: SceneConfig
    bob: np.ndarray
    eve_los: np.ndarray
    eve_reflect: np.ndarray
    alice_roundtrip: np.ndarray
    si: np.ndarray
    gains: ChannelGains
    arrivals: tuple[PolarLocation, ...]

    @property
    def eve_total(self) -> np.ndarray:
        """H_E = LoS + sum of reflector components, (N_t, N_e)."""
        return self.eve_los + self.eve_reflect.sum(axis=0)

    @property
    def alice_total(self) -> np.ndarray:
        """Round-trip channel summed over reflectors, (N_t, N_r)."""
        return self.alice_roundtrip.sum(axis=0)

    def roundtrip_targets(self) -> np.ndarray:
        return self.alice_roundtrip[: self.config.n_targets]

    def roundtrip_scatterers(self) -> np.ndarray:
        return self.alice_roundtrip[self.config.n_targets :]


def _element_positions(geom: ArrayGeometry, center_xy: tuple[float, float]) -> np.ndarray:
    return np.asarray(center_xy)[None, :] + geom.element_offsets()


def build_channels(cfg: SceneConfig) -> ChannelSet:
    """All channel matrices and gains of a scene; pure function of the config."""
    lam = cfg.wavelength
    rho0 = cfg.reference_pathloss
    refl = cfg.reflectors
    n_l = len(refl)
    a_tx = [steering_vector(cfg.tx_array, l) for l in refl]

    # communication channels: LoS + one NLoS term per reflector
    bob_los = np.array(
        [pathloss_gain(b.range, lam, rho0) for b in cfg.bobs], dtype=complex
    )
    bob_nlos = np.array(
        [[pathloss_gain(b.range + l.range, lam, rho0) for l in refl] for b in cfg.bobs],
        dtype=complex,
    )
    bob = np.zeros((cfg.n_bobs, cfg.tx_array.element_count), dtype=complex)
    for k, b in enumerate(cfg.bobs):
        h = bob_los[k] * steering_vector(cfg.tx_array, b)
        for l in range(n_l):
            h = h + bob_nlos[k, l] * a_tx[l]
        bob[k] = h

    # eavesdropper LoS: exact element-pairwise distances, arrays parallel
    p_a = _element_positions(cfg.tx_array, (0.0, 0.0))
    p_e = _element_positions(cfg.eve_rx_array, polar_to_cartesian(cfg.eve))
    dist = np.linalg.norm(p_a[:, None, :] - p_e[None, :, :], axis=2)
    g_elos = np.sqrt(rho0) / cfg.eve.range
    eve_los = g_elos * np.exp(-2j * np.pi * dist / lam)

    # eavesdropper reflections: rank-1 outer products with arrival parameters
    arrivals = tuple(departure_to_arrival(l, cfg.eve) for l in refl)
    g_erefl = np.array(
        [pathloss_gain(l.range + a.range, lam, rho0) for l, a in zip(refl, arrivals)],
        dtype=complex,
    )
    eve_reflect = np.stack(
        [
            g_erefl[i] * np.outer(a_tx[i], steering_vector(cfg.eve_rx_array, arrivals[i]).conj())
            for i in range(n_l)
        ]
    )

    # monostatic round trip: total path 2r, no cross-section factor
    g_rt = np.array([pathloss_gain(2.0 * l.range, lam, rho0) for l in refl], dtype=complex)
    roundtrip = np.stack(
        [
            g_rt[i] * np.outer(a_tx[i], steering_vector(cfg.alice_rx_array, refl[i]).conj())
            for i in range(n_l)
        ]
    )

    # self interference between the co-located arrays; co-located element
    # distance clamped to d/2 (the entry is cancelled anyway)
    nt = cfg.tx_array.indices[:, None] * cfg.tx_array.spacing
    nr = cfg.alice_rx_array.indices[None, :] * cfg.alice_rx_array.spacing
    d_si = np.abs(nt - nr)
    d_si = np.maximum(d_si, cfg.tx_array.spacing / 2.0)
    si = (cfg.si_norm / d_si) * np.exp(-2j * np.pi * d_si / lam)

    gains = ChannelGains(
        bob_los=bob_los,
        bob_nlos=bob_nlos,
        eve_los=g_elos,
        eve_reflect=g_erefl,
        roundtrip=g_rt,
    )
    return ChannelSet(
        config=cfg,
        bob=bob,
        eve_los=eve_los,
        eve_reflect=eve_reflect,
        alice_roundtrip=roundtrip,
        si=si,
        gains=gains,
        arrivals=arrivals,
    )


def dump_matrix_csv(matrix: np.ndarray, path: str) -> None:
    """Write a complex matrix as (row, col, re, im) rows for external inspection."""
    m = np.atleast_2d(matrix)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for i in range(m.shape[0]):
            for j in range(m.shape[1]):
                w.writerow([i, j, f"{m[i, j].real:.17g}", f"{m[i, j].imag:.17g}"])
