"""Trajectory analytics: mode projections, spectral centroids, the joint
spatial-temporal spectrum, total variation, RDFs and structure errors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError
from .graph import LaplacianSpectrum, Trajectory

POWER_FLOOR = 1e-15


@dataclass(frozen=True)
class ModeTimeSeries:
    """``coeffs[j, k]`` is the 3-vector coefficient of mode k at step j."""

    coeffs: np.ndarray
    dt: float
    eigenvalues: np.ndarray

    @property
    def num_steps(self) -> int:
        return self.coeffs.shape[0]

    def magnitude(self, k: int, magnitude: str = "squared_norm") -> np.ndarray:
        sq = np.sum(self.coeffs[:, k] ** 2, axis=-1)
        if magnitude == "squared_norm":
            return sq
        if magnitude == "norm":
            return np.sqrt(sq)
        raise InvalidArgumentError(f"unknown magnitude {magnitude!r}")


def project_trajectory(traj: Trajectory, spectrum: LaplacianSpectrum) -> ModeTimeSeries:
    pos = traj.positions()
    if pos.shape[1] != spectrum.num_nodes:
        raise InvalidArgumentError("spectrum size does not match the trajectory")
    centred = pos - pos.mean(axis=1, keepdims=True)
    coeffs = np.einsum("nk,tna->tka", spectrum.eigenvectors, centred)
    times = traj.timestamps
    dt = float(np.mean(np.diff(times))) if len(times) > 1 else 1.0
    return ModeTimeSeries(coeffs, dt, spectrum.eigenvalues)


def power_spectrum(signal, dt: float = 1.0, window: str | None = None):
    """One-sided PSD of the mean-removed signal.

    Without a window the powers sum to the (population) variance of the
    signal. Returns ``(frequencies, power)`` up to the Nyquist frequency.
    """
    s = np.asarray(signal, dtype=np.float64)
    s = s - s.mean()
    n = s.size
    if window == "hann":
        s = s * np.hanning(n)
    elif window is not None:
        raise InvalidArgumentError(f"unknown window {window!r}")
    spec = np.fft.rfft(s)
    power = np.abs(spec) ** 2 / n ** 2
    if n % 2 == 0:
        power[1:-1] *= 2
    else:
        power[1:] *= 2
    return np.fft.rfftfreq(n, d=dt), power


def spectral_centroid(series: ModeTimeSeries, k: int, magnitude: str = "squared_norm",
                      window: str | None = None) -> float:
    """Power-weighted mean frequency of mode ``k``'s magnitude time series."""
    if series.num_steps < 4:
        raise InsufficientDataError("need at least 4 time steps")
    freqs, power = power_spectrum(series.magnitude(k, magnitude), series.dt, window)
    total = power.sum()
    if total < POWER_FLOOR:
        return 0.0
    return float(np.sum(freqs * power) / total)


@dataclass(frozen=True)
class JointSpectrum:
    modes: np.ndarray
    eigenvalues: np.ndarray
    centroids: np.ndarray
    pearson_r: float
    slope: float
    intercept: float


def joint_spectrum(traj: Trajectory, spectrum: LaplacianSpectrum,
                   magnitude: str = "squared_norm", window: str | None = None,
                   eigenvalue_floor: float = 1e-8) -> JointSpectrum:
    """Log-log correlation and slope between eigenvalues and centroids.

    Mode 0, modes with (numerically) zero eigenvalue and modes without power
    are excluded. ``pearson_r`` is reported as 0 when the centroids are all
    equal, where the correlation is undefined.
    """
    series = project_trajectory(traj, spectrum)
    modes, lams, cents = [], [], []
    for k in range(1, spectrum.num_nodes):
        lam = spectrum.eigenvalues[k]
        if lam <= eigenvalue_floor:
            continue
        c = spectral_centroid(series, k, magnitude, window)
        if c <= 0:
            continue
        modes.append(k)
        lams.append(lam)
        cents.append(c)
    if len(modes) < 2:
        raise InsufficientDataError(f"only {len(modes)} usable modes, need 2")
    lx, ly = np.log(lams), np.log(cents)
    slope, intercept = np.polyfit(lx, ly, 1)
    spread = np.std(ly)
    if spread <= 1e-12 * max(1.0, np.abs(ly).max()) or np.std(lx) == 0:
        r = 0.0
    else:
        r = float(np.corrcoef(lx, ly)[0, 1])
    return JointSpectrum(np.array(modes), np.array(lams), np.array(cents), r,
                         float(slope), float(intercept))


def total_variation(f, L) -> float:
    f = np.asarray(f, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if L.shape != (f.size, f.size):
        raise InvalidArgumentError("signal and Laplacian sizes differ")
    return float(f @ L @ f)


@dataclass(frozen=True)
class RDF:
    r: np.ndarray        # bin centres
    g: np.ndarray
    counts: np.ndarray   # raw pair counts summed over frames
    edges: np.ndarray


def _pair_indices(atomic_numbers, element_pair):
    z = np.asarray(atomic_numbers)
    i, j = np.triu_indices(z.size, k=1)
    if element_pair in (None, "all-heavy", "heavy"):
        keep = (z[i] > 1) & (z[j] > 1)
    else:
        a, b = element_pair
        keep = ((z[i] == a) & (z[j] == b)) | ((z[i] == b) & (z[j] == a))
    return i[keep], j[keep]


def rdf(traj: Trajectory, element_pair=None, r_max: float = 6.0, n_bins: int = 120) -> RDF:
    """Radial distribution of pair distances.

    ``element_pair`` is ``(Z_a, Z_b)`` or ``None``/``"all-heavy"`` for all
    non-hydrogen pairs. Each bin is divided by ``4 pi r^2 dr rho`` with
    ``rho`` the mean pair density inside ``r_max``.
    """
    if not r_max > 0 or n_bins < 2:
        raise InvalidArgumentError("need r_max > 0 and n_bins >= 2")
    i, j = _pair_indices(traj.atomic_numbers, element_pair)
    if i.size == 0:
        raise InsufficientDataError("no atom pairs match the selection")
    pos = traj.positions()
    dist = np.linalg.norm(pos[:, i] - pos[:, j], axis=-1).ravel()
    edges = np.linspace(0.0, r_max, n_bins + 1)
    counts, _ = np.histogram(dist, bins=edges)
    centres = 0.5 * (edges[1:] + edges[:-1])
    dr = edges[1] - edges[0]
    inside = counts.sum() / len(traj)
    rho = inside / (4.0 / 3.0 * np.pi * r_max ** 3)
    shell = 4 * np.pi * centres ** 2 * dr * rho * len(traj)
    g = np.divide(counts, shell, out=np.zeros(n_bins), where=shell > 0)
    return RDF(centres, g, counts, edges)


@dataclass(frozen=True)
class StructureMetrics:
    bond_mae: float
    bond_rel_percent: float
    angle_mae_deg: float
    angle_rel_percent: float
    skipped_angles: int


def bond_angles(positions, triples) -> tuple[np.ndarray, np.ndarray]:
    """Angles in degrees at the middle atom of each ``(i, j, k)`` triple.

    Returns ``(angles, valid)`` with ``valid`` false where an arm has zero
    length.
    """
    triples = np.asarray(triples, dtype=int).reshape(-1, 3)
    a = positions[..., triples[:, 0], :] - positions[..., triples[:, 1], :]
    b = positions[..., triples[:, 2], :] - positions[..., triples[:, 1], :]
    la, lb = np.linalg.norm(a, axis=-1), np.linalg.norm(b, axis=-1)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.degrees(np.arctan2(cross, dot)), (la > 0) & (lb > 0)


def angle_triples(bonds: Sequence[tuple[int, int]]) -> list:
    """All ``(i, j, k)`` with bonds i-j and j-k, ``i < k``."""
    nbrs: dict[int, set] = {}
    for i, j in bonds:
        nbrs.setdefault(i, set()).add(j)
        nbrs.setdefault(j, set()).add(i)
    out = []
    for j in sorted(nbrs):
        ns = sorted(nbrs[j])
        out.extend((i, j, k) for a, i in enumerate(ns) for k in ns[a + 1:])
    return out


def structure_metrics(pred: Trajectory, truth: Trajectory, bonds, triples=None) -> StructureMetrics:
    """Bond-length and bond-angle errors of ``pred`` against ``truth``."""
    p, t = pred.positions(), truth.positions()
    if p.shape != t.shape:
        raise InvalidArgumentError("trajectories must have matching frames and atoms")
    bonds = np.asarray(bonds, dtype=int).reshape(-1, 2)
    if bonds.size == 0:
        raise InsufficientDataError("no bonds given")
    lp = np.linalg.norm(p[:, bonds[:, 0]] - p[:, bonds[:, 1]], axis=-1)
    lt = np.linalg.norm(t[:, bonds[:, 0]] - t[:, bonds[:, 1]], axis=-1)
    bond_mae = float(np.mean(np.abs(lp - lt)))
    bond_rel = 100.0 * bond_mae / float(np.mean(lt))

    triples = angle_triples(bonds.tolist()) if triples is None else triples
    angle_mae = angle_rel = 0.0
    skipped = 0
    if len(triples):
        ap, vp = bond_angles(p, triples)
        at, vt = bond_angles(t, triples)
        valid = np.all(vp & vt, axis=0)
        skipped = int(np.sum(~valid))
        if skipped:
            warnings.warn(f"skipped {skipped} degenerate angle triples", RuntimeWarning)
        if valid.any():
            angle_mae = float(np.mean(np.abs(ap[:, valid] - at[:, valid])))
            angle_rel = 100.0 * angle_mae / float(np.mean(at[:, valid]))
    return StructureMetrics(bond_mae, bond_rel, angle_mae, angle_rel, skipped)
