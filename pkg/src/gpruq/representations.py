"""Molecular structures and their feature representations.

Two representations are provided:

* an unsorted Coulomb matrix (global, one vector per structure), and
* a SOAP partial power spectrum (atomistic, one vector per atom).
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy.special import ive, sph_harm_y

from .exceptions import ConfigurationError, DegenerateGeometryError

ANGSTROM_TO_BOHR = 1.8897259886
_MIN_DISTANCE = 1e-10


@dataclass(frozen=True)
class Structure:
    """One molecular configuration.

    Attributes
    ----------
    atomic_numbers : ndarray of int, shape (n_atoms,)
    positions : ndarray of float, shape (n_atoms, 3)
        Cartesian coordinates in Angstrom.
    energy : float or None
        Label in eV.
    """

    atomic_numbers: np.ndarray
    positions: np.ndarray
    energy: float | None = None

    def __post_init__(self):
        z = np.asarray(self.atomic_numbers, dtype=int).reshape(-1)
        r = np.asarray(self.positions, dtype=float)
        if r.ndim == 1 and r.size == 3:
            r = r.reshape(1, 3)
        if r.ndim != 2 or r.shape[1] != 3:
            raise ValueError(f"positions must have shape (n_atoms, 3), got {r.shape}")
        if len(z) == 0 or len(z) != len(r):
            raise ValueError(
                f"need >= 1 atom and matching lengths, got {len(z)} atomic numbers "
                f"and {len(r)} positions")
        if np.any(z < 1):
            raise ValueError("atomic numbers must be >= 1")
        if not np.all(np.isfinite(r)):
            raise ValueError("positions must be finite")
        z.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "atomic_numbers", z)
        object.__setattr__(self, "positions", r)
        if self.energy is not None:
            object.__setattr__(self, "energy", float(self.energy))

    @property
    def n_atoms(self) -> int:
        return len(self.atomic_numbers)

    def translated(self, shift) -> "Structure":
        return Structure(self.atomic_numbers, self.positions + np.asarray(shift, float), self.energy)

    def rotated(self, rotation) -> "Structure":
        return Structure(self.atomic_numbers, self.positions @ np.asarray(rotation, float).T,
                         self.energy)

    def permuted(self, order) -> "Structure":
        order = np.asarray(order)
        return Structure(self.atomic_numbers[order], self.positions[order], self.energy)


def _pair_distances(positions):
    diff = positions[:, None, :] - positions[None, :, :]
    return diff, np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


# ---------------------------------------------------------------------------
# Coulomb matrix
# ---------------------------------------------------------------------------

def coulomb_matrix(s: Structure) -> np.ndarray:
    """Full (unsorted) Coulomb matrix in atomic units."""
    z = s.atomic_numbers.astype(float)
    _, dist = _pair_distances(s.positions)
    off = ~np.eye(s.n_atoms, dtype=bool)
    if np.any(dist[off] < _MIN_DISTANCE):
        i, j = np.argwhere(off & (dist < _MIN_DISTANCE))[0]
        raise DegenerateGeometryError(f"atoms {i} and {j} coincide")
    dist_bohr = dist * ANGSTROM_TO_BOHR
    np.fill_diagonal(dist_bohr, 1.0)
    m = np.outer(z, z) / dist_bohr
    np.fill_diagonal(m, 0.5 * z ** 2.4)
    return m


def coulomb_feature(s: Structure) -> np.ndarray:
    """Row-major upper triangle (diagonal included) of the Coulomb matrix.

    The atom order is kept as given, so all structures of a dataset must share
    it. Length is ``n_atoms * (n_atoms + 1) / 2``.
    """
    m = coulomb_matrix(s)
    return m[np.triu_indices(s.n_atoms)]


def coulomb_features(structures) -> np.ndarray:
    """Stack Coulomb features of several structures into an (n, D) array."""
    feats = [coulomb_feature(s) for s in structures]
    if len({f.size for f in feats}) > 1:
        raise ConfigurationError("Coulomb features need a common atom count")
    return np.vstack(feats)


# ---------------------------------------------------------------------------
# SOAP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SoapConfig:
    """Parameters of the SOAP power spectrum.

    ``species`` lists every atomic number that may occur, strictly increasing.
    ``n_quad`` is the number of Gauss-Legendre nodes for the radial integrals.
    """

    species: tuple
    r_cut: float = 5.0
    n_max: int = 3
    l_max: int = 1
    sigma_atom: float = 1.0
    n_quad: int = field(default=64, compare=True)

    def __post_init__(self):
        species = tuple(int(z) for z in self.species)
        object.__setattr__(self, "species", species)
        if not species:
            raise ConfigurationError("species must be non-empty")
        if any(b <= a for a, b in zip(species, species[1:])):
            raise ConfigurationError(f"species must be strictly increasing, got {species}")
        if self.r_cut <= 0 or self.sigma_atom <= 0:
            raise ConfigurationError("r_cut and sigma_atom must be positive")
        if self.n_max < 1 or self.l_max < 0 or self.n_quad < 2:
            raise ConfigurationError("need n_max >= 1, l_max >= 0, n_quad >= 2")

    @classmethod
    def for_structures(cls, structures, **kwargs) -> "SoapConfig":
        species = sorted({int(z) for s in structures for z in s.atomic_numbers})
        return cls(species=tuple(species), **kwargs)

    @property
    def n_pairs(self) -> int:
        k = len(self.species)
        return k * (k + 1) // 2

    @property
    def n_features(self) -> int:
        return (self.l_max + 1) * self.n_max * (self.n_max + 1) // 2 * self.n_pairs


@lru_cache(maxsize=32)
def _radial_basis(r_cut, n_max, n_quad):
    """Quadrature nodes, weights and Loewdin-orthonormalized Gaussian basis values."""
    x, w = np.polynomial.legendre.leggauss(n_quad)
    r = 0.5 * r_cut * (x + 1.0)
    w = 0.5 * r_cut * w
    # g_n decays to 1e-3 at r_cut * n / n_max
    decay_radii = r_cut * np.arange(1, n_max + 1) / n_max
    alphas = math.log(1e3) / decay_radii ** 2
    prim = np.exp(-alphas[:, None] * r[None, :] ** 2)
    overlap = (prim * (w * r * r)) @ prim.T
    evals, evecs = np.linalg.eigh(overlap)
    s_inv_half = (evecs / np.sqrt(evals)) @ evecs.T
    basis = s_inv_half @ prim
    for a in (r, w, basis):
        a.setflags(write=False)
    return r, w, basis


def real_spherical_harmonics(l_max: int, unit: np.ndarray) -> np.ndarray:
    """Real spherical harmonics ``Y_lm`` for ``l <= l_max``.

    Returns an array of shape ``unit.shape[:-1] + ((l_max + 1)**2,)`` ordered
    by l, then m from -l to l.
    """
    x, y, z = unit[..., 0], unit[..., 1], unit[..., 2]
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.arctan2(y, x)
    cols = []
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            if m == 0:
                cols.append(sph_harm_y(l, 0, theta, phi).real)
            elif m > 0:
                cols.append(math.sqrt(2.0) * (-1) ** m * sph_harm_y(l, m, theta, phi).real)
            else:
                cols.append(math.sqrt(2.0) * (-1) ** m * sph_harm_y(l, -m, theta, phi).imag)
    return np.stack(cols, axis=-1)


def _scaled_sph_in(l, x):
    """exp(-x) * i_l(x) for x >= 0, stable for large x."""
    out = np.empty_like(x)
    small = x < 1e-12
    out[small] = 1.0 if l == 0 else 0.0
    xs = x[~small]
    out[~small] = np.sqrt(np.pi / (2.0 * xs)) * ive(l + 0.5, xs)
    return out


def cutoff_function(r, r_cut):
    r = np.asarray(r, dtype=float)
    return np.where(r < r_cut, 0.5 * (np.cos(np.pi * r / r_cut) + 1.0), 0.0)


def soap_coefficients(s: Structure, cfg: SoapConfig) -> np.ndarray:
    """Density expansion coefficients, shape (n_atoms, n_species, n_max, (l_max+1)**2).

    The neighbour density of each atom is a sum of Gaussians of width
    ``sigma_atom`` (the central atom included), each damped by a cosine cutoff
    on its distance from the centre.
    """
    index = {z: k for k, z in enumerate(cfg.species)}
    missing = sorted({int(z) for z in s.atomic_numbers} - set(index))
    if missing:
        raise ConfigurationError(f"atomic numbers {missing} not in SOAP species {cfg.species}")
    spec_idx = np.array([index[int(z)] for z in s.atomic_numbers])

    r_q, w_q, basis = _radial_basis(float(cfg.r_cut), int(cfg.n_max), int(cfg.n_quad))
    n = s.n_atoms
    n_lm = (cfg.l_max + 1) ** 2
    sig2 = cfg.sigma_atom ** 2

    diff, dist = _pair_distances(s.positions)
    # diff[i, j] = r_i - r_j; neighbour direction seen from centre i is r_j - r_i
    unit = np.zeros_like(diff)
    nz = dist > 0
    unit[nz] = -diff[nz] / dist[nz][:, None]
    unit[~nz] = (0.0, 0.0, 1.0)
    fcut = cutoff_function(dist, cfg.r_cut)
    inside = fcut > 0

    ci, cj = np.nonzero(inside)
    d = dist[ci, cj]
    ylm = real_spherical_harmonics(cfg.l_max, unit[ci, cj])           # (P, n_lm)
    gauss = np.exp(-((r_q[None, :] - d[:, None]) ** 2) / (2.0 * sig2))  # (P, Q)
    arg = r_q[None, :] * d[:, None] / sig2
    weighted_basis = basis * (w_q * r_q * r_q)                          # (n_max, Q)

    coeffs = np.zeros((n, len(cfg.species), cfg.n_max, n_lm))
    col = 0
    for l in range(cfg.l_max + 1):
        radial = 4.0 * np.pi * gauss * _scaled_sph_in(l, arg)          # (P, Q)
        integ = radial @ weighted_basis.T                               # (P, n_max)
        integ *= fcut[ci, cj][:, None]
        width = 2 * l + 1
        contrib = integ[:, :, None] * ylm[:, None, col:col + width]     # (P, n_max, 2l+1)
        np.add.at(coeffs[:, :, :, col:col + width], (ci, spec_idx[cj]), contrib)
        col += width
    return coeffs


def power_spectrum(coeffs: np.ndarray, cfg: SoapConfig) -> np.ndarray:
    """Partial power spectrum from expansion coefficients.

    Feature order: species pair (a <= b), then radial pair (n <= n'), then l.
    """
    iu_n, iu_m = np.triu_indices(cfg.n_max)
    ia, ib = np.triu_indices(len(cfg.species))
    col = 0
    per_l = []
    for l in range(cfg.l_max + 1):
        width = 2 * l + 1
        c = coeffs[..., col:col + width]                                # (A, S, n_max, w)
        p = np.einsum("asnm,atkm->astnk", c, c)                        # (A, S, S, n, n)
        per_l.append(p[:, ia, ib][:, :, iu_n, iu_m])                    # (A, pairs, nn)
        col += width
    blocks = np.stack(per_l, axis=-1)                                   # (A, pairs, nn, L)
    return blocks.reshape(coeffs.shape[0], -1)


def soap_features(s: Structure, cfg: SoapConfig) -> np.ndarray:
    """Per-atom SOAP vectors, shape (n_atoms, cfg.n_features)."""
    return power_spectrum(soap_coefficients(s, cfg), cfg)


def soap_feature_sets(structures, cfg: SoapConfig) -> list:
    return [soap_features(s, cfg) for s in structures]
