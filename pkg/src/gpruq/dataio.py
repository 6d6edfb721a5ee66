"""Trajectory ingestion, dataset splits and synthetic fixtures.

Energies are converted to eV exactly once, when a file is read; everything
downstream works in eV and Angstrom.
"""

import csv
from dataclasses import dataclass
import re

import numpy as np

from .exceptions import ParseError
from .gpr import KernelParams
from .representations import Structure

ELEMENTS = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S",
    "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga",
    "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd",
    "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm",
    "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os",
    "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn",
)
ATOMIC_NUMBERS = {sym.lower(): z for z, sym in enumerate(ELEMENTS, start=1)}

ENERGY_UNITS = {
    "ev": 1.0,
    "kcal/mol": 0.0433641,
    "hartree": 27.211386,
}

_ENERGY_RE = re.compile(r"(?:^|\s)energy\s*=\s*\"?([-+]?[0-9.]+(?:[eEdD][-+]?\d+)?)", re.I)


def unit_factor(unit: str) -> float:
    try:
        return ENERGY_UNITS[unit.lower()]
    except KeyError:
        raise ValueError(f"unknown energy unit {unit!r}; choose from {sorted(ENERGY_UNITS)}") from None


def atomic_number(symbol: str) -> int:
    if symbol.isdigit():
        return int(symbol)
    try:
        return ATOMIC_NUMBERS[symbol.lower()]
    except KeyError:
        raise ValueError(f"unknown element symbol {symbol!r}") from None


@dataclass
class Dataset:
    """Labelled structures sharing atom count and atom order."""

    structures: list
    name: str = ""

    def __post_init__(self):
        if not self.structures:
            return
        ref = self.structures[0].atomic_numbers
        for k, s in enumerate(self.structures):
            if not np.array_equal(s.atomic_numbers, ref):
                raise ValueError(f"structure {k} differs in atom count or ordering")
            if s.energy is None:
                raise ValueError(f"structure {k} has no energy")

    def __len__(self):
        return len(self.structures)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return self.structures[idx]
        return Dataset([self.structures[i] for i in np.asarray(idx).reshape(-1)], self.name)

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.structures])

    @property
    def atomic_numbers(self) -> np.ndarray:
        return self.structures[0].atomic_numbers


def _parse_energy(comment: str, frame: int, line: int) -> float:
    m = _ENERGY_RE.search(comment)
    text = m.group(1) if m else comment.strip()
    try:
        return float(text.replace("d", "e").replace("D", "e"))
    except ValueError:
        raise ParseError(f"no energy in comment line {comment.strip()!r}", frame, line) from None


def parse_xyz_text(text: str, unit="eV", name="") -> Dataset:
    factor = unit_factor(unit)
    lines = text.splitlines()
    structures = []
    pos = 0
    n_atoms_ref = None
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        frame = len(structures)
        try:
            n_atoms = int(lines[pos].split()[0])
        except (ValueError, IndexError):
            raise ParseError("expected atom count", frame, pos + 1) from None
        if n_atoms < 1:
            raise ParseError("atom count must be >= 1", frame, pos + 1)
        if n_atoms_ref is not None and n_atoms != n_atoms_ref:
            raise ParseError(f"atom count {n_atoms} differs from first frame ({n_atoms_ref})",
                             frame, pos + 1)
        n_atoms_ref = n_atoms
        if pos + 1 >= len(lines):
            raise ParseError("missing comment line", frame, pos + 2)
        energy = _parse_energy(lines[pos + 1], frame, pos + 2) * factor
        numbers, coords = [], []
        for k in range(n_atoms):
            ln = pos + 2 + k
            parts = lines[ln].split() if ln < len(lines) else []
            if len(parts) < 4:
                raise ParseError(f"expected {n_atoms} atom lines", frame, ln + 1)
            try:
                numbers.append(atomic_number(parts[0]))
                coords.append([float(v) for v in parts[1:4]])
            except ValueError as exc:
                raise ParseError(str(exc), frame, ln + 1) from None
        structures.append(Structure(numbers, coords, energy))
        pos += 2 + n_atoms
    try:
        return Dataset(structures, name)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def parse_xyz_trajectory(path, unit="eV", name=None) -> Dataset:
    """Read a multi-frame (extended) XYZ file.

    Each frame is an atom-count line, a comment line holding ``energy=<value>``
    or a bare number, and one ``<symbol> <x> <y> <z>`` line per atom. Extra
    columns after the coordinates are ignored.
    """
    with open(path) as fh:
        text = fh.read()
    return parse_xyz_text(text, unit, name if name is not None else str(path))


def format_xyz(ds: Dataset) -> str:
    out = []
    for s in ds.structures:
        out.append(str(s.n_atoms))
        out.append(f"energy={s.energy:.17g}")
        for z, (x, y, w) in zip(s.atomic_numbers, s.positions):
            out.append(f"{ELEMENTS[z - 1]} {x:.17g} {y:.17g} {w:.17g}")
    return "\n".join(out) + "\n"


def write_xyz_trajectory(ds: Dataset, path):
    with open(path, "w") as fh:
        fh.write(format_xyz(ds))


def write_energy_manifest(ds: Dataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "energy"])
        for i, e in enumerate(ds.energies):
            w.writerow([i, repr(float(e))])


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    n_train: int = 1000
    n_test: int = 2000
    seed: int = 0


def split(ds, spec: SplitSpec = SplitSpec()):
    """Seeded disjoint (train, test, pool) index arrays; the pool gets the rest."""
    n = ds if isinstance(ds, (int, np.integer)) else len(ds)
    if spec.n_train < 0 or spec.n_test < 0 or spec.n_train + spec.n_test > n:
        raise ValueError(f"cannot draw {spec.n_train} + {spec.n_test} samples from {n}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    train = np.sort(perm[:spec.n_train])
    test = np.sort(perm[spec.n_train:spec.n_train + spec.n_test])
    pool = np.sort(perm[spec.n_train + spec.n_test:])
    return train, test, pool


# ---------------------------------------------------------------------------
# synthetic fixtures
# ---------------------------------------------------------------------------

def synth_sine(n_train=30, n_test=2000, noise_std=0.1, seed=0):
    """Noisy samples of sin(x) on [0, 2 pi] plus noise-free test inputs.

    Returns ``(x_train, y_train, x_test)`` with inputs shaped (n, 1).
    """
    if n_train < 2:
        raise ValueError("n_train must be >= 2")
    rng = np.random.default_rng(seed)
    x_train = rng.uniform(0.0, 2 * np.pi, size=(n_train, 1))
    y_train = np.sin(x_train[:, 0]) + noise_std * rng.standard_normal(n_train)
    x_test = rng.uniform(0.0, 2 * np.pi, size=(n_test, 1))
    return x_train, y_train, x_test


def draw_synthetic_targets(model, x, seed=0, include_noise=True):
    """One draw per input from the model's predictive distribution.

    With ``include_noise`` the draw uses variance ``std**2 + noise`` (a noisy
    measurement), otherwise ``std**2`` (the latent function).
    """
    mean, std = model.predict(x, return_std=True)
    var = std ** 2 + (model.noise if include_noise else 0.0)
    rng = np.random.default_rng(seed)
    return mean + np.sqrt(var) * rng.standard_normal(len(mean))


def toy_trajectory(n_frames=500, seed=0, displacement=0.12, name="toy-water"):
    """Random distortions of a water-like molecule with a Morse/harmonic energy.

    Intended for demos and tests where no reference dataset is available.
    Energies are in eV, coordinates in Angstrom, atom order O, H, H.
    """
    rng = np.random.default_rng(seed)
    r0, theta0 = 0.9572, np.deg2rad(104.52)
    ref = np.array([[0.0, 0.0, 0.0],
                    [r0, 0.0, 0.0],
                    [r0 * np.cos(theta0), r0 * np.sin(theta0), 0.0]])
    d_e, a, k_theta = 5.0, 2.2, 3.5
    structures = []
    for _ in range(n_frames):
        pos = ref + displacement * rng.standard_normal(ref.shape)
        b1, b2 = pos[1] - pos[0], pos[2] - pos[0]
        l1, l2 = np.linalg.norm(b1), np.linalg.norm(b2)
        theta = np.arccos(np.clip(b1 @ b2 / (l1 * l2), -1, 1))
        hh = np.linalg.norm(pos[1] - pos[2])
        e = sum(d_e * (1 - np.exp(-a * (l - r0))) ** 2 for l in (l1, l2))
        e += 0.5 * k_theta * (theta - theta0) ** 2 + 0.1 * np.exp(-2.0 * hh)
        structures.append(Structure([8, 1, 1], pos, float(e)))
    return Dataset(structures, name)


# ---------------------------------------------------------------------------
# hyperparameter files
# ---------------------------------------------------------------------------

def write_hyper_file(path, params, noise, extra=None):
    """Write kernel hyperparameters as ``key = value`` lines."""
    lines = [
        f"output_scale = {params.output_scale!r}",
        f"noise = {float(noise)!r}",
        "lengthscales = " + ",".join(repr(float(v)) for v in params.lengthscales),
    ]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_key_values(path) -> dict:
    out = {}
    with open(path) as fh:
        for n, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected 'key = value', got {raw.strip()!r}", line=n)
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def read_hyper_file(path):
    """Inverse of :func:`write_hyper_file`; returns ``(params, noise, other_keys)``."""
    kv = read_key_values(path)
    try:
        params = KernelParams(float(kv.pop("output_scale")),
                              [float(v) for v in kv.pop("lengthscales").split(",")])
        noise = float(kv.pop("noise"))
    except KeyError as exc:
        raise ParseError(f"hyperparameter file lacks {exc.args[0]!r}") from None
    return params, noise, kv
