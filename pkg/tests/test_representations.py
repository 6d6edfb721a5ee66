import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from gpruq.exceptions import ConfigurationError, DegenerateGeometryError
from gpruq.representations import (ANGSTROM_TO_BOHR, SoapConfig, Structure, coulomb_feature,
                                   coulomb_features, coulomb_matrix, cutoff_function,
                                   real_spherical_harmonics, soap_features)


def water(shift=(0.0, 0.0, 0.0)):
    pos = np.array([[0.0, 0.0, 0.0], [0.9572, 0.0, 0.0], [-0.2400, 0.9266, 0.0]])
    return Structure([8, 1, 1], pos + np.asarray(shift), energy=-1.0)


def random_molecule(rng, n_atoms=5, species=(1, 6, 8)):
    while True:
        pos = rng.uniform(-2.0, 2.0, size=(n_atoms, 3))
        d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
        if np.min(d[np.triu_indices(n_atoms, 1)]) > 0.5:
            return Structure(rng.choice(species, size=n_atoms), pos)


# ---------------------------------------------------------------------------
# Structure
# ---------------------------------------------------------------------------

def test_structure_validation():
    with pytest.raises(ValueError):
        Structure([1, 1], [[0, 0, 0]])
    with pytest.raises(ValueError):
        Structure([0], [[0, 0, 0]])
    with pytest.raises(ValueError):
        Structure([1], [[0, 0, np.nan]])
    with pytest.raises(ValueError):
        Structure([], np.empty((0, 3)))


def test_structure_is_immutable():
    s = water()
    with pytest.raises(ValueError):
        s.positions[0, 0] = 1.0


# ---------------------------------------------------------------------------
# Coulomb
# ---------------------------------------------------------------------------

def test_coulomb_single_hydrogen():
    np.testing.assert_array_equal(coulomb_feature(Structure([1], [[0, 0, 0]])), [0.5])


def test_coulomb_h2_one_bohr():
    s = Structure([1, 1], [[0, 0, 0], [0, 0, 1.0 / ANGSTROM_TO_BOHR]])
    np.testing.assert_allclose(coulomb_feature(s), [0.5, 1.0, 0.5], rtol=1e-12)


def test_coulomb_matches_entry_formula():
    rng = np.random.default_rng(42)
    s = random_molecule(rng, 6)
    m = coulomb_matrix(s)
    z = s.atomic_numbers.astype(float)
    for i in range(6):
        for j in range(6):
            if i == j:
                expected = 0.5 * z[i] ** 2.4
            else:
                expected = z[i] * z[j] / (np.linalg.norm(s.positions[i] - s.positions[j])
                                          * ANGSTROM_TO_BOHR)
            assert m[i, j] == pytest.approx(expected, rel=1e-12)
    f = coulomb_feature(s)
    assert f.shape == (21,)
    np.testing.assert_array_equal(f, m[np.triu_indices(6)])


def test_coulomb_unsorted():
    s = water()
    perm = s.permuted([1, 0, 2])
    assert not np.allclose(coulomb_feature(s), coulomb_feature(perm))


def test_coulomb_coincident_atoms():
    with pytest.raises(DegenerateGeometryError):
        coulomb_feature(Structure([1, 1], [[0, 0, 0], [0, 0, 1e-12]]))


def test_coulomb_features_need_common_size():
    with pytest.raises(ConfigurationError):
        coulomb_features([water(), Structure([1], [[0, 0, 0]])])


def test_coulomb_translation_rotation_invariance():
    rng = np.random.default_rng(42)
    s = random_molecule(rng, 5)
    ref = coulomb_feature(s)
    np.testing.assert_allclose(coulomb_feature(s.translated([1, 2, 3])), ref, atol=1e-10)
    for k in range(10):
        rot = Rotation.random(random_state=k).as_matrix()
        np.testing.assert_allclose(coulomb_feature(s.rotated(rot)), ref, rtol=1e-12)


# ---------------------------------------------------------------------------
# SOAP
# ---------------------------------------------------------------------------

def test_soap_config_validation():
    with pytest.raises(ValueError):
        SoapConfig(species=(8, 1))
    with pytest.raises(ValueError):
        SoapConfig(species=())
    with pytest.raises(ValueError):
        SoapConfig(species=(1,), r_cut=0.0)
    with pytest.raises(ValueError):
        SoapConfig(species=(1,), n_max=0)
    with pytest.raises(ValueError):
        SoapConfig(species=(1,), l_max=-1)
    with pytest.raises(ValueError):
        SoapConfig(species=(1,), sigma_atom=0.0)


@pytest.mark.parametrize("species,n_max,l_max", [((1,), 3, 1), ((1, 8), 3, 1),
                                                 ((1, 6, 8), 2, 3), ((1, 6, 7, 8), 4, 0)])
def test_soap_dimension(species, n_max, l_max):
    cfg = SoapConfig(species=species, n_max=n_max, l_max=l_max)
    n_pairs = len(species) * (len(species) + 1) // 2
    expected = (l_max + 1) * n_max * (n_max + 1) // 2 * n_pairs
    assert cfg.n_features == expected
    s = Structure([species[0]] * 2, [[0, 0, 0], [0, 0, 1.1]])
    assert soap_features(s, cfg).shape == (2, expected)


def test_soap_default_water_dimension():
    cfg = SoapConfig.for_structures([water()])
    assert cfg.species == (1, 8)
    # 2 l values x 6 (n, n') pairs x 3 species pairs
    assert soap_features(water(), cfg).shape == (3, 36)


def test_soap_unknown_species():
    with pytest.raises(ConfigurationError):
        soap_features(water(), SoapConfig(species=(1,)))


def test_soap_deterministic():
    cfg = SoapConfig.for_structures([water()])
    a = soap_features(water(), cfg)
    b = soap_features(water(), cfg)
    assert a.tobytes() == b.tobytes()


def test_soap_neighbor_beyond_cutoff_ignored():
    cfg = SoapConfig(species=(1, 6))
    alone = soap_features(Structure([6], [[0, 0, 0]]), cfg)
    pair = soap_features(Structure([6, 1], [[0, 0, 0], [0, 0, 2 * cfg.r_cut]]), cfg)
    # equal up to BLAS summation order
    np.testing.assert_allclose(pair[0], alone[0], rtol=1e-13, atol=1e-15)


def test_soap_cutoff_continuity():
    cfg = SoapConfig(species=(1, 6))
    alone = soap_features(Structure([6], [[0, 0, 0]]), cfg)[0]
    gaps = []
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        s = Structure([6, 1], [[0, 0, 0], [0, 0, cfg.r_cut - eps]])
        gaps.append(np.max(np.abs(soap_features(s, cfg)[0] - alone)))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    # the cosine cutoff vanishes quadratically
    assert gaps[-1] < 1e-8


def test_soap_rotation_invariance():
    rng = np.random.default_rng(42)
    s = random_molecule(rng, 5)
    cfg = SoapConfig(species=(1, 6, 8), l_max=2)
    ref = soap_features(s, cfg)
    for k in range(10):
        rot = Rotation.random(random_state=k).as_matrix()
        np.testing.assert_allclose(soap_features(s.rotated(rot), cfg), ref, rtol=1e-8,
                                   atol=1e-12 * np.max(np.abs(ref)))


def test_soap_translation_invariance():
    rng = np.random.default_rng(42)
    s = random_molecule(rng, 5)
    cfg = SoapConfig(species=(1, 6, 8))
    ref = soap_features(s, cfg)
    for _ in range(10):
        shift = rng.uniform(-10, 10, size=3)
        np.testing.assert_allclose(soap_features(s.translated(shift), cfg), ref, atol=1e-10)


def test_soap_permutation_covariance():
    rng = np.random.default_rng(42)
    s = random_molecule(rng, 6)
    cfg = SoapConfig(species=(1, 6, 8))
    ref = soap_features(s, cfg)
    order = rng.permutation(6)
    np.testing.assert_allclose(soap_features(s.permuted(order), cfg), ref[order], atol=1e-12)


def test_soap_distinguishes_geometries():
    cfg = SoapConfig(species=(1,))
    a = soap_features(Structure([1, 1], [[0, 0, 0], [0, 0, 1.0]]), cfg)
    b = soap_features(Structure([1, 1], [[0, 0, 0], [0, 0, 2.0]]), cfg)
    assert np.linalg.norm(a - b) > 1e-3


def test_cutoff_function_values():
    np.testing.assert_allclose(cutoff_function(np.array([0.0, 2.5, 5.0, 6.0]), 5.0),
                               [1.0, 0.5, 0.0, 0.0], atol=1e-15)


def test_real_spherical_harmonics_orthonormal():
    # Gauss-Legendre in cos(theta) x uniform phi integrates degree <= 2*l_max exactly
    l_max = 3
    ct, w = np.polynomial.legendre.leggauss(12)
    phi = np.linspace(0, 2 * np.pi, 24, endpoint=False)
    st_ = np.sqrt(1 - ct ** 2)
    pts = np.array([[s * np.cos(p), s * np.sin(p), c] for c, s in zip(ct, st_) for p in phi])
    weights = np.repeat(w, len(phi)) * (2 * np.pi / len(phi))
    y = real_spherical_harmonics(l_max, pts)
    gram = (y * weights[:, None]).T @ y
    np.testing.assert_allclose(gram, np.eye((l_max + 1) ** 2), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50))
def test_coulomb_translation_property(dx, dy, dz):
    s = water()
    np.testing.assert_allclose(coulomb_feature(s.translated([dx, dy, dz])), coulomb_feature(s),
                               atol=1e-10)
