import numpy as np
import pytest

from echo_collapse.errors import ValidationError
from echo_collapse.lattice import generate_cluster, yttrium_positions

from conftest import NEIGHBOURS_I


def test_reproduces_tabulated_neighbours():
    pts = yttrium_positions(7.0)[:20]
    assert np.abs(pts - NEIGHBOURS_I[:, 1:]).max() < 0.01
    d = np.linalg.norm(pts, axis=1)
    assert np.abs(d - NEIGHBOURS_I[:, 0]).max() < 0.01


def test_five_nearest_distances():
    d = generate_cluster(n=5).distances
    assert np.allclose(d, [3.40, 3.46, 3.51, 3.62, 3.72], atol=0.01)


def test_500_ions_reach_18_5_A():
    c = generate_cluster(n=500)
    assert c[0].distance == pytest.approx(3.40, abs=0.01)
    assert c[-1].distance == pytest.approx(18.5, abs=0.1)


def test_density_matches_yttrium_density():
    r = 30.0
    n = len(yttrium_positions(r))
    dens = n / (4 / 3 * np.pi * r**3) * 1e24
    assert dens == pytest.approx(1.88e22, rel=0.03)


def test_radius_and_count_agree():
    a = generate_cluster(radius_A=12.0)
    b = generate_cluster(n=len(a))
    assert np.array_equal(a.positions, b.positions)


def test_shipped_file_matches_generator(cluster500):
    assert np.allclose(cluster500.positions, generate_cluster(n=500).positions, atol=1e-4)


def test_argument_errors():
    with pytest.raises(ValidationError):
        generate_cluster()
    with pytest.raises(ValidationError):
        generate_cluster(n=5, radius_A=10)
    with pytest.raises(ValidationError):
        yttrium_positions(-1)
