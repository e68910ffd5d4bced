import numpy as np
import pytest

import perturbix as px
from perturbix import io


def test_triplets_round_trip(tmp_path, rng):
    a = rng.standard_normal((7, 7)) * (rng.uniform(size=(7, 7)) < 0.5)
    a[3, 4] = 1 / 3
    io.save_triplets(tmp_path / "m.txt", a, header="tau 0.1\nmore")
    back = io.load_triplets(tmp_path / "m.txt")
    # exact values; the zero pattern loses the sign of -0.0
    np.testing.assert_array_equal(back, a)


def test_triplets_trailing_zero_rows(tmp_path):
    a = np.zeros((5, 5))
    a[0, 1] = 2.0
    io.save_triplets(tmp_path / "m.txt", a)
    assert io.load_triplets(tmp_path / "m.txt").shape == (5, 5)


def test_vector_and_table(tmp_path, rng):
    v = rng.standard_normal(50) * 10.0 ** rng.integers(-300, 300, 50)
    io.save_vector(tmp_path / "v.csv", v, "u")
    assert io.load_vector(tmp_path / "v.csv").tobytes() == v.tobytes()
    cols = {"a": rng.standard_normal(4), "b": np.arange(4.0)}
    io.save_table(tmp_path / "t.csv", cols)
    back = io.load_table(tmp_path / "t.csv")
    assert list(back) == ["a", "b"]
    for k in cols:
        assert back[k].tobytes() == cols[k].tobytes()


def test_single_row_table(tmp_path):
    io.save_vector(tmp_path / "v.csv", [0.1])
    assert io.load_vector(tmp_path / "v.csv").tolist() == [0.1]


@pytest.mark.parametrize("fmt,name", [("binary", "traj.bin"), ("csv", "traj.csv")])
def test_trajectory_round_trip(tmp_path, rng, fmt, name):
    pts = rng.standard_normal((100, 3))
    io.save_trajectory(tmp_path / name, pts, 0.01, fmt=fmt)
    back, dt = io.load_trajectory(tmp_path / name)
    assert back.tobytes() == pts.tobytes() and dt == 0.01


def test_trajectory_errors(tmp_path):
    io.save_trajectory(tmp_path / "t.bin", np.zeros((10, 2)), 0.1)
    (tmp_path / "t.bin").write_bytes(b"\0" * 8 * 19)
    with pytest.raises(px.DomainError):
        io.load_trajectory(tmp_path / "t.bin")
    (tmp_path / "raw.bin").write_bytes(b"\0" * 16)
    with pytest.raises(px.DomainError):
        io.load_trajectory(tmp_path / "raw.bin")
    np.savetxt(tmp_path / "plain.csv", np.zeros((3, 1)))
    with pytest.raises(px.DomainError):
        io.load_trajectory(tmp_path / "plain.csv")
    assert io.load_trajectory(tmp_path / "plain.csv", dt=0.5)[1] == 0.5
