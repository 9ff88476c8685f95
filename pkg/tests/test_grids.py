import numpy as np
import pytest

from fracsel import Path, TimeGrid
from fracsel.grids import BINARY_MAGIC, GridError


def test_grid_basics():
    g = TimeGrid(0.5, 0.25, 4)
    assert g.n_nodes == 5
    assert g.t_end == 1.5
    assert g.span == 1.0
    assert np.array_equal(g.nodes(), [0.5, 0.75, 1.0, 1.25, 1.5])


@pytest.mark.parametrize(
    "t0,dt,n",
    [(0.0, 0.0, 4), (0.0, -1.0, 4), (0.0, np.inf, 4), (np.nan, 1.0, 4), (0.0, 1.0, 0)],
)
def test_grid_rejects_bad_fields(t0, dt, n):
    with pytest.raises(GridError):
        TimeGrid(t0, dt, n)


def test_grid_rejects_float_n():
    with pytest.raises(GridError):
        TimeGrid(0.0, 1.0, 4.0)


def test_index_of():
    g = TimeGrid(1.0, 0.1, 10)
    assert g.index_of(1.0) == 0
    assert g.index_of(1.5) == 5
    assert g.index_of(2.0) == 10
    # tiny float noise is fine, half a step is not
    assert g.index_of(1.5 + 1e-13) == 5
    with pytest.raises(GridError):
        g.index_of(1.55)
    with pytest.raises(GridError):
        g.index_of(2.1)


def test_restrict():
    g = TimeGrid(0.0, 0.5, 6)
    sub = g.restrict(2, 5)
    assert sub.t0 == 1.0 and sub.n == 3 and sub.dt == 0.5
    with pytest.raises(GridError):
        g.restrict(3, 3)
    with pytest.raises(GridError):
        g.restrict(0, 7)


def test_path_validation():
    g = TimeGrid(0.0, 1.0, 2)
    with pytest.raises(GridError):
        Path(g, [0.0, 1.0])
    with pytest.raises(GridError):
        Path(g, [0.0, np.nan, 2.0])
    p = Path(g, [0.0, 1.0, 3.0])
    assert np.array_equal(p.increments(), [1.0, 2.0])
    assert p.value_at(1.0) == 1.0


def test_csv_round_trip(tmp_path):
    g = TimeGrid(0.25, 1.0 / 3.0, 7)
    vals = np.random.default_rng(7).standard_normal(8)
    p = Path(g, vals)
    f = tmp_path / "p.csv"
    p.save_csv(str(f))
    q = Path.load_csv(str(f))
    # repr() serialization keeps every float bit
    assert np.array_equal(q.values, p.values)
    assert q.grid.n == p.grid.n
    assert abs(q.grid.dt - p.grid.dt) < 1e-15


def test_csv_rejects_bad_header(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("time,x\n0,0\n1,1\n")
    with pytest.raises(GridError):
        Path.load_csv(str(f))


def test_binary_round_trip(tmp_path):
    g = TimeGrid(-2.0, 0.125, 17)
    vals = np.random.default_rng(11).standard_normal(18)
    p = Path(g, vals)
    f = tmp_path / "p.fsel"
    p.save_binary(str(f))
    raw = f.read_bytes()
    assert raw[:4] == BINARY_MAGIC
    q = Path.load_binary(str(f))
    assert np.array_equal(q.values, p.values)
    assert (q.grid.t0, q.grid.dt, q.grid.n) == (g.t0, g.dt, g.n)


def test_binary_rejects_corruption(tmp_path):
    g = TimeGrid(0.0, 1.0, 2)
    p = Path(g, [0.0, 1.0, 2.0])
    raw = p.to_binary_bytes()
    f = tmp_path / "x.fsel"

    f.write_bytes(raw[:10])
    with pytest.raises(GridError):
        Path.load_binary(str(f))

    f.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(GridError):
        Path.load_binary(str(f))

    f.write_bytes(raw + b"\x00" * 8)
    with pytest.raises(GridError):
        Path.load_binary(str(f))
