import gzip
import struct

import numpy as np
import pytest

from crot import io
from crot.bounds import BoundReport
from crot.mixture import Gamma, Mixture, gaussian_mixture
from crot.transport import solve_exact


def test_idx_tensor_fixture(tmp_path):
    path = tmp_path / "t.idx"
    path.write_bytes(struct.pack(">IIII", 0x803, 2, 2, 2) + bytes(range(8)))
    t = io.load_idx(path)
    assert t.dtype == np.uint8 and t.shape == (2, 2, 2)
    pts = io.idx_points(t)
    np.testing.assert_array_equal(pts, np.array([[0, 1, 2, 3], [4, 5, 6, 7]]) / 255)


def test_idx_labels_fixture(tmp_path):
    path = tmp_path / "l.idx"
    path.write_bytes(struct.pack(">II", 0x801, 3) + bytes([7, 0, 255]))
    np.testing.assert_array_equal(io.load_idx(path), [7, 0, 255])


def test_idx_errors(tmp_path):
    bad = tmp_path / "bad"
    bad.write_bytes(struct.pack(">I", 0xDEADBEEF) + bytes(8))
    with pytest.raises(io.WrongMagic):
        io.load_idx(bad)
    short = tmp_path / "short"
    short.write_bytes(struct.pack(">IIII", 0x803, 2, 2, 2) + bytes(7))
    with pytest.raises(io.Truncated):
        io.load_idx(short)
    head = tmp_path / "head"
    head.write_bytes(struct.pack(">II", 0x803, 2))
    with pytest.raises(io.Truncated):
        io.load_idx(head)
    assert not issubclass(io.WrongMagic, io.Truncated) and not issubclass(io.Truncated, io.WrongMagic)


def test_idx_round_trip_and_gzip(tmp_path):
    t = np.random.default_rng(0).integers(0, 256, size=(3, 4, 5), dtype=np.uint8)
    path = tmp_path / "x.idx"
    io.write_idx(path, t)
    np.testing.assert_array_equal(io.load_idx(path), t)
    gz = tmp_path / "x.idx.gz"
    gz.write_bytes(gzip.compress(path.read_bytes()))
    np.testing.assert_array_equal(io.load_idx(gz), t)
    with pytest.raises(ValueError):
        io.write_idx(path, t.astype(float))


def test_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y\n1,2\n3,4\n")
    np.testing.assert_array_equal(io.load_csv(p), [[1, 2], [3, 4]])
    p.write_text("1.5,2\n3,4\n")
    np.testing.assert_array_equal(io.load_points(p), [[1.5, 2], [3, 4]])


def test_json_round_trips(tmp_path):
    rng = np.random.default_rng(1)
    m = gaussian_mixture(rng.dirichlet(np.ones(3)), rng.normal(size=(3, 2)), rng.uniform(0.1, 1, (3, 2)))
    io.save(m, tmp_path / "m.json")
    back = io.load(tmp_path / "m.json", "mixture")
    np.testing.assert_array_equal(back.weights, m.weights)
    for a, b in zip(back.components, m.components):
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.var, b.var)
    g = Mixture([0.4, 0.6], (Gamma(2.0, 1.0), Gamma(3.0, 0.5)))
    assert io.from_json(io.to_json(g)).to_dict() == g.to_dict()
    plan = solve_exact(m.weights, [0.5, 0.5], rng.random((3, 2)))
    back = io.from_json(io.to_json(plan))
    assert abs(back.value - plan.value) <= 1e-15 * abs(plan.value)
    np.testing.assert_array_equal(back.coupling, plan.coupling)
    rep = BoundReport("kl")
    rep.add("scub", "upper", lambda: 2.0)
    assert io.from_json(io.to_json(rep)).to_dict() == rep.to_dict()


def test_json_schema_errors():
    with pytest.raises(ValueError, match="weights"):
        io.from_json('{"family": "gaussian_1d", "weights": [0.5], "components": [{"mu": 0, "sigma": 1}]}')
    with pytest.raises(ValueError, match="kind"):
        io.from_json('{"kind": "table"}')
    with pytest.raises(ValueError, match="expected"):
        io.from_json('{"kind": "bound_report", "target": "kl", "bounds": []}', "mixture")
    with pytest.raises(TypeError):
        io.to_json(object())
