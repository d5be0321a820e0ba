import numpy as np
import pytest

from twofluid import fields as F
from twofluid.errors import GridMismatch, UndefinedAtZero


@pytest.fixture
def grid():
    return F.BoxGrid(16, 2 * np.pi * 1.5)


def rand_field(grid, rng, vector=False):
    shape = ((3,) if vector else ()) + grid.shape
    return rng.standard_normal(shape)


def test_grid_validation():
    with pytest.raises(ValueError):
        F.BoxGrid(12, 1.0)
    with pytest.raises(ValueError):
        F.BoxGrid(4, 1.0)
    with pytest.raises(ValueError):
        F.BoxGrid(16, -1.0)


def test_constant_field(grid):
    c = F.forward(grid, np.full(grid.shape, 3.5))
    nz = np.argwhere(np.abs(c) > 1e-14)
    assert nz.tolist() == [[0, 0, 0]]
    assert c[0, 0, 0] == pytest.approx(3.5, abs=1e-14)


def test_cosine_two_modes(grid):
    x = grid.coords[0]
    c = F.forward(grid, np.cos(2 * np.pi * x / grid.box))
    nz = np.argwhere(np.abs(c) > 1e-14)
    assert sorted(map(tuple, nz)) == [(1, 0, 0), (grid.n - 1, 0, 0)]
    assert c[1, 0, 0] == pytest.approx(0.5, abs=1e-14)
    assert c[-1, 0, 0] == pytest.approx(np.conj(c[1, 0, 0]), abs=1e-15)


def test_round_trip_and_plancherel(grid):
    rng = np.random.default_rng(0)
    for _ in range(100):
        f = rand_field(grid, rng)
        c = F.forward(grid, f)
        assert np.max(np.abs(F.inverse(grid, c) - f)) < 1e-12 * np.max(np.abs(f))
        a, b = F.l2_norm(grid, f), F.spectral_l2(grid, c)
        assert abs(a - b) <= 1e-12 * a
        assert F.sobolev_norm(grid, f, 0) == pytest.approx(a, rel=1e-12)


def test_grid_mismatch(grid):
    with pytest.raises(GridMismatch):
        F.forward(grid, np.zeros((8, 8, 8)))
    with pytest.raises(GridMismatch):
        F.div(grid, np.zeros(grid.spectral_shape, dtype=complex))


def test_multipliers(grid):
    rng = np.random.default_rng(1)
    c = F.forward(grid, rand_field(grid, rng))
    assert np.array_equal(F.apply_multiplier(grid, c, np.ones(grid.spectral_shape)), c)
    x = grid.coords[0]
    cw = F.forward(grid, np.cos(3 * 2 * np.pi * x / grid.box))
    out = F.lambda_power(grid, cw, 2)
    assert np.allclose(out, (3 * grid.dk) ** 2 * cw, atol=1e-14)
    lap = F.div(grid, F.grad(grid, c))
    assert np.max(np.abs(lap + F.lambda_power(grid, c, 2))) < 1e-10 * np.max(np.abs(c))
    with pytest.raises(UndefinedAtZero):
        F.apply_multiplier(grid, c, lambda kx, ky, kz: 1.0 / np.sqrt(kx * kx + ky * ky + kz * kz))
    ok = F.apply_multiplier(grid, c, lambda kx, ky, kz: 1.0 / np.sqrt(kx * kx + ky * ky + kz * kz), zero=0.0)
    assert np.allclose(ok, F.lambda_power(grid, c, -1))


def test_multipliers_commute(grid):
    rng = np.random.default_rng(2)
    c = F.forward(grid, rand_field(grid, rng))
    for a, b in [(1, 2), (-1, 3), (0.5, 1.5), (-2, 2)]:
        lhs = F.lambda_power(grid, F.lambda_power(grid, c, a), b)
        rhs = F.lambda_power(grid, c, a + b)
        if a + b >= 0 and a < 0:
            rhs = np.where(grid.r == 0, 0.0, rhs)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_multiplier_preserves_reality(grid):
    rng = np.random.default_rng(3)
    c = F.forward(grid, rand_field(grid, rng))
    out = F.apply_multiplier(grid, c, lambda kx, ky, kz: np.exp(-(kx ** 2 + ky ** 2 + kz ** 2)))
    back = F.inverse(grid, out)
    assert np.isrealobj(back)
    assert np.allclose(F.forward(grid, back), out, atol=1e-14)


def test_hodge_gradient_field(grid):
    rng = np.random.default_rng(4)
    g = F.forward(grid, rand_field(grid, rng))
    u = F.inverse(grid, F.grad(grid, g))
    parts = F.hodge_split(grid, u)
    assert F.spectral_l2(grid, parts.psi) < 1e-10
    back = F.hodge_reconstruct(grid, parts)
    assert np.max(np.abs(back - u)) < 1e-10


def test_hodge_solenoidal_field(grid):
    rng = np.random.default_rng(5)
    g = F.forward(grid, rand_field(grid, rng))
    dg = F.grad(grid, g)
    u = F.inverse(grid, np.stack([dg[1], -dg[0], np.zeros_like(dg[0])]))
    parts = F.hodge_split(grid, u)
    assert F.spectral_l2(grid, parts.phi) < 1e-10


def test_hodge_random_field(grid):
    rng = np.random.default_rng(6)
    u = rand_field(grid, rng, vector=True)
    parts = F.hodge_split(grid, u)
    assert np.max(np.abs(F.hodge_reconstruct(grid, parts) - u)) < 1e-10
    gpart = F.gradient_part(grid, parts.phi)
    assert F.spectral_l2(grid, F.curl(grid, gpart)) < 1e-10
    assert F.spectral_l2(grid, F.div(grid, parts.psi)) < 1e-10
    # zero mode kept aside
    assert np.allclose(parts.rest[:, 0, 0, 0], F.forward(grid, u)[:, 0, 0, 0])
    # projection property
    again = F.hodge_split(grid, gpart, spectral=True)
    assert np.max(np.abs(F.gradient_part(grid, again.phi) - gpart)) < 1e-12
    assert np.max(np.abs(again.psi)) < 1e-12


def test_sobolev(grid):
    unit = F.BoxGrid(8, 1.0)
    for k in range(5):
        assert F.sobolev_norm(unit, np.full(unit.shape, -2.0), k) == pytest.approx(2.0, rel=1e-14)
    rng = np.random.default_rng(7)
    f = rand_field(grid, rng)
    n = [F.sobolev_norm(grid, f, k) for k in (0, 2, 4)]
    assert n[0] <= n[1] <= n[2]
    with pytest.raises(ValueError):
        F.sobolev_norm(grid, f, 5)


def test_dealias_mask():
    g = F.BoxGrid(32, 1.0)
    kx, _, _ = g.kint
    m = g.dealias_mask
    assert m[10, 0, 0] and not m[11, 0, 0] and m[-10, 0, 0] and not m[-11, 0, 0]
    assert m[0, 0, 10] and not m[0, 0, 11]


def test_field_file_round_trip(tmp_path, grid):
    rng = np.random.default_rng(8)
    arr = rng.standard_normal((2,) + grid.shape)
    p = tmp_path / "f.bin"
    F.write_fields(p, grid, arr, ["a", "b"], extra={"t": 1.25})
    header, g2, back = F.read_fields(p)
    assert g2 == grid
    assert header["names"] == ["a", "b"] and header["t"] == 1.25
    assert back.tobytes() == arr.tobytes()
    raw = p.read_bytes()
    first_line, payload = raw.split(b"\n", 1)
    # x fastest: the second stored sample is arr[0, 1, 0, 0]
    vals = np.frombuffer(payload[:16], dtype="<f8")
    assert vals[0] == arr[0, 0, 0, 0] and vals[1] == arr[0, 1, 0, 0]


def test_field_file_truncated(tmp_path, grid):
    p = tmp_path / "f.bin"
    F.write_fields(p, grid, np.zeros(grid.shape), ["a"])
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(GridMismatch):
        F.read_fields(p)
