"""The four scaled unknowns (n+, u+, n-, u-) on a periodic grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fields as F
from .errors import GridMismatch

COMPONENT_NAMES = ["n_plus", "u_plus_x", "u_plus_y", "u_plus_z",
                   "n_minus", "u_minus_x", "u_minus_y", "u_minus_z"]


@dataclass
class State:
    """Physical fields with a spectral mirror computed on demand.

    Norm conventions: the norm of a tuple is the sum of
    the component norms, and a velocity's norm is the L2 norm of its three
    components together.
    """

    grid: F.BoxGrid
    n_plus: np.ndarray
    u_plus: np.ndarray
    n_minus: np.ndarray
    u_minus: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        g = self.grid
        for name in ("n_plus", "n_minus"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != g.shape:
                raise GridMismatch(f"{name} has shape {a.shape}, grid is {g.shape}")
            setattr(self, name, a)
        for name in ("u_plus", "u_minus"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (3,) + g.shape:
                raise GridMismatch(f"{name} has shape {a.shape}, grid is {(3,) + g.shape}")
            setattr(self, name, a)

    @classmethod
    def zeros(cls, grid, t=0.0):
        z = np.zeros(grid.shape)
        v = np.zeros((3,) + grid.shape)
        return cls(grid, z, v, z.copy(), v.copy(), t)

    @classmethod
    def from_spectral(cls, grid, spec, t=0.0):
        """Build from ``(n+, u+, n-, u-)`` coefficient arrays."""
        nph, uph, nmh, umh = spec
        return cls(grid, F.inverse(grid, nph), F.inverse(grid, uph),
                   F.inverse(grid, nmh), F.inverse(grid, umh), t)

    def spectral(self):
        g = self.grid
        return (F.forward(g, self.n_plus), F.forward(g, self.u_plus),
                F.forward(g, self.n_minus), F.forward(g, self.u_minus))

    def stacked(self):
        """Physical components as an (8, n, n, n) array in file order."""
        return np.concatenate([self.n_plus[None], self.u_plus, self.n_minus[None], self.u_minus])

    def component_norms(self, k=0):
        """Sobolev ``H^k`` norms of (n+, u+, n-, u-)."""
        return spectral_component_norms(self.grid, self.spectral(), k)

    def norm(self, k=0):
        return float(sum(self.component_norms(k)))

    def scaled(self, a):
        return State(self.grid, a * self.n_plus, a * self.u_plus, a * self.n_minus,
                     a * self.u_minus, self.t)

    def __add__(self, other):
        if other.grid != self.grid:
            raise GridMismatch("states live on different grids")
        return State(self.grid, self.n_plus + other.n_plus, self.u_plus + other.u_plus,
                     self.n_minus + other.n_minus, self.u_minus + other.u_minus, self.t)

    def __sub__(self, other):
        return self + other.scaled(-1.0)


def spectral_component_norms(grid, spec, k=0):
    w = None if k == 0 else (1.0 + grid.r ** 2) ** int(k)
    return [float(np.sqrt(F.spectral_sum(grid, part, w))) for part in spec]


def write_state(path, state: State, extra=None):
    info = {"t": state.t}
    if extra:
        info.update(extra)
    F.write_fields(path, state.grid, state.stacked(), COMPONENT_NAMES, extra=info)


def read_state(path) -> State:
    header, grid, arr = F.read_fields(path)
    if header["names"] != COMPONENT_NAMES:
        raise ValueError(f"field file components {header['names']} are not a two-fluid state")
    return State(grid, arr[0], arr[1:4], arr[4], arr[5:8], float(header.get("t", 0.0)))
