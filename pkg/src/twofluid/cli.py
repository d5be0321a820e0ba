"""Command line front end: ``twofluid <command> CONFIG [flags]``.

The configuration is a plain ``key = value`` file holding either the physical
laws or the direct beta override, plus optional run knobs:

    n, box, eta, vartheta, dealias, eps, eps0, t_end, dt, sample_dt,
    stride, out, seed, initial, monitor

Exit status is 0 on success, 1 when ``verify`` reports a failure, 2 for a
malformed configuration and 3 for any other library error (its class name is
printed on stderr).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import evolve as E
from . import fields as F
from . import modes as M
from . import spectral as S
from . import verify as V
from .closure import (DIRECT_KEYS, LAW_KEYS, ModelCoefficients, coefficients_from_config,
                      has_laws, laws_from_config, parse_keyvalue)
from .errors import ConfigError, TwoFluidError
from .state import State, read_state

RUN_KEYS = ("n", "box", "eta", "vartheta", "dealias", "eps", "eps0", "t_end", "dt",
            "sample_dt", "stride", "out", "seed", "initial", "monitor")


def _finite(cfg, key, default=None, positive=False):
    v = cfg.get(key, default)
    if v is None:
        return None
    if isinstance(v, str):
        raise ConfigError(f"{key} must be numeric, got {v!r}")
    v = float(v)
    if positive and not v > 0:
        raise ConfigError(f"{key} must be positive, got {v!r}")
    return v


def _integer(cfg, key, default):
    v = _finite(cfg, key, default)
    if v != int(v):
        raise ConfigError(f"{key} must be an integer, got {v!r}")
    return int(v)


def _flag(cfg, key, default):
    v = cfg.get(key, default)
    if isinstance(v, bool):
        return v
    if isinstance(v, float) and v in (0.0, 1.0):
        return bool(v)
    if isinstance(v, str) and v.lower() in ("true", "false", "yes", "no"):
        return v.lower() in ("true", "yes")
    raise ConfigError(f"{key} must be a boolean, got {v!r}")


@dataclass
class RunConfig:
    coeffs: ModelCoefficients
    laws: Optional[tuple]
    n: int = 32
    box: Optional[float] = None
    eta: Optional[float] = None
    vartheta: Optional[float] = None
    dealias: bool = True
    eps: float = 5e-4
    eps0: float = 0.05
    t_end: Optional[float] = None
    dt: Optional[float] = None
    sample_dt: float = 0.25
    stride: int = 0
    out: str = "."
    seed: int = 0
    initial: str = "mode"
    monitor: str = "l2"

    @classmethod
    def from_dict(cls, cfg: dict) -> "RunConfig":
        unknown = sorted(set(cfg) - set(LAW_KEYS) - set(DIRECT_KEYS) - set(RUN_KEYS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        coeffs = coefficients_from_config(cfg)
        laws = laws_from_config(cfg) if has_laws(cfg) else None
        rc = cls(coeffs, laws)
        rc.n = _integer(cfg, "n", 32)
        rc.box = _finite(cfg, "box", positive=True)
        rc.eta = _finite(cfg, "eta", positive=True)
        rc.vartheta = _finite(cfg, "vartheta", positive=True)
        rc.dealias = _flag(cfg, "dealias", True)
        rc.eps = _finite(cfg, "eps", 5e-4, positive=True)
        rc.eps0 = _finite(cfg, "eps0", 0.05, positive=True)
        rc.t_end = _finite(cfg, "t_end")
        if rc.t_end is not None and rc.t_end < 0:
            raise ConfigError("t_end must be non-negative")
        rc.dt = _finite(cfg, "dt", positive=True)
        rc.sample_dt = _finite(cfg, "sample_dt", 0.25, positive=True)
        rc.stride = _integer(cfg, "stride", 0)
        if rc.stride < 0:
            raise ConfigError("stride must be non-negative")
        rc.seed = _integer(cfg, "seed", 0)
        for key in ("out", "initial", "monitor"):
            v = cfg.get(key, getattr(rc, key))
            setattr(rc, key, v if isinstance(v, str) else repr(v))
        if rc.monitor not in ("l2", "h4"):
            raise ConfigError("monitor must be 'l2' or 'h4'")
        if rc.n < 8 or rc.n & (rc.n - 1):
            raise ConfigError(f"n must be a power of two >= 8, got {rc.n}")
        return rc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        return cls.from_dict(parse_keyvalue(text))

    def need_laws(self):
        if self.laws is None:
            raise ConfigError("this command needs the physical laws, not the direct beta override")
        return self.laws

    def vartheta_or(self, default):
        return self.vartheta if self.vartheta is not None else default

    def mode_grid(self, vartheta=None):
        """``(eta, grid)`` for growing-mode runs."""
        c = self.coeffs
        eta = self.eta
        if eta is None:
            eta = S.eta_threshold(c, vartheta if vartheta is not None else self.vartheta_or(c.theta / 10))
        box = self.box if self.box is not None else M.box_for_eta(eta, self.n, self.dealias)
        return eta, F.BoxGrid(self.n, box)

    def output(self, name):
        os.makedirs(self.out, exist_ok=True)
        return os.path.join(self.out, name)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.floating):
        return _jsonable(float(v))
    return v


def dumps(obj):
    """JSON with shortest round-trip floats and NaN as null."""
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False)


def initial_state(rc: RunConfig, eta, grid, amplitude):
    """Growing mode (default), seeded random smooth data, or a field file."""
    if rc.initial == "mode":
        return E.unit_mode_state(eta, rc.coeffs, grid, rc.dealias).scaled(amplitude)
    if rc.initial == "random":
        rng = np.random.default_rng(rc.seed)
        spec = []
        for shape in (grid.spectral_shape, (3,) + grid.spectral_shape,
                      grid.spectral_shape, (3,) + grid.spectral_shape):
            z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            spec.append(z * grid.dealias_mask * np.exp(-grid.r ** 2 / (2.0 * (4 * eta) ** 2)))
        st = State.from_spectral(grid, spec)
        return st.scaled(amplitude / st.norm(4))
    st = read_state(rc.initial)
    if st.grid != grid:
        raise ConfigError(f"initial field file grid {st.grid!r} differs from the run grid {grid!r}")
    return st


class Snapshots:
    """Writes numbered field files ``<prefix>_00000.field``, ... into the output directory."""

    def __init__(self, rc, prefix, grid):
        self.rc, self.prefix, self.grid, self.count = rc, prefix, grid, 0

    def __call__(self, t, X):
        E.write_snapshot(self.rc.output(f"{self.prefix}_{self.count:05d}.field"), self.grid, X, t)
        self.count += 1


def _snapshots(rc, prefix, grid):
    return Snapshots(rc, prefix, grid) if rc.stride else None


# -- subcommands ----------------------------------------------------------------

def cmd_coeffs(rc, args, out):
    print(dumps(rc.coeffs.to_dict()), file=out)
    return 0


def cmd_dispersion(rc, args, out):
    rows = S.dispersion_table(args.rmin, args.rmax, args.samples, rc.coeffs)
    S.write_dispersion_csv(out, rows)
    return 0


def cmd_theta(rc, args, out):
    c = rc.coeffs
    vt = args.vartheta if args.vartheta is not None else rc.vartheta_or(c.theta / 10)
    print(dumps({"theta": c.theta, "vartheta": vt, "eta1": S.eta_threshold(c, vt)}), file=out)
    return 0


def cmd_mode(rc, args, out):
    eta, grid = rc.mode_grid()
    m = M.build_mode(eta, rc.coeffs, grid, rc.dealias)
    path = rc.output("mode.field")
    M.write_mode(path, m)
    print(dumps({"path": path, "eta": eta, "n": grid.n, "box": grid.box,
                 "residual": M.mode_residual(m, rc.coeffs), "norms": m.norms()}), file=out)
    return 0


def _sample_every(rc, dt):
    return max(1, int(round(rc.sample_dt / dt)))


def cmd_evolve_linear(rc, args, out):
    c = rc.coeffs
    eta, grid = rc.mode_grid()
    s = initial_state(rc, eta, grid, 1.0)
    t_end = rc.t_end if rc.t_end is not None else 10.0 / c.theta
    n = max(1, int(math.ceil(t_end / rc.sample_dt - 1e-9)))
    prop = E.LinearPropagator(grid, c)
    X0 = E.pack(s)
    snap = _snapshots(rc, "linear", grid)
    rows = []
    for k in range(n + 1):
        t = t_end * k / n
        X = prop.apply(X0, t)
        rows.append(E.norm_row(grid, X, s.t + t, c))
        if snap is not None and k % rc.stride == 0:
            snap(s.t + t, X)
    path = rc.output("linear.csv")
    E.write_series_csv(path, rows)
    print(dumps({"series": path, "samples": len(rows), "t_end": t_end, "eta": eta,
                 "n": grid.n, "box": grid.box}), file=out)
    return 0


def cmd_evolve_nonlinear(rc, args, out):
    c = rc.coeffs
    laws = rc.need_laws()
    eta, grid = rc.mode_grid()
    s = initial_state(rc, eta, grid, rc.eps)
    t_end = rc.t_end if rc.t_end is not None else 10.0 / c.theta
    dt = rc.dt
    if dt is None:
        lim = E.max_rate(grid, c, rc.dealias)
        dt = rc.sample_dt / math.ceil(rc.sample_dt * lim)
    traj = E.evolve_nonlinear(s, laws, c, t_end, dt, sample_every=_sample_every(rc, dt),
                              dealias=rc.dealias, snapshot=_snapshots(rc, "nonlinear", grid),
                              snapshot_every=rc.stride or None)
    path = rc.output("nonlinear.csv")
    traj.write_csv(path)
    print(dumps({"series": path, "samples": len(traj.rows), "dt": traj.dt, "status": traj.status,
                 "message": traj.message, "eta": eta, "n": grid.n, "box": grid.box}), file=out)
    return 0


def cmd_escape(rc, args, out):
    c = rc.coeffs
    laws = rc.need_laws()
    try:
        cfg = E.EscapeConfig(rc.eps, rc.eps0, c.theta, monitor=rc.monitor)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    eta, grid = rc.mode_grid(rc.vartheta_or(cfg.vartheta))
    res = E.escape_experiment(cfg, laws, c, grid, eta, dt=rc.dt, sample_dt=rc.sample_dt,
                              t_end=rc.t_end, dealias=rc.dealias, keep_trajectory=True)
    res.trajectory.write_csv(rc.output("escape.csv"))
    d = res.to_dict()
    with open(rc.output("escape.json"), "w") as fh:
        fh.write(dumps(d) + "\n")
    print(dumps(d), file=out)
    return 0


def cmd_verify(rc, args, out):
    results = V.run(rc.coeffs, rc.laws, quick=args.quick, seed=rc.seed,
                    emit=lambda line: print(line, file=out, flush=True))
    print(V.summary(results), file=out)
    return 1 if any(r.status == V.FAIL for r in results) else 0


COMMANDS = {
    "coeffs": cmd_coeffs,
    "dispersion": cmd_dispersion,
    "theta": cmd_theta,
    "mode": cmd_mode,
    "evolve-linear": cmd_evolve_linear,
    "evolve-nonlinear": cmd_evolve_nonlinear,
    "escape": cmd_escape,
    "verify": cmd_verify,
}


def build_parser():
    p = argparse.ArgumentParser(prog="twofluid", description="Two-fluid instability toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="key = value configuration file")
        if name == "dispersion":
            sp.add_argument("--rmin", type=float, default=1e-3)
            sp.add_argument("--rmax", type=float, default=1e3)
            sp.add_argument("--samples", type=int, default=1000)
        elif name == "theta":
            sp.add_argument("--vartheta", type=float, default=None)
        elif name == "verify":
            sp.add_argument("--quick", action="store_true", help="skip the nonlinear escape run")
    return p


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        rc = RunConfig.load(args.config)
        return COMMANDS[args.command](rc, args, out)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    except TwoFluidError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # argument-level domain errors (e.g. rmin >= rmax)
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
