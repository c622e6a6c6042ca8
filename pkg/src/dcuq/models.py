"""Forward models mapping parameters to a scalar quantity of interest.

Model zoo
---------
``peaks``
    Sum of four weighted Gaussian bumps on [0, 1]^2.
``lotka_volterra``
    Three competing species, explicit Euler to T = 10, QoI = u_3(T).
``elliptic1d``
    P1 finite elements for -(a u')' = 1 on (0, 1), u(0) = u(1) = 0, with
    log-diffusion a(x) = exp(ybar + sum_i lambda_i sqrt(eta_i) sin(i pi x));
    QoI = u(x*).
``identity``
    Q(lambda) = lambda in 1D; used for analytic checks.

All evaluators take an (n, k) parameter array and return an (n,) array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError, InvalidArgumentError

# (weight, center1, center2, width1, width2)
PEAKS_TERMS = (
    (2.0, 0.25, 0.75, 0.15, 0.15),
    (3.0, 0.75, 0.75, 0.2, 0.2),
    (2.5, 0.33, 0.33, 0.1, 0.1),
    (-1.0, 0.8, 0.4, 0.1, 0.2),
)


def peaks_qoi(lam):
    """Peaks function. Accepts a 2-vector (returns float) or an (n, 2) array."""
    x = np.asarray(lam, dtype=float)
    single = x.ndim == 1
    x = x.reshape(-1, 2)
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise DomainError("peaks is defined on the unit square")
    out = np.zeros(x.shape[0])
    for w, c1, c2, s1, s2 in PEAKS_TERMS:
        out += w * np.exp(
            -((x[:, 0] - c1) ** 2) / (2 * s1**2) - (x[:, 1] - c2) ** 2 / (2 * s2**2)
        )
    return float(out[0]) if single else out


# ---------------------------------------------------------------- Lotka-Volterra

LV_OFFDIAG = ((0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1))


@dataclass(frozen=True)
class LvConfig:
    """Competitive Lotka-Volterra constants.

    Parameter vectors are packed as ``(r1, r2, r3, a12, a13, a21, a23, a31, a32)``.
    """

    bounds: tuple = (0.3, 0.7)
    alpha_diag: tuple = (1.0, 1.0, 1.0)
    u0: tuple = (0.3, 0.3, 0.3)
    final_time: float = 10.0
    qoi_index: int = 3

    def __post_init__(self):
        if any(v <= 0 for v in self.u0) or any(v <= 0 for v in self.alpha_diag):
            raise ConfigError("u0 and alpha_diag must be componentwise positive")
        if not 1 <= self.qoi_index <= 3:
            raise ConfigError("qoi_index must be 1, 2 or 3")


def pack_lv(r, alpha):
    """(r, 3x3 alpha) -> 9-vector; the diagonal of alpha is dropped."""
    r = np.asarray(r, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    return np.concatenate([r, [alpha[i, j] for i, j in LV_OFFDIAG]])


def unpack_lv(lam, alpha_diag=(1.0, 1.0, 1.0)):
    """Inverse of :func:`pack_lv` for an (n, 9) array -> r (n, 3), alpha (n, 3, 3)."""
    lam = np.asarray(lam, dtype=float).reshape(-1, 9)
    alpha = np.zeros((lam.shape[0], 3, 3))
    alpha[:, [0, 1, 2], [0, 1, 2]] = alpha_diag
    for c, (i, j) in enumerate(LV_OFFDIAG):
        alpha[:, i, j] = lam[:, 3 + c]
    return lam[:, :3].copy(), alpha


def _steps(final_time, dt):
    n = final_time / dt
    steps = int(round(n))
    if steps < 1 or abs(n - steps) > 1e-9 * max(1.0, n):
        raise ConfigError(f"final time {final_time} is not an integer multiple of dt={dt}")
    return steps


def lv_trajectory_end(r, alpha, u0, dt, final_time):
    """Explicit Euler for du_i/dt = r_i u_i (1 - sum_j alpha_ij u_j); returns u(T), shape (n, 3)."""
    steps = _steps(final_time, dt)
    u = np.broadcast_to(np.asarray(u0, dtype=float), r.shape).copy()
    for k in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            u = u + dt * r * u * (1.0 - np.einsum("nij,nj->ni", alpha, u))
        if not np.all(np.isfinite(u)):
            bad = np.nonzero(~np.all(np.isfinite(u), axis=1))[0]
            raise DivergenceError(
                f"Lotka-Volterra state became non-finite at t={(k + 1) * dt:g}",
                time=(k + 1) * dt,
                indices=bad.tolist(),
            )
    return u


def lv_solve(lam, dt, config=LvConfig()):
    """u_q(T) for 9-vectors ``lam`` (single vector -> float, (n, 9) -> (n,))."""
    x = np.asarray(lam, dtype=float)
    single = x.ndim == 1
    r, alpha = unpack_lv(x, config.alpha_diag)
    u = lv_trajectory_end(r, alpha, config.u0, dt, config.final_time)
    out = u[:, config.qoi_index - 1]
    return float(out[0]) if single else out


# ---------------------------------------------------------------- elliptic 1D

@dataclass(frozen=True)
class EllipticConfig:
    kl_terms: int = 3
    eta: tuple = None
    mean_log: float = 0.0
    qoi_location: float = 0.5

    def __post_init__(self):
        if self.kl_terms < 1:
            raise ConfigError("kl_terms must be positive")
        if self.eta is None:
            object.__setattr__(
                self, "eta", tuple(1.0 / (i * i) for i in range(1, self.kl_terms + 1))
            )
        if len(self.eta) != self.kl_terms or any(e <= 0 for e in self.eta):
            raise ConfigError("eta must hold kl_terms positive values")
        if not 0.0 < self.qoi_location < 1.0:
            raise ConfigError("qoi_location must lie in (0, 1)")


def _mesh_cells(h):
    n = 1.0 / h
    cells = int(round(n))
    if cells < 2 or abs(n - cells) > 1e-9 * n:
        raise ConfigError(f"1/h must be an integer >= 2, got h={h}")
    return cells


def diffusion(x, lam, config=EllipticConfig()):
    """a(x; lambda) on points ``x`` for parameter rows ``lam``; shape (n, len(x))."""
    lam = np.asarray(lam, dtype=float).reshape(-1, config.kl_terms)
    i = np.arange(1, config.kl_terms + 1)
    modes = np.sqrt(np.asarray(config.eta))[:, None] * np.sin(np.pi * i[:, None] * np.asarray(x)[None, :])
    return np.exp(config.mean_log + lam @ modes)


def _thomas(lower, diag, upper, rhs):
    """Solve tridiagonal systems row-wise; arrays are (n_systems, size)."""
    n = diag.shape[1]
    c = np.empty_like(diag)
    d = np.empty_like(diag)
    c[:, 0] = upper[:, 0] / diag[:, 0]
    d[:, 0] = rhs[:, 0] / diag[:, 0]
    for i in range(1, n):
        denom = diag[:, i] - lower[:, i] * c[:, i - 1]
        if i < n - 1:
            c[:, i] = upper[:, i] / denom
        d[:, i] = (rhs[:, i] - lower[:, i] * d[:, i - 1]) / denom
    x = np.empty_like(d)
    x[:, -1] = d[:, -1]
    for i in range(n - 2, -1, -1):
        x[:, i] = d[:, i] - c[:, i] * x[:, i + 1]
    return x


def elliptic_solve(lam, h, config=EllipticConfig()):
    """Nodal interpolant at ``config.qoi_location`` of the P1 solution on a uniform mesh.

    Element stiffness uses the diffusion coefficient at the cell midpoint.
    """
    x = np.asarray(lam, dtype=float)
    single = x.ndim == 1
    x = x.reshape(-1, config.kl_terms)
    cells = _mesh_cells(h)
    h = 1.0 / cells
    mid = (np.arange(cells) + 0.5) * h
    k = diffusion(mid, x, config) / h  # (n, cells)
    off = -k[:, 1:-1]
    lower = np.concatenate([np.zeros((x.shape[0], 1)), off], axis=1)
    upper = np.concatenate([off, np.zeros((x.shape[0], 1))], axis=1)
    rhs = np.full((x.shape[0], cells - 1), h)
    u = _thomas(lower, k[:, :-1] + k[:, 1:], upper, rhs)
    u = np.pad(u, ((0, 0), (1, 1)))
    pos = config.qoi_location * cells
    left = min(int(math.floor(pos)), cells - 1)
    t = pos - left
    out = (1 - t) * u[:, left] + t * u[:, left + 1]
    if not np.all(np.isfinite(out)):
        raise DivergenceError("elliptic solve produced non-finite values",
                              indices=np.nonzero(~np.isfinite(out))[0].tolist())
    return float(out[0]) if single else out


# ---------------------------------------------------------------- Richardson

def richardson_extrapolate(pairs, order):
    """Richardson extrapolation from ``[(h, value), ...]`` with strictly decreasing h.

    With ``n`` pairs the values are modelled as
    ``Q + sum_{s=1}^{n-1} C_s h^(order + s - 1)`` and ``Q`` is returned, i.e.
    each added pair removes the next power of ``h``. For a geometric sequence
    of step sizes this is the classical Richardson tableau. ``value`` may be
    an array (one entry per sample).
    """
    if len(pairs) < 2:
        raise InvalidArgumentError("Richardson extrapolation needs at least two (h, value) pairs")
    hs = np.array([float(h) for h, _ in pairs])
    if np.any(hs <= 0) or np.any(np.diff(hs) >= 0):
        raise InvalidArgumentError("step sizes must be positive and strictly decreasing")
    if not order > 0:
        raise InvalidArgumentError("order must be positive")
    vals = np.array([np.asarray(v, dtype=float) for _, v in pairs])
    n = len(pairs)
    x = hs / hs[0]
    A = np.column_stack([np.ones(n)] + [x ** (order + s) for s in range(n - 1)])
    coef = np.linalg.solve(A, vals.reshape(n, -1))
    out = coef[0].reshape(vals.shape[1:])
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- model specs

@dataclass(frozen=True)
class Fidelity:
    """Discretisation knobs. ``None`` means "not used" (exact in that direction)."""

    level: int = None
    dt: float = None
    h: float = None

    def tag(self):
        parts = []
        if self.level is not None:
            parts.append(f"level={self.level}")
        if self.dt is not None:
            parts.append(f"dt={self.dt:.17g}")
        if self.h is not None:
            parts.append(f"h={self.h:.17g}")
        return ";".join(parts) or "exact"

    @classmethod
    def parse(cls, obj):
        if obj is None or obj == "exact":
            return cls()
        if isinstance(obj, Fidelity):
            return obj
        if isinstance(obj, str):
            kv = dict(p.split("=") for p in obj.split(";") if p)
            obj = kv
        extra = set(obj) - {"level", "dt", "h"}
        if extra:
            raise ConfigError(f"unknown fidelity keys {sorted(extra)}")
        level = obj.get("level")
        dt = obj.get("dt")
        h = obj.get("h")
        return cls(
            None if level is None else int(level),
            None if dt is None else _number(dt),
            None if h is None else _number(h),
        )


def _number(v):
    """Float from a number or a string such as ``"1/160"``."""
    if isinstance(v, str) and "/" in v:
        a, b = v.split("/")
        return float(a) / float(b)
    return float(v)


@dataclass(frozen=True, eq=False)
class ForwardModel:
    """A named parameter-to-QoI map over the box ``[lower, upper]`` (unbounded for elliptic1d).

    ``evaluate(lam, fidelity)`` is a pure function. Sparse-grid fidelities build
    (and cache) a surrogate of the underlying discretised model on the unit
    cube, mapped affinely onto the parameter box.
    """

    name: str
    dim: int
    lower: tuple = None
    upper: tuple = None
    lv: LvConfig = None
    elliptic: EllipticConfig = None
    surrogate: object = None
    growth: str = "restricted"
    reference_dts: tuple = (0.1, 0.05, 0.025, 0.0125, 0.00625)
    reference_h: float = 1.0 / 1280
    _cache: dict = field(default_factory=dict, repr=False)

    def check_fidelity(self, fid):
        allowed = {
            "peaks": {"level"},
            "identity": set(),
            "lotka_volterra": {"level", "dt"},
            "elliptic1d": {"h"},
            "surrogate": set(),
        }[self.name]
        used = {k for k in ("level", "dt", "h") if getattr(fid, k) is not None}
        if used - allowed:
            raise ConfigError(f"model {self.name} does not accept fidelity {fid.tag()}")
        if self.name == "lotka_volterra" and fid.dt is None and fid.level is not None:
            raise ConfigError("lotka_volterra sparse-grid fidelity needs a time step dt")

    def _to_unit(self, lam):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return (lam - lo) / (hi - lo)

    def _from_unit(self, u):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return lo + u * (hi - lo)

    def _discrete(self, lam, fid):
        if self.name == "peaks":
            return peaks_qoi(lam)
        if self.name == "identity":
            return lam[:, 0].copy()
        if self.name == "lotka_volterra":
            if fid.dt is None:
                return self.lv_reference(lam)
            return lv_solve(lam, fid.dt, self.lv)
        if self.name == "elliptic1d":
            return elliptic_solve(lam, self.reference_h if fid.h is None else fid.h, self.elliptic)
        from .sparsegrid import eval_surrogate
        return eval_surrogate(self.surrogate, lam)

    def lv_reference(self, lam):
        """Per-sample Richardson limit of Euler runs over ``reference_dts`` (order 1)."""
        pairs = [(dt, lv_solve(lam, dt, self.lv)) for dt in self.reference_dts]
        return richardson_extrapolate(pairs, 1.0)

    def surrogate_for(self, fid):
        from .sparsegrid import surrogate_from_function
        key = (fid.level, fid.dt, self.growth)
        if key not in self._cache:
            inner = Fidelity(None, fid.dt, fid.h)
            self._cache[key] = surrogate_from_function(
                lambda u: self._discrete(self._from_unit(u), inner), self.dim, fid.level, self.growth
            )
        return self._cache[key]

    def evaluate(self, lam, fidelity=None):
        fid = Fidelity.parse(fidelity)
        self.check_fidelity(fid)
        lam = np.asarray(lam, dtype=float).reshape(-1, self.dim)
        if fid.level is not None:
            from .sparsegrid import eval_surrogate
            return eval_surrogate(self.surrogate_for(fid), self._to_unit(lam))
        return np.asarray(self._discrete(lam, fid), dtype=float)

    def reference(self, lam):
        """High-fidelity values used as ground truth (same as the ``exact`` fidelity).

        peaks/identity: the closed form; lotka_volterra: Richardson limit of
        Euler runs; elliptic1d: the ``reference_h`` mesh.
        """
        return self.evaluate(lam, Fidelity())

    def metadata(self):
        meta = {"dim": self.dim, "growth": self.growth}
        if self.lower is not None:
            meta["lower"] = list(self.lower)
            meta["upper"] = list(self.upper)
        if self.lv is not None:
            meta.update(
                lv_alpha_diag=list(self.lv.alpha_diag),
                lv_u0=list(self.lv.u0),
                lv_final_time=self.lv.final_time,
                lv_qoi_index=self.lv.qoi_index,
                lv_reference_dts=list(self.reference_dts),
            )
        if self.elliptic is not None:
            meta.update(
                elliptic_kl_terms=self.elliptic.kl_terms,
                elliptic_eta=list(self.elliptic.eta),
                elliptic_mean_log=self.elliptic.mean_log,
                elliptic_qoi_location=self.elliptic.qoi_location,
                elliptic_reference_h=self.reference_h,
            )
        return meta


def make_model(name, growth="restricted", **constants):
    """Construct a model from the zoo by name (``"surrogate:<path>"`` loads a CSV surrogate)."""
    allowed = {
        "lotka_volterra": set(LvConfig.__dataclass_fields__) | {"reference_dts"},
        "elliptic1d": set(EllipticConfig.__dataclass_fields__) | {"reference_h"},
    }.get(name, set())
    unknown = sorted(set(constants) - allowed)
    if unknown:
        raise ConfigError(f"unknown constants for model {name!r}: {', '.join(unknown)}")
    if name == "peaks":
        return ForwardModel("peaks", 2, (0.0, 0.0), (1.0, 1.0), growth=growth)
    if name == "identity":
        return ForwardModel("identity", 1, growth=growth)
    if name == "lotka_volterra":
        lv = LvConfig(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in constants.items()
                         if k in LvConfig.__dataclass_fields__})
        kw = {}
        if "reference_dts" in constants:
            kw["reference_dts"] = tuple(_number(v) for v in constants["reference_dts"])
        lo, hi = lv.bounds
        return ForwardModel("lotka_volterra", 9, (lo,) * 9, (hi,) * 9, lv=lv, growth=growth, **kw)
    if name == "elliptic1d":
        ec = EllipticConfig(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in constants.items()
                               if k in EllipticConfig.__dataclass_fields__})
        kw = {}
        if "reference_h" in constants:
            kw["reference_h"] = _number(constants["reference_h"])
        return ForwardModel("elliptic1d", ec.kl_terms, elliptic=ec, growth=growth, **kw)
    if name.startswith("surrogate:"):
        from .sparsegrid import load_csv
        s = load_csv(name.split(":", 1)[1])
        return ForwardModel(name.split(":")[0], s.dim, (0.0,) * s.dim, (1.0,) * s.dim,
                            surrogate=s, growth=s.growth)
    raise ConfigError(f"unknown model {name!r}")
