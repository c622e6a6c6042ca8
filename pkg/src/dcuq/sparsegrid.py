"""Isotropic Smolyak interpolation on nested Clenshaw-Curtis nodes in [0, 1]^k.

Clenshaw-Curtis rule ``j`` is the midpoint for ``j = 0`` and the ``2**j + 1``
Chebyshev extrema mapped to [0, 1] otherwise. A 1D sparse-grid level ``l`` is
mapped to a rule by a growth rule:

``"restricted"`` (default)
    smallest rule with at least ``2 l + 1`` points (1, 3, 5, 9, 9, 17, ...).
``"exponential"``
    rule ``l`` itself (1, 3, 5, 9, 17, 33, ...).

A level-``n`` surrogate is

    sum over n-k+1 <= |l|_1 <= n of (-1)^(n-|l|) C(k-1, n-|l|) * (tensor interpolant on grid l)

Points are identified by integer coordinates on the finest 1D rule that can
appear, so nested nodes deduplicate exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
import csv
import io
import math

import numpy as np

from .errors import CoverageError, DomainError, InvalidArgumentError

DOMAIN_TOL = 1e-12
_EVAL_CHUNK = 2048
GROWTH_RULES = ("restricted", "exponential")
DEFAULT_GROWTH = "restricted"


def rule_index(level, growth=DEFAULT_GROWTH):
    """Clenshaw-Curtis rule used for a 1D sparse-grid level."""
    if growth == "exponential" or level == 0:
        return level
    if growth != "restricted":
        raise InvalidArgumentError(f"unknown growth rule {growth!r}")
    return max(1, (2 * level - 1).bit_length())


def num_nodes(level):
    return 1 if level == 0 else 2**level + 1


@lru_cache(maxsize=None)
def _nodes(level):
    if level == 0:
        x = np.array([0.5])
    else:
        p = num_nodes(level)
        x = 0.5 * (1.0 - np.cos(np.pi * np.arange(p) / (p - 1)))
        # exact symmetry and endpoints
        x[0], x[-1] = 0.0, 1.0
        if p % 2:
            x[p // 2] = 0.5
    x.setflags(write=False)
    return x


def cc_nodes(level):
    """Clenshaw-Curtis nodes of a level, in increasing order."""
    if level < 0:
        raise InvalidArgumentError("level must be nonnegative")
    return _nodes(int(level)).copy()


@lru_cache(maxsize=None)
def _bary_weights(level):
    p = num_nodes(level)
    w = (-1.0) ** np.arange(p)
    if p > 1:
        w[0] *= 0.5
        w[-1] *= 0.5
    w.setflags(write=False)
    return w


def _node_keys(rule, finest):
    """Integer coordinates of a rule's nodes on the ``finest`` rule."""
    if rule == 0:
        return np.array([2 ** (finest - 1)])
    return np.arange(num_nodes(rule)) * 2 ** (finest - rule)


def _compositions(total, parts):
    """All k-tuples of nonnegative ints summing to ``total``."""
    for bars in combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 1 - prev - 1)
        yield tuple(out)


def combination_terms(dim, level):
    """``[(level_vector, coefficient), ...]`` of the Smolyak formula.

    Terms whose coefficient is zero never occur; terms with equal rules under
    restricted growth are kept (they cancel in the sum).
    """
    if dim < 1 or level < 0:
        raise InvalidArgumentError("need dim >= 1 and level >= 0")
    terms = []
    for total in range(max(0, level - dim + 1), level + 1):
        d = level - total
        coef = (-1) ** d * math.comb(dim - 1, d)
        for lv in _compositions(total, dim):
            terms.append((lv, coef))
    return terms


def _finest(level, growth):
    return max(rule_index(level, growth), 1)


def _grid_keys(rules, finest):
    axes = [_node_keys(j, finest) for j in rules]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _keys_to_points(keys, finest):
    return 0.5 * (1.0 - np.cos(np.pi * np.asarray(keys) / 2**finest))


def _rules(lv, growth):
    return tuple(rule_index(l, growth) for l in lv)


def _point_keys(dim, level, growth):
    finest = _finest(level, growth)
    seen = set()
    ordered = []
    for lv, _ in combination_terms(dim, level):
        for key in map(tuple, _grid_keys(_rules(lv, growth), finest).tolist()):
            if key not in seen:
                seen.add(key)
                ordered.append(key)
    ordered.sort()
    return ordered


def smolyak_points(dim, level, growth=DEFAULT_GROWTH):
    """Deduplicated sparse-grid points as an (N, dim) array, in lexicographic key order."""
    keys = _point_keys(dim, level, growth)
    finest = _finest(level, growth)
    pts = np.empty((len(keys), dim))
    for j, lv_nodes in enumerate(np.array(keys).T if keys else []):
        pts[:, j] = _exact_nodes_from_keys(lv_nodes, finest)
    return pts


def _exact_nodes_from_keys(keys, finest):
    # look up in the finest node table so coordinates equal cc_nodes() bit-for-bit
    return _nodes(finest)[np.asarray(keys, dtype=int)]


def _basis_matrix(rule, x):
    """Lagrange basis values of a 1D rule at points ``x`` (shape (n, P))."""
    if rule == 0:
        return np.ones((x.size, 1))
    nodes = _nodes(rule)
    w = _bary_weights(rule)
    diff = x[:, None] - nodes[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = w / diff
        b = t / t.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if hit.any():
        b[hit] = exact[hit].astype(float)
    return b


@dataclass(frozen=True, eq=False)
class SurrogateModel:
    """A built sparse-grid interpolant.

    Attributes
    ----------
    dim, level : int
    growth : str
    points : ndarray, shape (N, dim)
    values : ndarray, shape (N,)
    combination_terms : list of (level_vector, coefficient)
    """

    dim: int
    level: int
    growth: str
    points: np.ndarray
    values: np.ndarray
    combination_terms: list
    _term_values: list = None

    def __call__(self, x):
        return eval_surrogate(self, x)


def build_surrogate(evaluations, dim, level, growth=DEFAULT_GROWTH):
    """Build a surrogate from point values.

    ``evaluations`` is either a mapping ``{point_tuple: value}`` or a pair
    ``(points, values)`` of arrays. The point set must equal
    ``smolyak_points(dim, level, growth)``.
    """
    expected = smolyak_points(dim, level, growth)
    finest = _finest(level, growth)
    if isinstance(evaluations, dict):
        pts = np.array([tuple(p) for p in evaluations.keys()], dtype=float).reshape(-1, dim)
        vals = np.array(list(evaluations.values()), dtype=float)
    else:
        pts, vals = evaluations
        pts = np.asarray(pts, dtype=float).reshape(-1, dim)
        vals = np.asarray(vals, dtype=float).reshape(-1)
    # map coordinates back to integer keys; nodes are exact table lookups
    table = _nodes(finest)
    idx = np.searchsorted(table, pts)
    idx = np.clip(idx, 0, table.size - 1)
    on_node = table[idx] == pts
    known = {tuple(map(float, p)): i for i, p in enumerate(expected)}
    given = {}
    extra = []
    for p, v, ok in zip(pts, vals, on_node.all(axis=1)):
        key = tuple(map(float, p))
        if not ok or key not in known:
            extra.append(key)
        else:
            given[key] = v
    missing = [k for k in known if k not in given]
    if missing or extra:
        raise CoverageError(missing, extra)
    values = np.array([given[k] for k in known])
    return _assemble(dim, level, growth, expected, values)


def _assemble(dim, level, growth, points, values):
    finest = _finest(level, growth)
    keys = _point_keys(dim, level, growth)
    index = {k: i for i, k in enumerate(keys)}
    terms = combination_terms(dim, level)
    term_values = []
    for lv, _ in terms:
        rules = _rules(lv, growth)
        grid = _grid_keys(rules, finest)
        shape = tuple(num_nodes(j) for j in rules)
        term_values.append(values[[index[tuple(k)] for k in grid.tolist()]].reshape(shape))
    points = np.array(points, dtype=float)
    values = np.array(values, dtype=float)
    points.setflags(write=False)
    values.setflags(write=False)
    return SurrogateModel(dim, level, growth, points, values, terms, term_values)


def surrogate_from_function(func, dim, level, growth=DEFAULT_GROWTH):
    """Evaluate ``func`` (vectorised over rows) on the grid and build the surrogate."""
    pts = smolyak_points(dim, level, growth)
    return _assemble(dim, level, growth, pts, np.asarray(func(pts), dtype=float).reshape(-1))


def _tensor_eval(rules, vals, x):
    active = [d for d, j in enumerate(rules) if j > 0]
    # rule-0 axes have a single node with basis value 1
    t = vals.reshape([num_nodes(j) for j in rules if j > 0] or [1])
    if not active:
        return np.full(x.shape[0], float(t.reshape(-1)[0]))
    out = None
    bases = [_basis_matrix(rules[d], x[:, d]) for d in active]
    # contract the first axis with a matmul, remaining axes pointwise
    first = bases[0] @ t.reshape(t.shape[0], -1)
    first = first.reshape((x.shape[0],) + t.shape[1:])
    for b in bases[1:]:
        first = np.einsum("np,np...->n...", b, first)
    out = first
    return out


def eval_surrogate(model, x):
    """Evaluate at one point (returns float) or at rows of an (n, dim) array."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = arr.reshape(-1, model.dim) if single or arr.ndim == 2 else None
    if pts is None or pts.shape[1] != model.dim:
        raise InvalidArgumentError(f"expected points of dimension {model.dim}")
    if np.any(pts < -DOMAIN_TOL) or np.any(pts > 1 + DOMAIN_TOL) or not np.all(np.isfinite(pts)):
        raise DomainError("surrogate evaluated outside the unit hypercube")
    pts = np.clip(pts, 0.0, 1.0)
    out = np.zeros(pts.shape[0])
    for a in range(0, pts.shape[0], _EVAL_CHUNK):
        chunk = pts[a:a + _EVAL_CHUNK]
        acc = np.zeros(chunk.shape[0])
        for (lv, coef), vals in zip(model.combination_terms, model._term_values):
            acc += coef * _tensor_eval(_rules(lv, model.growth), vals, chunk)
        out[a:a + _EVAL_CHUNK] = acc
    return float(out[0]) if single else out


def to_csv(model):
    """Serialise as CSV text: ``# dim=..,level=..`` header line, then coordinates and value."""
    buf = io.StringIO()
    buf.write(f"# dim={model.dim},level={model.level},growth={model.growth}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j}" for j in range(model.dim)] + ["value"])
    for p, v in zip(model.points, model.values):
        w.writerow([repr(float(c)) for c in p] + [repr(float(v))])
    return buf.getvalue()


def from_csv(text):
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise InvalidArgumentError("surrogate CSV is missing its '# dim=..,level=..' header")
    meta = dict(kv.split("=") for kv in lines[0][1:].strip().split(","))
    dim, level = int(meta["dim"]), int(meta["level"])
    growth = meta.get("growth", DEFAULT_GROWTH)
    rows = list(csv.reader(lines[2:]))
    data = np.array([[float(c) for c in r] for r in rows if r], dtype=float).reshape(-1, dim + 1)
    return build_surrogate((data[:, :dim], data[:, dim]), dim, level, growth)


def save_csv(model, path):
    with open(path, "w", newline="") as fh:
        fh.write(to_csv(model))


def load_csv(path):
    with open(path) as fh:
        return from_csv(fh.read())
