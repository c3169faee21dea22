"""Lie brackets of vector fields and the parabolic Hörmander rank test.

Bracket expressions are trees: an int ``i`` stands for ``V_i`` and a tuple
``(left, right)`` for ``[left, right]``. ``[V, W](x) = DW(x) V(x) - DV(x) W(x)``.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ResourceError, ValidationError
from .diffusion import central_jacobian, default_fd_step

DEFAULT_BUDGET = 100_000


def lie_bracket(V, W, x, jac_V=None, jac_W=None, h=None):
    """``DW(x) V(x) - DV(x) W(x)``; missing Jacobians use central differences."""
    x = np.asarray(x, dtype=float)
    JV = jac_V(x) if jac_V is not None else central_jacobian(V, x, h)
    JW = jac_W(x) if jac_W is not None else central_jacobian(W, x, h)
    v, w = V(x), W(x)
    return np.einsum("...ab,...b->...a", JW, v) - np.einsum("...ab,...b->...a", JV, w)


def expr_str(e):
    if isinstance(e, int):
        return f"V{e}"
    return f"[{expr_str(e[0])},{expr_str(e[1])}]"


def expr_depth(e):
    return 0 if isinstance(e, int) else 1 + max(expr_depth(e[0]), expr_depth(e[1]))


@dataclass
class BracketTable:
    """Levels W^0..W^k0 of bracket trees over a field set.

    W^0 = {V_1..V_d}; W^{k+1} = {[V_i, w] : i = 0..d, w in W^k}. Trees are
    deduplicated by exact structural equality only.
    """

    fields: object
    k0: int
    levels: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        d = self.fields.d
        lvl = list(range(1, d + 1))
        self.levels = [lvl]
        seen = set(lvl)
        for _ in range(self.k0):
            nxt = []
            for w in lvl:
                for i in range(d + 1):
                    e = (i, w)
                    if e not in seen:
                        seen.add(e)
                        nxt.append(e)
            self.levels.append(nxt)
            lvl = nxt

    def field_fn(self, e):
        """Callable y -> value of the bracket expression e."""
        fs = self.fields
        if isinstance(e, int):
            return lambda y: fs.V(e, y)
        return lambda y: self._eval(e, y)[0]

    def jac_fn(self, e):
        fs = self.fields
        if isinstance(e, int):
            return lambda y: fs.DV(e, y)
        return lambda y: self._eval(e, y)[1]

    def _eval(self, e, y):
        """Value and Jacobian of a bracket tree at y (Jacobian by central differences)."""
        left, right = e
        fL, fR = self.field_fn(left), self.field_fn(right)
        jL, jR = self.jac_fn(left), self.jac_fn(right)

        def value(z):
            return np.einsum("...ab,...b->...a", jR(z), fL(z)) - np.einsum(
                "...ab,...b->...a", jL(z), fR(z)
            )

        # step grows with depth to keep nested differences above rounding
        h = default_fd_step(y) * 10.0 ** (expr_depth(e) - 1) * 10.0
        return value(y), central_jacobian(value, y, h)

    def evaluate(self, x):
        """Dict expression -> value at the point x (cached per point)."""
        key = tuple(np.asarray(x, dtype=float).ravel())
        if key not in self._cache:
            self._cache[key] = {
                e: np.asarray(self.field_fn(e)(np.asarray(x, dtype=float)))
                for lvl in self.levels for e in lvl
            }
        return self._cache[key]


def bracket_value(fields, e, x):
    """Value of one bracket expression at x."""
    table = BracketTable(fields, 0)
    return np.asarray(table.field_fn(e)(np.asarray(x, dtype=float)))


def bracket_jacobian(fields, e, x):
    table = BracketTable(fields, 0)
    return np.asarray(table.jac_fn(e)(np.asarray(x, dtype=float)))


@dataclass
class HormanderReport:
    rank_by_level: list
    satisfied_at: object
    singular_values: list
    n_brackets: int


def hormander_rank(fields, x, k0, svd_tol=1e-8, budget=DEFAULT_BUDGET):
    """Numerical rank of span(W^0 u ... u W^k)(x) for k = 0..k0."""
    if k0 < 0:
        raise ValidationError("k0 must be nonnegative")
    d = fields.d
    count = (d + 1) ** k0 * d
    if count > budget:
        raise ResourceError(f"bracket count (d+1)^k0*d = {count} exceeds budget {budget}")
    table = BracketTable(fields, k0)
    vals = table.evaluate(x)
    cols = []
    ranks, svals = [], []
    satisfied = None
    for k, lvl in enumerate(table.levels):
        cols.extend(vals[e] for e in lvl)
        mat = np.stack(cols, axis=1)
        s = np.linalg.svd(mat, compute_uv=False)
        smax = float(s.max()) if s.size else 0.0
        r = int((s > svd_tol * smax).sum()) if smax > 0 else 0
        ranks.append(r)
        svals.append(s.tolist())
        if satisfied is None and r == fields.m:
            satisfied = k
    return HormanderReport(ranks, satisfied, svals, len(cols))
