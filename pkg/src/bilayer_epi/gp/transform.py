"""Logarithmic change of variables: posynomials become log-sum-exp of affine maps.

With ``y = log x`` a posynomial ``sum_k c_k prod_j x_j^{a_kj}`` turns into
``F(y) = log sum_k exp(a_k . y + log c_k)``, which is convex. Monomial
equalities become affine equations ``a . y + log c = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .expr import GeometricProgram, Posynomial, as_posynomial


class StackedLSE:
    """A batch of log-sum-exp functions sharing one term matrix.

    Terms of function ``i`` occupy rows ``starts[i]:starts[i+1]`` of ``A``.
    """

    def __init__(self, A: sp.csr_matrix, b: np.ndarray, starts: np.ndarray):
        self.A = sp.csr_matrix(A)
        self.b = np.asarray(b, dtype=float)
        self.starts = np.asarray(starts, dtype=np.int64)
        self.m = len(self.starts)
        counts = np.diff(np.append(self.starts, self.A.shape[0]))
        if (counts <= 0).any():
            raise ValueError("every function needs at least one term")
        self.group = np.repeat(np.arange(self.m), counts)
        self.indicator = sp.csr_matrix(
            (np.ones(len(self.group)), (self.group, np.arange(len(self.group)))),
            shape=(self.m, len(self.group)),
        )

    @property
    def nvar(self) -> int:
        return self.A.shape[1]

    def _parts(self, y):
        z = self.A @ y + self.b
        zmax = np.maximum.reduceat(z, self.starts)
        e = np.exp(z - zmax[self.group])
        s = np.add.reduceat(e, self.starts)
        return zmax, e, s

    def values(self, y: np.ndarray) -> np.ndarray:
        zmax, _, s = self._parts(y)
        return zmax + np.log(s)

    def evaluate(self, y: np.ndarray):
        """Values, per-term softmax weights and gradients (sparse, one row per function)."""
        zmax, e, s = self._parts(y)
        w = e / s[self.group]
        grads = self.indicator @ sp.diags(w) @ self.A
        return zmax + np.log(s), w, sp.csr_matrix(grads)

    def hessians_weighted(self, y: np.ndarray, coef: np.ndarray) -> np.ndarray:
        """Dense ``sum_i coef_i * hess F_i(y)``."""
        _, w, g = self.evaluate(y)
        return self._weighted(w, g, coef, np.zeros_like(coef))

    def _weighted(self, w, g, coef, outer):
        """``sum_i coef_i hess F_i + outer_i g_i g_i^T`` using hess F_i = A_i^T W_i A_i - g_i g_i^T."""
        d = coef[self.group] * w
        h = (self.A.T @ sp.diags(d) @ self.A) + (g.T @ sp.diags(outer - coef) @ g)
        return h.toarray() if sp.issparse(h) else np.asarray(h)


def _stack(posys: list[Posynomial], index: dict[str, int]) -> StackedLSE:
    rows, cols, vals, b, starts = [], [], [], [], []
    r = 0
    for p in posys:
        starts.append(r)
        for t in p.terms:
            for k, e in t.exponents.items():
                rows.append(r)
                cols.append(index[k])
                vals.append(e)
            b.append(np.log(t.coefficient))
            r += 1
    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, len(index)))
    return StackedLSE(A, np.array(b), np.array(starts, dtype=np.int64))


@dataclass
class ConvexProgram:
    """minimize F0(y) s.t. F_i(y) <= 0, E y = h, with F log-sum-exp."""

    variables: list[str]
    objective: StackedLSE
    constraints: StackedLSE | None
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray

    def objective_value(self, y):
        return float(self.objective.values(y)[0])

    def objective_grad(self, y):
        return self.objective.evaluate(y)[2].toarray()[0]

    def objective_hess(self, y):
        return self.objective.hessians_weighted(y, np.ones(1))

    def constraint_values(self, y):
        if self.constraints is None:
            return np.empty(0)
        return self.constraints.values(y)

    def constraint_grads(self, y) -> np.ndarray:
        if self.constraints is None:
            return np.empty((0, len(self.variables)))
        return self.constraints.evaluate(y)[2].toarray()

    def constraint_hess(self, y, i: int) -> np.ndarray:
        coef = np.zeros(self.constraints.m)
        coef[i] = 1.0
        return self.constraints.hessians_weighted(y, coef)

    def to_log(self, point: dict[str, float]) -> np.ndarray:
        return np.log([point[v] for v in self.variables])


def log_transform(gp: GeometricProgram) -> ConvexProgram:
    """Compile a GP into its convex log-space form (upper bounds included as constraints)."""
    index = {v: k for k, v in enumerate(gp.variables)}
    obj = _stack([as_posynomial(gp.objective)], index)
    cons = gp.all_constraints()
    stacked = _stack(cons, index) if cons else None
    E = np.zeros((len(gp.equalities), len(index)))
    h = np.zeros(len(gp.equalities))
    for r, mono in enumerate(gp.equalities):
        for k, e in mono.exponents.items():
            E[r, index[k]] = e
        h[r] = -np.log(mono.coefficient)
    return ConvexProgram(list(gp.variables), obj, stacked, E, h)
