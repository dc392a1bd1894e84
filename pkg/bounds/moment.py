"""
Second-order moment relaxation of a QCQP.

The moment matrix is indexed by every monomial of degree <= 2 in s, so for
the 12 pose variables it is 91 x 91. Entry (a, b) stands for the moment of
basis[a] * basis[b]; entries standing for the same monomial are tied by
equality rows.
"""
import itertools
import logging
from typing import Dict, List, Tuple

import numpy as np
from scipy import sparse

from bounds.qcqp import Qcqp, Quadratic, shor_relax
from sdp import SdpProblem

logger = logging.getLogger(__name__)

Monomial = Tuple[int, ...]
Polynomial = Dict[Monomial, float]

ZERO_COEF = 1e-14


def monomial_basis(n: int, degree: int = 2) -> List[Monomial]:
    """Monomials of degree <= ``degree`` as sorted index tuples, graded; () is the constant"""
    basis = []
    for deg in range(degree + 1):
        basis.extend(itertools.combinations_with_replacement(range(n), deg))
    return basis


def quadratic_terms(quad: Quadratic) -> Polynomial:
    """s^T Q s + 2 q^T s + r as {monomial: coefficient}"""
    q_mat, q_lin, q_const = quad
    n = q_lin.size
    terms: Polynomial = {}
    if abs(q_const) > ZERO_COEF:
        terms[()] = float(q_const)
    for i in range(n):
        if abs(q_lin[i]) > ZERO_COEF:
            terms[(i,)] = 2.0 * float(q_lin[i])
        if abs(q_mat[i, i]) > ZERO_COEF:
            terms[(i, i)] = float(q_mat[i, i])
        for j in range(i + 1, n):
            coef = float(q_mat[i, j] + q_mat[j, i])
            if abs(coef) > ZERO_COEF:
                terms[(i, j)] = coef
    return terms


def multiply(p1: Polynomial, p2: Polynomial) -> Polynomial:
    out: Polynomial = {}
    for (m1, c1), (m2, c2) in itertools.product(p1.items(), p2.items()):
        mono = tuple(sorted(m1 + m2))
        out[mono] = out.get(mono, 0.0) + c1 * c2
    return {m: c for m, c in out.items() if abs(c) > ZERO_COEF}


class _MomentIndex:
    """Maps monomials of degree <= 4 to their canonical moment-matrix entry"""

    def __init__(self, n: int):
        self.basis = monomial_basis(n, 2)
        self.dim = len(self.basis)
        self.canon: Dict[Monomial, Tuple[int, int]] = {}
        self.duplicates: List[Tuple[int, int, int, int]] = []
        for a in range(self.dim):
            for b in range(a, self.dim):
                mono = tuple(sorted(self.basis[a] + self.basis[b]))
                first = self.canon.setdefault(mono, (a, b))
                if first != (a, b):
                    self.duplicates.append((a, b, *first))

    def entries(self, a: int, b: int, coef: float):
        """Flat positions and values of coef * E_ab, symmetrized"""
        d = self.dim
        if a == b:
            return [(a * d + a, coef)]
        return [(a * d + b, 0.5 * coef), (b * d + a, 0.5 * coef)]

    def poly_entries(self, poly: Polynomial):
        out = []
        for mono, coef in poly.items():
            out.extend(self.entries(*self.canon[mono], coef))
        return out


class _RowBuilder:
    def __init__(self, width: int):
        self.width = width
        self.rows, self.cols, self.vals = [], [], []
        self.count = 0

    def add(self, entries):
        for col, val in entries:
            self.rows.append(self.count)
            self.cols.append(col)
            self.vals.append(val)
        self.count += 1

    def matrix(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.count, self.width))


def moment_relax(qcqp: Qcqp) -> SdpProblem:
    """
    Relaxation over the moment matrix X of the degree-2 monomials, X PSD, X_00 = 1.

    Equalities h = 0 are localized against every basis monomial. Inequalities
    g <= 0 give g <= 0, g s_i^2 <= 0 and g_j g_k >= 0 for j < k. As in
    ``shor_relax`` the objective constant is left out.
    """
    index = _MomentIndex(qcqp.num_vars)
    d = index.dim
    eq_rows = _RowBuilder(d * d)
    eq_rows.add(index.entries(0, 0, 1.0))
    for a, b, p, q in index.duplicates:
        eq_rows.add(index.entries(a, b, 1.0) + index.entries(p, q, -1.0))
    for h in qcqp.equalities:
        h_poly = quadratic_terms(h)
        for mono in index.basis:
            eq_rows.add(index.poly_entries(multiply(h_poly, {mono: 1.0})))
    eq_b = np.zeros(eq_rows.count)
    eq_b[0] = 1.0

    ineq_rows = _RowBuilder(d * d)
    g_polys = [quadratic_terms(g) for g in qcqp.inequalities]
    for g_poly in g_polys:
        ineq_rows.add(index.poly_entries(g_poly))
        for i in range(qcqp.num_vars):
            ineq_rows.add(index.poly_entries(multiply(g_poly, {(i, i): 1.0})))
    for j, k in itertools.combinations(range(len(g_polys)), 2):
        product = multiply(g_polys[j], g_polys[k])
        ineq_rows.add(index.poly_entries({m: -c for m, c in product.items()}))

    objective = {m: c for m, c in quadratic_terms(qcqp.objective).items() if m}
    c = np.zeros(d * d)
    for col, val in index.poly_entries(objective):
        c[col] += val
    logger.debug(f"Moment relaxation of size {d} with {eq_rows.count} equalities "
                 f"and {ineq_rows.count} inequalities")
    return SdpProblem(d, c.reshape(d, d), eq_rows.matrix(), eq_b, ineq_rows.matrix(), np.zeros(ineq_rows.count))


def moment_lift(s: np.ndarray) -> np.ndarray:
    """v v^T with v the degree-2 monomial vector of s"""
    s = np.asarray(s, dtype=np.float64)
    v = np.array([np.prod(s[list(mono)]) for mono in monomial_basis(s.size, 2)])
    return np.outer(v, v)


def relax(qcqp: Qcqp, order: int = 1) -> SdpProblem:
    if order == 1:
        return shor_relax(qcqp)
    if order == 2:
        return moment_relax(qcqp)
    raise ValueError(f"relaxation order must be 1 or 2, got {order}")
