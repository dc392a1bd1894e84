"""SDP problem and solution containers, with a JSON debug dump"""
import enum
import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from common.errors import DimensionMismatch, FormatError

SYMMETRY_TOL = 1e-9


class SdpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


def transpose_permutation(d: int) -> np.ndarray:
    """Column permutation mapping vec(M) to vec(M^T) for d x d matrices"""
    return np.arange(d * d).reshape(d, d).T.ravel()


def _constraint_rows(mats, d: int, what: str) -> sparse.csr_matrix:
    """
    Constraint matrices as the rows of a sparse (m, d*d) matrix.

    Accepts a sequence of d x d arrays, an (m, d, d) stack or a sparse matrix
    whose rows are already flattened. Rows are checked for symmetry and
    symmetrized.
    """
    if mats is None:
        return sparse.csr_matrix((0, d * d))
    if sparse.issparse(mats):
        rows = sparse.csr_matrix(mats, dtype=np.float64)
        if rows.shape[1] != d * d:
            raise DimensionMismatch(f"{what} rows must have {d * d} columns, got {rows.shape[1]}")
    else:
        arr = np.array(mats, dtype=np.float64)
        if arr.size == 0:
            return sparse.csr_matrix((0, d * d))
        if arr.ndim != 3 or arr.shape[1:] != (d, d):
            raise DimensionMismatch(f"{what} matrices must be {d}x{d}, got shape {arr.shape}")
        rows = sparse.csr_matrix(arr.reshape(arr.shape[0], d * d))
    if rows.shape[0] == 0:
        return rows
    mirrored = rows[:, transpose_permutation(d)]
    asym = abs(rows - mirrored).max(axis=1).toarray().ravel()
    scale = np.maximum(1.0, abs(rows).max(axis=1).toarray().ravel())
    if np.any(asym > SYMMETRY_TOL * scale):
        raise ValueError(f"{what} matrices must be symmetric")
    rows = ((rows + mirrored) * 0.5).tocsr()
    rows.eliminate_zeros()
    return rows


@dataclass(frozen=True)
class SdpProblem:
    """
    maximize <C, X>
    subject to <A_i, X> = b_i, <G_j, X> <= h_j, X PSD of size dim

    ``eq_a`` and ``ineq_g`` hold the flattened A_i and G_j as rows of sparse
    (m, dim*dim) matrices; ``eq_matrices`` and ``ineq_matrices`` give dense
    stacks.
    """
    dim: int
    c: np.ndarray
    eq_a: sparse.csr_matrix = None
    eq_b: np.ndarray = None
    ineq_g: sparse.csr_matrix = None
    ineq_h: np.ndarray = None

    def __post_init__(self):
        d = int(self.dim)
        if d < 1:
            raise ValueError(f"dim must be at least 1, got {d}")
        c = np.array(self.c, dtype=np.float64)
        if c.shape != (d, d):
            raise DimensionMismatch(f"objective must be {d}x{d}, got {c.shape}")
        if np.max(np.abs(c - c.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(c), initial=0.0)):
            raise ValueError("objective matrix must be symmetric")
        c = 0.5 * (c + c.T)
        c.setflags(write=False)
        eq_a = _constraint_rows(self.eq_a, d, "equality")
        ineq_g = _constraint_rows(self.ineq_g, d, "inequality")
        eq_b = np.array([] if self.eq_b is None else self.eq_b, dtype=np.float64).reshape(-1)
        ineq_h = np.array([] if self.ineq_h is None else self.ineq_h, dtype=np.float64).reshape(-1)
        if eq_b.size != eq_a.shape[0] or ineq_h.size != ineq_g.shape[0]:
            raise DimensionMismatch("every constraint matrix needs exactly one right-hand side")
        for arr in (eq_b, ineq_h):
            arr.setflags(write=False)
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "eq_a", eq_a)
        object.__setattr__(self, "eq_b", eq_b)
        object.__setattr__(self, "ineq_g", ineq_g)
        object.__setattr__(self, "ineq_h", ineq_h)

    @classmethod
    def from_constraints(cls, c, equalities: Sequence[Tuple[np.ndarray, float]] = (),
                         inequalities: Sequence[Tuple[np.ndarray, float]] = ()) -> "SdpProblem":
        c = np.asarray(c, dtype=np.float64)
        d = c.shape[0]
        return cls(d, c, [a for a, _ in equalities], [b for _, b in equalities],
                   [g for g, _ in inequalities], [h for _, h in inequalities])

    @property
    def num_equalities(self) -> int:
        return self.eq_b.size

    @property
    def num_inequalities(self) -> int:
        return self.ineq_h.size

    def eq_matrices(self) -> np.ndarray:
        return self.eq_a.toarray().reshape(-1, self.dim, self.dim)

    def ineq_matrices(self) -> np.ndarray:
        return self.ineq_g.toarray().reshape(-1, self.dim, self.dim)

    def combine(self, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        """sum y_i A_i + sum w_j G_j as a dense symmetric matrix"""
        s = (self.eq_a.T @ np.asarray(y, dtype=np.float64)
             + self.ineq_g.T @ np.asarray(w, dtype=np.float64)).reshape(self.dim, self.dim)
        return 0.5 * (s + s.T)

    def objective(self, x: np.ndarray) -> float:
        return float(np.sum(self.c * x))

    def residuals(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(<A_i,X> - b_i, max(<G_j,X> - h_j, 0))"""
        v = np.asarray(x, dtype=np.float64).ravel()
        eq = self.eq_a @ v - self.eq_b
        ineq = np.maximum(self.ineq_g @ v - self.ineq_h, 0.0)
        return eq, ineq

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "C": self.c.tolist(),
            "equalities": [{"A": a.tolist(), "b": float(b)} for a, b in zip(self.eq_matrices(), self.eq_b)],
            "inequalities": [{"G": g.tolist(), "h": float(h)}
                             for g, h in zip(self.ineq_matrices(), self.ineq_h)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SdpProblem":
        try:
            return cls.from_constraints(np.asarray(data["C"]),
                                        [(np.asarray(e["A"]), e["b"]) for e in data.get("equalities", [])],
                                        [(np.asarray(e["G"]), e["h"]) for e in data.get("inequalities", [])])
        except KeyError as e:
            raise FormatError(f"SDP JSON is missing field {e}") from e

    def to_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_json(cls, path: str) -> "SdpProblem":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class InfeasibilityCertificate:
    """
    Farkas ray: y free, w >= 0 with S = sum y_i A_i + sum w_j G_j PSD and
    b^T y + h^T w = -1, so no PSD X meets the constraints.
    """
    y: np.ndarray
    w: np.ndarray
    s: np.ndarray


@dataclass(frozen=True)
class SdpSolution:
    status: SdpStatus
    x: Optional[np.ndarray]
    objective_value: float
    duality_gap: float
    primal_value: float = float("nan")
    dual_value: float = float("nan")
    iterations: int = 0
    certificate: Optional[InfeasibilityCertificate] = None
    history: List[dict] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == SdpStatus.OPTIMAL
