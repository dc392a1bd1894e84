"""
Primal-dual interior point solver for SDPs with a single PSD block and sparse constraint rows.

The user problem

    maximize <C, X>  s.t.  <A_i, X> = b_i,  <G_j, X> <= h_j,  X PSD

is put in standard form over the cone K = S^d_+ x R^p_+, x = (X, s),

    minimize c.x  s.t.  A x = b,

with c = (-C, 0), the inequalities closed by slacks s, and every row
scaled to unit norm. The homogeneous self-dual embedding

    A x - b tau = 0,   A^T y + z - c tau = 0,   c.x - b^T y + kappa = 0

is followed with Nesterov-Todd scaling and Mehrotra predictor-corrector
steps. A limit with tau > 0 is an optimal pair; one with kappa > 0 is an
infeasibility ray.
"""
import logging
from typing import Optional, Tuple

import numpy as np
from scipy import linalg, sparse

from common.errors import CertificateUnavailable
from sdp.problem import InfeasibilityCertificate, SdpProblem, SdpSolution, SdpStatus

logger = logging.getLogger(__name__)

# Schur complement rows are densified in blocks of about this many entries
SCHUR_CHUNK = 4_000_000

# DEFAULT OPTIONS
options = {
    "maxiters": 100,
    "abstol": 1e-8,
    "reltol": 1e-8,
    "feastol": 1e-8,
    "step": 0.98,
    "loosetol": 1e-6,
    "ranktol": 1e-10,
}


def _options(max_iters: Optional[int], tol: Optional[float], overrides: dict) -> dict:
    unknown = set(overrides) - set(options)
    if unknown:
        raise TypeError(f"unknown solver options {sorted(unknown)}")
    opts = dict(options)
    opts.update(overrides)
    if max_iters is not None:
        opts["maxiters"] = max_iters
    if tol is not None:
        opts["abstol"] = opts["reltol"] = opts["feastol"] = tol
    if not isinstance(opts["maxiters"], (int, np.integer)) or opts["maxiters"] < 1:
        raise ValueError("options['maxiters'] must be a positive integer")
    if not 0.0 < opts["step"] <= 1.0:
        raise ValueError("options['step'] must be between 0 and 1")
    for key in ("abstol", "reltol", "feastol", "loosetol", "ranktol"):
        if not opts[key] > 0:
            raise ValueError(f"options['{key}'] must be positive")
    return opts


def _presolve(problem: SdpProblem, ranktol: float) -> Tuple[np.ndarray, Optional[InfeasibilityCertificate]]:
    """
    Drop linearly dependent equality rows (pivoted QR rank test on the
    unit-normalized rows, restricted to the upper triangle). A dependent row
    whose right-hand side disagrees with the combination of independent
    rows makes the problem infeasible; the combination itself is the
    certificate.
    """
    m, d = problem.num_equalities, problem.dim
    if m == 0:
        return np.arange(0), None
    norms = np.sqrt(np.asarray(problem.eq_a.multiply(problem.eq_a).sum(axis=1)).ravel())
    scale = np.where(norms > 0, norms, 1.0)
    upper = np.flatnonzero(np.triu(np.ones((d, d), dtype=bool)).ravel())
    unit = problem.eq_a[:, upper].toarray() / scale[:, None]
    b_unit = problem.eq_b / scale
    _, r, piv = linalg.qr(unit.T, mode="economic", pivoting=True)
    rank = int(np.sum(np.abs(np.diag(r)) > ranktol))
    indep, dep = piv[:rank], piv[rank:]
    if dep.size == 0:
        return np.sort(indep), None
    if rank:
        beta = linalg.solve_triangular(r[:rank, :rank], r[:rank, rank:])
    else:
        beta = np.zeros((0, dep.size))
    mismatch = b_unit[indep] @ beta - b_unit[dep]
    limit = 1e-9 * (1.0 + np.abs(b_unit[dep]) + np.abs(b_unit[indep]) @ np.abs(beta))
    bad = np.flatnonzero(np.abs(mismatch) > limit)
    if bad.size == 0:
        logger.debug(f"Presolve dropped {dep.size} dependent equalities")
        return np.sort(indep), None
    j = bad[np.argmin(dep[bad])]
    y_unit = np.zeros(m)
    y_unit[indep] = beta[:, j]
    y_unit[dep[j]] = -1.0
    y = np.sign(-mismatch[j]) * y_unit / scale / abs(mismatch[j])
    w = np.zeros(problem.num_inequalities)
    logger.info(f"Presolve found inconsistent equality {dep[j]}")
    return np.sort(indep), InfeasibilityCertificate(y, w, problem.combine(y, w))


class _ConeProgram:
    """Standard-form data with unit-norm rows"""

    def __init__(self, problem: SdpProblem, keep: np.ndarray):
        d, p = problem.dim, problem.num_inequalities
        rows = sparse.vstack([problem.eq_a[keep], problem.ineq_g]).tocsr()
        if p:
            slack = sparse.vstack([sparse.csr_matrix((keep.size, p)), sparse.identity(p, format="csr")]).tocsr()
        else:
            slack = sparse.csr_matrix((keep.size, 0))
        rhs = np.concatenate([problem.eq_b[keep], problem.ineq_h])
        self.dim = d
        self.num_eq = keep.size
        self.row_scale = np.sqrt(np.asarray(rows.multiply(rows).sum(axis=1)).ravel()
                                 + np.asarray(slack.multiply(slack).sum(axis=1)).ravel())
        inv_scale = sparse.diags(1.0 / self.row_scale) if rhs.size else sparse.csr_matrix((0, 0))
        self.a = (inv_scale @ rows).tocsr()
        self.a_s = (inv_scale @ slack).tocsr()
        self.b = rhs / self.row_scale
        self.c_scale = max(1.0, float(np.linalg.norm(problem.c)))
        self.c = -problem.c / self.c_scale

    @property
    def m(self) -> int:
        return self.b.size

    def op(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        return self.a @ x.ravel() + self.a_s @ s

    def adj(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return (self.a.T @ y).reshape(self.dim, self.dim), self.a_s.T @ y

    def schur(self, w: np.ndarray, w2: np.ndarray) -> np.ndarray:
        """M_ij = <A_i, W A_j W> + sum_k a_s[i,k] w2_k a_s[j,k], built in row chunks"""
        m, d = self.m, self.dim
        out = np.zeros((m, m))
        chunk = max(1, SCHUR_CHUNK // (d * d))
        for start in range(0, m, chunk):
            block = self.a[start:start + chunk].toarray().reshape(-1, d, d)
            waw = (w @ block @ w).reshape(block.shape[0], d * d)
            out[:, start:start + block.shape[0]] = self.a @ waw.T
        if w2.size:
            out += (self.a_s @ sparse.diags(w2) @ self.a_s.T).toarray()
        return out


def _sym(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.T)


def _nt_scaling(x: np.ndarray, z: np.ndarray):
    """R with R^-1 X R^-T = R^T Z R = diag(lam); W = R R^T satisfies W Z W = X"""
    lx = linalg.cholesky(x, lower=True)
    lz = linalg.cholesky(z, lower=True)
    _, sv, vt = linalg.svd(lz.T @ lx)
    if sv.min() <= 0 or not np.all(np.isfinite(sv)):
        raise linalg.LinAlgError("scaling point is singular")
    root = np.sqrt(sv)
    r = (lx @ vt.T) / root
    rinv = root[:, None] * (vt @ linalg.solve_triangular(lx, np.eye(x.shape[0]), lower=True))
    return r, rinv, sv


def _sdp_step(lam: np.ndarray, dtil: np.ndarray) -> float:
    isq = 1.0 / np.sqrt(lam)
    ev = linalg.eigvalsh(isq[:, None] * _sym(dtil) * isq[None, :])[0]
    return np.inf if ev >= 0 else -1.0 / ev


def _ratio_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    return float(np.min(-v[neg] / dv[neg])) if np.any(neg) else np.inf


class _Newton:
    """Factored Newton system at one iterate"""

    def __init__(self, prog: _ConeProgram, tau: float, kappa: float, w: np.ndarray, w2: np.ndarray):
        self.prog, self.w, self.w2 = prog, w, w2
        self.tau, self.kappa = tau, kappa
        self.cho = linalg.cho_factor(_sym(prog.schur(w, w2))) if prog.m else None
        self.hc = w @ prog.c @ w
        self.u = prog.op(self.hc, np.zeros(prog.a_s.shape[1]))
        self.chc = float(np.sum(prog.c * self.hc))
        self.q = self._solve_m(self.u + prog.b)

    def _solve_m(self, v: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self.cho, v) if self.cho is not None else np.zeros(0)

    def solve(self, qx, qs, r1, r2x, r2s, r3, r5):
        prog = self.prog
        t1x = qx - self.w @ r2x @ self.w
        t1s = qs - self.w2 * r2s
        p = self._solve_m(r1 - prog.op(t1x, t1s))
        ub = self.u - prog.b
        num = r3 - float(np.sum(prog.c * t1x)) - r5 / self.tau - float(ub @ p)
        den = float(ub @ self.q) - self.chc - self.kappa / self.tau
        dtau = num / den
        dy = p + self.q * dtau
        atx, ats = prog.adj(dy)
        dzx = _sym(r2x + prog.c * dtau - atx)
        dzs = r2s - ats
        dxx = _sym(qx - self.w @ dzx @ self.w)
        dxs = qs - self.w2 * dzs
        dkappa = (r5 - self.kappa * dtau) / self.tau
        return dxx, dxs, dy, dzx, dzs, dtau, dkappa


def _certificate(problem: SdpProblem, prog: _ConeProgram, keep: np.ndarray,
                 y_int: np.ndarray) -> Optional[InfeasibilityCertificate]:
    """Map an internal ray (b^T y > 0, A^T y + z = 0) back to the user's constraints"""
    y_scaled = -y_int / prog.row_scale
    y = np.zeros(problem.num_equalities)
    y[keep] = y_scaled[:prog.num_eq]
    w = np.maximum(y_scaled[prog.num_eq:], 0.0)
    value = float(problem.eq_b @ y + problem.ineq_h @ w)
    if not value < 0:
        return None
    y, w = y / -value, w / -value
    return InfeasibilityCertificate(y, w, problem.combine(y, w))


def solve_sdp(problem: SdpProblem, max_iters: Optional[int] = None, tol: Optional[float] = None,
              **overrides) -> SdpSolution:
    """
    Solve ``problem`` to the requested tolerances.

    Args:
        problem: dense SDP in maximization form
        max_iters: iteration limit (options['maxiters'])
        tol: sets abstol, reltol and feastol together
        **overrides: any other key of ``options``

    Returns:
        SdpSolution. For Optimal, objective_value = max(primal, dual) is an
        upper bound on the optimum up to the duality gap; for
        PrimalInfeasible, ``certificate`` holds the Farkas ray.
    """
    opts = _options(max_iters, tol, overrides)
    keep, cert = _presolve(problem, opts["ranktol"])
    if cert is not None:
        return SdpSolution(SdpStatus.PRIMAL_INFEASIBLE, None, -np.inf, np.nan, certificate=cert)

    prog = _ConeProgram(problem, keep)
    d, p = problem.dim, problem.num_inequalities
    x, s = np.eye(d), np.ones(p)
    zx, zs = np.eye(d), np.ones(p)
    y = np.zeros(prog.m)
    tau = kappa = 1.0
    nu = d + p + 1
    bnorm = 1.0 + float(np.linalg.norm(prog.b))
    cnorm = 1.0 + float(np.linalg.norm(prog.c))

    status = SdpStatus.MAX_ITERATIONS
    history = []
    metrics = {}
    it = 0
    for it in range(opts["maxiters"] + 1):
        rp = prog.op(x, s) - prog.b * tau
        atx, ats = prog.adj(y)
        rdx = atx + zx - prog.c * tau
        rds = ats + zs
        cx = float(np.sum(prog.c * x))
        by = float(prog.b @ y)
        rg = cx - by + kappa
        xz = float(np.sum(x * zx) + s @ zs)
        mu = (xz + tau * kappa) / nu
        pobj, dobj = cx / tau, by / tau
        metrics = {
            "iteration": it,
            "pobj": pobj,
            "dobj": dobj,
            "pres": float(np.linalg.norm(rp)) / tau / bnorm,
            "dres": float(np.sqrt(np.sum(rdx**2) + rds @ rds)) / tau / cnorm,
            "gap": xz / tau**2,
            "tau": tau,
            "kappa": kappa,
        }
        metrics["relgap"] = metrics["gap"] / max(1.0, abs(pobj), abs(dobj))
        history.append(metrics)
        logger.debug(f"sdp {it:3d}: pobj {pobj: .8e} dobj {dobj: .8e} pres {metrics['pres']:.1e} "
                     f"dres {metrics['dres']:.1e} gap {metrics['gap']:.1e} tau/kappa {tau / kappa:.1e}")

        if _converged(metrics, opts["feastol"], opts["abstol"], opts["reltol"]):
            status = SdpStatus.OPTIMAL
            break
        ray_d = float(np.sqrt(np.sum((atx + zx) ** 2) + np.sum((ats + zs) ** 2)))
        if by > 0 and tau < kappa and ray_d <= opts["feastol"] * by:
            status = SdpStatus.PRIMAL_INFEASIBLE
            break
        ray_p = float(np.linalg.norm(prog.op(x, s)))
        if cx < 0 and tau < kappa and ray_p <= opts["feastol"] * -cx:
            status = SdpStatus.DUAL_INFEASIBLE
            break
        if it == opts["maxiters"]:
            break

        try:
            with np.errstate(divide="raise", over="raise", invalid="raise"):
                r, rinv, lam = _nt_scaling(x, zx)
                w = r @ r.T
                w2 = s / zs
                newton = _Newton(prog, tau, kappa, w, w2)

                # predictor
                aff = newton.solve(-x, -s, -rp, -rdx, -rds, -rg, -tau * kappa)
                dxx, dxs, _, dzx, dzs, dtau, dkappa = aff
                dxt, dzt = rinv @ dxx @ rinv.T, r.T @ dzx @ r
                alpha = min(1.0, _sdp_step(lam, dxt), _sdp_step(lam, dzt), _ratio_step(s, dxs),
                            _ratio_step(zs, dzs), _ratio_step(np.array([tau, kappa]), np.array([dtau, dkappa])))
                sigma = (1.0 - alpha) ** 3
                eta = 1.0 - sigma

                # corrector
                rhs = sigma * mu * np.eye(d) - np.diag(lam**2) - 0.5 * (dxt @ dzt + dzt @ dxt)
                qx = _sym(r @ (2.0 * rhs / (lam[:, None] + lam[None, :])) @ r.T)
                wl = np.sqrt(w2)
                lam_lp = np.sqrt(s * zs)
                qs = wl * (sigma * mu - lam_lp**2 - (dxs / wl) * (dzs * wl)) / lam_lp
                r5 = sigma * mu - tau * kappa - dtau * dkappa
                dxx, dxs, dy, dzx, dzs, dtau, dkappa = newton.solve(
                    qx, qs, -eta * rp, -eta * rdx, -eta * rds, -eta * rg, r5)
                dxt, dzt = rinv @ dxx @ rinv.T, r.T @ dzx @ r
                alpha = min(1.0, opts["step"] * min(
                    _sdp_step(lam, dxt), _sdp_step(lam, dzt), _ratio_step(s, dxs), _ratio_step(zs, dzs),
                    _ratio_step(np.array([tau, kappa]), np.array([dtau, dkappa]))))
        except (linalg.LinAlgError, FloatingPointError, ValueError) as e:
            logger.warning(f"SDP iteration {it} failed: {str(e)}")
            status = SdpStatus.NUMERICAL_FAILURE
            break

        x = _sym(x + alpha * dxx)
        s = s + alpha * dxs
        y = y + alpha * dy
        zx = _sym(zx + alpha * dzx)
        zs = zs + alpha * dzs
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    if status in (SdpStatus.MAX_ITERATIONS, SdpStatus.NUMERICAL_FAILURE):
        loose = opts["loosetol"]
        if _converged(metrics, loose, loose, loose):
            logger.warning(f"SDP stopped with {status.value}; accepting the iterate at reduced accuracy")
            status = SdpStatus.OPTIMAL

    if status == SdpStatus.PRIMAL_INFEASIBLE:
        cert = _certificate(problem, prog, keep, y)
        logger.info(f"SDP is primal infeasible after {it} iterations")
        return SdpSolution(status, None, -np.inf, np.nan, iterations=it, certificate=cert, history=history)
    if status == SdpStatus.DUAL_INFEASIBLE:
        logger.info(f"SDP is unbounded after {it} iterations")
        return SdpSolution(status, None, np.inf, np.nan, iterations=it, history=history)

    primal = -prog.c_scale * metrics["pobj"]
    dual = -prog.c_scale * metrics["dobj"]
    gap = max(prog.c_scale * metrics["gap"], abs(primal - dual))
    if status != SdpStatus.OPTIMAL:
        logger.warning(f"SDP ended with {status.value} after {it} iterations")
    return SdpSolution(status, x / tau, max(primal, dual), gap, primal, dual, it, history=history)


def _converged(metrics: dict, feastol: float, abstol: float, reltol: float) -> bool:
    if not metrics:
        return False
    feasible = metrics["pres"] <= feastol and metrics["dres"] <= feastol
    return feasible and (metrics["gap"] <= abstol or metrics["relgap"] <= reltol)


def infeasibility_certificate(problem: SdpProblem, solution: Optional[SdpSolution] = None,
                              **solver_args) -> InfeasibilityCertificate:
    """Farkas ray of an infeasible problem, solving it first when no solution is given"""
    if solution is None:
        solution = solve_sdp(problem, **solver_args)
    if solution.status != SdpStatus.PRIMAL_INFEASIBLE or solution.certificate is None:
        raise CertificateUnavailable(f"no infeasibility certificate for a problem with status {solution.status.value}")
    return solution.certificate


def verify_certificate(problem: SdpProblem, cert: InfeasibilityCertificate, tol: float = 1e-7) -> bool:
    """
    Recompute the certificate arithmetic: w >= 0, S = sum y_i A_i + sum w_j G_j
    PSD and b^T y + h^T w < 0, with ``tol`` relative to |b^T y + h^T w|.
    """
    y = np.asarray(cert.y, dtype=np.float64)
    w = np.asarray(cert.w, dtype=np.float64)
    if y.size != problem.num_equalities or w.size != problem.num_inequalities:
        return False
    value = float(problem.eq_b @ y + problem.ineq_h @ w)
    if not value < 0:
        return False
    slack = tol * abs(value)
    return bool(np.all(w >= -slack) and linalg.eigvalsh(problem.combine(y, w))[0] >= -slack)
