"""Epsilon-insensitive support vector regression solved by SMO.

The dual is the standard 2l-variable box QP (alpha for the upper tube side,
alpha* for the lower) with the single equality constraint. Pairs are chosen
by maximal violation with a second-order tie refinement, and the stopping
rule is the usual duality gap on the violating pair: stop when
m(alpha) - M(alpha) < tol. The RBF kernel matrix is precomputed, so each
iteration costs O(l).

For efficiency the solver tracks F = K beta - y (beta = alpha - alpha*),
from which both block gradients follow: grad_up = F + eps and
grad_down = eps - F.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, NumericalError

_TAU = 1e-12


@dataclass(frozen=True)
class SvrHyper:
    C: float = 32.0
    epsilon: float = 0.2
    gamma: float | None = None  # None -> 1 / n_features
    tol: float = 1e-3
    max_iter: int | None = None  # None -> max(20000, 200 * l)

    def gamma_for(self, n_features: int) -> float:
        return self.gamma if self.gamma is not None else 1.0 / n_features

    def iter_cap(self, l: int) -> int:
        return self.max_iter if self.max_iter is not None else max(20000, 200 * l)


@dataclass
class SvrModel:
    support_X: np.ndarray  # rows with non-zero coefficient
    support_beta: np.ndarray  # alpha - alpha* on those rows
    bias: float
    gamma: float
    C: float
    epsilon: float
    iterations: int
    violation: float  # final m - M
    alpha_up: np.ndarray | None = None  # full duals, kept for diagnostics
    alpha_down: np.ndarray | None = None

    def coefficients(self) -> np.ndarray:
        return self.alpha_up - self.alpha_down


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def dual_objective(K: np.ndarray, y: np.ndarray, epsilon: float, a_up: np.ndarray, a_dn: np.ndarray) -> float:
    """Minimization-form dual value 0.5 b'Kb + eps sum(a+a*) - y'b, b = a - a*."""
    beta = a_up - a_dn
    return float(0.5 * beta @ (K @ beta) + epsilon * np.sum(a_up + a_dn) - y @ beta)


def train_svr(X, y, hyper: SvrHyper) -> SvrModel:
    """Solve the epsilon-SVR dual by SMO on a precomputed RBF kernel.

    Raises NumericalError if the iteration cap is hit while the violating
    pair gap still exceeds 10x the tolerance.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    l = len(y)
    if l == 0:
        raise DataError("empty training fold")
    if hyper.C <= 0 or hyper.epsilon < 0:
        raise DataError(f"need C > 0 and epsilon >= 0, got C={hyper.C}, epsilon={hyper.epsilon}")
    gamma = hyper.gamma_for(X.shape[1])
    if gamma <= 0:
        raise DataError(f"gamma must be positive, got {gamma}")

    K = rbf_kernel(X, X, gamma)
    diag = np.diag(K).copy()
    C, eps, tol = hyper.C, hyper.epsilon, hyper.tol
    cap = hyper.iter_cap(l)

    au = np.zeros(l)
    ad = np.zeros(l)
    F = -y.copy()  # K beta - y at beta = 0

    it = 0
    violation = np.inf
    for it in range(1, cap + 1):
        neg_up = -(F + eps)  # -y grad on the alpha block
        neg_dn = eps - F  # -y grad on the alpha* block

        up_ok_u = au < C - _TAU
        up_ok_d = ad > _TAU
        cand_up = np.where(up_ok_u, neg_up, -np.inf)
        cand_dn = np.where(up_ok_d, neg_dn, -np.inf)
        i_up = int(np.argmax(cand_up))
        i_dn = int(np.argmax(cand_dn))
        if cand_up[i_up] >= cand_dn[i_dn]:
            i, i_block, m_val = i_up, 0, cand_up[i_up]
        else:
            i, i_block, m_val = i_dn, 1, cand_dn[i_dn]

        low_ok_u = au > _TAU
        low_ok_d = ad < C - _TAU
        low_up = np.where(low_ok_u, neg_up, np.inf)
        low_dn = np.where(low_ok_d, neg_dn, np.inf)
        M_val = min(low_up.min(), low_dn.min())
        violation = m_val - M_val
        if not np.isfinite(violation) or violation < tol:
            break

        # second-order choice of j among candidates below m_val
        Ki = K[i]
        a_vec = diag[i] + diag - 2.0 * Ki
        a_vec = np.maximum(a_vec, _TAU)
        best_gain, j, j_block = -np.inf, -1, 0
        for block, vals in ((0, low_up), (1, low_dn)):
            b_vec = m_val - vals
            ok = np.isfinite(vals) & (b_vec > _TAU)
            if ok.any():
                gain = np.where(ok, (b_vec * b_vec) / a_vec, -np.inf)
                cand = int(np.argmax(gain))
                if gain[cand] > best_gain:
                    best_gain, j, j_block = float(gain[cand]), cand, block
        if j < 0:
            break

        # maximal feasible step along the pair direction
        t = (m_val - (neg_up[j] if j_block == 0 else neg_dn[j])) / a_vec[j]
        t = min(t, (C - au[i]) if i_block == 0 else ad[i])
        t = min(t, au[j] if j_block == 0 else (C - ad[j]))
        if t <= 0:
            break
        if i_block == 0:
            au[i] += t
        else:
            ad[i] -= t
        if j_block == 0:
            au[j] -= t
        else:
            ad[j] += t
        F += t * Ki - t * K[j]

    if violation >= 10.0 * tol:
        raise NumericalError(
            f"SMO did not converge in {it} iterations: violating-pair gap "
            f"{violation:.3e} exceeds 10x tolerance {tol:.0e}"
        )

    neg_up = -(F + eps)
    neg_dn = eps - F
    m_fin = max(
        np.where(au < C - _TAU, neg_up, -np.inf).max(),
        np.where(ad > _TAU, neg_dn, -np.inf).max(),
    )
    M_fin = min(
        np.where(au > _TAU, neg_up, np.inf).min(),
        np.where(ad < C - _TAU, neg_dn, np.inf).min(),
    )
    bias = float((m_fin + M_fin) / 2.0)

    beta = au - ad
    support = np.abs(beta) > _TAU
    return SvrModel(
        support_X=X[support].copy(),
        support_beta=beta[support].copy(),
        bias=bias,
        gamma=gamma,
        C=C,
        epsilon=eps,
        iterations=it,
        violation=float(max(violation, 0.0)) if np.isfinite(violation) else 0.0,
        alpha_up=au,
        alpha_down=ad,
    )


def svr_predict(model: SvrModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if len(model.support_beta) == 0:
        return np.full(len(X), model.bias)
    K = rbf_kernel(X, model.support_X, model.gamma)
    return K @ model.support_beta + model.bias
