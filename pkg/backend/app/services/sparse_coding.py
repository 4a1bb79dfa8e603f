"""
Sparse coding service.
Solves the per-signal coding problem

    F(a) = ||x - D a||^2 + mu ||x - D_c' a_c'||^2 + gamma1 (||a||^2 - ||a_c'||^2) + lambda ||a||_1

by cyclic coordinate descent with exact soft-threshold updates, interleaved with
Newton steps on the current support and sign pattern. With no label (or
mu = gamma1 = 0) it is the plain Lasso used to encode signals for the classifier.
"""

import logging
from typing import NamedTuple, Optional

import numpy as np

from app.models.dictionary import DictionarySet, SparseCode, CodingParams
from app.utils.errors import SolverError

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-9
NEWTON_SLACK = 1e-13
NULL_SPACE_TOL = 1e-12
RANK_TOL = 1e-12
# Sweeps between Newton steps on the current support.
NEWTON_INTERVAL = 2


class BatchCodes(NamedTuple):
    """Codes of N signals with per-signal solver diagnostics."""

    codes: np.ndarray
    converged: np.ndarray
    sweeps: np.ndarray
    kkt: np.ndarray


def soft_threshold(rho: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(rho) * np.maximum(np.abs(rho) - threshold, 0.0)


class _Problem:
    """Precomputed quantities shared by every signal of a batch."""

    def __init__(self, X, D: DictionarySet, labels, params: CodingParams):
        self.X = X
        self.D = D.atoms
        self.G = self.D.T @ self.D
        self.B = X @ self.D
        self.diag = np.diag(self.G).copy()
        self.block_size = D.block_size
        self.lam = params.lam
        if labels is None:
            self.mask = np.zeros(self.B.shape, dtype=bool)
            self.mu = 0.0
            self.gamma1 = 0.0
        else:
            self.mask = D.atom_block_index[None, :] == np.asarray(labels)[:, None]
            self.mu = params.mu
            self.gamma1 = params.gamma1
        self.curvature = (2.0 * self.diag[None, :] * (1.0 + self.mu * self.mask)
                          + 2.0 * self.gamma1 * ~self.mask)

    def objectives(self, A: np.ndarray, rows=slice(None)) -> np.ndarray:
        X, mask = self.X[rows], self.mask[rows]
        values = np.sum((X - A @ self.D.T) ** 2, axis=1) + self.lam * np.sum(np.abs(A), axis=1)
        if self.mu:
            values += self.mu * np.sum((X - (A * mask) @ self.D.T) ** 2, axis=1)
        if self.gamma1:
            values += self.gamma1 * np.sum(np.where(mask, 0.0, A ** 2), axis=1)
        return values

    def gradient(self, A: np.ndarray, rows=slice(None)) -> np.ndarray:
        """Gradient of the smooth part of F for every signal."""
        B, mask = self.B[rows], self.mask[rows]
        grad = -2.0 * (B - A @ self.G)
        if self.mu:
            grad -= 2.0 * self.mu * mask * (B - (A * mask) @ self.G)
        if self.gamma1:
            grad += 2.0 * self.gamma1 * np.where(mask, 0.0, A)
        return grad

    def kkt(self, A: np.ndarray, rows=slice(None)) -> np.ndarray:
        grad = self.gradient(A, rows)
        violation = np.where(
            A == 0,
            np.maximum(np.abs(grad) - self.lam, 0.0),
            np.abs(grad + self.lam * np.sign(A)),
        )
        return violation.max(axis=1) if violation.shape[1] else np.zeros(A.shape[0])

    def sweep(self, A: np.ndarray, rows: np.ndarray) -> None:
        """One cyclic pass over all coordinates for the given signals, in place."""
        Aa = A[rows]
        H = Aa @ self.G
        B, mask, curvature = self.B[rows], self.mask[rows], self.curvature[rows]
        k = self.block_size
        for j in range(Aa.shape[1]):
            old = Aa[:, j].copy()
            gjj = self.diag[j]
            rho = 2.0 * (B[:, j] - H[:, j] + gjj * old)
            if self.mu:
                block = slice((j // k) * k, (j // k + 1) * k)
                in_block = Aa[:, block] @ self.G[block, j]
                rho += 2.0 * self.mu * mask[:, j] * (B[:, j] - in_block + gjj * old)
            q = curvature[:, j]
            new = np.divide(soft_threshold(rho, self.lam), q, out=np.zeros_like(rho), where=q > 0)
            delta = new - old
            if np.any(delta):
                H += np.outer(delta, self.G[j])
                Aa[:, j] = new
        A[rows] = Aa

    def face_hessian(self, row: int, support: np.ndarray) -> np.ndarray:
        """Half the Hessian of the smooth part restricted to one signal's support."""
        G = self.G[np.ix_(support, support)]
        inside = self.mask[row, support]
        H = G.copy()
        if self.mu:
            H += self.mu * G * (inside[:, None] & inside[None, :])
        if self.gamma1:
            H[np.diag_indices_from(H)] += self.gamma1 * ~inside
        return H

    def newton_step(self, A: np.ndarray, rows: np.ndarray, current: np.ndarray) -> np.ndarray:
        """
        Orthant-wise Newton step on each signal's current support, in place.

        F restricted to the support and sign pattern is quadratic, so one solve lands on
        its minimizer; the step is cut at the first coordinate that would change sign.
        A singular face is first left along its null direction, where F falls linearly,
        up to the first zero crossing. Steps that do not lower F are discarded.
        Returns the objectives after the step.
        """
        Aa = A[rows]
        grad = self.gradient(Aa, rows)
        candidates = Aa.copy()
        for i, row in enumerate(rows):
            a = Aa[i]
            support = np.flatnonzero(a)
            if support.size == 0:
                continue
            signs = np.sign(a[support])
            r = -0.5 * (grad[i, support] + self.lam * signs)
            H = self.face_hessian(row, support)
            values, vectors = np.linalg.eigh(H)
            kept = values > RANK_TOL * max(values[-1], 0.0) * support.size
            projected = vectors.T @ r
            step = vectors[:, kept] @ (projected[kept] / values[kept])
            null = vectors[:, ~kept] @ projected[~kept]
            if np.linalg.norm(null) > NULL_SPACE_TOL * max(1.0, np.linalg.norm(r)):
                step = null
                limit = np.inf
            else:
                limit = 1.0
            shrinking = a[support] * step < 0
            if shrinking.any():
                ratios = -a[support][shrinking] / step[shrinking]
                first = int(np.argmin(ratios))
                if ratios[first] <= limit:
                    limit = ratios[first]
                    candidates[i, support] = a[support] + limit * step
                    candidates[i, support[np.flatnonzero(shrinking)[first]]] = 0.0
                    continue
            if np.isfinite(limit):
                candidates[i, support] = a[support] + limit * step

        proposed = self.objectives(candidates, rows)
        accept = proposed <= current + NEWTON_SLACK * (1.0 + np.abs(current))
        Aa[accept] = candidates[accept]
        A[rows] = Aa
        return np.where(accept, proposed, current)


class SparseCodingService:
    """Service class for Lasso-type coding over class-structured dictionaries."""

    def code_batch(
        self,
        X: np.ndarray,
        D: DictionarySet,
        labels: Optional[np.ndarray],
        params: CodingParams,
        init: Optional[np.ndarray] = None,
    ) -> BatchCodes:
        """
        Code N signals at once.

        Coordinates are visited in the same cyclic order for every signal and a signal
        stops being updated once its KKT residual is within tolerance, so each row equals
        what a single-signal run would return.

        Args:
            X: N x M signals
            D: Dictionary set
            labels: Length-N class labels (1-based), or None for plain Lasso
            params: Weights and stopping rule
            init: Optional N x K warm start

        Returns:
            BatchCodes with the N x K code matrix
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != D.dim:
            raise SolverError("signal length does not match the dictionary", {"M": D.dim, "got": X.shape[1]})
        if not np.all(np.isfinite(X)):
            raise SolverError("signals contain non-finite values")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).reshape(-1)
            if labels.size != X.shape[0] or labels.min() < 1 or labels.max() > D.n_classes:
                raise SolverError("labels must be one class in 1..C per signal", {"C": D.n_classes})

        n, k = X.shape[0], D.n_atoms
        A = np.zeros((n, k)) if init is None else np.array(init, dtype=np.float64)
        if A.shape != (n, k) or not np.all(np.isfinite(A)):
            raise SolverError("warm start must be a finite N x K matrix", {"N": n, "K": k})

        problem = _Problem(X, D, labels, params)
        sweeps = np.zeros(n, dtype=np.int64)
        kkt = problem.kkt(A)
        active = np.flatnonzero(kkt > params.tol)
        previous = problem.objectives(A[active], active)

        for sweep in range(1, params.max_sweeps + 1):
            if active.size == 0:
                break
            problem.sweep(A, active)
            sweeps[active] += 1

            current = problem.objectives(A[active], active)
            if np.any(current > previous + MONOTONE_SLACK * (1.0 + np.abs(previous))):
                raise SolverError("coding objective increased during a sweep")

            kkt[active] = problem.kkt(A[active], active)
            if sweep % NEWTON_INTERVAL == 0:
                pending = kkt[active] > params.tol
                if pending.any():
                    rows = active[pending]
                    current[pending] = problem.newton_step(A, rows, current[pending])
                    kkt[rows] = problem.kkt(A[rows], rows)
            keep = kkt[active] > params.tol
            active, previous = active[keep], current[keep]

        converged = kkt <= params.tol
        if not np.all(converged):
            logger.warning(
                f"Sparse coding tolerance not met for {int(np.sum(~converged))} of {n} signals "
                f"after {params.max_sweeps} sweeps (max KKT residual {kkt.max():.3e})"
            )
        return BatchCodes(codes=A, converged=converged, sweeps=sweeps, kkt=kkt)

    def code_supervised(
        self, x: np.ndarray, D: DictionarySet, label: int, params: CodingParams,
        init: Optional[np.ndarray] = None,
    ) -> SparseCode:
        """Minimize F(a) for one signal of class `label`."""
        result = self.code_batch(
            np.asarray(x)[None, :], D, np.array([label]), params,
            None if init is None else np.asarray(init)[None, :],
        )
        return self._single(result, D)

    def code_unsupervised(
        self, x: np.ndarray, D: DictionarySet, lam: float, max_sweeps: int = 1000, tol: float = 1e-6
    ) -> SparseCode:
        """Plain Lasso ||x - D a||^2 + lambda ||a||_1."""
        params = CodingParams(lam=lam, mu=0.0, gamma1=0.0, max_sweeps=max_sweeps, tol=tol)
        return self._single(self.code_batch(np.asarray(x)[None, :], D, None, params), D)

    def encode(self, X: np.ndarray, D: DictionarySet, lam: float, max_sweeps: int = 1000, tol: float = 1e-6) -> np.ndarray:
        """Plain Lasso codes of many signals, the SVM input."""
        params = CodingParams(lam=lam, mu=0.0, gamma1=0.0, max_sweeps=max_sweeps, tol=tol)
        return self.code_batch(X, D, None, params).codes

    def kkt_residual(
        self, x: np.ndarray, D: DictionarySet, a: np.ndarray, label: Optional[int], params: CodingParams
    ) -> float:
        """Largest first-order optimality violation of code a; zero iff a is optimal."""
        x = np.asarray(x, dtype=np.float64)[None, :]
        a = np.asarray(a, dtype=np.float64)[None, :]
        if x.shape[1] != D.dim or a.shape[1] != D.n_atoms:
            raise SolverError("inconsistent dimensions", {"M": D.dim, "K": D.n_atoms})
        labels = None if label is None else np.array([label])
        return float(_Problem(x, D, labels, params).kkt(a)[0])

    def coding_objective(
        self, x: np.ndarray, D: DictionarySet, a: np.ndarray, label: Optional[int], params: CodingParams
    ) -> float:
        x = np.asarray(x, dtype=np.float64)[None, :]
        labels = None if label is None else np.array([label])
        return float(_Problem(x, D, labels, params).objectives(np.asarray(a, dtype=np.float64)[None, :])[0])

    def _single(self, result: BatchCodes, D: DictionarySet) -> SparseCode:
        return SparseCode(
            values=result.codes[0],
            block_size=D.block_size,
            converged=bool(result.converged[0]),
            sweeps=int(result.sweeps[0]),
            kkt=float(result.kkt[0]),
        )


# Global sparse coding service instance
sparse_coding_service = SparseCodingService()
