"""
Dictionary learning service.
Evaluates the supervised objective, its dictionary gradient, the unit-ball projection
and the alternating optimization that learns incoherent class dictionaries.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from app.models.dictionary import (
    DictionarySet, HyperParams, ObjectiveBreakdown, TraceRow, FitTrace, SimilaritySummary,
)
from app.services.sparse_coding import sparse_coding_service
from app.utils.errors import SolverError

logger = logging.getLogger(__name__)

FEASIBILITY_SLACK = 1e-6


def _block_diagonal_mask(n_classes: int, block_size: int) -> np.ndarray:
    index = np.repeat(np.arange(n_classes), block_size)
    return index[:, None] == index[None, :]


class DictionaryService:
    """Service class for supervised dictionary learning."""

    def _check(self, D: DictionarySet, A: np.ndarray, X: np.ndarray, y: np.ndarray) -> Tuple:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        if X.shape[1] != D.dim or A.shape != (X.shape[0], D.n_atoms) or y.size != X.shape[0]:
            raise SolverError(
                "dimension mismatch",
                {"X": list(X.shape), "A": list(A.shape), "y": int(y.size), "M": D.dim, "K": D.n_atoms},
            )
        if y.size and (y.min() < 1 or y.max() > D.n_classes):
            raise SolverError("labels must lie in 1..C", {"C": D.n_classes})
        mask = D.atom_block_index[None, :] == y[:, None]
        return X, A, y, mask

    def objective_terms(
        self, D: DictionarySet, A: np.ndarray, X: np.ndarray, y: np.ndarray, h: HyperParams
    ) -> ObjectiveBreakdown:
        """
        Evaluate the five terms of the supervised objective.

        J5 sums ||D_c^T D_c'||_F^2 over ordered pairs c != c', so each unordered pair
        is counted twice.
        """
        X, A, y, mask = self._check(D, A, X, y)
        atoms = D.atoms
        J1 = float(np.sum((X - A @ atoms.T) ** 2))
        J2 = float(np.sum((X - (A * mask) @ atoms.T) ** 2))
        J3 = float(np.sum(np.abs(A)))
        J4 = float(np.sum(np.where(mask, 0.0, A ** 2)))
        gram = atoms.T @ atoms
        J5 = float(np.sum(np.where(_block_diagonal_mask(D.n_classes, D.block_size), 0.0, gram ** 2)))
        J = J1 + h.mu * J2 + h.lam * J3 + h.gamma1 * J4 + h.gamma2 * J5
        return ObjectiveBreakdown(
            J=J, J1=J1, J2=J2, J3=J3, J4=J4, J5=J5,
            mu=h.mu, lam=h.lam, gamma1=h.gamma1, gamma2=h.gamma2,
        )

    def grad_all(
        self, D: DictionarySet, A: np.ndarray, X: np.ndarray, y: np.ndarray, h: HyperParams
    ) -> np.ndarray:
        """Gradient of J1 + mu J2 + gamma2 J5 with respect to the whole M x K dictionary."""
        X, A, y, mask = self._check(D, A, X, y)
        atoms = D.atoms
        grad = -2.0 * (X - A @ atoms.T).T @ A
        if h.mu:
            own = A * mask
            grad -= 2.0 * h.mu * (X - own @ atoms.T).T @ own
        if h.gamma2:
            gram = atoms.T @ atoms
            cross = np.where(_block_diagonal_mask(D.n_classes, D.block_size), 0.0, gram)
            grad += 4.0 * h.gamma2 * atoms @ cross
        return grad

    def grad_dictionary(
        self, p: int, D: DictionarySet, A: np.ndarray, X: np.ndarray, y: np.ndarray, h: HyperParams
    ) -> np.ndarray:
        """M x K' gradient block of class p."""
        return self.grad_all(D, A, X, y, h)[:, D.block_slice(p)]

    def prox_unit_columns(self, D_half) -> DictionarySet:
        """Project every atom onto the unit ball; atoms of norm <= 1 are left untouched."""
        if isinstance(D_half, DictionarySet):
            atoms, n_classes = D_half.atoms, D_half.n_classes
        else:
            atoms, n_classes = np.asarray(D_half, dtype=np.float64), 1
        if not np.all(np.isfinite(atoms)):
            raise SolverError("dictionary contains non-finite entries")
        norms = np.linalg.norm(atoms, axis=0)
        scale = np.where(norms > 1.0, norms, 1.0)
        return DictionarySet(atoms=atoms / scale, n_classes=n_classes)

    def fit(
        self,
        X: np.ndarray,
        y: np.ndarray,
        h: HyperParams,
        D0: DictionarySet,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[DictionarySet, FitTrace]:
        """
        Alternating optimization of codes and dictionaries.

        Each outer iteration codes all signals against the current dictionary
        (warm-started), then takes one projected gradient step whose size is
        backtracked from eta0 until J(D_new, A) < J(D_old, A) for the same codes.

        Args:
            X: N x M training signals
            y: Length-N labels in 1..C
            h: Hyperparameters
            D0: Feasible initial dictionary
            rng: Unused; the procedure is deterministic given D0

        Returns:
            Learned dictionary and the trace of accepted iterations
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        if not np.all(np.isfinite(X)):
            raise SolverError("training signals contain non-finite values")
        if not D0.is_feasible(FEASIBILITY_SLACK):
            raise SolverError(
                "initial dictionary violates the unit atom-norm constraint",
                {"max_norm": float(D0.atom_norms().max())},
            )

        coding = h.coding_params(supervised=True)
        D = D0
        A = None
        trace = FitTrace()
        previous_J = None
        slow_iterations = 0

        logger.info(
            f"Fitting {D.n_classes} class dictionaries of {D.block_size} atoms on {X.shape[0]} signals "
            f"(mu={h.mu}, lambda={h.lam}, gamma1={h.gamma1}, gamma2={h.gamma2}, T={h.iterations})"
        )
        for t in range(1, h.iterations + 1):
            codes = sparse_coding_service.code_batch(X, D, y, coding, init=A)
            A = codes.codes
            base = self.objective_terms(D, A, X, y, h)
            self._ensure_finite(base, t)
            if trace.initial_objective is None:
                trace.initial_objective = base.J

            gradient = self.grad_all(D, A, X, y, h)
            eta = h.eta0
            accepted = None
            backtracks = 0
            while backtracks < h.backtrack_cap:
                candidate = self.prox_unit_columns(
                    DictionarySet(atoms=D.atoms - eta * gradient, n_classes=D.n_classes)
                )
                terms = self.objective_terms(candidate, A, X, y, h)
                self._ensure_finite(terms, t)
                if terms.J < base.J:
                    accepted = (candidate, terms)
                    break
                eta *= h.alpha
                backtracks += 1

            if accepted is None:
                logger.info(f"Backtracking cap reached at iteration {t}; keeping the current dictionary")
                trace.converged = True
                trace.stop_reason = "backtrack_cap"
                break

            D, terms = accepted
            trace.rows.append(TraceRow(
                iteration=t, objective=terms, step=eta, backtracks=backtracks, kkt_max=float(codes.kkt.max()),
            ))
            logger.debug(
                f"Iteration {t}: J={terms.J:.6e} step={eta:.3e} backtracks={backtracks} "
                f"kkt_max={codes.kkt.max():.2e}"
            )

            if h.early_stop and previous_J is not None:
                decrease = (previous_J - terms.J) / max(abs(previous_J), np.finfo(float).tiny)
                slow_iterations = slow_iterations + 1 if decrease < h.early_stop_tol else 0
                if slow_iterations >= h.early_stop_patience:
                    trace.converged = True
                    trace.stop_reason = "early_stop"
                    break
            previous_J = terms.J

        final = trace.rows[-1].objective.J if trace.rows else trace.initial_objective
        logger.info(
            f"Dictionary fit stopped ({trace.stop_reason}) after {len(trace.rows)} accepted iterations, "
            f"J {trace.initial_objective:.6e} -> {final:.6e}"
        )
        return D, trace

    def _ensure_finite(self, terms: ObjectiveBreakdown, iteration: int) -> None:
        if not np.isfinite(terms.J):
            logger.error(f"Non-finite objective at iteration {iteration}: {terms.dict()}")
            raise SolverError(
                "non-finite objective",
                {"iteration": iteration, "terms": {k: float(v) for k, v in terms.dict().items()}},
            )

    def dictionary_similarity(self, D: DictionarySet) -> np.ndarray:
        """C x C matrix of ||D_c^T D_c'||_F."""
        k = D.block_size
        gram = (D.atoms.T @ D.atoms) ** 2
        blocks = gram.reshape(D.n_classes, k, D.n_classes, k).sum(axis=(1, 3))
        S = np.sqrt(blocks)
        return (S + S.T) / 2.0

    def similarity_summary(self, S: np.ndarray) -> SimilaritySummary:
        S = np.asarray(S, dtype=np.float64)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] == 0:
            raise SolverError("similarity must be a non-empty square matrix", {"shape": list(S.shape)})
        n = S.shape[0]
        off = S[~np.eye(n, dtype=bool)]
        dominant = np.argmax(S, axis=1) == np.arange(n)
        return SimilaritySummary(
            diagonal_mean=float(np.mean(np.diag(S))),
            off_diagonal_mean=float(off.mean()) if off.size else 0.0,
            diagonal_dominance=float(np.mean(dominant)),
        )


# Global dictionary service instance
dictionary_service = DictionaryService()
