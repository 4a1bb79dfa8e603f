"""
K-SVD service.
Initializes each class dictionary from that class's signals with orthogonal matching
pursuit coding and rank-1 atom updates.
"""

import logging
from typing import List, NamedTuple

import numpy as np

from app.models.dictionary import DictionarySet, KsvdParams
from app.utils.errors import DatasetError, SolverError
from app.utils.parallel import derive_seed, run_jobs

logger = logging.getLogger(__name__)

RESIDUAL_FLOOR = 1e-10


class KsvdResult(NamedTuple):
    """Learned class dictionary and the reconstruction error after each stage."""

    atoms: np.ndarray
    errors: List[float]


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _positive_convention(atom: np.ndarray) -> float:
    """Sign that makes the largest-magnitude entry of atom positive."""
    return -1.0 if atom[np.argmax(np.abs(atom))] < 0 else 1.0


class KsvdService:
    """Service class for per-class K-SVD dictionary initialization."""

    def omp(self, x: np.ndarray, atoms: np.ndarray, sparsity: int) -> np.ndarray:
        """
        Orthogonal matching pursuit.

        Picks the atom most correlated with the residual (never the same one twice),
        refits all selected coefficients by least squares and stops after `sparsity`
        atoms or once the residual norm drops below 1e-10.

        Returns:
            Code of length K'
        """
        x = np.asarray(x, dtype=np.float64)
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(norms == 0):
            raise SolverError("matching pursuit needs nonzero atoms")

        code = np.zeros(atoms.shape[1])
        support: List[int] = []
        coefficients = np.zeros(0)
        residual = x.copy()
        while len(support) < min(sparsity, atoms.shape[1]) and np.linalg.norm(residual) >= RESIDUAL_FLOOR:
            correlation = np.abs(atoms.T @ residual) / norms
            correlation[support] = -1.0
            support.append(int(np.argmax(correlation)))
            selected = atoms[:, support]
            coefficients = np.linalg.lstsq(selected, x, rcond=None)[0]
            residual = x - selected @ coefficients
        code[support] = coefficients
        return code

    def omp_batch(self, X: np.ndarray, atoms: np.ndarray, sparsity: int) -> np.ndarray:
        return np.vstack([self.omp(x, atoms, sparsity) for x in X]) if len(X) else np.zeros((0, atoms.shape[1]))

    def _initial_atoms(self, X: np.ndarray, atoms_per_class: int, rng: np.random.Generator) -> np.ndarray:
        """Distinct random normalized signals, padded with random unit vectors."""
        norms = np.linalg.norm(X, axis=1)
        _, first = np.unique(X[norms > 0], axis=0, return_index=True)
        candidates = np.flatnonzero(norms > 0)[np.sort(first)]
        chosen = rng.permutation(candidates)[:atoms_per_class]
        columns = [X[i] / norms[i] for i in chosen]
        while len(columns) < atoms_per_class:
            columns.append(_unit(rng.standard_normal(X.shape[1])))
        return np.column_stack(columns)

    def ksvd_class(self, signals: np.ndarray, atoms_per_class: int, params: KsvdParams) -> KsvdResult:
        """
        Learn one class dictionary.

        Args:
            signals: N x M signals of the class
            atoms_per_class: K'
            params: Iterations, OMP sparsity and seed

        Returns:
            KsvdResult with unit-norm M x K' atoms; errors[0] is the error of the
            initial OMP coding and errors[i] the error after iteration i
        """
        X = np.atleast_2d(np.asarray(signals, dtype=np.float64))
        if X.shape[0] == 0 or X.size == 0:
            raise DatasetError("cannot initialize a dictionary from an empty class")
        if not np.all(np.isfinite(X)):
            raise SolverError("class signals contain non-finite values")

        rng = np.random.default_rng(params.seed)
        sparsity = params.sparsity_for(atoms_per_class)
        D = self._initial_atoms(X, atoms_per_class, rng)
        codes = self.omp_batch(X, D, sparsity)
        errors = [float(np.sum((X - codes @ D.T) ** 2))]

        for _ in range(params.iterations):
            fresh = self.omp_batch(X, D, sparsity)
            kept = np.sum((X - codes @ D.T) ** 2, axis=1)
            better = np.sum((X - fresh @ D.T) ** 2, axis=1) < kept
            codes[better] = fresh[better]

            replaced: List[int] = []
            for k in range(atoms_per_class):
                users = np.flatnonzero(codes[:, k])
                if users.size == 0:
                    D[:, k] = self._replacement_atom(X, codes, D, replaced, rng)
                    continue
                restricted = X[users] - codes[users] @ D.T + np.outer(codes[users, k], D[:, k])
                u, s, vt = np.linalg.svd(restricted.T, full_matrices=False)
                sign = _positive_convention(u[:, 0])
                D[:, k] = sign * u[:, 0]
                codes[users, k] = sign * s[0] * vt[0]
            errors.append(float(np.sum((X - codes @ D.T) ** 2)))

        logger.debug(f"K-SVD class error {errors[0]:.4e} -> {errors[-1]:.4e}")
        return KsvdResult(atoms=D, errors=errors)

    def _replacement_atom(
        self, X: np.ndarray, codes: np.ndarray, D: np.ndarray, replaced: List[int], rng: np.random.Generator
    ) -> np.ndarray:
        """Worst-reconstructed signal not used yet in this sweep, normalized."""
        errors = np.sum((X - codes @ D.T) ** 2, axis=1)
        for i in np.argsort(-errors, kind="stable"):
            if i not in replaced and np.linalg.norm(X[i]) > 0 and errors[i] > 0:
                replaced.append(int(i))
                return _unit(X[i])
        return _unit(rng.standard_normal(X.shape[1]))

    def init_class_dictionaries(
        self,
        X: np.ndarray,
        y: np.ndarray,
        atoms_per_class: int,
        params: KsvdParams,
        n_classes: int = None,
        n_jobs: int = 1,
    ) -> DictionarySet:
        """
        Run K-SVD on every class independently.

        Each class gets its own seed derived from (params.seed, class), so the result
        does not depend on n_jobs.
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        n_classes = n_classes or int(y.max())
        missing = [c for c in range(1, n_classes + 1) if not np.any(y == c)]
        if missing:
            raise DatasetError("every class needs at least one training signal", {"missing": missing})

        tasks = [
            (X[y == c], atoms_per_class, params.copy(update={"seed": derive_seed(params.seed, c)}))
            for c in range(1, n_classes + 1)
        ]
        results = run_jobs(_ksvd_task, tasks, n_jobs)
        logger.info(
            f"K-SVD initialized {n_classes} class dictionaries of {atoms_per_class} atoms "
            f"(T0={params.sparsity_for(atoms_per_class)}, {params.iterations} iterations)"
        )
        return DictionarySet.from_blocks([r.atoms for r in results])


def _ksvd_task(signals: np.ndarray, atoms_per_class: int, params: KsvdParams) -> KsvdResult:
    return ksvd_service.ksvd_class(signals, atoms_per_class, params)


# Global K-SVD service instance
ksvd_service = KsvdService()
