"""
SVM service.
One-against-all linear SVMs on sparse codes, with validation-resampled selection of C.
"""

import logging
import warnings
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import accuracy_score, confusion_matrix as sk_confusion_matrix
from sklearn.model_selection import ShuffleSplit, StratifiedShuffleSplit
from sklearn.svm import LinearSVC

from app.models.classifier import LinearSvmModel
from app.utils.errors import SolverError

logger = logging.getLogger(__name__)

SOLVER_TOL = 1e-5
SOLVER_MAX_ITER = 200_000


class SvmService:
    """Service class for linear one-against-all classification."""

    def train_binary(
        self, F: np.ndarray, labels: np.ndarray, c_svm: float, seed: int = 0
    ) -> Tuple[np.ndarray, float]:
        """
        Hinge-loss linear SVM with labels in {+1, -1}.

        The bias is learned as the weight of a constant feature, so it is regularized
        together with w.

        Returns:
            (w, b)
        """
        F = np.atleast_2d(np.asarray(F, dtype=np.float64))
        labels = np.asarray(labels).reshape(-1)
        if not np.all(np.isfinite(F)):
            raise SolverError("SVM features must be finite")
        if F.shape[0] != labels.size:
            raise SolverError("one label per feature row is required", {"rows": F.shape[0], "labels": labels.size})
        if not set(np.unique(labels)) <= {-1, 1}:
            raise SolverError("binary labels must be +1 or -1")
        if np.unique(labels).size < 2:
            raise SolverError("degenerate binary problem", {"label": int(labels[0]) if labels.size else None})

        machine = LinearSVC(
            C=c_svm,
            loss="hinge",
            dual=True,
            fit_intercept=True,
            intercept_scaling=1.0,
            tol=SOLVER_TOL,
            max_iter=SOLVER_MAX_ITER,
            random_state=seed,
        )
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            machine.fit(F, labels)
        if any(issubclass(w.category, ConvergenceWarning) for w in caught):
            logger.warning(f"Linear SVM did not reach tolerance {SOLVER_TOL} (C={c_svm}, N={F.shape[0]})")
        return machine.coef_[0].copy(), float(machine.intercept_[0])

    def train_ova(
        self,
        F: np.ndarray,
        labels: np.ndarray,
        c_svm: float,
        n_classes: Optional[int] = None,
        seed: int = 0,
    ) -> LinearSvmModel:
        """
        One machine per class, class c against the rest.

        A class with no positive (or no negative) example gets a constant machine,
        w = 0 and b = -1 (or +1), instead of an error.
        """
        F = np.atleast_2d(np.asarray(F, dtype=np.float64))
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        n_classes = n_classes or int(labels.max())
        weights = np.zeros((n_classes, F.shape[1]))
        biases = np.zeros(n_classes)
        for c in range(1, n_classes + 1):
            binary = np.where(labels == c, 1, -1)
            if np.all(binary == binary[0]):
                biases[c - 1] = float(binary[0])
                logger.debug(f"Class {c} has a single side in training data; using a constant machine")
                continue
            weights[c - 1], biases[c - 1] = self.train_binary(F, binary, c_svm, seed)
        return LinearSvmModel(weights=weights, biases=biases, c_svm=c_svm)

    def decision_function(self, model: LinearSvmModel, F: np.ndarray) -> np.ndarray:
        """N x C matrix of w_c^T f + b_c."""
        F = np.atleast_2d(np.asarray(F, dtype=np.float64))
        if F.shape[1] != model.n_features:
            raise SolverError("feature width does not match the model", {"K": model.n_features, "got": F.shape[1]})
        return F @ model.weights.T + model.biases

    def predict(self, model: LinearSvmModel, F: np.ndarray) -> np.ndarray:
        """Labels in 1..C; ties go to the smallest class index."""
        return np.argmax(self.decision_function(model, F), axis=1) + 1

    def resample_splits(
        self, labels: np.ndarray, resample_count: int, seed: int
    ) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Learning/validation halves, stratified whenever every class has two examples."""
        labels = np.asarray(labels).reshape(-1)
        placeholder = np.zeros((labels.size, 1))
        splitter = StratifiedShuffleSplit(n_splits=resample_count, test_size=0.5, random_state=seed)
        try:
            return list(splitter.split(placeholder, labels))
        except ValueError:
            logger.debug("Falling back to unstratified validation halves")
            splitter = ShuffleSplit(n_splits=resample_count, test_size=0.5, random_state=seed)
            return list(splitter.split(placeholder))

    def validation_scores(
        self,
        F: np.ndarray,
        labels: np.ndarray,
        grid: Sequence[float],
        splits: Sequence[Tuple[np.ndarray, np.ndarray]],
        n_classes: Optional[int] = None,
        seed: int = 0,
    ) -> np.ndarray:
        """len(grid) x len(splits) validation accuracies."""
        F = np.asarray(F, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        n_classes = n_classes or int(labels.max())
        scores = np.zeros((len(grid), len(splits)))
        for s, (learn, validate) in enumerate(splits):
            for g, c_svm in enumerate(grid):
                model = self.train_ova(F[learn], labels[learn], c_svm, n_classes, seed)
                scores[g, s] = self.accuracy(labels[validate], self.predict(model, F[validate]))
        return scores

    def select_C(
        self,
        F: np.ndarray,
        labels: np.ndarray,
        grid: Sequence[float],
        resample_count: int = 2,
        seed: int = 0,
        n_classes: Optional[int] = None,
    ) -> float:
        """
        Grid value with the best mean validation accuracy over stratified half/half
        resamples of the training data; ties go to the smaller value.
        """
        grid = sorted(float(c) for c in grid)
        if not grid:
            raise SolverError("the C grid is empty")
        if len(grid) == 1:
            return grid[0]
        splits = self.resample_splits(labels, resample_count, seed)
        means = self.validation_scores(F, labels, grid, splits, n_classes, seed).mean(axis=1)
        best = grid[int(np.argmax(means))]
        logger.debug(f"Selected C={best} (validation accuracy {means.max():.3f})")
        return best

    def accuracy(self, truth: np.ndarray, predicted: np.ndarray) -> float:
        if len(truth) == 0:
            raise SolverError("cannot score an empty set")
        return float(accuracy_score(truth, predicted))

    def per_class_accuracy(self, truth: np.ndarray, predicted: np.ndarray, n_classes: int) -> List[float]:
        """Recall of every class 1..C; NaN for classes absent from truth."""
        matrix = self.confusion_matrix(truth, predicted, n_classes)
        totals = matrix.sum(axis=1)
        return [float(matrix[i, i] / totals[i]) if totals[i] else float("nan") for i in range(n_classes)]

    def confusion_matrix(self, truth: np.ndarray, predicted: np.ndarray, n_classes: int) -> np.ndarray:
        """Rows are true classes, columns predicted classes."""
        return sk_confusion_matrix(truth, predicted, labels=list(range(1, n_classes + 1)))


# Global SVM service instance
svm_service = SvmService()
