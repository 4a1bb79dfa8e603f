"""
Experiment service.
Orchestrates featurization, supervised dictionary training with grid search,
evaluation, and the split-by-split comparison against the baseline features.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import ValidationError
from sklearn.model_selection import StratifiedShuffleSplit

from app.models.audio import FeatureKind, FeaturePipelineConfig
from app.models.bundle import ModelBundle, FeatureSet
from app.models.chords import LabeledClip
from app.models.dictionary import HyperParams, KsvdParams
from app.models.experiment import (
    ExperimentConfig, GridPointResult, EvalReport, MethodResult, ExperimentReport, TrainingResult,
)
from app.services.chord_service import chord_service
from app.services.dictionary_service import dictionary_service
from app.services.feature_service import feature_service, l2_normalize_rows
from app.services.ksvd_service import ksvd_service
from app.services.model_store import model_store
from app.services.sparse_coding import sparse_coding_service
from app.services.svm_service import svm_service
from app.utils.errors import ConfigError, DatasetError
from app.utils.parallel import derive_seed, run_jobs

logger = logging.getLogger(__name__)

DICTIONARY_METHOD = "dictionary_learning"
BASELINE_METHODS = {
    FeatureKind.CHROMA: "chroma",
    FeatureKind.INTERPOLATED_PSD: "interpolated_psd",
    FeatureKind.POOLED_SPECTROGRAM: "spectrogram_pooling",
}


def with_point(base: HyperParams, point: Dict[str, float]) -> HyperParams:
    """Base hyperparameters overridden by one grid point, revalidated."""
    return HyperParams.parse_obj({**base.dict(), **point})


def encode(X: np.ndarray, dictionary, hyperparams: HyperParams) -> np.ndarray:
    """Plain Lasso codes at the trained lambda, the input of the SVM."""
    return sparse_coding_service.encode(
        X, dictionary, hyperparams.lam, hyperparams.max_sweeps, hyperparams.coding_tol
    )


def learn_dictionary(
    X: np.ndarray, y: np.ndarray, n_classes: int, hyperparams: HyperParams, ksvd: KsvdParams, seed: int
):
    """K-SVD initialization followed by the supervised alternating optimization."""
    D0 = ksvd_service.init_class_dictionaries(
        X, y, hyperparams.atoms_per_class, ksvd.copy(update={"seed": seed}), n_classes
    )
    return dictionary_service.fit(X, y, hyperparams, D0)


def _grid_point_task(
    index: int,
    point: Dict[str, float],
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    config: ExperimentConfig,
    splits: List[Tuple[np.ndarray, np.ndarray]],
    seed: int,
) -> GridPointResult:
    hyperparams = with_point(config.base, point)
    c_grid = sorted(config.c_grid)
    scores = np.zeros((len(c_grid), len(splits)))
    for r, (learn, validate) in enumerate(splits):
        dictionary, _ = learn_dictionary(
            X[learn], y[learn], n_classes, hyperparams, config.ksvd, derive_seed(seed, r)
        )
        codes = encode(np.vstack([X[learn], X[validate]]), dictionary, hyperparams)
        local = (np.arange(learn.size), np.arange(learn.size, learn.size + validate.size))
        labels = np.concatenate([y[learn], y[validate]])
        scores[:, r] = svm_service.validation_scores(codes, labels, c_grid, [local], n_classes, seed)[:, 0]

    best = int(np.argmax(scores.mean(axis=1)))
    logger.info(f"Grid point {index} {point}: validation accuracy {scores[best].mean():.3f} at C={c_grid[best]}")
    return GridPointResult(
        index=index, params=point, validation_scores=scores[best].tolist(), best_c=c_grid[best]
    )


class ExperimentService:
    """Service class for the train/evaluate/compare pipeline."""

    def featurize_clips(
        self, clips: Sequence[LabeledClip], pipeline: FeaturePipelineConfig, n_classes: int, n_jobs: int = 1
    ) -> FeatureSet:
        if not clips:
            raise DatasetError("no clips to featurize")
        matrix = feature_service.feature_matrices([item.clip for item in clips], [pipeline], n_jobs)[0]
        return FeatureSet(
            features=matrix,
            labels=np.array([item.label for item in clips]),
            pipeline=pipeline,
            n_classes=n_classes,
        )

    def train(
        self,
        features: FeatureSet,
        config: ExperimentConfig,
        seed: Optional[int] = None,
        split_index: int = 0,
        n_jobs: int = 1,
    ) -> TrainingResult:
        """
        Select hyperparameters, then train on all of the given data.

        Every grid point is scored on the same validation resamples by the best
        mean accuracy over the C grid. The winner (first on ties) is refit on the
        full set, signals are encoded by plain Lasso at its lambda and the SVM
        constant is chosen by select_C.
        """
        seed = config.seed if seed is None else seed
        X, y, n_classes = features.features, features.labels, features.n_classes
        if X.shape[0] == 0:
            raise DatasetError("training set is empty")

        points = config.grid.points()
        grid_results: List[GridPointResult] = []
        if len(points) == 1:
            selected = points[0]
            logger.info(f"Single grid point {selected}; skipping the search")
        else:
            splits = svm_service.resample_splits(y, config.splits.resample_count, derive_seed(seed, split_index))
            tasks = [
                (g, point, X, y, n_classes, config, splits, derive_seed(seed, split_index, g))
                for g, point in enumerate(points)
            ]
            grid_results = run_jobs(_grid_point_task, tasks, n_jobs)
            best = max(grid_results, key=lambda r: (r.validation_mean, -r.index))
            selected = best.params
            logger.info(f"Selected {selected} with validation accuracy {best.validation_mean:.3f}")

        hyperparams = with_point(config.base, selected)
        dictionary, trace = learn_dictionary(
            X, y, n_classes, hyperparams, config.ksvd, derive_seed(seed, split_index)
        )
        codes = encode(X, dictionary, hyperparams)
        c_svm = svm_service.select_C(
            codes, y, config.c_grid, config.splits.resample_count, derive_seed(seed, split_index), n_classes
        )
        svm = svm_service.train_ova(codes, y, c_svm, n_classes, seed)
        bundle = ModelBundle(dictionary=dictionary, svm=svm, hyperparams=hyperparams, pipeline=features.pipeline)
        return TrainingResult(
            bundle=bundle,
            trace=trace,
            grid_results=grid_results,
            selected_params=dict(selected, c_svm=c_svm),
        )

    def evaluate(self, bundle: ModelBundle, features: FeatureSet) -> EvalReport:
        """Accuracy, per-class accuracy and confusion matrix of a bundle on labeled data."""
        if features.size == 0:
            raise DatasetError("test set is empty")
        if features.features.shape[1] != bundle.dictionary.dim:
            raise DatasetError(
                "feature width does not match the bundle",
                {"M": bundle.dictionary.dim, "got": features.features.shape[1]},
            )
        n_classes = bundle.dictionary.n_classes
        predicted = svm_service.predict(bundle.svm, encode(features.features, bundle.dictionary, bundle.hyperparams))
        truth = features.labels
        return EvalReport(
            accuracy=svm_service.accuracy(truth, predicted),
            per_class_accuracy=svm_service.per_class_accuracy(truth, predicted, n_classes),
            confusion=svm_service.confusion_matrix(truth, predicted, n_classes).tolist(),
            test_count=int(truth.size),
        )

    def baseline_accuracy(
        self,
        train: Tuple[np.ndarray, np.ndarray],
        test: Tuple[np.ndarray, np.ndarray],
        n_classes: int,
        config: ExperimentConfig,
        seed: int,
    ) -> float:
        """Linear SVM directly on l2-normalized features."""
        F_train, F_test = l2_normalize_rows(train[0]), l2_normalize_rows(test[0])
        c_svm = svm_service.select_C(F_train, train[1], config.c_grid, config.splits.resample_count, seed, n_classes)
        model = svm_service.train_ova(F_train, train[1], c_svm, n_classes, seed)
        return svm_service.accuracy(test[1], svm_service.predict(model, F_test))

    def experiment_splits(self, labels: np.ndarray, config: ExperimentConfig) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Stratified, disjoint train/test splits shared by every method."""
        splitter = StratifiedShuffleSplit(
            n_splits=config.splits.split_count,
            train_size=config.splits.train_fraction,
            random_state=config.seed,
        )
        try:
            splits = list(splitter.split(np.zeros((labels.size, 1)), labels))
        except ValueError as e:
            raise DatasetError("cannot build stratified splits", {"reason": str(e)})
        classes = set(np.unique(labels).tolist())
        for train, test in splits:
            if np.intersect1d(train, test).size or set(np.unique(labels[train]).tolist()) != classes:
                raise DatasetError("split is not disjoint and stratified")
        return splits

    def prepare_matrices(
        self, config: ExperimentConfig, n_jobs: int = 1
    ) -> Tuple[Dict[str, np.ndarray], np.ndarray, int, FeaturePipelineConfig]:
        """
        Feature matrices per method and the label vector.

        A feature file yields only the dictionary method; a chord dataset (the desk
        preset when none is configured) also yields every baseline.
        """
        if config.features_path:
            features = model_store.load_features(config.features_path)
            if config.baselines:
                logger.info("Feature file given; baselines need audio and are skipped")
            return {DICTIONARY_METHOD: features.features}, features.labels, features.n_classes, features.pipeline

        dataset_config = config.dataset or chord_service.desk_config(seed=config.seed)
        clips = chord_service.generate_dataset(dataset_config, n_jobs)
        pipelines = [config.pipeline] + [
            config.pipeline.with_kind(kind, config.pipeline.dim) for kind in config.baselines
        ]
        matrices = feature_service.feature_matrices([item.clip for item in clips], pipelines, n_jobs)
        methods = [DICTIONARY_METHOD] + [BASELINE_METHODS[kind] for kind in config.baselines]
        labels = np.array([item.label for item in clips], dtype=np.int64)
        return dict(zip(methods, matrices)), labels, chord_service.n_classes, config.pipeline

    def run_experiment(self, config: ExperimentConfig, n_jobs: int = 1) -> ExperimentReport:
        """Split, train and test every method on identical splits."""
        matrices, labels, n_classes, pipeline = self.prepare_matrices(config, n_jobs)
        splits = self.experiment_splits(labels, config)
        logger.info(
            f"Running {len(splits)} splits over {labels.size} signals and methods {list(matrices)}"
        )
        tasks = [
            (s, train, test, matrices, labels, n_classes, pipeline, config)
            for s, (train, test) in enumerate(splits)
        ]
        outcomes = run_jobs(_split_task, tasks, n_jobs)

        methods = [
            MethodResult(method=name, accuracies=[outcome[0][name] for outcome in outcomes])
            for name in matrices
        ]
        for result in methods:
            logger.info(f"{result.method}: {result.formatted}")
        return ExperimentReport(
            methods=methods,
            similarity=outcomes[0][1],
            selected_params=[outcome[2] for outcome in outcomes],
        )

    def run_split(
        self,
        split_index: int,
        train: np.ndarray,
        test: np.ndarray,
        matrices: Dict[str, np.ndarray],
        labels: np.ndarray,
        n_classes: int,
        pipeline: FeaturePipelineConfig,
        config: ExperimentConfig,
    ) -> Tuple[Dict[str, float], List[List[float]], Dict[str, float]]:
        """Train and test every method on one split."""
        seed = derive_seed(config.seed, split_index)
        X = matrices[DICTIONARY_METHOD]
        train_set = FeatureSet(features=X[train], labels=labels[train], pipeline=pipeline, n_classes=n_classes)
        test_set = FeatureSet(features=X[test], labels=labels[test], pipeline=pipeline, n_classes=n_classes)

        result = self.train(train_set, config, seed=config.seed, split_index=split_index)
        accuracies = {DICTIONARY_METHOD: self.evaluate(result.bundle, test_set).accuracy}
        for name, matrix in matrices.items():
            if name != DICTIONARY_METHOD:
                accuracies[name] = self.baseline_accuracy(
                    (matrix[train], labels[train]), (matrix[test], labels[test]), n_classes, config, seed
                )
        similarity = dictionary_service.dictionary_similarity(result.bundle.dictionary)
        logger.info(f"Split {split_index}: " + ", ".join(f"{k}={v:.3f}" for k, v in accuracies.items()))
        return accuracies, similarity.tolist(), result.selected_params

    def write_training_outputs(self, result: TrainingResult, out_dir: str) -> Path:
        out = Path(out_dir)
        bundle_path = out / "model.sdlm"
        model_store.save_bundle(result.bundle, str(bundle_path))
        model_store.save_trace_csv(result.trace, str(out / "trace.csv"))
        rows = [
            [r.index, r.params["atoms_per_class"], r.params["lam"], r.params["gamma1"], r.params["gamma2"],
             r.best_c, r.validation_mean]
            for r in result.grid_results
        ]
        model_store.save_rows_csv(
            ["index", "atoms_per_class", "lambda", "gamma1", "gamma2", "best_c", "validation_mean"],
            rows, str(out / "grid_search.csv"),
        )
        return bundle_path

    def write_eval_outputs(self, report: EvalReport, out_dir: str) -> None:
        out = Path(out_dir)
        n_classes = len(report.per_class_accuracy)
        model_store.save_rows_csv(
            ["class", "accuracy"],
            [[c + 1, acc] for c, acc in enumerate(report.per_class_accuracy)],
            str(out / "per_class_accuracy.csv"),
        )
        model_store.save_matrix_csv(
            np.array(report.confusion), str(out / "confusion.csv"),
            header=[f"pred_{c}" for c in range(1, n_classes + 1)],
        )
        model_store.save_rows_csv(["accuracy", "test_count"], [[report.accuracy, report.test_count]], str(out / "metrics.csv"))

    def write_similarity(self, S: np.ndarray, out_dir: str, name: str = "similarity") -> None:
        out = Path(out_dir)
        n_classes = S.shape[0]
        model_store.save_matrix_csv(
            S, str(out / f"{name}.csv"), header=[f"class_{c}" for c in range(1, n_classes + 1)]
        )
        summary = dictionary_service.similarity_summary(S)
        model_store.save_rows_csv(
            ["diagonal_mean", "off_diagonal_mean", "diagonal_dominance"],
            [[summary.diagonal_mean, summary.off_diagonal_mean, summary.diagonal_dominance]],
            str(out / f"{name}_summary.csv"),
        )

    def write_report(self, report: ExperimentReport, out_dir: str) -> Path:
        """Comparison table with one row per method, plus the first split's similarity."""
        out = Path(out_dir)
        split_count = len(report.methods[0].accuracies) if report.methods else 0
        header = ["method", "mean", "std", "formatted"] + [f"split_{s + 1}" for s in range(split_count)]
        rows = [[m.method, m.mean, m.std, m.formatted] + list(m.accuracies) for m in report.methods]
        path = out / "report.csv"
        model_store.save_rows_csv(header, rows, str(path))
        if report.similarity is not None:
            self.write_similarity(np.array(report.similarity), str(out))
        if report.selected_params:
            keys = ["atoms_per_class", "lam", "gamma1", "gamma2", "c_svm"]
            model_store.save_rows_csv(
                ["split"] + keys,
                [[s + 1] + [p[k] for k in keys] for s, p in enumerate(report.selected_params)],
                str(out / "selected_params.csv"),
            )
        return path

    def load_config(self, path: str) -> ExperimentConfig:
        """Parse a JSON or YAML experiment config."""
        config_path = Path(path)
        try:
            text = config_path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError("cannot read config file", {"path": str(path), "reason": str(e)})
        try:
            if config_path.suffix.lower() in (".yaml", ".yml"):
                return ExperimentConfig.parse_obj(yaml.safe_load(text) or {})
            return ExperimentConfig.parse_raw(text)
        except (ValidationError, yaml.YAMLError, ValueError) as e:
            logger.error(f"Invalid experiment config {path}: {e}")
            raise ConfigError("invalid experiment config", {"path": str(path), "reason": str(e)})


def _split_task(split_index, train, test, matrices, labels, n_classes, pipeline, config):
    return experiment_service.run_split(split_index, train, test, matrices, labels, n_classes, pipeline, config)


# Global experiment service instance
experiment_service = ExperimentService()
