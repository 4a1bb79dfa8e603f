"""
Model store service.
Reads and writes the SDLM0001 container and the CSV exports.

Container layout (all integers little-endian):
    8 bytes   magic b"SDLM0001"
    8 bytes   unsigned header length H
    H bytes   UTF-8 JSON header, keys sorted
    payload   '<f8' row-major arrays in the order of header["arrays"]
"""

import csv
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from app.models.audio import FeaturePipelineConfig
from app.models.bundle import FORMAT_VERSION, ModelBundle, FeatureSet
from app.models.classifier import LinearSvmModel
from app.models.dictionary import DictionarySet, HyperParams, FitTrace
from app.utils.errors import StoreError

logger = logging.getLogger(__name__)

MAGIC = b"SDLM0001"
LENGTH_FORMAT = "<Q"
PREFIX_SIZE = len(MAGIC) + struct.calcsize(LENGTH_FORMAT)
ATOM_NORM_TOLERANCE = 1e-6
TRACE_HEADER = ["iteration", "J", "J1", "J2", "J3", "J4", "J5", "step", "backtracks", "kkt_max"]


def _fmt(value: Any) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return "{:.17g}".format(float(value))


def _model_json(model) -> Dict[str, Any]:
    return json.loads(model.json(by_alias=True))


class ModelStore:
    """Service class for bit-exact persistence."""

    def _write_container(self, path: str, header: Dict[str, Any], arrays: Sequence[Tuple[str, np.ndarray]]) -> None:
        header = dict(header, arrays=[{"name": name, "shape": list(a.shape)} for name, a in arrays])
        encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        blob = b"".join(
            [MAGIC, struct.pack(LENGTH_FORMAT, len(encoded)), encoded]
            + [np.ascontiguousarray(a, dtype="<f8").tobytes(order="C") for _, a in arrays]
        )
        try:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            with open(path, "wb") as f:
                f.write(blob)
        except OSError as e:
            logger.error(f"Failed to write {path}: {e}")
            raise StoreError("cannot write file", {"path": str(path), "reason": str(e)})

    def _read_container(self, path: str, payload: str) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
        try:
            with open(path, "rb") as f:
                blob = f.read()
        except OSError as e:
            raise StoreError("cannot read file", {"path": str(path), "reason": str(e)})

        if len(blob) < PREFIX_SIZE or blob[: len(MAGIC)] != MAGIC:
            raise StoreError("not an SDLM file", {"path": str(path)})
        (header_length,) = struct.unpack(LENGTH_FORMAT, blob[len(MAGIC):PREFIX_SIZE])
        if PREFIX_SIZE + header_length > len(blob):
            raise StoreError("truncated header", {"path": str(path)})
        try:
            header = json.loads(blob[PREFIX_SIZE:PREFIX_SIZE + header_length].decode("utf-8"))
            specs = [(item["name"], tuple(int(n) for n in item["shape"])) for item in header["arrays"]]
        except (UnicodeDecodeError, ValueError, KeyError, TypeError) as e:
            raise StoreError("corrupt header", {"path": str(path), "reason": str(e)})

        version = header.get("version")
        if version != FORMAT_VERSION:
            raise StoreError("unsupported version", {"path": str(path), "version": version})
        if header.get("payload") != payload:
            raise StoreError(
                "unexpected payload kind", {"path": str(path), "expected": payload, "got": header.get("payload")}
            )

        body = blob[PREFIX_SIZE + header_length:]
        sizes = [int(np.prod(shape)) for _, shape in specs]
        if 8 * sum(sizes) != len(body):
            raise StoreError(
                "payload size mismatch",
                {"path": str(path), "expected_bytes": 8 * sum(sizes), "got_bytes": len(body)},
            )
        arrays, offset = {}, 0
        for (name, shape), size in zip(specs, sizes):
            arrays[name] = np.frombuffer(body, dtype="<f8", count=size, offset=offset).reshape(shape).astype(np.float64)
            offset += 8 * size
        return header, arrays

    def save_bundle(self, bundle: ModelBundle, path: str) -> None:
        """Write a trained pipeline."""
        header = {
            "payload": "bundle",
            "version": bundle.version,
            "n_classes": bundle.dictionary.n_classes,
            "c_svm": bundle.svm.c_svm,
            "hyperparams": _model_json(bundle.hyperparams),
            "pipeline": _model_json(bundle.pipeline),
        }
        arrays = [
            ("atoms", bundle.dictionary.atoms),
            ("weights", bundle.svm.weights),
            ("biases", bundle.svm.biases),
        ]
        self._write_container(path, header, arrays)
        logger.info(f"Saved model bundle to {path}")

    def load_bundle(self, path: str) -> ModelBundle:
        """Read a bundle; the atom-norm bound is checked again, never repaired."""
        header, arrays = self._read_container(path, "bundle")
        if set(arrays) != {"atoms", "weights", "biases"}:
            raise StoreError("bundle arrays missing", {"path": str(path), "arrays": sorted(arrays)})

        norms = np.linalg.norm(arrays["atoms"], axis=0) if arrays["atoms"].ndim == 2 else np.zeros(0)
        if norms.size and norms.max() > 1.0 + ATOM_NORM_TOLERANCE:
            raise StoreError(
                "atom norm exceeds the unit bound",
                {"path": str(path), "max_norm": float(norms.max())},
            )
        try:
            return ModelBundle(
                dictionary=DictionarySet(atoms=arrays["atoms"], n_classes=header["n_classes"]),
                svm=LinearSvmModel(weights=arrays["weights"], biases=arrays["biases"], c_svm=header["c_svm"]),
                hyperparams=HyperParams.parse_obj(header["hyperparams"]),
                pipeline=FeaturePipelineConfig.parse_obj(header["pipeline"]),
                version=header["version"],
            )
        except (ValidationError, KeyError) as e:
            raise StoreError("invalid bundle contents", {"path": str(path), "reason": str(e)})

    def save_features(self, features: FeatureSet, path: str) -> None:
        header = {
            "payload": "features",
            "version": FORMAT_VERSION,
            "n_classes": features.n_classes,
            "pipeline": _model_json(features.pipeline),
        }
        arrays = [("features", features.features), ("labels", features.labels.astype(np.float64))]
        self._write_container(path, header, arrays)
        logger.info(f"Saved {features.size} feature rows to {path}")

    def load_features(self, path: str) -> FeatureSet:
        header, arrays = self._read_container(path, "features")
        labels = arrays.get("labels")
        if labels is None or "features" not in arrays:
            raise StoreError("feature arrays missing", {"path": str(path), "arrays": sorted(arrays)})
        if not np.array_equal(labels, np.rint(labels)):
            raise StoreError("labels must be integers", {"path": str(path)})
        try:
            return FeatureSet(
                features=arrays["features"],
                labels=labels.astype(np.int64),
                pipeline=FeaturePipelineConfig.parse_obj(header["pipeline"]),
                n_classes=header["n_classes"],
            )
        except (ValidationError, KeyError) as e:
            raise StoreError("invalid feature file contents", {"path": str(path), "reason": str(e)})

    def save_rows_csv(self, header: Sequence[str], rows: Sequence[Sequence[Any]], path: str) -> None:
        """Headered CSV; numbers carry 17 significant digits."""
        try:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
        except OSError as e:
            logger.error(f"Failed to write {path}: {e}")
            raise StoreError("cannot write file", {"path": str(path), "reason": str(e)})

    def save_matrix_csv(self, matrix: np.ndarray, path: str, header: Sequence[str] = None) -> None:
        matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        header = header or [f"col_{j + 1}" for j in range(matrix.shape[1])]
        self.save_rows_csv(header, matrix.tolist(), path)

    def load_matrix_csv(self, path: str) -> np.ndarray:
        try:
            with open(path, newline="", encoding="utf-8") as f:
                rows: List[List[str]] = list(csv.reader(f))[1:]
        except OSError as e:
            raise StoreError("cannot read file", {"path": str(path), "reason": str(e)})
        return np.array([[float(v) for v in row] for row in rows], dtype=np.float64)

    def save_trace_csv(self, trace: FitTrace, path: str) -> None:
        """One row per accepted iteration: iteration,J,J1..J5,step,backtracks,kkt_max."""
        rows = [
            [row.iteration, row.objective.J, row.objective.J1, row.objective.J2, row.objective.J3,
             row.objective.J4, row.objective.J5, row.step, row.backtracks, row.kkt_max]
            for row in trace.rows
        ]
        self.save_rows_csv(TRACE_HEADER, rows, path)


# Global model store instance
model_store = ModelStore()
