"""
Tests for the SDLM0001 container and the CSV exports.
"""

import json
import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.models.audio import FeatureKind, FeaturePipelineConfig
from app.models.bundle import FeatureSet, ModelBundle
from app.models.classifier import LinearSvmModel
from app.models.dictionary import DictionarySet, FitTrace
from app.services.model_store import model_store, MAGIC, PREFIX_SIZE
from app.utils.errors import StoreError
from tests.conftest import make_bundle


def _rewrite_header(path: Path, **changes) -> None:
    blob = path.read_bytes()
    (length,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + length])
    header.update(changes)
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path.write_bytes(MAGIC + struct.pack("<Q", len(encoded)) + encoded + blob[16 + length:])


def _assert_same_bundle(a: ModelBundle, b: ModelBundle) -> None:
    assert np.array_equal(a.dictionary.atoms, b.dictionary.atoms)
    assert np.array_equal(a.svm.weights, b.svm.weights)
    assert np.array_equal(a.svm.biases, b.svm.biases)
    assert a.svm.c_svm == b.svm.c_svm
    assert a.dictionary.n_classes == b.dictionary.n_classes
    assert a.hyperparams == b.hyperparams
    assert a.pipeline == b.pipeline


class TestBundle:
    @settings(max_examples=100, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2 ** 16),
        n_classes=st.integers(min_value=1, max_value=4),
        atoms_per_class=st.integers(min_value=1, max_value=3),
    )
    def test_bit_exact_round_trip(self, seed, n_classes, atoms_per_class):
        bundle = make_bundle(seed, n_classes, atoms_per_class)
        with tempfile.TemporaryDirectory() as tmp:
            path = str(Path(tmp) / "model.sdlm")
            model_store.save_bundle(bundle, path)
            _assert_same_bundle(model_store.load_bundle(path), bundle)

    def test_resave_is_byte_identical(self, tmp_path, bundle):
        first, second = tmp_path / "a.sdlm", tmp_path / "b.sdlm"
        model_store.save_bundle(bundle, str(first))
        model_store.save_bundle(model_store.load_bundle(str(first)), str(second))
        assert first.read_bytes() == second.read_bytes()

    def test_layout(self, tmp_path, bundle):
        path = tmp_path / "model.sdlm"
        model_store.save_bundle(bundle, str(path))
        blob = path.read_bytes()
        assert blob[:8] == b"SDLM0001"
        (length,) = struct.unpack("<Q", blob[8:16])
        header = json.loads(blob[16:16 + length])
        assert header["payload"] == "bundle"
        assert header["version"] == 1
        assert "lambda" in header["hyperparams"]
        assert [a["name"] for a in header["arrays"]] == ["atoms", "weights", "biases"]
        n_values = sum(int(np.prod(a["shape"])) for a in header["arrays"])
        assert len(blob) == PREFIX_SIZE + length + 8 * n_values

    def test_wrong_magic(self, tmp_path, bundle):
        path = tmp_path / "model.sdlm"
        model_store.save_bundle(bundle, str(path))
        blob = bytearray(path.read_bytes())
        blob[0:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(StoreError, match="not an SDLM file"):
            model_store.load_bundle(str(path))

    def test_truncated_payload(self, tmp_path, bundle):
        path = tmp_path / "model.sdlm"
        model_store.save_bundle(bundle, str(path))
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(StoreError, match="payload size mismatch"):
            model_store.load_bundle(str(path))

    def test_truncated_header(self, tmp_path, bundle):
        path = tmp_path / "model.sdlm"
        model_store.save_bundle(bundle, str(path))
        path.write_bytes(path.read_bytes()[:30])
        with pytest.raises(StoreError, match="truncated header"):
            model_store.load_bundle(str(path))

    def test_unsupported_version(self, tmp_path, bundle):
        path = tmp_path / "model.sdlm"
        model_store.save_bundle(bundle, str(path))
        _rewrite_header(path, version=2)
        with pytest.raises(StoreError, match="unsupported version"):
            model_store.load_bundle(str(path))

    def test_atom_norm_violation(self, tmp_path):
        bundle = make_bundle(n_classes=2, atoms_per_class=1)
        atoms = bundle.dictionary.atoms.copy()
        atoms[:, 0] *= 1.01 / np.linalg.norm(atoms[:, 0])
        broken = bundle.copy(update={"dictionary": DictionarySet(atoms=atoms, n_classes=2)})
        path = tmp_path / "model.sdlm"
        model_store.save_bundle(broken, str(path))
        with pytest.raises(StoreError, match="atom norm exceeds the unit bound"):
            model_store.load_bundle(str(path))

    def test_features_file_is_not_a_bundle(self, tmp_path, toy_features):
        path = tmp_path / "features.sdlm"
        model_store.save_features(toy_features, str(path))
        with pytest.raises(StoreError, match="unexpected payload kind"):
            model_store.load_bundle(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(StoreError):
            model_store.load_bundle(str(tmp_path / "absent.sdlm"))


class TestFeatures:
    def test_round_trip(self, tmp_path, toy_features):
        path = tmp_path / "features.sdlm"
        model_store.save_features(toy_features, str(path))
        loaded = model_store.load_features(str(path))
        assert np.array_equal(loaded.features, toy_features.features)
        assert np.array_equal(loaded.labels, toy_features.labels)
        assert loaded.labels.dtype == np.int64
        assert loaded.pipeline == toy_features.pipeline
        assert loaded.n_classes == 3

    def test_chroma_pipeline_survives(self, tmp_path):
        pipeline = FeaturePipelineConfig(kind=FeatureKind.CHROMA, window_size=1024, hop=128)
        features = FeatureSet(features=np.eye(12)[:4], labels=[1, 2, 1, 2], pipeline=pipeline, n_classes=2)
        path = tmp_path / "chroma.sdlm"
        model_store.save_features(features, str(path))
        assert model_store.load_features(str(path)).pipeline.kind == FeatureKind.CHROMA

    def test_bundle_is_not_a_feature_file(self, tmp_path, bundle):
        path = tmp_path / "model.sdlm"
        model_store.save_bundle(bundle, str(path))
        with pytest.raises(StoreError, match="unexpected payload kind"):
            model_store.load_features(str(path))


class TestCsv:
    def test_identity_matrix(self, tmp_path):
        path = tmp_path / "m.csv"
        model_store.save_matrix_csv(np.eye(2), str(path))
        assert path.read_text() == "col_1,col_2\n1,0\n0,1\n"

    def test_values_parse_back_exactly(self, tmp_path, rng):
        matrix = rng.standard_normal((4, 3)) * 10.0 ** rng.integers(-8, 8, (4, 3))
        path = tmp_path / "m.csv"
        model_store.save_matrix_csv(matrix, str(path))
        assert np.array_equal(model_store.load_matrix_csv(str(path)), matrix)

    def test_empty_trace_has_only_a_header(self, tmp_path):
        path = tmp_path / "trace.csv"
        model_store.save_trace_csv(FitTrace(), str(path))
        assert path.read_text() == "iteration,J,J1,J2,J3,J4,J5,step,backtracks,kkt_max\n"

    def test_integers_and_strings(self, tmp_path):
        path = tmp_path / "rows.csv"
        model_store.save_rows_csv(["name", "count", "value"], [["chroma", 3, 0.5]], str(path))
        assert path.read_text().splitlines()[1] == "chroma,3,0.5"


def test_svm_model_rejects_mismatched_biases():
    with pytest.raises(ValueError):
        LinearSvmModel(weights=np.zeros((2, 3)), biases=np.zeros(3), c_svm=1.0)
