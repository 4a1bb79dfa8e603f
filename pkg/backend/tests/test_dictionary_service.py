"""
Tests for the supervised objective, its gradient and the alternating optimizer.
"""

import numpy as np
import pytest

from app.models.dictionary import DictionarySet, HyperParams, KsvdParams
from app.services.dictionary_service import dictionary_service
from app.services.ksvd_service import ksvd_service
from app.utils.errors import SolverError
from tests.conftest import random_dictionary


def _hyper(**kw) -> HyperParams:
    values = dict(mu=1.0, lam=0.1, gamma1=0.1, gamma2=0.1, atoms_per_class=2, iterations=20, eta0=1e-3)
    values.update(kw)
    return HyperParams(**values)


def _problem(seed: int, dim: int = 6, n_classes: int = 3, block: int = 2, per_class: int = 4):
    rng = np.random.default_rng(seed)
    D = random_dictionary(rng, dim, n_classes, block)
    y = np.repeat(np.arange(1, n_classes + 1), per_class)
    X = rng.standard_normal((y.size, dim))
    A = rng.standard_normal((y.size, D.n_atoms)) * (rng.random((y.size, D.n_atoms)) < 0.6)
    return D, A, X, y


def _coherent_classes(seed: int = 0, dim: int = 8, n_classes: int = 3, per_class: int = 12):
    """Classes that share a common spectral component plus their own two directions."""
    rng = np.random.default_rng(seed)
    shared = rng.standard_normal(dim)
    shared /= np.linalg.norm(shared)
    rows, labels = [], []
    for c in range(1, n_classes + 1):
        own = rng.standard_normal((2, dim))
        for _ in range(per_class):
            x = 0.8 * shared + rng.uniform(0.2, 1.0, 2) @ own + 0.05 * rng.standard_normal(dim)
            rows.append(x / np.linalg.norm(x))
            labels.append(c)
    return np.array(rows), np.array(labels)


class TestObjective:
    def test_zero_codes(self, rng):
        D = random_dictionary(rng, 4, 2, 2)
        X = rng.standard_normal((3, 4))
        terms = dictionary_service.objective_terms(D, np.zeros((3, 4)), X, np.array([1, 2, 1]), _hyper(gamma2=0.0))
        energy = float(np.sum(X ** 2))
        assert terms.J1 == pytest.approx(energy)
        assert terms.J2 == pytest.approx(energy)
        assert terms.J3 == 0.0
        assert terms.J4 == 0.0

    def test_orthogonal_classes_are_incoherent(self):
        D = DictionarySet(atoms=np.eye(2), n_classes=2)
        terms = dictionary_service.objective_terms(D, np.zeros((1, 2)), np.zeros((1, 2)), np.array([1]), _hyper())
        assert terms.J5 == 0.0

    def test_shared_atom_counts_both_orders(self):
        d = np.array([[0.6], [0.8]])
        D = DictionarySet(atoms=np.hstack([d, d]), n_classes=2)
        terms = dictionary_service.objective_terms(D, np.zeros((1, 2)), np.zeros((1, 2)), np.array([1]), _hyper())
        assert terms.J5 == pytest.approx(2.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_weighted_sum(self, seed):
        D, A, X, y = _problem(seed)
        h = _hyper(mu=0.7, lam=0.3, gamma1=0.2, gamma2=0.5)
        terms = dictionary_service.objective_terms(D, A, X, y, h)
        assert terms.J == pytest.approx(terms.recomposed, rel=1e-12)

    def test_dimension_mismatch(self, rng):
        D = random_dictionary(rng, 4, 2, 2)
        with pytest.raises(SolverError, match="dimension mismatch"):
            dictionary_service.objective_terms(D, np.zeros((3, 5)), np.zeros((3, 4)), np.ones(3), _hyper())


class TestGradient:
    def test_zero_codes_leave_only_incoherence(self, rng):
        D = random_dictionary(rng, 5, 2, 2)
        X = rng.standard_normal((2, 5))
        h = _hyper(gamma2=0.4)
        grad = dictionary_service.grad_dictionary(1, D, np.zeros((2, 4)), X, np.array([1, 2]), h)
        other = dictionary_service.grad_dictionary(2, D, np.zeros((2, 4)), X, np.array([1, 2]), h)
        np.testing.assert_allclose(other, 0.4 * 4.0 * D.block(1) @ D.block(1).T @ D.block(2), atol=1e-12)
        np.testing.assert_allclose(grad, 0.4 * 4.0 * D.block(2) @ D.block(2).T @ D.block(1), atol=1e-12)

    def test_single_sample_reconstruction(self):
        d = np.array([0.6, 0.8, 0.0])
        x = np.array([1.0, 2.0, 3.0])
        D = DictionarySet(atoms=d[:, None], n_classes=1)
        h = _hyper(mu=0.0, gamma2=0.0)
        grad = dictionary_service.grad_dictionary(1, D, np.ones((1, 1)), x[None, :], np.array([1]), h)
        np.testing.assert_allclose(grad[:, 0], -2.0 * x + 2.0 * d)

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        dim, n_classes, block = int(rng.integers(2, 7)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        mu, gamma2 = float(rng.choice([0.0, 1.0])), float(rng.choice([0.0, 0.3, 1.0]))
        D, A, X, y = _problem(seed, dim, n_classes, block)
        h = _hyper(mu=mu, gamma2=gamma2, lam=0.3, gamma1=0.2)
        step = 1e-6
        for p in D.class_labels:
            analytic = dictionary_service.grad_dictionary(p, D, A, X, y, h)
            numeric = np.zeros_like(analytic)
            offset = D.block_slice(p).start
            for i in range(dim):
                for j in range(block):
                    plus, minus = D.atoms.copy(), D.atoms.copy()
                    plus[i, offset + j] += step
                    minus[i, offset + j] -= step
                    J_plus = dictionary_service.objective_terms(
                        DictionarySet(atoms=plus, n_classes=n_classes), A, X, y, h).J
                    J_minus = dictionary_service.objective_terms(
                        DictionarySet(atoms=minus, n_classes=n_classes), A, X, y, h).J
                    numeric[i, j] = (J_plus - J_minus) / (2 * step)
            scale = max(np.linalg.norm(analytic), 1e-8)
            assert np.linalg.norm(numeric - analytic) / scale < 1e-5


class TestProjection:
    def test_long_atom_is_shrunk(self):
        out = dictionary_service.prox_unit_columns(np.array([[2.0], [0.0]]))
        np.testing.assert_array_equal(out.atoms, [[1.0], [0.0]])

    def test_short_atom_is_untouched(self):
        atoms = np.array([[0.3, 0.0], [0.4, 0.0]])
        out = dictionary_service.prox_unit_columns(atoms)
        np.testing.assert_array_equal(out.atoms, atoms)

    def test_keeps_class_structure(self, rng):
        D = DictionarySet(atoms=3.0 * rng.standard_normal((4, 6)), n_classes=3)
        out = dictionary_service.prox_unit_columns(D)
        assert out.n_classes == 3
        assert out.is_feasible()
        np.testing.assert_allclose(out.atom_norms(), 1.0)

    def test_non_finite(self):
        with pytest.raises(SolverError):
            dictionary_service.prox_unit_columns(np.array([[np.nan], [0.0]]))


class TestFit:
    @pytest.fixture
    def toy(self):
        X, y = _coherent_classes(seed=3, n_classes=2, per_class=10)
        D0 = ksvd_service.init_class_dictionaries(X, y, 2, KsvdParams(iterations=5, seed=1))
        return X, y, D0

    def test_trace_is_monotone_and_feasible(self, toy):
        X, y, D0 = toy
        h = _hyper(iterations=50, alpha=0.5, eta0=1e-3)
        D, trace = dictionary_service.fit(X, y, h, D0)
        objectives = trace.objectives
        assert objectives
        assert objectives[0] <= trace.initial_objective
        assert all(b <= a for a, b in zip(objectives, objectives[1:]))
        assert D.is_feasible()
        for row in trace.rows:
            assert row.objective.J == pytest.approx(row.objective.recomposed, rel=1e-9)
            assert row.step <= h.eta0

    def test_reconstruction_improves_without_penalties(self, toy):
        X, y, D0 = toy
        h = _hyper(mu=0.0, gamma1=0.0, gamma2=0.0, lam=1e-6, iterations=20)
        _, trace = dictionary_service.fit(X, y, h, D0)
        assert trace.rows[-1].objective.J1 <= trace.initial_objective

    def test_fit_is_deterministic(self, toy):
        X, y, D0 = toy
        h = _hyper(iterations=5)
        first, _ = dictionary_service.fit(X, y, h, D0)
        second, _ = dictionary_service.fit(X, y, h, D0)
        np.testing.assert_array_equal(first.atoms, second.atoms)

    def test_nothing_to_improve_hits_the_backtrack_cap(self, rng):
        D0 = random_dictionary(rng, 4, 2, 2)
        h = _hyper(gamma2=0.0, iterations=10, backtrack_cap=5)
        D, trace = dictionary_service.fit(np.zeros((4, 4)), np.array([1, 1, 2, 2]), h, D0)
        assert trace.stop_reason == "backtrack_cap"
        assert trace.converged
        assert trace.rows == []
        np.testing.assert_array_equal(D.atoms, D0.atoms)

    def test_iteration_budget(self, toy):
        X, y, D0 = toy
        _, trace = dictionary_service.fit(X, y, _hyper(iterations=3, early_stop=False), D0)
        assert len(trace.rows) == 3
        assert trace.stop_reason == "max_iterations"
        assert not trace.converged

    def test_infeasible_start(self, rng):
        D0 = DictionarySet(atoms=2.0 * np.eye(3), n_classes=3)
        with pytest.raises(SolverError, match="unit atom-norm"):
            dictionary_service.fit(rng.standard_normal((3, 3)), np.array([1, 2, 3]), _hyper(), D0)

    def test_non_finite_signals(self, rng):
        D0 = random_dictionary(rng, 3, 1, 2)
        X = np.ones((2, 3))
        X[0, 0] = np.inf
        with pytest.raises(SolverError):
            dictionary_service.fit(X, np.array([1, 1]), _hyper(), D0)

    def test_incoherence_penalty_reduces_cross_similarity(self):
        X, y = _coherent_classes(seed=0)
        D0 = ksvd_service.init_class_dictionaries(X, y, 2, KsvdParams(iterations=5, seed=0))
        base = dict(iterations=30, eta0=1e-2, early_stop=False)
        plain, _ = dictionary_service.fit(X, y, _hyper(gamma2=0.0, **base), D0)
        penalized, _ = dictionary_service.fit(X, y, _hyper(gamma2=0.3, **base), D0)

        def off_diagonal(D):
            return dictionary_service.similarity_summary(dictionary_service.dictionary_similarity(D)).off_diagonal_mean

        assert off_diagonal(penalized) < off_diagonal(plain)


class TestSimilarity:
    def test_orthonormal_blocks(self):
        S = dictionary_service.dictionary_similarity(DictionarySet(atoms=np.eye(4), n_classes=2))
        np.testing.assert_allclose(S, np.sqrt(2.0) * np.eye(2))

    def test_symmetric(self, rng):
        S = dictionary_service.dictionary_similarity(random_dictionary(rng, 5, 3, 2))
        assert np.array_equal(S, S.T)
        assert np.all(S >= 0)

    def test_summary(self):
        summary = dictionary_service.similarity_summary(np.array([[2.0, 1.0], [3.0, 1.0]]))
        assert summary.diagonal_mean == pytest.approx(1.5)
        assert summary.off_diagonal_mean == pytest.approx(2.0)
        assert summary.diagonal_dominance == pytest.approx(0.5)

    def test_summary_needs_square_input(self):
        with pytest.raises(SolverError):
            dictionary_service.similarity_summary(np.ones((2, 3)))
