"""
Tests for settings, logging configuration, error payloads and job helpers.
"""

import pytest
from pydantic import ValidationError

from app.config import Settings, ProtocolConfig, get_logging_config
from app.utils.errors import SDLError, SolverError, StoreError
from app.utils.parallel import derive_seed, run_jobs


def _square(x: int) -> int:
    return x * x


class TestSettings:
    def test_log_level_is_normalized(self):
        assert Settings(LOG_LEVEL="debug").LOG_LEVEL == "DEBUG"

    def test_unknown_log_level(self):
        with pytest.raises(ValidationError):
            Settings(LOG_LEVEL="chatty")

    def test_jobs_must_be_positive(self):
        with pytest.raises(ValidationError):
            Settings(DEFAULT_JOBS=0)

    def test_logging_config_has_both_renderers(self):
        config = get_logging_config()
        assert {"console", "json"} <= set(config["formatters"])

    def test_protocols(self):
        assert ProtocolConfig.get_chord_protocol()["split_count"] == 10
        assert ProtocolConfig.get_optimizer_preset(full=True)["iterations"] == 200


class TestErrors:
    def test_payload(self):
        error = SolverError("non-finite objective", {"iteration": 3})
        assert error.to_dict() == {
            "error": "solver_error", "message": "non-finite objective", "context": {"iteration": 3},
        }
        assert str(error) == "non-finite objective"

    def test_hierarchy(self):
        assert issubclass(StoreError, SDLError)
        assert StoreError("x").context == {}


class TestJobs:
    def test_seeds_are_stable_and_distinct(self):
        assert derive_seed(0, 1) == derive_seed(0, 1)
        assert len({derive_seed(0, k) for k in range(50)}) == 50
        assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)

    @pytest.mark.parametrize("n_jobs", [1, 2])
    def test_results_keep_task_order(self, n_jobs):
        assert run_jobs(_square, [(i,) for i in range(6)], n_jobs) == [0, 1, 4, 9, 16, 25]
