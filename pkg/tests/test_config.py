"""Tests for environment settings and tolerances (src/config.py)."""

import pytest

from src.config import DEFAULT_TOLERANCES, VERSION, Tolerances
from src.errors import ConfigError


class TestTolerances:
    def test_defaults(self):
        tol = Tolerances()
        assert tol.heat_slack == 0.05
        assert tol.noise_floor == 1e-10
        assert tol.cluster_factor == 5.0
        assert tol.envelope_v == 8.0
        assert tol.envelope_u == 2.0
        assert tol.coefficient_ceiling == 10.0
        assert tol.kernel_margin == 2.0

    def test_overrides_return_new_instance(self):
        tol = DEFAULT_TOLERANCES.with_overrides({"heat_slack": 0.1, "cluster_factor": 4})
        assert tol.heat_slack == 0.1
        assert tol.cluster_factor == 4.0
        assert DEFAULT_TOLERANCES.heat_slack == 0.05

    def test_empty_overrides(self):
        assert DEFAULT_TOLERANCES.with_overrides(None) is DEFAULT_TOLERANCES
        assert DEFAULT_TOLERANCES.with_overrides({}) is DEFAULT_TOLERANCES

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as excinfo:
            DEFAULT_TOLERANCES.with_overrides({"slack": 0.1})
        assert excinfo.value.key == "tolerances.slack"

    @pytest.mark.parametrize("value", ["0.1", True, None])
    def test_must_be_number(self, value):
        with pytest.raises(ConfigError, match="must be a number"):
            DEFAULT_TOLERANCES.with_overrides({"heat_slack": value})

    @pytest.mark.parametrize("value", [0, -1e-3])
    def test_must_be_positive(self, value):
        with pytest.raises(ConfigError, match="must be positive"):
            DEFAULT_TOLERANCES.with_overrides({"noise_floor": value})

    def test_as_dict_covers_every_field(self):
        d = DEFAULT_TOLERANCES.as_dict()
        assert len(d) == 15
        assert Tolerances(**d) == DEFAULT_TOLERANCES


def test_version_is_semver():
    parts = VERSION.split(".")
    assert len(parts) == 3
    assert all(p.isdigit() for p in parts)
