import pytest

from cvsheet.config import RunConfig, format_modes, parse_config, parse_modes
from cvsheet.errors import ValidationError
from cvsheet.evolution import ModeSpec


class TestDefaults:
    """Every key has a default and defaults validate."""

    def test_empty_text_gives_defaults(self):
        assert parse_config("") == RunConfig()

    def test_default_resolution(self):
        c = RunConfig()
        assert (c.K, c.M) == (16, 33)
        assert c.integrator == "rk4"


class TestParsing:
    """Values, sections and round trips."""

    def test_values_override_defaults(self):
        c = parse_config("[grid]\nK = 4\nM = 9\n[time]\ndt = 0.02\nintegrator = picard\n"
                         "[physics]\nU_plus = 0.5, 0\nperturbation = 1 0 1e-3; 0 1 0.1+0.2j 0 0 1e-4\n")
        assert (c.K, c.M, c.dt, c.integrator) == (4, 9, 0.02, "picard")
        assert c.U_plus == (0.5, 0.0)
        assert c.perturbation == (ModeSpec((1, 0), 1e-3), ModeSpec((0, 1), 0.1 + 0.2j, 0, 0, 1e-4))

    def test_round_trip(self):
        c = RunConfig(K=5, M=11, U_minus=(-0.25, 0.125), perturbation=(ModeSpec((1, -1), 1e-3j, 2e-3),),
                      norm_rho=(0.05, 0.2), clean_divergence=True, snapshot_every=3)
        assert parse_config(c.to_text()) == c

    def test_mode_format_round_trip(self):
        modes = (ModeSpec((2, 1), 0.5, -1e-3j, 0.25, 1 + 1j),)
        assert parse_modes(format_modes(modes)) == modes

    def test_unknown_key_names_section_and_key(self):
        with pytest.raises(ValidationError, match="grid.Q"):
            parse_config("[grid]\nQ = 3\n")

    def test_unknown_section(self):
        with pytest.raises(ValidationError, match="unknown section"):
            parse_config("[gird]\nK = 3\n")

    def test_malformed_number(self):
        with pytest.raises(ValidationError, match="time.dt"):
            parse_config("[time]\ndt = fast\n")

    def test_malformed_mode(self):
        with pytest.raises(ValidationError, match="perturbation"):
            parse_modes("1 0")


class TestValidation:
    """Out-of-range values name the offending field."""

    @pytest.mark.parametrize("kwargs, field", [
        ({"sigma": 0.7}, "time.sigma"),
        ({"integrator": "picard", "picard_iters": 0}, "time.picard_iters"),
        ({"M": 8}, "grid.M"),
        ({"dt": 0.0}, "time.dt"),
        ({"rho0": 0.2, "norm_rho": (0.1, 0.3)}, "norms.rho"),
        ({"jump_source_variant": "other"}, "solver.jump_source_variant"),
        ({"K": 2, "front_mode": (3, 0)}, "physics.front_mode"),
        ({"K": 2, "perturbation": (ModeSpec((0, 3), 1.0),)}, "physics.perturbation"),
    ])
    def test_rejects(self, kwargs, field):
        with pytest.raises(ValidationError, match=field.replace(".", r"\.")):
            RunConfig(**kwargs)

    def test_settings_carry_tolerances(self):
        s = RunConfig(iter_tol=1e-12, abort_tol=1e-3, symbol_scale=2.0).settings()
        assert s.pressure.iter_tol == 1e-12
        assert s.abort_tol == 1e-3
        assert s.symbol_scale == 2.0
