import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crpslearn.grid import (
    ExpertPanel,
    ObservationStream,
    ProbGrid,
    ValidationError,
    WeightSurface,
    validate_panel,
)


class TestProbGrid:
    def test_percentiles(self):
        g = ProbGrid.percentiles()
        assert g.size == 99
        assert g.probs[0] == 0.01 and g.probs[-1] == 0.99

    def test_equidistant(self):
        np.testing.assert_allclose(ProbGrid.equidistant(3).probs, [0.25, 0.5, 0.75])

    @pytest.mark.parametrize("probs, msg", [
        ((0.5, 0.5), "grid not strictly increasing"),
        ((0.6, 0.4), "grid not strictly increasing"),
        ((0.0, 0.5), "inside"),
        ((0.5, 1.0), "inside"),
        ((), "non-empty"),
        ((0.2, np.nan), "non-finite"),
    ])
    def test_rejects(self, probs, msg):
        with pytest.raises(ValidationError, match=msg):
            ProbGrid(probs)

    def test_immutable(self):
        g = ProbGrid([0.1, 0.9])
        with pytest.raises(ValueError):
            g.probs[0] = 0.2

    @given(st.lists(st.floats(min_value=1e-9, max_value=1 - 1e-9), min_size=1, max_size=50, unique=True))
    def test_json_round_trip_bit_exact(self, probs):
        g = ProbGrid(sorted(probs))
        back = ProbGrid.from_json(g.to_json())
        assert back == g
        assert back.probs.tobytes() == g.probs.tobytes()


class TestWeightSurface:
    def test_uniform(self):
        w = WeightSurface.uniform(4, 3)
        np.testing.assert_allclose(w.weights.sum(axis=1), 1.0)

    def test_convex_rejects_negative(self):
        with pytest.raises(ValidationError, match="negative"):
            WeightSurface([[1.5, -0.5]])

    def test_affine_allows_negative(self):
        assert WeightSurface([[1.5, -0.5]], mode="affine").shape == (1, 2)

    def test_row_sum(self):
        with pytest.raises(ValidationError, match="sum to one"):
            WeightSurface([[0.5, 0.4]])
        WeightSurface([[0.5, 0.4]], mode="linear")

    def test_unknown_mode(self):
        with pytest.raises(ValidationError, match="mode"):
            WeightSurface([[1.0]], mode="simplex")


class TestPanelAndStream:
    def test_non_finite_panel_names_index(self):
        v = np.zeros((2, 3, 2))
        v[1, 2, 0] = np.inf
        with pytest.raises(ValidationError, match=r"\(1, 2, 0\)"):
            ExpertPanel(v)

    def test_non_finite_observation(self):
        with pytest.raises(ValidationError, match="index 2"):
            ObservationStream([0.0, 1.0, np.nan])

    def test_expert_names(self):
        p = ExpertPanel(np.zeros((1, 2, 3)))
        assert p.expert_names == ("expert1", "expert2", "expert3")
        with pytest.raises(ValidationError, match="expert axis"):
            ExpertPanel(np.zeros((1, 2, 3)), ("a", "b"))

    def test_crossing_experts_allowed(self):
        # experts need not be monotone in p
        ExpertPanel(np.array([[[1.0], [0.0]]]))


class TestValidatePanel:
    def test_ok(self):
        panel = ExpertPanel(np.zeros((2, 3, 2)))
        grid = ProbGrid.equidistant(3)
        obs = ObservationStream([0.0, 1.0])
        assert validate_panel(panel, grid, obs) == (panel, grid, obs)

    def test_time_mismatch(self):
        with pytest.raises(ValidationError, match="time axis mismatch"):
            validate_panel(np.zeros((2, 3, 2)), ProbGrid.equidistant(3), np.zeros(5))

    def test_grid_mismatch(self):
        with pytest.raises(ValidationError, match="grid axis mismatch"):
            validate_panel(np.zeros((2, 4, 2)), ProbGrid.equidistant(3), np.zeros(2))

    def test_grid_violation(self):
        with pytest.raises(ValidationError, match="grid not strictly increasing"):
            validate_panel(np.zeros((2, 2, 2)), (0.5, 0.5), np.zeros(2))

    def test_idempotent(self):
        triple = validate_panel(np.ones((2, 3, 2)), ProbGrid.equidistant(3), np.zeros(2))
        again = validate_panel(*triple)
        assert all(a is b for a, b in zip(triple, again))
