import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oodqcd.dist import GaussianMixture
from oodqcd.exceptions import ConfigError, NonFiniteValue, ParseError, SchemaError
from oodqcd.simgen import (
    ChangeScenario,
    TrajectoryPair,
    ade,
    bimodal_scenario,
    error_stream,
    fde,
    late_shift_scenario,
    generate,
    ingest_csv,
    rmse,
)

A = GaussianMixture.single(0, 1)
B = GaussianMixture.single(100, 1)


class TestGenerate:
    def test_change_point_split(self):
        x = generate(ChangeScenario(A, B, gamma=4, length=6), 0)
        assert x.shape == (6,)
        assert np.all(np.abs(x[:3]) < 10) and np.all(x[3:] > 90)

    def test_gamma_one_is_all_post(self):
        assert np.all(generate(ChangeScenario(A, B, gamma=1, length=50), 1) > 90)

    def test_infinite_gamma_is_all_pre(self):
        assert np.all(np.abs(generate(ChangeScenario(A, B, length=50), 1)) < 10)

    def test_gamma_past_end(self):
        assert np.all(np.abs(generate(ChangeScenario(A, B, gamma=100, length=10), 2)) < 10)

    def test_reproducible(self):
        sc = late_shift_scenario()
        np.testing.assert_array_equal(generate(sc, 5), generate(sc, 5))

    def test_chunked_draw_matches_split(self):
        sc = ChangeScenario(A, B, gamma=3, length=1)
        rng = np.random.default_rng(0)
        x = sc.draw(rng, 0, 5)
        assert x.shape == (5,) and np.all(x[2:] > 90)
        y = sc.draw(np.random.default_rng(0), 5, 5)
        assert np.all(y > 90)

    @pytest.mark.parametrize("kw", [{"gamma": 0}, {"gamma": 2.5}, {"length": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            ChangeScenario(A, B, **kw)

    def test_from_dict_preset_and_override(self):
        sc = ChangeScenario.from_dict({"preset": "bimodal", "gamma": "inf", "length": 7})
        assert sc.pre == bimodal_scenario().pre and sc.gamma == math.inf and sc.length == 7
        assert ChangeScenario.from_dict(sc.to_dict()) == sc

    def test_from_dict_errors(self):
        with pytest.raises(ConfigError):
            ChangeScenario.from_dict({"preset": "nope"})
        with pytest.raises(ConfigError):
            ChangeScenario.from_dict({"pre": A.to_dict()})
        with pytest.raises(ConfigError):
            ChangeScenario.from_dict({"pre": A.to_dict(), "post": B.to_dict(), "gamma": "soon"})


class TestMetrics:
    def test_fixture(self):
        pred = np.array([[0.0, 0.0], [3.0, 4.0]])
        pair = TrajectoryPair(pred, np.zeros((2, 2)))
        assert ade(pair) == 2.5
        assert fde(pair) == 5.0
        assert rmse(pair) == pytest.approx(math.sqrt(12.5))

    def test_constant_offset(self):
        t = np.arange(10.0).reshape(5, 2)
        pair = TrajectoryPair(t + [3.0, 4.0], t)
        assert ade(pair) == fde(pair) == rmse(pair) == pytest.approx(5.0)

    def test_perfect_prediction(self):
        t = np.random.default_rng(0).normal(size=(8, 2))
        pair = TrajectoryPair(t, t.copy())
        assert ade(pair) == fde(pair) == rmse(pair) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(
        arrays(float, (6, 2), elements=st.floats(-100, 100)),
        arrays(float, (6, 2), elements=st.floats(-100, 100)),
        st.floats(-1e3, 1e3),
        st.floats(-1e3, 1e3),
    )
    def test_invariants(self, p, t, dx, dy):
        pair = TrajectoryPair(p, t)
        assert ade(pair) >= 0 and fde(pair) >= 0
        assert rmse(pair) >= ade(pair) - 1e-9
        moved = TrajectoryPair(p + [dx, dy], t + [dx, dy])
        assert ade(moved) == pytest.approx(ade(pair), abs=1e-6)
        assert fde(moved) == pytest.approx(fde(pair), abs=1e-6)

    def test_error_stream(self):
        pairs = [TrajectoryPair([[1.0, 0.0]], [[0.0, 0.0]]), TrajectoryPair([[0.0, 2.0]], [[0.0, 0.0]])]
        np.testing.assert_array_equal(error_stream(pairs, "fde"), [1.0, 2.0])
        with pytest.raises(ValueError):
            error_stream(pairs, "mape")

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            TrajectoryPair(np.zeros((3, 2)), np.zeros((4, 2)))
        with pytest.raises(ValueError):
            TrajectoryPair(np.zeros((3, 3)), np.zeros((3, 3)))


def write(tmp_path, text, name="in.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestIngest:
    def test_error_stream(self, tmp_path):
        x = ingest_csv(write(tmp_path, "time,error\n1,0.5\n2,1.5\n3,2.25\n"))
        np.testing.assert_array_equal(x, [0.5, 1.5, 2.25])

    def test_header_only(self, tmp_path):
        assert ingest_csv(write(tmp_path, "time,error\n")).shape == (0,)

    def test_bad_value_reports_row(self, tmp_path):
        with pytest.raises(ParseError) as exc:
            ingest_csv(write(tmp_path, "time,error\n1,0.5\n2,abc\n"))
        assert exc.value.row == 3
        assert "row 3" in str(exc.value)

    def test_non_finite(self, tmp_path):
        with pytest.raises(NonFiniteValue) as exc:
            ingest_csv(write(tmp_path, "time,error\n1,nan\n"))
        assert exc.value.row == 2

    def test_time_gap(self, tmp_path):
        with pytest.raises(ParseError) as exc:
            ingest_csv(write(tmp_path, "time,error\n1,0.5\n3,0.1\n"))
        assert exc.value.row == 3

    def test_missing_column(self, tmp_path):
        with pytest.raises(SchemaError, match="error"):
            ingest_csv(write(tmp_path, "time,value\n1,0.5\n"))
        with pytest.raises(SchemaError, match="true_y"):
            ingest_csv(write(tmp_path, "scene_id,frame,pred_x,pred_y,true_x\n"))

    def test_trajectories(self, tmp_path):
        text = (
            "scene_id,frame,pred_x,pred_y,true_x,true_y\n"
            "a,1,0,0,0,0\n"
            "b,1,1,1,1,1\n"
            "a,2,3,4,0,0\n"
            "b,2,1,1,1,1\n"
        )
        pairs = ingest_csv(write(tmp_path, text))
        assert [p.scene_id for p in pairs] == ["a", "b"]
        np.testing.assert_array_equal(error_stream(pairs, "ade"), [2.5, 0.0])
        np.testing.assert_array_equal(error_stream(pairs, "fde"), [5.0, 0.0])

    def test_trajectory_gap(self, tmp_path):
        text = "scene_id,frame,pred_x,pred_y,true_x,true_y\na,1,0,0,0,0\na,3,0,0,0,0\n"
        with pytest.raises(ParseError):
            ingest_csv(write(tmp_path, text))

    def test_empty_file(self, tmp_path):
        with pytest.raises(SchemaError):
            ingest_csv(write(tmp_path, ""))
