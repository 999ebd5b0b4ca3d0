import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lgm.domain import GridSettings, ModelSpec, PriorSet, validate_dataset
from lgm.errors import (
    BadConfig,
    BadValue,
    EmptyDataset,
    MissingValue,
    NoEvents,
    NonPositiveTime,
    UnknownRegion,
)
from lgm.graph import parse_adjacency

G2 = parse_adjacency("a: b\nb: a")
LOGIT = ModelSpec("logit", ("x",), "iid")
WEIB = ModelSpec("weibull", ("x",), "none")


def rows(**cols):
    n = len(next(iter(cols.values())))
    return [{k: v[i] for k, v in cols.items()} for i in range(n)]


class TestValidate:
    def test_binary_rows(self):
        ds = validate_dataset(rows(region=["a", "b", "a", "b"], x=["0", "1", "1", "0"], y=["1", "0", "0", "1"]), LOGIT, G2)
        assert ds.n == 4 and ds.J == 2
        assert set(ds.region) == {0, 1}
        assert list(ds.y) == [1, 0, 0, 1]
        assert ds.design().shape == (4, 2)
        assert np.all(ds.design()[:, 0] == 1.0)

    def test_column_mapping_input(self):
        ds = validate_dataset({"region": ["a", "b"], "x": [0.5, 1.5], "y": [0, 1]}, LOGIT, G2)
        assert list(ds.covariates[:, 0]) == [0.5, 1.5]

    def test_zero_time(self):
        with pytest.raises(NonPositiveTime):
            validate_dataset(rows(region=["a"], x=[0], time=[0.0], event=[1]), WEIB, G2)

    def test_rescaling(self):
        ds = validate_dataset(rows(region=["a", "b"], x=[1, 0], time=[0.5, 2.0], event=[1, 0]), WEIB, G2)
        assert list(ds.time) == [0.25, 1.0]
        assert ds.time_scale == 2.0
        assert list(ds.event) == [1, 0]
        assert list(ds.covariates[:, 0]) == [1.0, 0.0]

    def test_idempotent(self):
        ds = validate_dataset(rows(region=["a", "b"], x=[1, 0], time=[0.5, 2.0], event=[1, 0]), WEIB, G2)
        again = validate_dataset(ds, WEIB, G2)
        assert np.array_equal(again.time, ds.time) and again.time_scale == ds.time_scale
        assert np.array_equal(again.event, ds.event)
        assert np.array_equal(again.covariates, ds.covariates)

    def test_missing_value_identifies_row_and_column(self):
        with pytest.raises(MissingValue) as exc:
            validate_dataset(rows(region=["a", "b"], x=["1", ""], y=[0, 1]), LOGIT, G2)
        assert "x" in str(exc.value) and "1" in str(exc.value)

    def test_missing_column(self):
        with pytest.raises(MissingValue):
            validate_dataset(rows(region=["a"], y=[0]), LOGIT, G2)

    def test_unknown_region(self):
        with pytest.raises(UnknownRegion):
            validate_dataset(rows(region=["a", "zz"], x=[0, 0], y=[0, 1]), LOGIT, G2)

    def test_no_events(self):
        with pytest.raises(NoEvents):
            validate_dataset(rows(region=["a", "b"], x=[0, 0], time=[1, 2], event=[0, 0]), WEIB, G2)

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            validate_dataset([], LOGIT, G2)

    def test_non_binary_outcome(self):
        with pytest.raises(BadValue):
            validate_dataset(rows(region=["a"], x=[0], y=[2]), LOGIT, G2)

    @given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=30), st.data())
    def test_rescale_properties(self, times, data):
        events = data.draw(st.lists(st.sampled_from([0, 1]), min_size=len(times), max_size=len(times)))
        events[0] = 1
        xs = data.draw(st.lists(st.floats(-5, 5), min_size=len(times), max_size=len(times)))
        raw = {"region": ["a"] * len(times), "x": xs, "time": times, "event": events}
        ds = validate_dataset(raw, WEIB, G2)
        assert ds.time.max() == 1.0 and np.all(ds.time > 0)
        assert list(ds.event) == events
        assert list(ds.covariates[:, 0]) == xs
        again = validate_dataset(ds, WEIB, G2)
        assert np.array_equal(again.time, ds.time) and again.time_scale == ds.time_scale


class TestSpec:
    def test_duplicate_covariates(self):
        with pytest.raises(BadConfig):
            ModelSpec("logit", ("x", "x"))

    def test_unknown_family_or_effect(self):
        with pytest.raises(BadConfig):
            ModelSpec("poisson")
        with pytest.raises(BadConfig):
            ModelSpec("logit", effect="bym")

    @pytest.mark.parametrize("kw", [{"step": 0.0}, {"drop": -1.0}, {"max_points": 0}])
    def test_grid_settings(self, kw):
        with pytest.raises(BadConfig):
            GridSettings(**kw)

    def test_prior_set(self):
        with pytest.raises(BadConfig):
            PriorSet(beta_precision=-1.0)
        with pytest.raises(BadConfig):
            PriorSet(pc_alpha_rate=0.0)

    def test_hyper_dimension(self):
        assert ModelSpec("logit").hyper_names == ()
        assert ModelSpec("logit", effect="iid").hyper_names == ("tau",)
        assert ModelSpec("logit", effect="leroux").hyper_names == ("tau", "phi")
        assert ModelSpec("weibull", effect="leroux").hyper_names == ("tau", "phi", "alpha")
        assert ModelSpec("weibull", effect="leroux", fixed={"phi": 1.0}).constrained

    def test_pinning_rules(self):
        with pytest.raises(BadConfig):
            ModelSpec("logit", effect="iid", fixed={"phi": 0.5})
        with pytest.raises(BadConfig):
            ModelSpec("logit", effect="iid", fixed={"alpha": 1.0})
        with pytest.raises(BadConfig):
            ModelSpec("logit", fixed={"tau": 1.0})
