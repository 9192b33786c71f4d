import csv
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivnonasym.exceptions import DataFormatError, DomainError
from ivnonasym.instrument import (
    FireRecord,
    SmokeIndexConfig,
    TractRecord,
    haversine_km,
    read_fires_csv,
    read_tracts_csv,
    smoke_index,
    threshold_instrument,
)

DATA = Path(__file__).parent / "data"

GOLDEN_TRACTS = [TractRecord("T1", 39.5, -105.0), TractRecord("T2", 34.0, -118.0)]
GOLDEN_FIRES = [
    FireRecord("F1", 40.0, -105.5, 150.0),
    FireRecord("F2", 38.0, -119.5, 5000.0),
    FireRecord("F3", 36.5, -110.0, 99.0),  # below the 100-acre cut
]


def load_golden() -> dict:
    table = {}
    with open(DATA / "instrument_golden.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            table.setdefault(row["variant"], {})[row["tract_id"]] = float(row["z_star"])
    return table


class TestGoldenFixture:
    @pytest.mark.parametrize(
        "variant,w,threshold",
        [
            ("inverse-square", 0.0, 0.01),
            ("inverse-square-west-weighted", 1.5, 0.01),
            ("inverse-linear", 0.0, None),
        ],
    )
    def test_matches_committed_values(self, variant, w, threshold):
        golden = load_golden()[variant]
        cfg = SmokeIndexConfig(variant=variant, threshold=threshold, west_weight=w)
        zstar = smoke_index(GOLDEN_TRACTS, GOLDEN_FIRES, cfg)
        for i, tract in enumerate(GOLDEN_TRACTS):
            assert abs(zstar[i] - golden[tract.id]) < 1e-9

    def test_csv_readers_reproduce_fixture(self):
        fires = read_fires_csv(DATA / "golden_fires.csv")
        tracts = read_tracts_csv(DATA / "golden_tracts.csv")
        cfg = SmokeIndexConfig(variant="inverse-square", threshold=0.01)
        zstar = smoke_index(tracts, fires, cfg)
        golden = load_golden()["inverse-square"]
        for tract, value in zip(tracts, zstar):
            assert abs(value - golden[tract.id]) < 1e-9


class TestFormula:
    def test_single_fire_ratio(self):
        tract = TractRecord("t", 40.0, -105.0)
        fire = FireRecord("f", 41.0, -105.0, 300.0)
        d = float(haversine_km(40.0, -105.0, 41.0, -105.0))
        cfg = SmokeIndexConfig(variant="inverse-square", threshold=0.0)
        got = smoke_index([tract], [fire], cfg)[0]
        assert got == pytest.approx(300.0 / d**2, rel=1e-12)

    def test_west_weight_zero_is_base(self):
        base = SmokeIndexConfig(variant="inverse-square", threshold=0.0)
        weighted = SmokeIndexConfig(
            variant="inverse-square-west-weighted", threshold=0.0, west_weight=0.0
        )
        a = smoke_index(GOLDEN_TRACTS, GOLDEN_FIRES, base)
        b = smoke_index(GOLDEN_TRACTS, GOLDEN_FIRES, weighted)
        assert np.array_equal(a, b)

    def test_exponent_swap(self):
        tract = [TractRecord("t", 40.0, -105.0)]
        fire = [FireRecord("f", 42.0, -104.0, 500.0)]
        sq = smoke_index(tract, fire, SmokeIndexConfig(variant="inverse-square", threshold=0.0))
        lin = smoke_index(tract, fire, SmokeIndexConfig(variant="inverse-linear"))
        d = float(haversine_km(40.0, -105.0, 42.0, -104.0))
        assert lin[0] / sq[0] == pytest.approx(d, rel=1e-10)

    def test_minimum_distance_clamp(self):
        tract = [TractRecord("t", 40.0, -105.0)]
        fire = [FireRecord("f", 40.0, -105.0, 250.0)]  # coincident point
        cfg = SmokeIndexConfig(variant="inverse-square", threshold=0.0, min_distance_km=2.0)
        assert smoke_index(tract, fire, cfg)[0] == pytest.approx(250.0 / 4.0, rel=1e-12)

    def test_size_filter_and_empty_error(self):
        small = [FireRecord("f", 40.0, -105.0, 50.0)]
        cfg = SmokeIndexConfig(variant="inverse-square", threshold=0.0)
        with pytest.raises(DomainError):
            smoke_index(GOLDEN_TRACTS, small, cfg)

    @given(st.floats(1.0, 1e6), st.floats(1.0, 1e6))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_size(self, s1, s2):
        lo, hi = sorted([s1, s2])
        tract = [TractRecord("t", 40.0, -105.0), TractRecord("u", 35.0, -100.0)]
        cfg = SmokeIndexConfig(variant="inverse-square", threshold=0.0, min_size_acres=0.5)
        fires_lo = [FireRecord("f", 41.0, -104.0, lo), FireRecord("g", 42.0, -103.0, 200.0)]
        fires_hi = [FireRecord("f", 41.0, -104.0, hi), FireRecord("g", 42.0, -103.0, 200.0)]
        a = smoke_index(tract, fires_lo, cfg)
        b = smoke_index(tract, fires_hi, cfg)
        assert np.all(b >= a - 1e-15)

    def test_west_weighting_direction(self):
        cfg0 = SmokeIndexConfig(variant="inverse-square", threshold=0.0)
        cfg1 = SmokeIndexConfig(
            variant="inverse-square-west-weighted", threshold=0.0, west_weight=2.0
        )
        east_tract = [TractRecord("east", 40.0, -100.0)]
        west_tract = [TractRecord("west", 40.0, -120.0)]
        fires = [FireRecord("f", 40.0, -110.0, 400.0)]
        assert smoke_index(east_tract, fires, cfg1)[0] > smoke_index(east_tract, fires, cfg0)[0]
        assert smoke_index(west_tract, fires, cfg1)[0] == smoke_index(west_tract, fires, cfg0)[0]

    def test_antimeridian_rejected_for_west_weighting(self):
        cfg = SmokeIndexConfig(
            variant="inverse-square-west-weighted", threshold=0.0, west_weight=1.0
        )
        tracts = [TractRecord("t", 52.0, 179.5)]
        fires = [FireRecord("f", 52.0, -179.5, 500.0)]
        with pytest.raises(DomainError):
            smoke_index(tracts, fires, cfg)


class TestThreshold:
    def test_all_ones_below_min(self):
        z = threshold_instrument(np.array([1.0, 2.0, 3.0]), 0.5)
        assert np.array_equal(z.z, [1, 1, 1]) and z.fraction_high == 1.0

    def test_all_zeros_above_max(self):
        z = threshold_instrument(np.array([1.0, 2.0, 3.0]), 10.0)
        assert np.array_equal(z.z, [0, 0, 0]) and z.fraction_high == 0.0

    def test_closed_comparison(self):
        z = threshold_instrument(np.array([1.0, 2.0]), 2.0)
        assert list(z.z) == [0, 1]

    def test_median_split(self):
        vals = np.random.default_rng(0).standard_normal(101)
        z = threshold_instrument(vals, float(np.median(vals)))
        ones = int(z.z.sum())
        assert abs(ones - 50) <= 1

    @given(st.floats(0.1, 10.0), st.floats(-5.0, 5.0))
    @settings(max_examples=30, deadline=None)
    def test_split_invariant_under_monotone_rescale(self, scale, shift):
        vals = np.linspace(-3, 3, 41)
        c = 0.7
        base = threshold_instrument(vals, c)
        rescaled = threshold_instrument(scale * vals + shift, scale * c + shift)
        assert np.array_equal(base.z, rescaled.z)


class TestConfigValidation:
    def test_threshold_required_unless_continuous(self):
        with pytest.raises(DomainError):
            SmokeIndexConfig(variant="inverse-square", threshold=None)
        SmokeIndexConfig(variant="inverse-linear", threshold=None)  # continuous form

    def test_west_weight_only_for_weighted_variant(self):
        with pytest.raises(DomainError):
            SmokeIndexConfig(variant="inverse-square", threshold=1.0, west_weight=2.0)

    def test_unknown_variant(self):
        with pytest.raises(DomainError):
            SmokeIndexConfig(variant="cubic", threshold=1.0)

    def test_bad_coordinates(self):
        with pytest.raises(DomainError):
            TractRecord("t", 91.0, 0.0)
        with pytest.raises(DomainError):
            FireRecord("f", 0.0, 200.0, 10.0)
        with pytest.raises(DomainError):
            FireRecord("f", 0.0, 0.0, 0.0)


class TestCsv:
    def test_bad_fire_header(self, tmp_path):
        path = tmp_path / "fires.csv"
        path.write_text("id,lat,lon\nF,1,2\n", encoding="utf-8")
        with pytest.raises(DataFormatError):
            read_fires_csv(path)

    def test_bad_tract_cell(self, tmp_path):
        path = tmp_path / "tracts.csv"
        path.write_text("id,lat,lon\nT,abc,2\n", encoding="utf-8")
        with pytest.raises(DataFormatError):
            read_tracts_csv(path)


class TestHaversine:
    def test_zero_distance(self):
        assert float(haversine_km(10.0, 20.0, 10.0, 20.0)) == 0.0

    def test_quarter_meridian(self):
        # pole to equator along a meridian: R * pi/2
        got = float(haversine_km(0.0, 0.0, 90.0, 0.0))
        assert got == pytest.approx(6371.0 * math.pi / 2.0, rel=1e-12)

    def test_symmetry(self):
        a = float(haversine_km(39.5, -105.0, 40.0, -105.5))
        b = float(haversine_km(40.0, -105.5, 39.5, -105.0))
        assert a == pytest.approx(b, rel=1e-14)
