import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from resloc.domain import (
    DEFAULT_MOVING_RATES,
    Household,
    MeshCell,
    MovingRateTable,
    PersonCategory,
    ScenarioSpec,
    SegmentCoefficients,
    assign_segment,
    cell_records,
    cells_from_records,
    household_records,
    households_from_records,
    preset_scenarios,
    validate_cells,
    validate_households,
)
from resloc.errors import ConfigError, DataError, DomainError
from resloc.synthetic import generate_synthetic_region


@pytest.mark.parametrize("age, members, segment", [
    (40, 4, 1),     # (6,50], 3 or more
    (70, 1, 5),     # [65,100], 1 or 2
    (50, 2, 2),     # 50 belongs to (6,50]
    (50, 3, 1),
    (51, 3, 3),
    (100, 5, 3),
    (64.9, 2, 4),
    (65, 2, 5),
    (100, 1, 5),
    (6.5, 1, 2),
])
def test_assign_segment_table(age, members, segment):
    assert assign_segment(age, members) == segment


@pytest.mark.parametrize("age", [6, 0, -3, 100.5, 120])
def test_assign_segment_rejects_ages_outside_range(age):
    with pytest.raises(DomainError):
        assign_segment(age, 2)


def test_assign_segment_rejects_empty_household():
    with pytest.raises(DomainError):
        assign_segment(40, 0)


@given(st.floats(min_value=6.0001, max_value=100), st.integers(min_value=1, max_value=12))
def test_assign_segment_partitions_the_domain(age, members):
    seg = assign_segment(age, members)
    assert seg in (1, 2, 3, 4, 5)
    assert (seg in (1, 3)) == (members >= 3)
    assert (seg in (1, 2)) == (age <= 50)


def test_household_problems_flag_bad_rows():
    ok = Household(1, 0, 40, 1, 1, 1, 4, 1)
    assert ok.problems() == []
    assert Household(1, 0, 40, 2, 2, 1, 4, 1).problems()      # members exceed n_members
    assert Household(1, 0, 40, 1, 0, 0, 4, 2).problems()      # wrong segment
    assert Household(1, 0, 40, -1, 0, 0, 4, 1).problems()


def test_mesh_cell_problems():
    assert MeshCell(0, 0, 0, 1000, 3).problems() == []
    assert MeshCell(0, 0, 0, 0, 3).problems()                  # priced at 0 with housing
    assert MeshCell(0, 0, 0, 0, 0).problems() == []            # no housing, price irrelevant
    assert MeshCell(0, 0, 0, 10, 1, share_building=0.7, share_forest=0.5).problems()
    assert MeshCell(0, 0, 0, 10, 1, logsum_work=math.inf).problems()


def test_record_round_trip(region):
    cells, households, _ = region
    back = cells_from_records(cell_records(cells))
    assert back.equals(cells)
    assert households_from_records(household_records(households)).equals(households)


def test_validate_cells_and_households(region):
    cells, households, _ = region
    validate_cells(cells)
    validate_households(households, cells)
    broken = households.copy()
    broken.loc[0, "home_cell"] = 10_000
    with pytest.raises(DataError, match="home_cell"):
        validate_households(broken, cells)
    dup = cells.copy()
    dup.loc[1, "cell_id"] = dup.loc[0, "cell_id"]
    with pytest.raises(DataError, match="duplicate"):
        validate_cells(dup)


class TestMovingRates:
    def test_default_table_covers_all_head_ages(self):
        r = DEFAULT_MOVING_RATES.ratios(np.arange(7, 101))
        assert np.all((r >= 0) & (r <= 1))

    def test_published_endpoints(self):
        # heads under 30 always move; the oldest band moves with probability 16.1%
        assert DEFAULT_MOVING_RATES.ratio(20) == 0.0
        assert 1 - DEFAULT_MOVING_RATES.ratio(90) ** 5 == pytest.approx(0.161, abs=1e-3)

    def test_vector_and_scalar_lookup_agree(self):
        ages = np.array([7, 29.999, 30, 45, 84.9, 85, 100])
        assert DEFAULT_MOVING_RATES.ratios(ages).tolist() == [DEFAULT_MOVING_RATES.ratio(a) for a in ages]

    def test_uncovered_age(self):
        t = MovingRateTable(((20, 40, 0.5), (40, 60, 0.7)))
        with pytest.raises(DomainError):
            t.ratio(60)
        with pytest.raises(DomainError):
            t.ratios([19])

    @pytest.mark.parametrize("bands", [
        (),
        ((0, 10, 0.5), (11, 20, 0.5)),
        ((0, 10, 1.5),),
        ((10, 10, 0.5),),
    ])
    def test_invalid_tables(self, bands):
        with pytest.raises(DataError):
            MovingRateTable(bands)


class TestScenarioSpec:
    def test_defaults_are_base(self):
        s = ScenarioSpec()
        assert s.name == "base" and s.is_transport_base
        assert s.population_ratio == 0.8245

    @pytest.mark.parametrize("kwargs", [
        {"population_ratio": 0}, {"population_ratio": 1.2}, {"vot_commute_multiplier": 0},
        {"vot_other_multiplier": 1.5}, {"road_capacity_factor": 0.9},
        {"policy1_subsidy_rate": 1.0}, {"policy2_ufaa_employee_boost": -0.1},
        {"n_monte_carlo_runs": 0}, {"name": ""},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            ScenarioSpec(**kwargs)

    def test_mapping_round_trip(self):
        s = ScenarioSpec(name="x", vot_commute_multiplier=0.5, seed=9)
        assert ScenarioSpec.from_mapping(s.to_mapping()) == s
        with pytest.raises(ConfigError, match="unknown"):
            ScenarioSpec.from_mapping({"nam": "typo"})

    def test_presets_carry_published_multipliers(self):
        p = preset_scenarios()
        assert (p["base"].vot_commute_multiplier, p["base"].vot_other_multiplier) == (1.0, 1.0)
        assert (p["s1"].vot_commute_multiplier, p["s1"].vot_other_multiplier) == (0.75, 0.85)
        assert (p["s2"].vot_commute_multiplier, p["s2"].vot_other_multiplier) == (0.50, 0.70)
        assert p["s1"].road_capacity_factor == p["s2"].road_capacity_factor == 1.2
        assert p["base"].road_capacity_factor == 1.0
        assert p["s1_p1"].policy1_subsidy_rate == 0.2
        assert p["s2_p2"].policy2_ufaa_employee_boost == 0.3


class TestSegmentCoefficients:
    def test_missing_terms_are_zero(self):
        c = SegmentCoefficients(1, alpha_worker=0.6, beta={"land_price": -1.2})
        assert c.beta["share_forest"] == 0.0
        assert c.alpha(PersonCategory.WORKER) == 0.6

    def test_size_coefficient_is_fixed(self):
        with pytest.raises(ConfigError):
            SegmentCoefficients(1, size_coefficient=0.9)

    def test_unknown_term(self):
        with pytest.raises(ConfigError):
            SegmentCoefficients(1, beta={"bogus": 1.0})

    def test_dict_round_trip(self):
        c = SegmentCoefficients(3, 0.1, 0.2, 0.3, {"is_ota": -0.4})
        assert SegmentCoefficients.from_dict(3, {**c.as_dict(), "size": 1.0}) == c


class TestSyntheticRegion:
    def test_deterministic(self):
        a = generate_synthetic_region(100, 5000, seed=1)
        b = generate_synthetic_region(100, 5000, seed=1)
        for x, y in zip(a, b):
            assert x.equals(y)

    def test_tiny_region_has_valid_home(self):
        cells, households, edges = generate_synthetic_region(4, 1, seed=7)
        assert households["home_cell"].isin(cells["cell_id"]).all()
        validate_households(households, cells)

    def test_housing_stock_covers_households(self):
        cells, households, _ = generate_synthetic_region(100, 5000, seed=1)
        assert cells["housing_stock"].sum() >= len(households)

    def test_layout(self):
        cells, households, edges = generate_synthetic_region(100, 5000, seed=1)
        validate_cells(cells)
        validate_households(households, cells)
        assert cells["in_ufaa"].sum() >= 1
        assert (cells["in_daa"] | ~cells["in_ufaa"]).all()      # UFAA sits inside DAA
        # land prices fall away from the center
        cx, cy = cells["x"].mean(), cells["y"].mean()
        r = np.hypot(cells["x"] - cx, cells["y"] - cy)
        assert np.corrcoef(r, np.log(cells["land_price"]))[0, 1] < -0.5
        assert set(households["segment"]) == {1, 2, 3, 4, 5}

    @pytest.mark.parametrize("n_cells, n_households", [(3, 10), (10, 0)])
    def test_preconditions(self, n_cells, n_households):
        with pytest.raises(DomainError):
            generate_synthetic_region(n_cells, n_households, seed=0)
