"""Switch crosstalk model, sweeps, and assignment planning."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import fiberxtalk as fx
from fiberxtalk.errors import DataError, ParameterError, ResourceError
from fiberxtalk.switchlab import (
    ChannelPlacement,
    ConfigSweepPoint,
    assignment_search_space,
    assignment_to_config,
    load_measured_table,
)


DEFAULT = fx.SwitchModel()


class TestSwitchXtalk:
    def test_adjacent_on_both_planes_is_c0(self):
        assert fx.switch_xtalk_db(DEFAULT, (1, 10), (2, 9), 1310.0) == pytest.approx(-50.0)

    def test_maximally_separated(self):
        # -50 - 5*6 - 5*6
        assert fx.switch_xtalk_db(DEFAULT, (1, 16), (8, 9), 1310.0) == pytest.approx(-110.0)

    def test_wavelength_shift_of_300nm_adds_10db(self):
        at_ref = fx.switch_xtalk_db(DEFAULT, (1, 10), (2, 9), 1310.0)
        shifted = fx.switch_xtalk_db(DEFAULT, (1, 10), (2, 9), 1610.0)
        assert shifted - at_ref == pytest.approx(10.0, abs=1e-9)

    def test_floor_clamp(self):
        model = fx.SwitchModel(beta_in_db_per_port=20.0, beta_out_db_per_port=20.0)
        assert fx.switch_xtalk_db(model, (1, 16), (8, 9), 1310.0) == model.floor_db

    def test_shared_port_rejected(self):
        with pytest.raises(ParameterError, match="share"):
            fx.switch_xtalk_db(DEFAULT, (1, 10), (1, 9), 1310.0)
        with pytest.raises(ParameterError, match="share"):
            fx.switch_xtalk_db(DEFAULT, (1, 10), (2, 10), 1310.0)

    def test_port_ranges_enforced(self):
        with pytest.raises(ParameterError):
            fx.switch_xtalk_db(DEFAULT, (0, 10), (2, 9), 1310.0)
        with pytest.raises(ParameterError):
            fx.switch_xtalk_db(DEFAULT, (1, 20), (2, 9), 1310.0)

    @given(
        a_in=st.integers(1, 8), v_in=st.integers(1, 8),
        a_out=st.integers(9, 16), v_out=st.integers(9, 16),
        nm=st.floats(min_value=1260.0, max_value=1610.0),
    )
    def test_symmetry_under_role_swap(self, a_in, v_in, a_out, v_out, nm):
        if a_in == v_in or a_out == v_out:
            return
        forward = fx.switch_xtalk_db(DEFAULT, (a_in, a_out), (v_in, v_out), nm)
        backward = fx.switch_xtalk_db(DEFAULT, (v_in, v_out), (a_in, a_out), nm)
        assert forward == backward

    @given(sep_small=st.integers(1, 6), sep_large=st.integers(1, 6))
    def test_monotone_in_separation(self, sep_small, sep_large):
        lo, hi = sorted((sep_small, sep_large))
        near = fx.switch_xtalk_db(DEFAULT, (1, 10), (1 + lo, 9), 1310.0)
        far = fx.switch_xtalk_db(DEFAULT, (1, 10), (1 + hi, 9), 1310.0)
        assert far <= near + 1e-12


class TestMeasuredMode:
    def table_model(self):
        table = {
            (1, 10, 2, 9): [(1310.0, -48.0), (1550.0, -40.0)],
            (1, 11, 2, 9): [(1310.0, -60.0)],
        }
        return fx.SwitchModel(table=table)

    def test_exact_and_interpolated_lookup(self):
        model = self.table_model()
        assert fx.switch_xtalk_db(model, (1, 10), (2, 9), 1310.0) == -48.0
        assert fx.switch_xtalk_db(model, (1, 10), (2, 9), 1430.0) == pytest.approx(-44.0)

    def test_outside_range_clamps_to_nearest(self):
        model = self.table_model()
        assert fx.switch_xtalk_db(model, (1, 10), (2, 9), 1260.0) == -48.0
        assert fx.switch_xtalk_db(model, (1, 10), (2, 9), 1600.0) == -40.0

    def test_single_point_entry(self):
        model = self.table_model()
        assert fx.switch_xtalk_db(model, (1, 11), (2, 9), 1500.0) == -60.0

    def test_missing_pair_is_a_data_error(self):
        model = self.table_model()
        with pytest.raises(DataError, match="no measured crosstalk"):
            fx.switch_xtalk_db(model, (3, 12), (4, 13), 1310.0)

    def test_csv_loader(self, tmp_path):
        path = tmp_path / "table.csv"
        path.write_text(
            "a_in,a_out,v_in,v_out,lambda_nm,xtalk_db\n"
            "1,10,2,9,1310.0,-48.0\n"
            "1,10,2,9,1550.0,-40.0\n"
        )
        table = load_measured_table(path)
        assert table[(1, 10, 2, 9)] == [(1310.0, -48.0), (1550.0, -40.0)]


class TestSweeps:
    def test_config_sweep_structure_and_maximum(self):
        points = fx.sweep_configs(DEFAULT)
        assert len(points) == 49  # 7 aggressor outputs x 7 victim inputs
        first = points[0]
        assert first.aggressor == (1, 10) and first.victim == (2, 9)
        assert first.xtalk_db == pytest.approx(-50.0)
        rest = [p.xtalk_db for p in points[1:]]
        assert all(x < first.xtalk_db for x in rest)

    def test_degenerate_betas_flatten_the_table(self):
        model = fx.SwitchModel(beta_in_db_per_port=0.0, beta_out_db_per_port=0.0)
        points = fx.sweep_configs(model)
        assert {p.xtalk_db for p in points} == {-50.0}

    def test_measured_values_echoed(self):
        table = {}
        for agg_out in range(10, 17):
            for vic_in in range(2, 9):
                table[(1, agg_out, vic_in, 9)] = [(1310.0, -float(agg_out + vic_in))]
        model = fx.SwitchModel(table=table)
        points = fx.sweep_configs(model)
        for p in points:
            assert p.xtalk_db == -float(p.aggressor[1] + p.victim[0])

    def test_wavelength_sweep_monotone_and_exact_rise(self):
        grid = list(np.arange(1260.0, 1560.0 + 1e-9, 10.0))
        curve = fx.sweep_wavelength(DEFAULT, (1, 10), (2, 9), grid)
        values = [db for _, db in curve]
        assert all(b > a for a, b in zip(values, values[1:]))
        assert values[-1] - values[0] == pytest.approx(10.0, abs=1e-9)

    def test_zero_slope_is_flat(self):
        model = fx.SwitchModel(slope_db_per_nm=0.0)
        curve = fx.sweep_wavelength(model, (1, 10), (2, 9), [1260.0, 1410.0, 1560.0])
        assert {db for _, db in curve} == {-50.0}

    def test_single_point_grid(self):
        curve = fx.sweep_wavelength(DEFAULT, (1, 10), (2, 9), [1310.0])
        assert curve == [(1310.0, -50.0)]

    def test_sweep_point_label(self):
        point = ConfigSweepPoint(aggressor=(1, 10), victim=(2, 9), xtalk_db=-50.0)
        assert point.label == "1->10,2->9"


def random_model(rng):
    n = int(rng.integers(3, 5))
    return fx.SwitchModel(
        n_in=n,
        n_out=n,
        c0_db=float(rng.uniform(-60.0, -40.0)),
        beta_in_db_per_port=float(rng.uniform(0.0, 8.0)),
        beta_out_db_per_port=float(rng.uniform(0.0, 8.0)),
        slope_db_per_nm=float(rng.uniform(-0.05, 0.05)),
        floor_db=-120.0,
    )


class TestAssignment:
    def test_default_single_pair_spreads_ports(self):
        assignment = fx.optimize_assignment(fx.SwitchModel(), 1, 1)
        assert assignment.objective_db == pytest.approx(-110.0, abs=1e-9)
        assert assignment.classical == (ChannelPlacement(1, 9, 1310.0),)
        assert assignment.quantum == (ChannelPlacement(8, 16, 1310.0),)
        oracle = fx.brute_force_assignment(fx.SwitchModel(), 1, 1)
        assert oracle.objective_db == assignment.objective_db
        assert oracle.classical == assignment.classical
        assert oracle.quantum == assignment.quantum

    def test_two_by_two_forced(self):
        model = fx.SwitchModel(n_in=2, n_out=2)
        assignment = fx.brute_force_assignment(model, 1, 1)
        # only separation 1/1 placements exist; lexicographic winner
        assert assignment.classical == (ChannelPlacement(1, 3, 1310.0),)
        assert assignment.quantum == (ChannelPlacement(2, 4, 1310.0),)
        assert assignment.objective_db == pytest.approx(model.c0_db, abs=1e-9)

    def test_no_classical_channels_means_no_leakage(self):
        assignment = fx.optimize_assignment(fx.SwitchModel(), 0, 2)
        assert assignment.objective_db == -math.inf
        assert len(assignment.quantum) == 2

    def test_single_classical_objective_equals_pairwise_xtalk(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            model = random_model(rng)
            assignment = fx.optimize_assignment(model, 1, 1)
            pairwise = fx.switch_xtalk_db(
                model,
                (assignment.classical[0].input, assignment.classical[0].output),
                (assignment.quantum[0].input, assignment.quantum[0].output),
                assignment.classical[0].wavelength_nm,
            )
            assert assignment.objective_db == pytest.approx(pairwise, abs=1e-9)

    def test_optimizer_matches_oracle_on_random_models(self):
        rng = np.random.default_rng(42)
        for _ in range(40):
            model = random_model(rng)
            k_c = int(rng.integers(0, 3))
            k_q = int(rng.integers(0, min(3, model.n_in - k_c) + 1))
            bands = None
            if rng.random() < 0.5:
                bands = {"classical": "O", "quantum": "C"}
            fast = fx.optimize_assignment(model, k_c, k_q, bands)
            slow = fx.brute_force_assignment(model, k_c, k_q, bands)
            assert fast.objective_db == slow.objective_db
            assert fast.classical == slow.classical
            assert fast.quantum == slow.quantum

    def test_band_choice_follows_the_slope(self):
        model = fx.SwitchModel()  # slope > 0
        o_classical = fx.optimize_assignment(
            model, 1, 1, {"classical": "O", "quantum": "C"}
        )
        swapped = fx.optimize_assignment(
            model, 1, 1, {"classical": "C", "quantum": "O"}
        )
        assert o_classical.objective_db < swapped.objective_db
        gap = (1530.0 - 1260.0) * model.slope_db_per_nm
        assert swapped.objective_db - o_classical.objective_db == pytest.approx(gap, abs=1e-9)

    def test_local_search_path_on_small_instance(self):
        model = fx.SwitchModel()
        forced_local = fx.optimize_assignment(model, 1, 1, state_limit=0)
        assert forced_local.method == "local-search"
        oracle = fx.brute_force_assignment(model, 1, 1)
        assert forced_local.objective_db == oracle.objective_db

    def test_oracle_refuses_large_spaces(self):
        with pytest.raises(ResourceError):
            fx.brute_force_assignment(fx.SwitchModel(), 3, 3, max_states=1000)

    def test_infeasible_counts_rejected(self):
        with pytest.raises(ParameterError):
            fx.optimize_assignment(fx.SwitchModel(n_in=4, n_out=4), 3, 2)

    def test_search_space_formula(self):
        model = fx.SwitchModel(n_in=4, n_out=4)
        # C(4,1)*P(4,1)*C(3,1)*P(3,1) = 4*4*3*3
        assert assignment_search_space(model, 1, 1) == 144
        # with a non-degenerate classical band the endpoints double the states
        assert assignment_search_space(model, 1, 1, {"classical": "O"}) == 288

    def test_assignment_config_is_valid(self):
        assignment = fx.optimize_assignment(fx.SwitchModel(), 2, 2)
        config = assignment_to_config(assignment)
        config.validate(fx.SwitchModel())


class TestSwitchConfig:
    def test_duplicate_port_rejected_with_config_code(self):
        with pytest.raises(ParameterError) as err:
            fx.SwitchConfig(connections=((1, 10), (1, 11))).validate(DEFAULT)
        assert err.value.code == "E_CONFIG"

    def test_parse(self):
        config = fx.SwitchConfig.parse("1:10,2:9")
        assert config.connections == ((1, 10), (2, 9))

    def test_parse_rejects_garbage(self):
        with pytest.raises(ParameterError):
            fx.SwitchConfig.parse("1-10")
