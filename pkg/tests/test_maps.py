import numpy as np
import pytest

from platoon_lab.dynamics import VehicleState, step_lag
from platoon_lab.maps import (EmpiricalVehicle, InversionError, MapFormatError,
                              PedalMap, affine_maps, coast_accel, interp, invert,
                              step_empirical, synthetic_brake_map,
                              synthetic_throttle_map)


def bilinear_exact_map():
    # f(p, v) = 2 p - 0.01 v is reproduced exactly by bilinear interpolation
    pedal = (0.0, 0.3, 0.7, 1.0)
    vel = (0.0, 10.0, 25.0, 35.0)
    grid = tuple(tuple(2.0 * p - 0.01 * v for v in vel) for p in pedal)
    return PedalMap(pedal, vel, grid)


class TestPedalMap:
    def test_axis_validation(self):
        with pytest.raises(MapFormatError):
            PedalMap((0.0, 0.0, 1.0), (0.0, 1.0), ((0.0, 0.0),) * 3)
        with pytest.raises(MapFormatError):
            PedalMap((0.0, 1.0), (0.0,), ((0.0,), (0.0,)))
        with pytest.raises(MapFormatError):
            PedalMap((0.0, 1.0), (0.0, 1.0), ((0.0, 0.0),))

    def test_csv_roundtrip(self, tmp_path):
        m = synthetic_throttle_map()
        path = tmp_path / "throttle.csv"
        m.to_csv(path)
        back = PedalMap.from_csv(path)
        assert back.pedal == m.pedal
        assert back.velocity == m.velocity
        np.testing.assert_array_equal(back.grid(), m.grid())

    def test_csv_header_checked(self):
        with pytest.raises(MapFormatError):
            PedalMap.from_csv_text("speed,0,10\n0,1,1\n1,2,2\n")
        with pytest.raises(MapFormatError):
            PedalMap.from_csv_text("pedal,0,ten\n0,1,1\n1,2,2\n")


class TestInterp:
    def test_node_values_exact(self):
        m = synthetic_brake_map()
        for i, p in enumerate(m.pedal):
            for j, v in enumerate(m.velocity):
                assert interp(m, p, v) == pytest.approx(m.accel[i][j], abs=1e-14)

    def test_reproduces_bilinear_function(self):
        m = bilinear_exact_map()
        rng = np.random.default_rng(5)
        for _ in range(200):
            p, v = rng.uniform(0, 1), rng.uniform(0, 35)
            assert interp(m, p, v) == pytest.approx(2.0 * p - 0.01 * v, abs=1e-12)

    def test_out_of_range_clamps(self):
        m = bilinear_exact_map()
        assert interp(m, 1.5, 10.0) == interp(m, 1.0, 10.0)
        assert interp(m, -0.2, 10.0) == interp(m, 0.0, 10.0)
        assert interp(m, 0.5, 99.0) == interp(m, 0.5, 35.0)

    def test_continuity_across_cell_boundaries(self):
        m = synthetic_throttle_map()
        rng = np.random.default_rng(6)
        eps = 1e-11
        for _ in range(10 ** 4):
            p_node = m.pedal[rng.integers(1, len(m.pedal) - 1)]
            v = rng.uniform(0, 35)
            jump = abs(interp(m, p_node - eps, v) - interp(m, p_node + eps, v))
            assert jump < 1e-9
            v_node = m.velocity[rng.integers(1, len(m.velocity) - 1)]
            p = rng.uniform(0, 1)
            jump = abs(interp(m, p, v_node - eps) - interp(m, p, v_node + eps))
            assert jump < 1e-9


class TestInvert:
    def test_roundtrip_within_range(self):
        for m in (synthetic_throttle_map(), synthetic_brake_map()):
            rng = np.random.default_rng(7)
            for _ in range(300):
                v = rng.uniform(0, 35)
                lo = interp(m, 0.0, v)
                hi = interp(m, 1.0, v)
                a, b = min(lo, hi), max(lo, hi)
                target = rng.uniform(a, b)
                pedal = invert(m, target, v)
                assert interp(m, pedal, v) == pytest.approx(target, abs=1e-9)

    def test_clamps_outside_authority(self):
        m = synthetic_throttle_map()
        assert invert(m, 99.0, 10.0) == m.pedal[-1]
        assert invert(m, -99.0, 10.0) == m.pedal[0]

    def test_non_monotone_slice_rejected(self):
        m = PedalMap((0.0, 0.5, 1.0), (0.0, 10.0),
                     ((0.0, 0.0), (1.0, 1.0), (0.5, 0.5)))
        with pytest.raises(InversionError):
            invert(m, 0.7, 5.0)


class TestStepEmpirical:
    def test_rest_with_zero_command_holds_still(self):
        thr, brk = affine_maps()
        veh = EmpiricalVehicle(thr, brk, 0.4, VehicleState(0.0, 0.0, 0.0))
        out = step_empirical(veh, 0.0, 0.01)
        assert out.state == VehicleState(0.0, 0.0, 0.0)

    def test_affine_maps_reduce_to_pure_lag(self):
        thr, brk = affine_maps()
        veh = EmpiricalVehicle(thr, brk, 0.4, VehicleState(0.0, 20.0, 0.0))
        rng = np.random.default_rng(8)
        state = veh.state
        for _ in range(200):
            u = float(rng.uniform(-3.8, 3.8))
            veh = step_empirical(veh, u, 0.01)
            state = step_lag(state, u, 0.4, 0.01)
            assert veh.state.x == pytest.approx(state.x, abs=1e-12)
            assert veh.state.v == pytest.approx(state.v, abs=1e-12)
            assert veh.state.a == pytest.approx(state.a, abs=1e-12)

    def test_branch_hysteresis(self):
        thr, brk = synthetic_throttle_map(), synthetic_brake_map()
        veh = EmpiricalVehicle(thr, brk, 0.4, VehicleState(0.0, 20.0, 0.0))
        coast = coast_accel(veh, 20.0)
        braking = step_empirical(veh, coast - 0.2, 0.01)
        assert braking.braking
        still_braking = step_empirical(braking, coast, 0.01)  # inside the band
        assert still_braking.braking
        throttling = step_empirical(braking, coast + 0.2, 0.01)
        assert not throttling.braking

    def test_brake_command_decelerates(self):
        thr, brk = synthetic_throttle_map(), synthetic_brake_map()
        veh = EmpiricalVehicle(thr, brk, 0.37, VehicleState(0.0, 25.0, 0.0))
        for _ in range(300):
            veh = step_empirical(veh, -9.0, 0.01)
        assert veh.state.v < 25.0 - 9.0 * 3.0 * 0.8  # most of the commanded decel
        assert veh.state.a == pytest.approx(-9.0, abs=0.5)


class TestEmpiricalPlatoonVerdicts:
    def test_cacc_plus_headway_verdict_pattern_preserved(self):
        # the map-model platoon keeps the stable/unstable pattern that the
        # linear analysis predicts when the headway crosses the lossy minimum
        import platoon_lab as pl
        from platoon_lab.dynamics import Maneuver, TimeGrid
        from platoon_lab.sim import PlatoonConfig, simulate_deterministic

        man = Maneuver(((0.0, 0.0), (5.0, -9.0), (6.0, 0.0)), 25.0)
        peaks = {}
        for hw in (0.3, 0.4):
            cfg = PlatoonConfig(
                n_followers=6, tau=0.37, gains=pl.Gains(0.75, 2.5, 1.5),
                policy=pl.SpacingPolicy(h_w=hw, d=5.0), scheme=pl.Scheme.CACC_PLUS,
                grid=TimeGrid(0.01, 30.0), channel=pl.GilbertParams(0.2, 0.1, 0.2),
                model="empirical", throttle_map=synthetic_throttle_map(),
                brake_map=synthetic_brake_map())
            out = simulate_deterministic(cfg, man, 0.4667)
            peaks[hw] = out.peak_errors()
        # the two-predecessor recursion governs vehicles 3..N (vehicle 1 runs
        # the one-predecessor law, vehicle 2 couples directly to the lead), so
        # the discriminating statistic is growth along that interior chain:
        # below the lossy minimum headway the tail amplifies, above it decays
        assert peaks[0.3][-1] > peaks[0.3][2]
        assert peaks[0.4][-1] < peaks[0.4][2]
