import numpy as np
import pytest

from riemdoa import experiments as ex
from riemdoa.errors import ConfigError
from riemdoa.stft import StftConfig

FAST = ex.Protocol(air_length=512, n_mics=6,
                   stft=StftConfig(window_size=256, hop=128, bin_index=62, segment_frames=16))


class TestProtocol:
    def test_defaults(self):
        p = ex.Protocol()
        assert p.wavelength == pytest.approx(343 / 3906.25)
        assert p.directions_deg[[0, -1]] == pytest.approx([-70, 70])
        assert p.geometry.n_mics == 12

    def test_validation(self):
        with pytest.raises(ConfigError):
            ex.Protocol(activation="sometimes")
        with pytest.raises(ConfigError):
            ex.Protocol(n_interferences=20)

    def test_from_dict(self):
        p = ex.Protocol.from_dict({"t60": 0.3, "stft": {"segment_frames": 8}, "room_dimensions": [6, 5, 3]})
        assert p.t60 == 0.3 and p.stft.segment_frames == 8 and p.room_dimensions == (6, 5, 3)
        with pytest.raises(ConfigError):
            ex.Protocol.from_dict({"colour": "red"})


class TestDraw:
    def test_placement(self):
        sc = ex.draw_scenario(FAST, 5)
        (td,), ti = sc.directions()
        az = np.rad2deg([td, *ti])
        assert len(set(np.round(az, 6))) == 3
        grid = FAST.directions_deg
        assert all(np.min(np.abs(grid - a)) < 1e-6 for a in az)
        for s in sc.sources:
            c = FAST.geometry.center
            assert np.hypot(s.position[0] - c[0], s.position[1] - c[1]) == pytest.approx(2.0)

    def test_powers_and_activation(self):
        sc = ex.draw_scenario(FAST, 1)
        assert sc.interferences[0].power == pytest.approx(10 ** 0.6)
        assert sc.interferences[0].activation.tolist() == [True, False]
        assert sc.interferences[1].activation.tolist() == [False, True]

    def test_bernoulli(self):
        p = ex.Protocol(activation="bernoulli", n_segments=200, p_active=0.3)
        sc = ex.draw_scenario(p, 2)
        frac = np.mean([s.activation.mean() for s in sc.interferences])
        assert frac == pytest.approx(0.3, abs=0.08)

    def test_deterministic(self):
        a, b = ex.draw_scenario(FAST, 9), ex.draw_scenario(FAST, 9)
        assert [s.position for s in a.sources] == [s.position for s in b.sources]


class TestMonteCarlo:
    def test_rows(self):
        rows = ex.run_monte_carlo(FAST, 2, 0, ("riemannian", "euclidean"), ("ds", "intersection"))
        # two mean kinds for ds, one "segments" row for intersection, per trial
        assert len(rows) == 6
        kinds = {(r.beamformer, r.mean_kind) for r in rows}
        assert kinds == {("ds", "riemannian"), ("ds", "euclidean"), ("intersection", "segments")}
        for r in rows:
            assert len(r.output_sir_db) == 2
            assert np.isfinite(r.directivity) and r.doa_error_deg >= 0

    def test_seeds_independent_of_count(self):
        assert ex.trial_seeds(3, 5)[:3] == ex.trial_seeds(3, 3)

    def test_workers_do_not_change_results(self):
        a = ex.run_monte_carlo(FAST, 2, 4, ("euclidean",), ("ds",), workers=1)
        b = ex.run_monte_carlo(FAST, 2, 4, ("euclidean",), ("ds",), workers=2)
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b]

    def test_aggregate(self):
        rows = [ex.TrialRow(i, "riemannian", "ds", -6.0, [float(i)], float(i), 2.0, float(i))
                for i in range(5)]
        (agg,) = ex.aggregate(rows)
        assert agg["n"] == 5
        assert agg["mean_output_sir_db_p50"] == 2.0
        assert agg["mean_output_sir_db_p25"] == 1.0 and agg["doa_error_deg_p75"] == 3.0

    def test_sweep(self):
        rows, agg = ex.sweep(FAST, {"input_sir_db": [-6.0, 0.0]}, 1, 0, ("euclidean",), ("ds",))
        assert len(rows) == 2
        assert sorted(a["input_sir_db"] for a in agg) == [-6.0, 0.0]
        with pytest.raises(ConfigError):
            ex.sweep(FAST, {}, 1)
