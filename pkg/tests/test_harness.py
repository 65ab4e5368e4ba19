import csv
import io

import numpy as np
import pytest

from leotrack.harness.cli import main
from leotrack.harness.metrics import bound_root, nmse, rmse, slope_ci
from leotrack.harness.runner import run_trial
from leotrack.harness.scenario import ConfigError, Scenario, describe_keys, load_scenario
from leotrack.harness.sweep import CSV_HEADER, MetricSeries, emit_csv, sweep


def write(tmp_path, text, name="scn.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestScenario:
    def test_empty_file_gives_defaults(self, tmp_path):
        scn = load_scenario(write(tmp_path, ""))
        assert scn == Scenario()
        assert scn.f_c_mhz == 1910.0 and scn.m == 64 and scn.n_pilots == 10 and scn.n_blocks == 10
        assert scn.link().lambda_c == pytest.approx(3e8 / 1.91e9)
        assert scn.tx_power == pytest.approx(1.0)

    def test_single_override(self, tmp_path):
        scn = load_scenario(write(tmp_path, "[frame]\nn_pilots = 20\n"))
        assert scn == Scenario(n_pilots=20)

    def test_dotted_keys(self, tmp_path):
        scn = load_scenario(write(tmp_path, 'tracker.combiner = "dft"\nlink.snr_db = 5\n'))
        assert scn.combiner == "dft" and scn.snr_db == 5.0

    def test_inconsistent_block_duration(self, tmp_path):
        with pytest.raises(ConfigError, match="frame.t_block"):
            load_scenario(write(tmp_path, "[frame]\nt_block = 3.0\n"))

    @pytest.mark.parametrize(
        "text, key",
        [
            ("nope = 1\n", "nope"),
            ("[array]\nm_rf = 65\n", "array.m_rf"),
            ('[tracker]\ncombiner = "best"\n', "tracker.combiner"),
            ("[frame]\nn_pilots = 2\n", "frame.n_pilots"),
            ("[noise]\nsigma_u = -1\n", "noise.sigma_u"),
            ("[orbit]\ngu_position = [1, 2]\n", "orbit.gu_position"),
        ],
    )
    def test_errors_name_key(self, tmp_path, text, key):
        with pytest.raises(ConfigError) as info:
            load_scenario(write(tmp_path, text))
        assert info.value.key == key

    def test_parse_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(write(tmp_path, "[link\n"))

    def test_snr_definition(self):
        scn = Scenario(snr_db=0.0)
        lb = scn.link()
        q_s, q_u = scn.initial_states()
        from leotrack.chanmodel import large_scale_beta

        beta = large_scale_beta(float(np.linalg.norm(q_s[:3] - q_u[:3])), lb)
        assert lb.tx_power * lb.gamma**2 * beta / (64 * lb.noise_var) == pytest.approx(1.0)
        assert Scenario(noise_var=0.25).link().noise_var == 0.25

    def test_every_key_documented(self):
        keys = [k for k, _, _ in describe_keys()]
        assert len(keys) == len(set(keys)) and "frame.n_pilots" in keys


class TestMetrics:
    def test_rmse(self):
        assert rmse(np.zeros((5, 3)), np.zeros((5, 3))) == 0.0
        assert rmse(np.zeros((5, 3)), np.full((5, 3), 0.7)) == pytest.approx(0.7)
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.5)

    def test_rmse_skips_nan_trials(self):
        est = np.array([[1.0, np.nan], [1.0, 2.0]])
        assert rmse(np.zeros((2, 2)), est) == pytest.approx(1.5)

    def test_nmse(self, rng):
        h = rng.standard_normal((4, 3, 8)) + 1j * rng.standard_normal((4, 3, 8))
        assert nmse(h, h) == 0.0
        assert nmse(h, np.zeros_like(h)) == pytest.approx(1.0)
        assert nmse(h, 2 * h) == pytest.approx(1.0)

    def test_nmse_zero_channel_warns(self):
        h = np.array([[1.0, 0.0], [0.0, 0.0]], complex)
        with pytest.warns(RuntimeWarning):
            assert nmse(h, np.zeros_like(h)) == pytest.approx(1.0)

    def test_bound_root_harmonic(self):
        assert bound_root([[4.0], [4.0]]) == pytest.approx(2.0)
        assert bound_root([[1.0], [np.inf]]) == pytest.approx(np.sqrt(2.0))

    def test_slope_ci(self, rng):
        x = np.repeat([0.0, 1.0, 2.0, 3.0], 200)
        slope, lo, hi = slope_ci(x, 2 * x + rng.standard_normal(x.size))
        assert lo < 2 < hi and lo < slope < hi
        _, lo, hi = slope_ci(x, rng.standard_normal(x.size))
        assert lo < 0 < hi
        with pytest.raises(ValueError):
            slope_ci([1, 1, 1], [1, 2, 3])


class TestRunner:
    def test_deterministic(self, scn):
        a = run_trial(scn, 9, 2)
        b = run_trial(scn, 9, 2)
        for name in ("truth", "channels", "tracked", "rough", "csi", "crlb_filter"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_shapes(self, scn):
        res = run_trial(scn, 0, 0)
        assert res.truth.shape == (10, 3) and res.channels.shape == (10, 64)
        assert np.all(np.isfinite(res.tracked)) and np.all(res.crlb_filter > 0)

    def test_zero_noise_tracks_truth(self, scn):
        s = scn.with_overrides(noise_var=0.0, sigma_u=0.0, sigma_v=0.0)
        res = run_trial(s, 0, 0)
        np.testing.assert_allclose(res.tracked, res.truth, rtol=1e-6)

    def test_common_random_numbers(self, scn):
        a = run_trial(scn, 1, 4, combiner="dft")
        b = run_trial(scn.with_overrides(snr_db=5.0), 1, 4, combiner="proposed")
        np.testing.assert_array_equal(a.truth, b.truth)
        np.testing.assert_array_equal(a.channels, b.channels)

    def test_esprit_ls_chain(self, scn):
        res = run_trial(scn, 0, 0, chain="esprit+ls")
        assert np.all(np.isnan(res.tracked)) and np.all(np.isfinite(res.rough))

    def test_unknown_chain(self, scn):
        with pytest.raises(ValueError):
            run_trial(scn, 0, 0, chain="magic")


def _parse(text):
    return list(csv.reader(io.StringIO(text)))


class TestSweepAndCsv:
    def test_single_point(self, scn):
        series = sweep(scn, "snr", [0.0], trials=1, methods=("jpct",))
        assert len(series) == 1 and len(list(series[0].rows())) == 1
        assert series[0].trials == [1] and series[0].failures == [[]]

    def test_all_methods(self, scn):
        series = sweep(scn, "pilots", [8], trials=2, methods=("jpct", "jpct-genie", "rough", "esprit+ls"), combiners=("dft",))
        by = {s.method: s for s in series}
        assert set(by) == {"jpct", "jpct-genie", "rough", "esprit+ls"}
        assert np.isnan(by["esprit+ls"].crlb_doppler[0]) and by["jpct"].crlb_doppler[0] > 0

    def test_bad_axis(self, scn):
        with pytest.raises(ConfigError):
            sweep(scn, "colour", [1], trials=1)

    def test_header_only(self, tmp_path):
        emit_csv([], tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text() == ",".join(CSV_HEADER) + "\n"

    def test_round_trip_and_bytes(self, tmp_path):
        s = MetricSeries("snr", "jpct", "dft")
        vals = [1 / 3, np.pi * 1e4, 2.5e-7, 0.123456789123, np.sqrt(2), np.e, 1e-3]
        s.values, s.trials, s.failures = [-10], [500], [[]]
        (s.rmse_doppler, s.rmse_elev, s.rmse_azim, s.nmse, s.crlb_doppler, s.crlb_elev, s.crlb_azim) = ([v] for v in vals)
        emit_csv([s], tmp_path / "a.csv")
        emit_csv([s], tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        rows = _parse((tmp_path / "a.csv").read_text())
        assert rows[0] == list(CSV_HEADER)
        assert rows[1][:3] == ["-10", "jpct", "dft"] and rows[1][-1] == "500"
        # 9 significant digits bound the relative rounding error by 5e-9
        np.testing.assert_allclose([float(x) for x in rows[1][3:10]], vals, rtol=5e-9)
        assert rows[1][3] == "0.333333333" and rows[1][4] == "31415.9265"

    def test_io_error_surfaces(self, tmp_path):
        with pytest.raises(OSError):
            emit_csv([], tmp_path / "missing" / "x.csv")


class TestCli:
    def test_scenario_check(self, capsys):
        assert main(["scenario-check"]) == 0
        assert "doppler = 42856.16" in capsys.readouterr().out

    def test_verbose_either_side(self, capsys):
        for args in (["-v", "scenario-check"], ["scenario-check", "-v"]):
            assert main(args) == 0
            assert "frame.n_pilots" in capsys.readouterr().out

    def test_config_error_exit(self, tmp_path, capsys):
        assert main(["scenario-check", "--config", str(write(tmp_path, "[frame]\nt_block = 3.0\n"))]) == 1
        assert "frame.t_block" in capsys.readouterr().err
        assert main(["scenario-check", "--config", str(tmp_path / "absent.toml")]) == 1

    def test_runtime_failure_exit(self, tmp_path, capsys):
        assert main(["crlb", "--config", str(write(tmp_path, "[link]\nnoise_var = 0.0\n"))]) == 2

    def test_crlb(self, capsys):
        assert main(["crlb", "--combiner", "dft,random"]) == 0
        rows = _parse(capsys.readouterr().out)
        assert rows[0][0] == "combiner" and [r[0] for r in rows[1:]] == ["dft", "random"]

    def test_simulate(self, tmp_path):
        out = tmp_path / "sim.csv"
        assert main(["simulate", "--seed", "3", "--out", str(out)]) == 0
        rows = _parse(out.read_text())
        assert len(rows) == 11 and rows[0][0] == "block"

    def test_sweep_deterministic(self, tmp_path):
        args = ["sweep", "--axis", "snr", "--values=-5,5", "--trials", "2", "--seed", "7", "--method", "jpct,rough"]
        assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
        assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
        data = (tmp_path / "a.csv").read_bytes()
        assert data == (tmp_path / "b.csv").read_bytes()
        assert len(_parse(data.decode())) == 5

    def test_unknown_method(self, capsys):
        assert main(["sweep", "--method", "best", "--trials", "1"]) == 1
