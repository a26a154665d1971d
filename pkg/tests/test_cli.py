import json

import numpy as np
import pytest

from ikk import arm, capture, identify, interp
from ikk.cli import main


@pytest.fixture(scope="module")
def basis_file(tmp_path_factory):
    """Small synthetic calibration written through the CLI itself."""
    path = tmp_path_factory.mktemp("cal") / "basis.json"
    code = main(["calibrate", "--synthetic", "--seed", "5", "--points", "4", "-o", str(path)])
    assert code == 0
    return path


class TestCalibrate:
    def test_canonical_synthetic_run(self, tmp_path, capsys):
        out = tmp_path / "basis.json"
        code = main(["calibrate", "--synthetic", "--seed", "42", "-o", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["schema"] == "ikk-basis/1"
        assert len(doc["nodes"]) == 10
        stdout = capsys.readouterr().out
        assert "explained_variance" in stdout

    def test_missing_manifest_exits_2(self, tmp_path, capsys):
        code = main(["calibrate", "--session", str(tmp_path / "nope.json"), "-o", str(tmp_path / "b.json")])
        assert code == 2
        assert "nope.json" in capsys.readouterr().err

    def test_synthetic_requires_seed(self, tmp_path, capsys):
        code = main(["calibrate", "--synthetic", "-o", str(tmp_path / "b.json")])
        assert code == 2

    def test_variance_threshold_monotone(self, tmp_path):
        lo = tmp_path / "lo.json"
        hi = tmp_path / "hi.json"
        for path, threshold in ((lo, "0.8"), (hi, "0.9")):
            code = main([
                "calibrate", "--synthetic", "--seed", "5", "--points", "4",
                "--variance-threshold", threshold, "-o", str(path),
            ])
            assert code == 0

        def one_pc_count(p):
            return sum(n["mode"] == "OnePC" for n in json.loads(p.read_text())["nodes"])

        assert one_pc_count(hi) <= one_pc_count(lo)

    def test_deterministic_output(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        for path in (a, b):
            assert main(["calibrate", "--synthetic", "--seed", "5", "--points", "4", "-o", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_volume_out(self, tmp_path):
        out = tmp_path / "basis.json"
        vol = tmp_path / "volume.json"
        code = main([
            "calibrate", "--synthetic", "--seed", "5", "--points", "4",
            "-o", str(out), "--volume-out", str(vol),
        ])
        assert code == 0
        assert json.loads(vol.read_text())["schema"] == "ikk-volume/1"


class TestRun:
    def test_signal_csv_and_hull_warning(self, basis_file, tmp_path, capsys):
        volume = interp.load_volume_or_bases(basis_file)
        center = volume.points.mean(axis=0)
        far = center + np.array([0.6, 0.0, 0.0])  # leaves the hull
        rate = 100.0
        frames = []
        for i in range(40):
            a = i / 39.0
            p = center + a * (far - center)
            frames.append(capture.Frame(t=i / rate, q=np.zeros(7), hand=arm.HandPose(p, np.array([1.0, 0, 0, 0]))))
        rec = capture.Recording(frames=tuple(frames), rate_hz=rate, label="walk")
        walk = tmp_path / "walk.csv"
        capture.save_recording(rec, walk)

        out = tmp_path / "signal.csv"
        code = main(["run", "--volume", str(basis_file), "--input", str(walk), "--out", str(out)])
        assert code == 0
        err = capsys.readouterr().err
        assert "outside the calibrated hull" in err
        lines = out.read_text().splitlines()
        assert lines[0] == "t,raw,value,inside_hull"
        assert any(line.endswith(",false") for line in lines[1:])

    def test_missing_input_exits_2(self, basis_file, tmp_path, capsys):
        code = main(["run", "--volume", str(basis_file), "--input", str(tmp_path / "x.csv"), "--out", str(tmp_path / "o.csv")])
        assert code == 2

    def test_corrupt_volume_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema": "wat"}')
        rec = tmp_path / "r.csv"
        rec.write_text("t,q0,px,py,pz,ow,ox,oy,oz\n0.0,0,0,0,0,1,0,0,0\n")
        code = main(["run", "--volume", str(bad), "--input", str(rec), "--out", str(tmp_path / "o.csv")])
        assert code == 1


class TestSimulate:
    def test_exp1_writes_nine_trials_and_summary(self, basis_file, tmp_path, capsys):
        out = tmp_path / "results"
        code = main([
            "simulate", "exp1", "--basis", str(basis_file), "--seed", "7",
            "--duration", "4", "-o", str(out),
        ])
        assert code == 0
        trials = list((out / "exp1").glob("trajectory-*-rep*.csv"))
        assert len(trials) == 9
        assert (out / "exp1" / "summary.json").exists()
        summary = json.loads(capsys.readouterr().out)
        assert set(summary) == {"trajectory-1", "trajectory-2", "trajectory-3"}

    def test_report_round_trip(self, basis_file, tmp_path, capsys):
        out = tmp_path / "results"
        assert main([
            "simulate", "exp1", "--basis", str(basis_file), "--seed", "7",
            "--repetitions", "1", "--duration", "4", "-o", str(out),
        ]) == 0
        capsys.readouterr()
        assert main(["report", "--results", str(out / "exp1"), "--format", "markdown"]) == 0
        text = capsys.readouterr().out
        assert "trajectory-1-rep0" in text


class TestFit:
    def test_counts_vector_matches_library(self, capsys):
        from ikk import experiments

        code = main(["fit", "--counts", "17,22,26,29,30,31,31", "--restarts", "40"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        ref = experiments.fit_learning_curve(
            np.array([17, 22, 26, 29, 30, 31, 31], dtype=float), restarts=40, seed=0
        )
        assert doc["theta"] == pytest.approx(list(ref.theta))
        assert doc["plateau"] == pytest.approx(ref.plateau)
        assert doc["x_min"] == 17.0

    def test_bad_counts_exit_2(self, capsys):
        assert main(["fit", "--counts", "1,banana,3"]) == 2


class TestHelp:
    def test_help_lists_flags_with_units(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["calibrate", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        assert "--variance-threshold" in text
        assert "m/s" in text
        assert "rad/s" in text

    def test_all_subcommands_have_help(self, capsys):
        for cmd in ("calibrate", "run", "simulate", "fit", "report", "serve"):
            with pytest.raises(SystemExit) as exc:
                main([cmd, "--help"])
            assert exc.value.code == 0
            capsys.readouterr()
