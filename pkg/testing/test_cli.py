import json, logging, math, os, pandas, pytest
import gsim
from gsim import GainSwitch, settings
from gsim.params import loadParams
from gsim.analytic import small_signal
from gsim.solver import steady_state
from gsim.GainSwitch import main, getJsonArgs
from gsim.errors import ConfigError

HERE = os.path.dirname(os.path.abspath(__file__))
RUNS = os.path.join(HERE, "test_runs.json")

#40 mA pre-bias, 2 ps kick of 36.6 mA, recorded every picosecond
PULSE = ["--bias", "40mA", "--peak", "76.6mA", "--width", "2ps", "--pulse-at", "1ns", "--t-end", "2ns",
         "--dt", "20fs", "--stride", "50", "--initial", "steady"]
LINK = ["--mu", "0.5", "--mu-decoy", "0.1", "--y0", "1e-5", "--eta", "0.1", "--e-detector", "0.01", "--e-darkcount", "5e-6"]
S_BENCHMARK = 0.009837439

def readJson(path):
    with open(path) as J:
        return json.load(J)

@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("GSIM_PARAMS", raising=False)
    return tmp_path

@pytest.fixture
def pulse_trace(workdir):
    assert main(["simulate", *PULSE, "--name", "pulse"]) == 0
    return str(workdir / "pulse_trace.csv")

def test_simulate_writes_outputs(pulse_trace, workdir):
    report = readJson(workdir / "pulse_features.json")
    assert report["trace_csv"] == "pulse_trace.csv"
    assert report["drive_edge_s"] == pytest.approx(1e-9)
    assert report["features"]["primary_peak"]["amplitude"] == 1.0
    assert report["features"]["primary_peak"]["t_s"] > 1e-9
    assert report["clamp_count"] == 0
    assert pandas.read_csv(pulse_trace).shape == (2001, 4)

def test_simulate_is_deterministic(workdir):
    for out in ("a", "b"):
        assert main(["simulate", *PULSE, "-o", out]) == 0
    for suffix in ("trace.csv", "features.json"):
        assert (workdir / "a" / f"gsim_{suffix}").read_bytes() == (workdir / "b" / f"gsim_{suffix}").read_bytes()

def test_zero_drive_is_numerical_error(workdir, caplog):
    args = ["simulate", "--bias", "0", "--peak", "0", "--pulse-at", "0.5ns", "--t-end", "1ns", "--dt", "50fs"]
    assert main(args) == 3
    assert "constant waveform" in caplog.text

def test_step_too_large(workdir, caplog):
    assert main(["simulate", "--dt", "1ps"]) == 2
    assert "tau_p/20" in caplog.text

def test_missing_subcommand(workdir):
    with pytest.raises(SystemExit):
        main([])

def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert capsys.readouterr().out.strip() == f"gsim {gsim.__version__}"
    assert gsim.__author__ == ["gsim developers"]

def test_compare_with_itself(pulse_trace, workdir):
    assert main(["compare", pulse_trace, pulse_trace]) == 0
    report = readJson(workdir / "gsim_compare.json")
    assert report["d"] == 0.0
    assert report["p"] == 1.0
    assert report["verdict"] == "indistinguishable"
    assert report["relative_delay_s"] == 0.0
    table = pandas.read_csv(workdir / "gsim_ecdf.csv")
    assert list(table.columns) == ["value", "F_signal", "F_decoy"]
    assert (table["F_signal"] == table["F_decoy"]).all()

def test_compare_reports_bad_line(workdir, caplog):
    path = workdir / "broken.csv"
    path.write_text("time,value\n0,1\n1e-12,2\n2e-12,oops\n")
    assert main(["compare", str(path), str(path)]) == 2
    assert "line 4" in caplog.text

def test_ks_test(pulse_trace, workdir):
    assert main(["ks-test", pulse_trace, pulse_trace, "--ks-method", "asymptotic"]) == 0
    report = readJson(workdir / "gsim_ks.json")
    assert report["d"] == 0.0
    assert report["method"] == "asymptotic"

def test_settings_alpha_reaches_report(pulse_trace, workdir):
    settings.writeJson({"analysis_alpha": 0.5}, settings.settingsFile)
    assert main(["compare", pulse_trace, pulse_trace]) == 0
    assert readJson(workdir / "gsim_compare.json")["alpha"] == 0.5

def test_keyrate_benchmark(workdir):
    assert main(["keyrate", *LINK]) == 0
    report = readJson(workdir / "gsim_keyrate.json")
    assert report["key_rate"] == pytest.approx(S_BENCHMARK, rel=1e-3)
    assert report["insecure"] is False

def test_keyrate_missing_flags(workdir, caplog):
    assert main(["keyrate", "--mu", "0.5"]) == 2
    assert "--y0" in caplog.text and "--mu-decoy" in caplog.text

def test_keyrate_bad_eta(workdir, caplog):
    assert main(["keyrate", *LINK, "--eta", "1.5"]) == 2
    assert "eta" in caplog.text

def test_keyrate_link_file(workdir):
    link = workdir / "link.json"
    link.write_text(json.dumps({"mu_signal": 0.5, "mu_decoy": 0.1, "y0": 1e-5, "eta": 0.5, "e_detector": 0.01, "e_darkcount": 5e-6}))
    assert main(["keyrate", "--link", str(link), "--eta", "0.1"]) == 0
    assert readJson(workdir / "gsim_keyrate.json")["key_rate"] == pytest.approx(S_BENCHMARK, rel=1e-3)

def test_keyrate_sweep(workdir):
    assert main(["keyrate", *LINK, "--sweep", "mu_signal", "--values", "0.2:0.8:4"]) == 0
    frame = pandas.read_csv(workdir / "gsim_keyrate_mu_signal.csv")
    assert list(frame["mu_signal"]) == pytest.approx([0.2, 0.4, 0.6, 0.8])
    assert main(["keyrate", *LINK, "--sweep", "eta"]) == 2

def test_analytic(workdir):
    assert main(["analytic", "--current", "36.6mA"]) == 0
    report = readJson(workdir / "gsim_analytic.json")
    assert report["i_A"] == pytest.approx(0.0366)
    assert report["overdamped"] is False

def test_analyze(pulse_trace, workdir):
    assert main(["analyze", pulse_trace, "--normalize", "--edge", "1ns", "--name", "scope"]) == 0
    report = readJson(workdir / "scope_analyze.json")
    assert report["normalized"] is True
    assert report["turn_on_delay_s"] > 0

def test_analyze_offset_scope_trace(workdir):
    #pulse of 0.4 on a -0.5 V offset, no normalization
    path = workdir / "scope.csv"
    rows = [f"{k * 1e-12!r},{-0.5 + 0.4 * 2.0 ** (-((k - 60) / 8.0) ** 2)!r}" for k in range(200)]
    path.write_text("time,value\n" + "\n".join(rows) + "\n")
    assert main(["analyze", str(path), "--edge", "50ps"]) == 0
    report = readJson(workdir / "gsim_analyze.json")
    assert report["normalized"] is False
    assert report["primary_peak"]["amplitude"] == pytest.approx(-0.1)
    assert report["turn_on_delay_s"] == pytest.approx(10e-12)

def test_single_point_sweep_matches_simulate(pulse_trace, workdir):
    assert main(["sweep", *PULSE, "--biases", "40mA"]) == 0
    row = pandas.read_csv(workdir / "gsim_sweep.csv").iloc[0]
    features = readJson(workdir / "pulse_features.json")["features"]
    assert row["bias_A"] == pytest.approx(0.04)
    assert row["peak_difference"] == pytest.approx(features["peak_difference"], rel=1e-9)
    assert row["turn_on_delay_s"] == pytest.approx(features["turn_on_delay_s"], rel=1e-9)
    if features["secondary_peak"] is not None:
        assert row["secondary_amp"] == pytest.approx(features["secondary_peak"]["amplitude"], rel=1e-9)

def test_sweep_needs_sorted_grid(workdir, caplog):
    assert main(["sweep", *PULSE, "--biases", "50mA", "40mA"]) == 2
    assert "increasing" in caplog.text
    assert main(["sweep", *PULSE]) == 2

def test_sweep_workers_agree(workdir):
    grid = ["--biases", "40mA", "60mA", "80mA"]
    assert main(["sweep", *PULSE, *grid, "-o", "serial"]) == 0
    assert main(["sweep", *PULSE, *grid, "-o", "pool", "--workers", "2"]) == 0
    serial = pandas.read_csv(workdir / "serial" / "gsim_sweep.csv")
    pool = pandas.read_csv(workdir / "pool" / "gsim_sweep.csv")
    pandas.testing.assert_frame_equal(serial, pool)

def test_ringing_shortens_with_bias(workdir):
    #fixed 36.6 mA kick from 2 to 5.5 times threshold
    args = ["sweep", "--biases", "36.6mA", "55mA", "73.3mA", "100.7mA", "--bias", "36.6mA", "--peak", "73.2mA",
            "--width", "2ps", "--pulse-at", "0.5ns", "--t-end", "2ns", "--dt", "20fs", "--stride", "50",
            "--initial", "steady", "--lead", "0.3ns"]
    assert main(args) == 0
    frame = pandas.read_csv(workdir / "gsim_sweep.csv")
    assert (frame["error"].fillna("") == "").all()
    secondary = list(frame["secondary_amp"])
    difference = list(frame["peak_difference"])
    assert all(b < a for a, b in zip(secondary, secondary[1:]))
    assert all(b > a for a, b in zip(difference, difference[1:]))
    #consecutive maxima of a damped sine shrink by exp(-2 pi damping/omega)
    params = loadParams()
    for bias, amp in zip(frame["bias_A"], secondary):
        ss = small_signal(params, steady_state(params, bias).n_s)
        assert amp == pytest.approx(math.exp(-2 * math.pi * ss.damping / ss.omega), rel=0.05)
    assert min(secondary) > 0.5

def test_secondary_suppressed_below_threshold(workdir):
    #default 10 A, 2 ps kick from 0.6 to 1.1 times threshold
    args = ["sweep", "--bias-start", "11mA", "--bias-stop", "20.15mA", "--bias-count", "8", "--bias", "13mA", "--peak", "10A",
            "--width", "2ps", "--pulse-at", "0.5ns", "--t-end", "3ns", "--dt", "20fs", "--stride", "50",
            "--initial", "steady", "--lead", "0.3ns"]
    assert main(args) == 0
    frame = pandas.read_csv(workdir / "gsim_sweep.csv")
    assert len(frame) == 8
    assert (frame["error"].fillna("") == "").all()
    secondary = list(frame["secondary_amp"].fillna(0.0))
    difference = list(frame["peak_difference"])
    delay = list(frame["turn_on_delay_s"])
    assert all(b <= a for a, b in zip(secondary, secondary[1:]))
    assert all(b >= a for a, b in zip(difference, difference[1:]))
    assert any(s < settings.default_dict["analysis_prominence"] for s in secondary)
    assert frame["secondary_t_s"].isna().all()
    #higher pre-bias leaves less carrier build-up to the kick
    assert all(b <= a for a, b in zip(delay, delay[1:]))
    assert delay[-1] < delay[0]

def test_sweep_point_reports_failures(workdir):
    run = {"biases": ["40mA"], "bias": "40mA", "peak": "76.6mA", "width": "2ps", "pulse_at": "1ns", "t_end": "2ns",
           "dt": "20fs", "stride": 50, "initial": "steady"}
    cfg = GainSwitch.buildConfig(run, settings.getStaticSettings(), sweep=True)
    row = GainSwitch.sweepPoint(-1.0, cfg)
    assert row["error"].startswith("DriveError")
    assert row["secondary_amp"] is None

def test_runs_file(workdir):
    assert main(["-j", RUNS]) == 0
    flat = readJson(workdir / "flat_keyrate.json")
    standard = readJson(workdir / "standard_keyrate.json")
    assert flat["error_model"] == "flat" and standard["error_model"] == "standard"
    assert flat["key_rate"] == pytest.approx(S_BENCHMARK, rel=1e-3)
    assert readJson(workdir / "analytic_analytic.json")["i_A"] == pytest.approx(0.0366)

def test_runs_file_wins_over_cli(workdir):
    path = workdir / "runs.json"
    path.write_text(json.dumps({"runs": [{"command": "analytic", "current": "36.6mA", "name": None}]}))
    run = getJsonArgs(str(path), {"command": None, "current": "50mA", "name": "cli", "verbose": 0})[0]
    assert run == {"command": "analytic", "current": "36.6mA", "name": "cli", "verbose": 0}

@pytest.mark.parametrize("text", ['{"runs": [', '{"jobs": []}'])
def test_bad_runs_file(workdir, text):
    path = workdir / "runs.json"
    path.write_text(text)
    with pytest.raises(ConfigError):
        getJsonArgs(str(path), {})
    assert main(["-j", str(path)]) == 2

def test_drive_file_with_text_level(workdir, caplog):
    path = workdir / "drive.csv"
    path.write_text("t_start,t_end,shape,level_start,level_end\n0,1e-9,constant,0.013,0.013\n1e-9,2e-9,constant,abc,0.013\n")
    assert main(["simulate", "--drive", str(path), "--dt", "50fs"]) == 2
    assert "line 3" in caplog.text

LINK_JSON = {"mu_signal": 0.5, "mu_decoy": 0.1, "y0": 1e-5, "eta": 0.1, "e_detector": 0.01, "e_darkcount": 5e-6}

@pytest.mark.parametrize("text, message", [('{"mu_signal": 0.5,\n "eta":', "line 2"),
                                           (json.dumps({**LINK_JSON, "eta": "0.1"}), "eta"),
                                           (json.dumps({"mu_signal": 0.5, "eta": 0.1}), "mu_decoy"),
                                           ("[0.5, 0.1]", "JSON object")])
def test_malformed_link_file(workdir, caplog, text, message):
    path = workdir / "link.json"
    path.write_text(text)
    assert main(["keyrate", "--link", str(path)]) == 2
    assert message in caplog.text

@pytest.mark.parametrize("text, message", [('{"analysis_alpha": ', "line 1"),
                                           ('{"solver_stride": "many"}', "solver_stride"),
                                           ('{"solver_method": 4}', "solver_method")])
def test_malformed_settings_file(workdir, caplog, text, message):
    (workdir / settings.settingsFile).write_text(text)
    assert main(["analytic"]) == 2
    assert message in caplog.text
    assert settings.main(["-s"]) == 2

@pytest.mark.parametrize("run, message", [({"command": "simulate", "stride": "many"}, "stride"),
                                          ({"command": "keyrate", "mu": 0.5, "mu_decoy": 0.1, "y0": 1e-5, "eta": "high", "e_detector": 0.01, "e_darkcount": 5e-6}, "eta"),
                                          ({"command": "compare", "signal": "a.csv", "decoy": "b.csv", "n_points": "lots"}, "n_points")])
def test_runs_file_with_text_values(workdir, caplog, run, message):
    if run["command"] == "compare":
        for name in ("a.csv", "b.csv"):
            (workdir / name).write_text("time,value\n" + "".join(f"{k}e-12,{k % 5}\n" for k in range(10)))
    path = workdir / "runs.json"
    path.write_text(json.dumps({"runs": [run]}))
    assert main(["-j", str(path)]) == 2
    assert message in caplog.text

def test_runs_file_entries_must_be_objects(workdir):
    path = workdir / "runs.json"
    path.write_text(json.dumps({"runs": ["simulate"]}))
    with pytest.raises(ConfigError):
        getJsonArgs(str(path), {})

def test_settings_script(workdir):
    assert settings.main(["-w"]) == 0
    assert readJson(workdir / settings.settingsFile) == settings.default_dict
    assert settings.main(["-w"]) == 1
    assert settings.main(["-w", "-f"]) == 0
    assert settings.main(["-s"]) == 0

def test_settings_override(workdir, caplog):
    caplog.set_level(logging.INFO)
    settings.writeJson({"analysis_alpha": 0.5, "bogus": 1}, settings.settingsFile)
    active = settings.getStaticSettings()
    assert active["analysis_alpha"] == 0.5
    assert active["solver_dt"] == settings.default_dict["solver_dt"]
    assert "bogus" not in active
    assert "NOTICE" in caplog.text
    assert "'bogus'" in caplog.text
