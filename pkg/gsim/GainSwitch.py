import argparse, json, logging, os, numpy, pandas
from dataclasses import dataclass
from functools import partial
from multiprocessing import Pool
from gsim import __version__
from gsim.settings import getStaticSettings, writeJson
from gsim.params import loadParams, parse_quantity
from gsim.drive import gain_switch_profile, apply_filter, readDriveFile
from gsim.solver import INTEGRATORS, initial_state, writeTrace
from gsim.pulses import pulse_features, normalize_amplitude, readWaveform, relative_delay
from gsim.stats import compare_waveforms, ks_test
from gsim.decoy import DecoyLink, key_rate, key_rate_sweep, readLinkFile
from gsim.analytic import analytic_report
from gsim.errors import GsimError, ConfigError, StepTooLarge

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything one simulate or sweep run needs, resolved from CLI flags, a runs file and gsimSettings.json.
    drive is None for sweeps, which build one gain-switch profile per bias from bias/peak/width/pulse_at.
    """
    params: object
    drive: object
    dt: float
    t_end: float
    stride: int
    method: str
    initial: str
    prominence: float
    lead: float
    out_dir: str
    name: str
    params_file: str = None
    bias: float = None
    peak: float = None
    width: float = None
    pulse_at: float = None
    filter_tau: float = None
    biases: tuple = ()
    workers: int = 1

def _pick(run, key, settings=None, settings_key=None):
    value = run.get(key)
    if value is None and settings is not None and settings_key is not None:
        value = settings[settings_key]
    return value

def _number(value, cast, key):
    try:
        return cast(value)
    except (TypeError, ValueError):
        kind = "an integer" if cast is int else "a number"
        raise ConfigError(f"{key} must be {kind}, got {value!r}") from None

def _quantity(run, key, unit, settings=None, settings_key=None):
    value = _pick(run, key, settings, settings_key)
    return None if value is None else parse_quantity(value, unit)

def _grid(run):
    if run.get("biases"):
        grid = [parse_quantity(b, "A") for b in run["biases"]]
    elif run.get("bias_start") is not None:
        if run.get("bias_stop") is None or run.get("bias_count") is None:
            raise ConfigError("--bias-start needs --bias-stop and --bias-count")
        grid = list(numpy.linspace(parse_quantity(run["bias_start"], "A"), parse_quantity(run["bias_stop"], "A"), _number(run["bias_count"], int, "bias_count")))
    else:
        return ()
    if len(grid) == 0:
        raise ConfigError("bias grid is empty")
    if any(b1 <= b0 for b0, b1 in zip(grid, grid[1:])):
        raise ConfigError("bias grid must be sorted in strictly increasing order")
    return tuple(float(b) for b in grid)

def buildConfig(run, settings, sweep=False):
    params = loadParams(run.get("params"))
    t_end = _quantity(run, "t_end", "s")
    bias = _quantity(run, "bias", "A", settings, "drive_bias")
    peak = _quantity(run, "peak", "A", settings, "drive_peak")
    width = _quantity(run, "width", "s", settings, "drive_width")
    pulse_at = _quantity(run, "pulse_at", "s", settings, "drive_pulse_at")
    filter_tau = _quantity(run, "filter_tau", "s")
    drive = None
    if run.get("drive") is not None:
        if sweep:
            raise ConfigError("a sweep builds its own gain-switch drives; use --bias-*/--peak/--width/--pulse-at instead of --drive")
        drive = readDriveFile(run["drive"])
        t_end = drive.t_end if t_end is None else t_end
    if t_end is None:
        t_end = settings["solver_t_end"]
    if drive is None and not sweep:
        drive = gain_switch_profile(bias, peak, pulse_at, width, t_end)
    if drive is not None and filter_tau is not None:
        drive = apply_filter(drive, filter_tau)
    dt = _quantity(run, "dt", "s", settings, "solver_dt")
    if dt > params.tau_p / 20:
        raise StepTooLarge(dt, params.tau_p)
    biases = _grid(run) if sweep else ()
    if sweep and not biases:
        raise ConfigError("sweep needs a bias grid: --biases or --bias-start/--bias-stop/--bias-count")
    return ExperimentConfig(params=params, drive=drive, dt=dt, t_end=t_end, stride=_number(_pick(run, "stride", settings, "solver_stride"), int, "stride"),
                            method=_pick(run, "method", settings, "solver_method"), initial=_pick(run, "initial", settings, "solver_initial"),
                            prominence=_number(_pick(run, "prominence", settings, "analysis_prominence"), float, "prominence"),
                            lead=_quantity(run, "lead", "s", settings, "analysis_lead"), out_dir=run.get("out_dir") or ".",
                            name=run.get("name") or "gsim", params_file=run.get("params") or os.environ.get("GSIM_PARAMS"),
                            bias=bias, peak=peak, width=width, pulse_at=pulse_at, filter_tau=filter_tau, biases=biases,
                            workers=_number(_pick(run, "workers", settings, "sweep_workers"), int, "workers"))

def runSimulation(cfg, drive):
    if cfg.method not in INTEGRATORS:
        raise ConfigError(f"unknown integrator {cfg.method!r}, expected one of {sorted(INTEGRATORS)}")
    start = initial_state(cfg.params, drive, cfg.initial)
    return INTEGRATORS[cfg.method](cfg.params, drive, cfg.dt, cfg.t_end, start, cfg.stride)

def traceFeatures(trace, cfg, drive):
    """
    Features of the photon density from `lead` seconds before the drive edge to the end of the run.
    Returns (window start, raw features, features of the normalized waveform).
    """
    edge = drive.first_rise()
    t_from = 0.0 if edge is None else max(0.0, edge - cfg.lead)
    photon = trace.photon_waveform(t_from)
    raw = pulse_features(photon, edge, cfg.prominence)
    normalized = pulse_features(normalize_amplitude(photon), edge, cfg.prominence)
    return t_from, raw, normalized

def _out(cfg_or_run, suffix):
    out_dir = cfg_or_run.out_dir if isinstance(cfg_or_run, ExperimentConfig) else (cfg_or_run.get("out_dir") or ".")
    name = cfg_or_run.name if isinstance(cfg_or_run, ExperimentConfig) else (cfg_or_run.get("name") or "gsim")
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, f"{name}_{suffix}")

def cmd_simulate(run, settings):
    cfg = buildConfig(run, settings)
    trace = runSimulation(cfg, cfg.drive)
    trace_path = _out(cfg, "trace.csv")
    writeTrace(trace, trace_path)
    t_from, raw, normalized = traceFeatures(trace, cfg, cfg.drive)
    report = {"version": __version__, "params_file": cfg.params_file, "i_th_A": cfg.params.i_th, "method": cfg.method,
              "initial": cfg.initial, "dt_s": cfg.dt, "t_end_s": cfg.t_end, "stride": cfg.stride, "clamp_count": trace.clamp_count,
              "drive_edge_s": cfg.drive.first_rise(), "analysis_from_s": t_from, "trace_csv": os.path.basename(trace_path),
              "features": normalized.to_dict(), "raw_features": raw.to_dict()}
    writeJson(report, _out(cfg, "features.json"))
    print(pandas.DataFrame([{"primary_t_s": normalized.primary_peak.t, "secondary_amp": _secondary(normalized),
                             "peak_difference": normalized.peak_difference, "turn_on_delay_s": normalized.turn_on_delay}]).to_string(index=False))
    return report

def _secondary(features):
    return 0.0 if features.secondary_peak is None else features.secondary_peak.amplitude

def sweepPoint(bias, cfg):
    """
    One row of a bias sweep. Failures become rows with an error tag so the sweep carries on.
    """
    row = {"bias_A": bias, "secondary_amp": None, "peak_difference": None, "turn_on_delay_s": None,
           "primary_t_s": None, "secondary_t_s": None, "error": ""}
    try:
        drive = gain_switch_profile(bias, bias + (cfg.peak - cfg.bias), cfg.pulse_at, cfg.width, cfg.t_end)
        if cfg.filter_tau is not None:
            drive = apply_filter(drive, cfg.filter_tau)
        trace = runSimulation(cfg, drive)
        _, _, features = traceFeatures(trace, cfg, drive)
    except GsimError as err:
        logger.warning(f"sweep point {bias:g} A failed: {err}")
        row["error"] = f"{type(err).__name__}: {err}"
        return row
    row.update({"secondary_amp": _secondary(features), "peak_difference": features.peak_difference,
                "turn_on_delay_s": features.turn_on_delay, "primary_t_s": features.primary_peak.t,
                "secondary_t_s": None if features.secondary_peak is None else features.secondary_peak.t})
    return row

def cmd_sweep(run, settings):
    """
    The perturbation keeps the height peak - bias of the configured pulse while the pre-bias steps through the grid.
    """
    cfg = buildConfig(run, settings, sweep=True)
    point = partial(sweepPoint, cfg=cfg)
    if cfg.workers > 1:
        with Pool(cfg.workers) as pool:
            rows = pool.map(point, cfg.biases)
    else:
        rows = [point(bias) for bias in cfg.biases]
    frame = pandas.DataFrame(rows).sort_values("bias_A", kind="stable").reset_index(drop=True)
    frame.to_csv(_out(cfg, "sweep.csv"), index=False)
    print(frame.to_string(index=False))
    return frame

def cmd_compare(run, settings):
    signal = readWaveform(run["signal"])
    decoy = readWaveform(run["decoy"])
    prominence = _number(_pick(run, "prominence", settings, "analysis_prominence"), float, "prominence")
    alpha = _number(_pick(run, "alpha", settings, "analysis_alpha"), float, "alpha")
    comparison = compare_waveforms(signal, decoy, _number(_pick(run, "n_points", settings, "analysis_n_points"), int, "n_points"), prominence,
                                   run.get("ks_method") or "auto", _number(settings["ks_exact_limit"], int, "ks_exact_limit"))
    delay = relative_delay(pulse_features(normalize_amplitude(signal), None, prominence), pulse_features(normalize_amplitude(decoy), None, prominence))
    report = {**comparison.result.to_dict(alpha), "relative_delay_s": delay, "signal": run["signal"], "decoy": run["decoy"]}
    writeJson(report, _out(run, "compare.json"))
    table = comparison.ecdf_table()
    pandas.DataFrame({"value": table["value"], "F_signal": table["F_a"], "F_decoy": table["F_b"]}).to_csv(_out(run, "ecdf.csv"), index=False)
    print(json.dumps(report, indent=4))
    return report

def cmd_ks_test(run, settings):
    first = readWaveform(run["first"])
    second = readWaveform(run["second"])
    alpha = _number(_pick(run, "alpha", settings, "analysis_alpha"), float, "alpha")
    result = ks_test(first.v, second.v, run.get("ks_method") or "auto", _number(settings["ks_exact_limit"], int, "ks_exact_limit"))
    report = result.to_dict(alpha)
    writeJson(report, _out(run, "ks.json"))
    print(json.dumps(report, indent=4))
    return report

LINK_FLAGS = {"mu": "mu_signal", "mu_decoy": "mu_decoy", "y0": "y0", "eta": "eta", "e_detector": "e_detector",
              "e_darkcount": "e_darkcount", "q": "q_ratio", "f_ec": "f_ec", "cutoff": "photon_cutoff"}

def buildLink(run, settings):
    values = {}
    if run.get("link") is not None:
        values = vars(readLinkFile(run["link"])).copy()
    for flag, name in LINK_FLAGS.items():
        if run.get(flag) is not None:
            values[name] = _number(run[flag], int if name == "photon_cutoff" else float, flag)
    values.setdefault("photon_cutoff", _number(settings["decoy_photon_cutoff"], int, "decoy_photon_cutoff"))
    if run.get("standard_error_model"):
        values["error_model"] = "standard"
    missing = [flag for flag, name in LINK_FLAGS.items() if name not in values and name not in ("q_ratio", "f_ec")]
    if missing:
        raise ConfigError(f"missing link parameters: {', '.join('--' + m.replace('_', '-') for m in missing)}")
    values["photon_cutoff"] = _number(values["photon_cutoff"], int, "photon_cutoff")
    return DecoyLink(**values)

def _sweepValues(text):
    try:
        start, stop, count = text.split(":")
        return list(numpy.linspace(float(start), float(stop), int(count)))
    except ValueError:
        raise ConfigError(f"sweep values must look like start:stop:count, got {text!r}") from None

def cmd_keyrate(run, settings):
    link = buildLink(run, settings)
    report = key_rate(link).to_dict()
    writeJson(report, _out(run, "keyrate.json"))
    print(json.dumps(report, indent=4))
    if run.get("sweep") is not None:
        if run.get("values") is None:
            raise ConfigError("--sweep needs --values start:stop:count")
        frame = key_rate_sweep(link, run["sweep"], _sweepValues(run["values"]))
        frame.to_csv(_out(run, f"keyrate_{run['sweep']}.csv"), index=False)
    return report

def cmd_analyze(run, settings):
    w = readWaveform(run["waveform"])
    if run.get("normalize"):
        w = normalize_amplitude(w)
    edge = _quantity(run, "edge", "s")
    features = pulse_features(w, edge, _number(_pick(run, "prominence", settings, "analysis_prominence"), float, "prominence"))
    report = {"waveform": run["waveform"], "normalized": bool(run.get("normalize")), **features.to_dict()}
    writeJson(report, _out(run, "analyze.json"))
    print(json.dumps(report, indent=4))
    return report

def cmd_analytic(run, settings):
    params = loadParams(run.get("params"))
    current = _quantity(run, "current", "A")
    if current is None:
        current = 2 * params.i_th
    report = analytic_report(params, current)
    writeJson(report, _out(run, "analytic.json"))
    print(json.dumps(report, indent=4))
    return report

COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "compare": cmd_compare, "ks-test": cmd_ks_test,
            "keyrate": cmd_keyrate, "analyze": cmd_analyze, "analytic": cmd_analytic}

def getJsonArgs(jsonFile, defaults):
    """
    Reads run parameters from a file. Allows multiple jobs to be run sequentially with one command.
    Values given in the file win; anything else comes from the command line.
    """
    if not os.path.exists(jsonFile):
        raise ConfigError(f"runs file {jsonFile} does not exist")
    with open(jsonFile, 'r') as J:
        try:
            runs_dict = json.load(J)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{jsonFile}, line {err.lineno}: {err.msg}") from None
    if not isinstance(runs_dict, dict) or not isinstance(runs_dict.get("runs"), list):
        raise ConfigError(f'{jsonFile} needs a top-level "runs" list')
    if not all(isinstance(run, dict) for run in runs_dict["runs"]):
        raise ConfigError(f"{jsonFile}: every entry of \"runs\" must be an object")
    for run in runs_dict["runs"]:
        for dict_key in defaults.keys():
            if run.get(dict_key) is None:
                run[dict_key] = defaults[dict_key]
    return runs_dict["runs"]

def _solverOptions():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--params", type = str, help = "Laser parameter file (key = value). Defaults to $GSIM_PARAMS or the packaged defaults.")
    parent.add_argument("--drive", type = str, help = "Drive profile CSV (t_start,t_end,shape,level_start,level_end). Overrides the inline gain-switch flags.")
    parent.add_argument("--bias", type = str, help = "Pre-bias current, e.g. 13mA.")
    parent.add_argument("--peak", type = str, help = "Current during the perturbation, e.g. 10A.")
    parent.add_argument("--width", type = str, help = "Perturbation width, e.g. 2ps.")
    parent.add_argument("--pulse-at", dest = "pulse_at", type = str, help = "Perturbation start time, e.g. 5ns.")
    parent.add_argument("--filter-tau", dest = "filter_tau", type = str, help = "Driver low-pass time constant, e.g. 20ps.")
    parent.add_argument("--dt", type = str, help = "Solver step, at most tau_p/20.")
    parent.add_argument("--t-end", dest = "t_end", type = str, help = "Simulated window length.")
    parent.add_argument("--stride", type = int, help = "Record every stride-th solver step.")
    parent.add_argument("--method", choices = sorted(INTEGRATORS), help = "Integrator.")
    parent.add_argument("--initial", choices = ["zero", "steady"], help = "Start from an empty device or from the steady state of the initial current.")
    parent.add_argument("--prominence", type = float, help = "Minimum peak prominence as a fraction of the global maximum.")
    parent.add_argument("--lead", type = str, help = "Part of the trace kept before the drive edge for analysis.")
    return parent

def _outputOptions():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("-o", "--out-dir", dest = "out_dir", type = str, help = "Directory for output files. Defaults to cwd.")
    parent.add_argument("--name", type = str, help = "Prefix for output file names. Defaults to gsim.")
    return parent

def getArgs(argv=None):
    parser = argparse.ArgumentParser(prog="gsim", description="Gain-switched laser diode simulation, pulse comparison and decoy-state key rates.")
    parser.add_argument("-v", "--verbose", action = "count", default = 0, help = "Increase log output (-v notices, -vv debug).")
    parser.add_argument("-j", "--json", type = str, help = 'A runs file {"runs": [...]} whose entries use the option names below plus "command".')
    parser.add_argument("--version", action = "version", version = f"gsim {__version__}")
    sub = parser.add_subparsers(dest = "command")
    solver, output = _solverOptions(), _outputOptions()

    sub.add_parser("simulate", parents = [solver, output], help = "Run one simulation, write the trace CSV and features JSON.")

    sweep = sub.add_parser("sweep", parents = [solver, output], help = "Pulse features over a grid of pre-bias currents.")
    sweep.add_argument("--biases", nargs = "+", help = "Explicit sorted list of pre-bias currents.")
    sweep.add_argument("--bias-start", dest = "bias_start", type = str)
    sweep.add_argument("--bias-stop", dest = "bias_stop", type = str)
    sweep.add_argument("--bias-count", dest = "bias_count", type = int)
    sweep.add_argument("--workers", type = int, help = "Worker processes. Defaults to 1.")

    compare = sub.add_parser("compare", parents = [output], help = "KS comparison of a signal and a decoy pulse.")
    compare.add_argument("signal", type = str, help = "Trace CSV or time,value waveform CSV.")
    compare.add_argument("decoy", type = str, help = "Trace CSV or time,value waveform CSV.")
    compare.add_argument("--alpha", type = float, help = "Significance level. p > alpha means indistinguishable.")
    compare.add_argument("--n-points", dest = "n_points", type = int, help = "Samples per waveform after resampling.")
    compare.add_argument("--prominence", type = float)
    compare.add_argument("--ks-method", dest = "ks_method", choices = ["auto", "exact", "asymptotic"])

    ks = sub.add_parser("ks-test", parents = [output], help = "Two-sample KS test on the value columns of two files.")
    ks.add_argument("first", type = str)
    ks.add_argument("second", type = str)
    ks.add_argument("--alpha", type = float)
    ks.add_argument("--ks-method", dest = "ks_method", choices = ["auto", "exact", "asymptotic"])

    keyrate = sub.add_parser("keyrate", parents = [output], help = "Decoy-state gain, QBER and key rate report.")
    keyrate.add_argument("--link", type = str, help = "JSON file with DecoyLink fields.")
    keyrate.add_argument("--mu", type = float, help = "Signal mean photon number.")
    keyrate.add_argument("--mu-decoy", dest = "mu_decoy", type = float)
    keyrate.add_argument("--y0", type = float)
    keyrate.add_argument("--eta", type = float)
    keyrate.add_argument("--e-detector", dest = "e_detector", type = float)
    keyrate.add_argument("--e-darkcount", dest = "e_darkcount", type = float)
    keyrate.add_argument("--q", type = float, help = "Basis-sift ratio.")
    keyrate.add_argument("--f-ec", dest = "f_ec", type = float, help = "Error-correction inefficiency.")
    keyrate.add_argument("--cutoff", type = int, help = "Photon-number cutoff of the Poisson sums.")
    keyrate.add_argument("--standard-error-model", dest = "standard_error_model", default = None, action = "store_true")
    keyrate.add_argument("--sweep", choices = ["mu_signal", "eta"], help = "Also write a CSV sweeping this field.")
    keyrate.add_argument("--values", type = str, help = "start:stop:count for --sweep.")

    analyze = sub.add_parser("analyze", parents = [output], help = "Pulse features of a measured or simulated waveform.")
    analyze.add_argument("waveform", type = str)
    analyze.add_argument("--edge", type = str, help = "Drive edge time for the turn-on delay.")
    analyze.add_argument("--normalize", default = None, action = "store_true")
    analyze.add_argument("--prominence", type = float)

    analytic = sub.add_parser("analytic", parents = [output], help = "Closed-form threshold, steady state and small-signal report.")
    analytic.add_argument("--params", type = str)
    analytic.add_argument("--current", type = str, help = "Drive current. Defaults to 2 I_th.")

    args = parser.parse_args(argv)
    vardict = vars(args)
    if args.json is not None:
        run_list = getJsonArgs(args.json, vardict)
    elif args.command is None:
        parser.error("a subcommand or --json runs file is required")
    else:
        run_list = [vardict]
    return vardict["verbose"], run_list

def configureLogging(verbosity):
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(format="%(levelname)s: %(message)s")
    root.setLevel(level)

def main(argv=None, **kwargs):
    try:
        verbosity, run_list = getArgs(argv)
    except ConfigError as err:
        logger.error(str(err))
        return err.exit_code
    configureLogging(verbosity)
    try:
        default_dict = getStaticSettings()
    except ConfigError as err:
        logger.error(str(err))
        return err.exit_code
    for vardict in run_list:
        for key in kwargs:
            vardict[key] = kwargs[key]
        command = vardict.get("command")
        try:
            if command not in COMMANDS:
                raise ConfigError(f"unknown command {command!r}, expected one of {sorted(COMMANDS)}")
            COMMANDS[command](vardict, default_dict)
        except GsimError as err:
            logger.error(str(err))
            return err.exit_code
        if len(run_list) > 1:
            print("\n")
    return 0

if __name__ == "__main__":
    raise SystemExit(main())
