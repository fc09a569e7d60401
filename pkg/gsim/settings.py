import argparse, json, logging, os, pandas
from gsim.errors import ConfigError

logger = logging.getLogger(__name__)

settingsFile = "gsimSettings.json"

default_dict = {"solver_dt": 5e-15, "solver_t_end": 10e-9, "solver_stride": 20, "solver_method": "euler", "solver_initial": "zero",
                "drive_bias": 13e-3, "drive_peak": 10.0, "drive_width": 2e-12, "drive_pulse_at": 5e-9,
                "analysis_prominence": 0.02, "analysis_n_points": 201, "analysis_alpha": 0.05, "analysis_lead": 0.5e-9,
                "ks_exact_limit": 1_000_000, "decoy_photon_cutoff": 40, "sweep_workers": 1}

def readJson(filepath):
    with open(filepath, "r") as S:
        try:
            settings_dict = json.load(S)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{filepath}, line {err.lineno}: {err.msg}") from None
    if not isinstance(settings_dict, dict):
        raise ConfigError(f"{filepath}: expected a JSON object")
    return settings_dict

def writeJson(dict, path):
    json_object = json.dumps(dict, indent=4)
    with open(path, "w") as outfile:
        outfile.write(json_object)

def _isNumber(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)

def getStaticSettings(path=settingsFile):
    """
    Reads the settings file if it exists in CWD. Otherwise uses the default settings.
    Keys missing from the user file keep their default value.
    """
    settings_dict = dict(default_dict)
    if os.path.exists(path):
        logger.info(f"NOTICE: found {path}. This takes precedence over the built-in settings.")
        for key, value in readJson(path).items():
            if key not in default_dict:
                logger.warning(f"ignoring unknown setting {key!r} in {path}")
                continue
            if _isNumber(default_dict[key]) and not _isNumber(value):
                raise ConfigError(f"{path}: setting {key!r} must be a number, got {value!r}")
            if isinstance(default_dict[key], str) and not isinstance(value, str):
                raise ConfigError(f"{path}: setting {key!r} must be a string, got {value!r}")
            settings_dict[key] = value
    return settings_dict

def showSettings(settings_dict):
    df = pandas.DataFrame({"KEYS": list(settings_dict), "VALUES": list(settings_dict.values())})
    print(df.to_string(index=False))

def getArgs(argv=None):
    parser = argparse.ArgumentParser(prog="gsimSettings")
    parser.add_argument('-s', '--show', default = False, action = "store_true", help = "prints all settings")
    parser.add_argument('-w', '--write', default = False, action = "store_true", help = f"writes a copy of {settingsFile} to cwd for user to edit manually.")
    parser.add_argument('-f', '--force', default = False, action = "store_true", help = f"overwrite an existing {settingsFile} when used with -w.")
    args = parser.parse_args(argv)
    return args

def main(argv=None):
    args = getArgs(argv)
    if args.show:
        if os.path.exists(settingsFile):
            print(f"All gsim commands will use these user-defined settings in {settingsFile}")
        try:
            showSettings(getStaticSettings())
        except ConfigError as err:
            logger.error(str(err))
            return err.exit_code
    if args.write:
        if os.path.exists(settingsFile) and not args.force:
            print(f"{settingsFile} exists. Rerun with -f to overwrite it.")
            return 1
        writeJson(default_dict, settingsFile)
        print(f"created {settingsFile}")
    return 0

if __name__ == "__main__":
    raise SystemExit(main())
