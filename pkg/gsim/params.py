import argparse, logging, os, re, pandas
from dataclasses import dataclass, fields, replace, asdict
from gsim.errors import ConfigError, NonPositiveField, ParameterRangeError, InconsistentLifetimes, InvalidParameters

logger = logging.getLogger(__name__)

Q_CHARGE = 1.602176634e-19
DEFAULT_PARAMS_FILE = os.path.join(os.path.dirname(__file__), "data", "default.params")
PARAMS_ENV = "GSIM_PARAMS"

#suffixes accepted on the command line. Everything inside the package is SI.
UNIT_SCALE = {"": 1.0, "A": 1.0, "mA": 1e-3, "uA": 1e-6, "s": 1.0, "ns": 1e-9, "ps": 1e-12, "fs": 1e-15}
_quantity = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([a-zA-Z]*)\s*$")

@dataclass(frozen=True)
class LaserParams:
    """
    Device constants of the single-mode carrier/photon rate equations. SI units throughout.
    gamma: float, mode confinement factor, (0, 1]
    a_gain: float, tangential gain coefficient (differential gain x group velocity), m^3/s
    n_transparency: float, carrier density at transparency n_g, m^-3
    epsilon: float, gain compression factor, m^3
    beta: float, spontaneous-emission coupling factor, (0, 1]
    tau_p: float, photon lifetime, s
    tau_nr: float, non-radiative carrier lifetime, s
    tau_mode: float, radiative carrier lifetime, s
    volume: float, active-region volume V, m^3
    thickness: float, active-region thickness d, m
    q_charge: float, elementary charge, C
    tau_n, n_th, i_th: derived carrier lifetime, threshold density and threshold current. None until validate() fills them.
    """
    gamma: float
    a_gain: float
    n_transparency: float
    epsilon: float
    beta: float
    tau_p: float
    tau_nr: float
    tau_mode: float
    volume: float
    thickness: float
    q_charge: float = Q_CHARGE
    tau_n: float = None
    n_th: float = None
    i_th: float = None

    @property
    def qv(self):
        return self.q_charge * self.volume

RAW_FIELDS = [f.name for f in fields(LaserParams) if f.name not in ("q_charge", "tau_n", "n_th", "i_th")]

def carrier_lifetime(params):
    return 1.0 / (1.0 / params.tau_nr + 1.0 / params.tau_mode)

def threshold_density(params):
    return params.n_transparency + 1.0 / (params.gamma * params.a_gain * params.tau_p)

def threshold_current(params):
    return params.qv * threshold_density(params) / carrier_lifetime(params)

def _problems(params):
    problems = []
    for name in ("gamma", "a_gain", "beta", "tau_p", "tau_nr", "tau_mode", "volume", "thickness"):
        value = getattr(params, name)
        if not value > 0:
            problems.append(NonPositiveField(name, value))
    for name in ("gamma", "beta"):
        value = getattr(params, name)
        if value > 1:
            problems.append(ParameterRangeError(name, value, "(0, 1]"))
    if not params.epsilon >= 0:
        problems.append(ParameterRangeError("epsilon", params.epsilon, "[0, inf)"))
    if not params.n_transparency >= 0:
        problems.append(ParameterRangeError("n_transparency", params.n_transparency, "[0, inf)"))
    if not problems:
        tau_n = carrier_lifetime(params)
        if tau_n >= min(params.tau_nr, params.tau_mode) * (1 - 1e-12):
            problems.append(InconsistentLifetimes(tau_n, params.tau_nr, params.tau_mode))
    return problems

def validate(params):
    """
    Returns a copy of params with tau_n, n_th and i_th populated.
    A single violated invariant raises its own error, several raise InvalidParameters listing all of them.
    """
    problems = _problems(params)
    if len(problems) == 1:
        raise problems[0]
    elif problems:
        raise InvalidParameters(problems)
    return replace(params, tau_n=carrier_lifetime(params), n_th=threshold_density(params), i_th=threshold_current(params))

def parse_quantity(text, unit="A"):
    """
    Converts strings such as '13mA', '2 ps' or '5e-15' to SI floats. Bare numbers are taken as SI.
    """
    if isinstance(text, (int, float)):
        return float(text)
    match = _quantity.match(str(text))
    if match is None or match.group(2) not in UNIT_SCALE:
        raise ConfigError(f"could not read {text!r} as a quantity in {unit}")
    suffix = match.group(2)
    if suffix and suffix[-1] != unit[-1]:
        raise ConfigError(f"{text!r} has units {suffix}, expected a {unit} quantity")
    return float(match.group(1)) * UNIT_SCALE[suffix]

def _readKeyValues(path):
    values = {}
    with open(path, "r") as P:
        for lineno, line in enumerate(P, start=1):
            line = line.split("#", 1)[0].strip()
            if line == "":
                continue
            if "=" not in line:
                raise ConfigError(f"{path}, line {lineno}: expected 'key = value'")
            key, value = [x.strip() for x in line.split("=", 1)]
            if key not in RAW_FIELDS:
                raise ConfigError(f"{path}, line {lineno}: unknown parameter {key!r}")
            try:
                values[key] = float(value)
            except ValueError:
                raise ConfigError(f"{path}, line {lineno}: {value!r} is not a number") from None
    return values

def default_params():
    return LaserParams(**_readKeyValues(DEFAULT_PARAMS_FILE))

def readParamsFile(path):
    """
    Reads a flat key = value parameter file. Keys not given fall back to the packaged defaults.
    """
    if not os.path.exists(path):
        raise ConfigError(f"parameter file {path} does not exist")
    values = _readKeyValues(path)
    defaults = asdict(default_params())
    for key in RAW_FIELDS:
        if key not in values:
            logger.info(f"NOTICE: {key} not set in {path}, using default {defaults[key]:g}")
            values[key] = defaults[key]
    return LaserParams(**values)

def writeParamsFile(params, path):
    with open(path, "w") as P:
        P.write("# gsim laser parameters (SI units)\n")
        for key in RAW_FIELDS:
            P.write(f"{key} = {getattr(params, key)!r}\n")

def loadParams(path=None):
    """
    Picks the parameter file: explicit path, then $GSIM_PARAMS, then the packaged defaults. Always validated.
    """
    if path is None:
        path = os.environ.get(PARAMS_ENV)
    if path is None:
        return validate(default_params())
    logger.info(f"reading laser parameters from {path}")
    return validate(readParamsFile(path))

def showParams(params):
    rows = {"KEYS": [], "VALUES": []}
    for key in RAW_FIELDS + ["tau_n", "n_th", "i_th"]:
        rows["KEYS"].append(key)
        rows["VALUES"].append(getattr(params, key))
    print(pandas.DataFrame(rows).to_string(index=False))

def getArgs(argv=None):
    parser = argparse.ArgumentParser(prog="gsimParams")
    parser.add_argument('-p', '--params', type = str, help = f"parameter file to show. Defaults to ${PARAMS_ENV} or the packaged defaults.")
    parser.add_argument('-s', '--show', default = False, action = "store_true", help = "prints the parameter set with derived tau_n, n_th and I_th.")
    parser.add_argument('-w', '--write', type = str, help = "writes the parameter set to this path as a template for editing.")
    return parser.parse_args(argv)

def main(argv=None):
    args = getArgs(argv)
    try:
        params = loadParams(args.params)
    except ConfigError as err:
        logger.error(str(err))
        return err.exit_code
    if args.show:
        showParams(params)
    if args.write is not None:
        writeParamsFile(params, args.write)
        print(f"created {args.write}")
    return 0

if __name__ == "__main__":
    raise SystemExit(main())
