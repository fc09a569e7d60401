"""
Photon-number statistics of weak coherent pulses and the decoy-state gain, QBER and
secure key rate per pulse.

Two error models are offered for the j-photon error rate e_j:
  flat:     (e_darkcount + e_detector*eta)/Y_j, the same numerator for every j
  standard: (e0*Y0 + e_detector*(1 - (1 - eta)**j))/Y_j with e0 = 1/2
"""
import json, logging, math, numbers, os, pandas
from dataclasses import MISSING, dataclass, asdict, fields, replace
from scipy.special import gammainc, gammaln
from gsim.errors import ConfigError, ParameterRangeError, CutoffTooSmall, ZeroYield

logger = logging.getLogger(__name__)

TAIL_TOLERANCE = 1e-12
ERROR_MODELS = ("flat", "standard")

@dataclass(frozen=True)
class DecoyLink:
    """
    mu_signal: float, mean photon number of signal pulses, > 0
    mu_decoy: float, mean photon number of decoy pulses, >= 0 and != mu_signal
    y0: float, dark-count yield, [0, 1]
    eta: float, overall transmission and detection probability, [0, 1]
    e_detector: float, detector error probability, [0, 0.5]
    e_darkcount: float, dark-count error yield, [0, 1]
    q_ratio: float, basis-sift ratio, (0, 1]
    f_ec: float, error-correction inefficiency, >= 1
    photon_cutoff: int, highest photon number kept in the Poisson sums, >= 10
    error_model: str, "flat" or "standard"
    """
    mu_signal: float
    mu_decoy: float
    y0: float
    eta: float
    e_detector: float
    e_darkcount: float
    q_ratio: float = 0.5
    f_ec: float = 1.16
    photon_cutoff: int = 40
    error_model: str = "flat"

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "error_model":
                if not isinstance(value, str):
                    raise ConfigError(f"error_model must be a string, got {value!r}")
            elif isinstance(value, bool) or not isinstance(value, numbers.Real):
                raise ConfigError(f"link field {f.name} must be a number, got {value!r}")
        checks = [("mu_signal", self.mu_signal > 0, "(0, inf)"), ("mu_decoy", self.mu_decoy >= 0, "[0, inf)"),
                  ("y0", 0 <= self.y0 <= 1, "[0, 1]"), ("eta", 0 <= self.eta <= 1, "[0, 1]"),
                  ("e_detector", 0 <= self.e_detector <= 0.5, "[0, 0.5]"), ("e_darkcount", 0 <= self.e_darkcount <= 1, "[0, 1]"),
                  ("q_ratio", 0 < self.q_ratio <= 1, "(0, 1]"), ("f_ec", self.f_ec >= 1, "[1, inf)"),
                  ("photon_cutoff", int(self.photon_cutoff) == self.photon_cutoff and self.photon_cutoff >= 10, "integers >= 10")]
        for name, ok, bounds in checks:
            if not ok:
                raise ParameterRangeError(name, getattr(self, name), bounds)
        if self.mu_decoy == self.mu_signal:
            raise ConfigError("mu_decoy must differ from mu_signal")
        if self.error_model not in ERROR_MODELS:
            raise ConfigError(f"unknown error model {self.error_model!r}, expected one of {ERROR_MODELS}")

@dataclass(frozen=True)
class KeyRateReport:
    q_mu: float
    e_mu: float
    eq_mu: float
    y1: float
    q1: float
    e1: float
    h2_e_mu: float
    h2_e1: float
    leakage: float
    single_photon_term: float
    key_rate: float
    insecure: bool
    model_warning: bool
    error_model: str

    def to_dict(self):
        return asdict(self)

def _check_count(n, name="n"):
    if int(n) != n or n < 0:
        raise ConfigError(f"{name} must be a non-negative integer, got {n}")
    return int(n)

def photon_prob(mu, n):
    """
    Poisson probability mu^n e^-mu / n!, evaluated in log space.
    """
    n = _check_count(n)
    if mu < 0:
        raise ConfigError(f"mean photon number must be >= 0, got {mu}")
    if mu == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(mu) - mu - gammaln(n + 1))

def multi_photon_prob(mu, exact=True):
    """
    Probability of two or more photons. exact uses 1 - e^-mu (1 + mu) via the regularized incomplete gamma
    function (no cancellation at small mu), otherwise the leading-order mu^2/2.
    """
    if mu < 0:
        raise ConfigError(f"mean photon number must be >= 0, got {mu}")
    if exact:
        return float(gammainc(2, mu))
    return mu * mu / 2.0

def poisson_tail(mu, cutoff):
    """
    P(n > cutoff) for a Poisson distribution of mean mu.
    """
    return float(gammainc(_check_count(cutoff, "cutoff") + 1, mu))

def yield_j(y0, eta, j):
    return 1.0 - (1.0 - y0) * (1.0 - eta) ** _check_count(j, "j")

def _check_tail(mu, cutoff, tolerance=TAIL_TOLERANCE):
    tail = poisson_tail(mu, cutoff)
    if tail > tolerance:
        raise CutoffTooSmall(cutoff, tail)

def overall_gain(mu, y0, eta, cutoff=40, tolerance=TAIL_TOLERANCE):
    """
    Q = sum_j P_j(mu) Y_j truncated at cutoff. Equals Y0 + (1 - Y0)(1 - e^(-eta mu)) up to the Poisson tail.
    """
    _check_tail(mu, cutoff, tolerance)
    return math.fsum(photon_prob(mu, j) * yield_j(y0, eta, j) for j in range(cutoff + 1))

def _error_numerator(link, j):
    if link.error_model == "standard":
        return 0.5 * link.y0 + link.e_detector * (1.0 - (1.0 - link.eta) ** j)
    return link.e_darkcount + link.e_detector * link.eta

def error_j(y0, eta, e_det, e_dark, j):
    """
    e_j = (e_darkcount + e_detector eta)/Y_j. Values above 1 mean the flat model does not hold for these inputs.
    """
    y = yield_j(y0, eta, j)
    if y == 0:
        raise ZeroYield(f"yield Y_{j}")
    e = (e_dark + e_det * eta) / y
    if e > 1:
        logger.warning(f"error rate e_{j} = {e:.4g} exceeds 1; the flat error model is invalid for these parameters")
    return e

def standard_error_j(y0, eta, e_det, j, e0=0.5):
    y = yield_j(y0, eta, j)
    if y == 0:
        raise ZeroYield(f"yield Y_{j}")
    return (e0 * y0 + e_det * (1.0 - (1.0 - eta) ** j)) / y

def link_error_j(link, j):
    if link.error_model == "standard":
        return standard_error_j(link.y0, link.eta, link.e_detector, j)
    return error_j(link.y0, link.eta, link.e_detector, link.e_darkcount, j)

def overall_qber(link, mu):
    """
    (EQ, E) with EQ = sum_j e_j Y_j P_j(mu) and E = EQ/Q.
    """
    q = overall_gain(mu, link.y0, link.eta, link.photon_cutoff)
    if not q > 0:
        raise ZeroYield("overall gain Q")
    eq = math.fsum(_error_numerator(link, j) * photon_prob(mu, j) for j in range(link.photon_cutoff + 1))
    return eq, eq / q

def binary_entropy(p):
    if not 0 <= p <= 1:
        raise ConfigError(f"binary entropy needs p in [0, 1], got {p}")
    if p == 0 or p == 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)

def key_rate(link):
    """
    S = q (-Q_mu f H2(E_mu) + Q_1 [1 - H2(e_1)]) with Q_1 and e_1 taken at mu_signal.
    A negative S is returned as-is and flagged insecure.
    """
    mu = link.mu_signal
    q_mu = overall_gain(mu, link.y0, link.eta, link.photon_cutoff)
    eq_mu, e_mu = overall_qber(link, mu)
    y1 = yield_j(link.y0, link.eta, 1)
    q1 = y1 * photon_prob(mu, 1)
    e1 = link_error_j(link, 1)
    for name, value in (("E_mu", e_mu), ("e_1", e1)):
        if value > 1:
            raise ConfigError(f"{name} = {value:.4g} exceeds 1 under the {link.error_model} error model; check e_darkcount against y0 or use the standard model")
    if e_mu >= 0.5:
        logger.warning(f"QBER E_mu = {e_mu:.4g} is at or above 0.5, no key can be distilled")
    model_warning = False
    for j in range(link.photon_cutoff + 1):
        y = yield_j(link.y0, link.eta, j)
        if y > 0 and _error_numerator(link, j) / y > 1:
            model_warning = True
            break
    h2_e_mu = binary_entropy(e_mu)
    h2_e1 = binary_entropy(e1)
    leakage = q_mu * link.f_ec * h2_e_mu
    single = q1 * (1.0 - h2_e1)
    s = link.q_ratio * (single - leakage)
    if s < 0:
        logger.info(f"key rate {s:.4g} is negative, link is insecure")
    return KeyRateReport(q_mu, e_mu, eq_mu, y1, q1, e1, h2_e_mu, h2_e1, leakage, single, s, s < 0, model_warning, link.error_model)

SWEEP_FIELDS = ("mu_signal", "eta")

def key_rate_sweep(link, field, values):
    if field not in SWEEP_FIELDS:
        raise ConfigError(f"can only sweep {SWEEP_FIELDS}, got {field!r}")
    rows = []
    for value in values:
        report = key_rate(replace(link, **{field: value}))
        rows.append({field: value, **report.to_dict()})
    return pandas.DataFrame(rows)

def readLinkFile(path):
    if not os.path.exists(path):
        raise ConfigError(f"link file {path} does not exist")
    with open(path, "r") as L:
        try:
            values = json.load(L)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}, line {err.lineno}: {err.msg}") from None
    if not isinstance(values, dict):
        raise ConfigError(f"{path}: expected a JSON object of link fields")
    known = {f.name for f in fields(DecoyLink)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown link fields {unknown}")
    missing = [f.name for f in fields(DecoyLink) if f.name not in values and f.default is MISSING]
    if missing:
        raise ConfigError(f"{path}: missing link fields {missing}")
    return DecoyLink(**values)
