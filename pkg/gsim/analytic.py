"""
Closed-form small-signal results for the rate equations: relaxation frequency and damping,
steady photon densities below and above threshold, and the carrier rise time.
"""
import logging, math, numpy
from dataclasses import dataclass
from scipy.optimize import curve_fit
from gsim.params import validate
from gsim.errors import ConfigError, InsufficientDrive

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class SmallSignal:
    """
    n_p: float, stimulated rate Gamma a N_s/(1 + eps N_s), 1/s
    damping: float, decay rate (1/tau_n + n_p)/2, 1/s
    omega: float or None, relaxation angular frequency in rad/s. None when the response is overdamped.
    """
    n_p: float
    damping: float
    omega: float = None

    @property
    def overdamped(self):
        return self.omega is None

def small_signal(params, n_s):
    params = validate(params)
    if not n_s >= 0:
        raise ConfigError(f"photon density must be >= 0, got {n_s}")
    n_p = params.gamma * params.a_gain * n_s / (1.0 + params.epsilon * n_s)
    inv_tau_n = 1.0 / params.tau_n
    radicand = n_p / params.tau_p - inv_tau_n ** 2 - n_p ** 2 / 4.0 - n_p * inv_tau_n / 2.0
    omega = math.sqrt(radicand) if radicand > 0 else None
    return SmallSignal(n_p, 0.5 * (inv_tau_n + n_p), omega)

def steady_photon_density(params, i):
    """
    Sub-threshold: spontaneous emission only, tau_n tau_p Gamma beta I/(tau_mode q V).
    At and above threshold the carrier density is clamped at n_th, giving tau_p (I - I_th)/(q V),
    which is (tau_p/(q d)) [I d/V - n_th q d/tau_n] with the thickness cancelled.
    """
    params = validate(params)
    if not i >= 0:
        raise ConfigError(f"current must be >= 0, got {i}")
    if i < params.i_th:
        return params.tau_n * params.tau_p * params.gamma * params.beta * i / (params.tau_mode * params.qv)
    return params.tau_p * (i - params.i_th) / params.qv

def rise_time(params, i, n_i, n_f):
    """
    Time for the carrier density to climb from n_i to n_f under a constant current i, neglecting stimulated emission.
    """
    params = validate(params)
    if n_f < n_i:
        raise ConfigError(f"target density {n_f} is below the starting density {n_i}")
    i_needed = params.qv * n_f / params.tau_n
    if i <= i_needed:
        raise InsufficientDrive(i, i_needed)
    return params.tau_n * math.log((i - params.qv * n_i / params.tau_n) / (i - i_needed))

def analytic_report(params, i):
    params = validate(params)
    n_s = steady_photon_density(params, i)
    ss = small_signal(params, n_s)
    return {"i_A": i, "i_th": params.i_th, "n_th": params.n_th, "tau_n": params.tau_n, "n_s_steady": n_s,
            "omega_rad_s": ss.omega, "damping_1_s": ss.damping, "overdamped": ss.overdamped}

def func_exp(t, a, rate):
    return a * numpy.exp(-rate * t)

def fit_decay(times, excursions):
    """
    Exponential decay rate of a sequence of positive peak excursions. A log-linear fit seeds curve_fit.
    """
    times = numpy.asarray(times, dtype=float)
    excursions = numpy.asarray(excursions, dtype=float)
    if len(times) < 3 or numpy.any(excursions <= 0):
        raise ConfigError("need at least three positive excursions to fit a decay")
    #fit on unit-scaled axes, curve_fit struggles with 1e-9 s and 1e20 m^-3 magnitudes.
    span = times[-1] - times[0]
    u = (times - times[0]) / span
    y = excursions / excursions[0]
    slope, intercept = numpy.polyfit(u, numpy.log(y), 1)
    popt, _ = curve_fit(func_exp, u, y, p0=(math.exp(intercept), -slope))
    return float(popt[1]) / span

def ringing_frequency(w, pad=8):
    """
    Dominant frequency in Hz of a waveform after removing its mean, from a zero-padded real FFT.
    """
    v = w.v - w.v.mean()
    count = pad * len(v)
    spectrum = numpy.abs(numpy.fft.rfft(v, n=count))
    freqs = numpy.fft.rfftfreq(count, d=w.dt)
    k = int(numpy.argmax(spectrum[1:])) + 1
    return float(freqs[k])
