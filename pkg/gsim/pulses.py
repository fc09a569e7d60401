"""
Pulse features of simulated or measured waveforms: peaks, secondary oscillation,
peak difference and turn-on delay, plus the normalize/align/resample steps used before
comparing a signal and a decoy pulse.
"""
import logging, os, re, numpy, pandas
from dataclasses import dataclass
from scipy.signal import find_peaks
from gsim.errors import ConfigError, DegenerateWaveform, NoOverlap, WaveformParseError

logger = logging.getLogger(__name__)

MIN_SAMPLES = 8
BASELINE_FRACTION = 0.05

class Waveform:
    """
    Uniformly sampled signal.
    t: numpy array of times in s, strictly increasing
    v: numpy array of amplitudes, finite, arbitrary linear units
    """
    def __init__(self, t, v):
        self.t = numpy.asarray(t, dtype=float)
        self.v = numpy.asarray(v, dtype=float)
        if self.t.shape != self.v.shape or self.t.ndim != 1:
            raise ConfigError(f"waveform time and value arrays differ in shape: {self.t.shape} vs {self.v.shape}")
        if len(self.t) < MIN_SAMPLES:
            raise ConfigError(f"waveform has {len(self.t)} samples, needs at least {MIN_SAMPLES}")
        steps = numpy.diff(self.t)
        if not numpy.all(steps > 0):
            raise ConfigError("waveform times must be strictly increasing")
        if numpy.max(numpy.abs(steps - steps.mean())) > 1e-3 * steps.mean():
            raise ConfigError("waveform is not uniformly sampled")
        if not numpy.all(numpy.isfinite(self.v)):
            raise ConfigError("waveform contains non-finite values")

    def __len__(self):
        return len(self.t)

    @property
    def dt(self):
        return (self.t[-1] - self.t[0]) / (len(self.t) - 1)

@dataclass(frozen=True)
class Peak:
    t: float
    amplitude: float
    index: int
    prominence: float

@dataclass(frozen=True)
class PulseFeatures:
    """
    primary_peak: Peak, largest detected peak
    secondary_peak: Peak or None, largest peak after the primary
    peak_difference: float, primary minus secondary amplitude (primary amplitude if no secondary)
    turn_on_delay: float or None, s from the drive edge to the primary peak
    """
    primary_peak: Peak
    secondary_peak: Peak
    peak_difference: float
    turn_on_delay: float = None

    def to_dict(self):
        peak = lambda p: None if p is None else {"t_s": p.t, "amplitude": p.amplitude}
        return {"primary_peak": peak(self.primary_peak), "secondary_peak": peak(self.secondary_peak),
                "peak_difference": self.peak_difference, "turn_on_delay_s": self.turn_on_delay}

def _check_fraction(frac):
    if not 0 < frac < 1:
        raise ConfigError(f"prominence fraction must lie in (0, 1), got {frac}")

def detect_peaks(w, min_prominence_frac=0.02):
    """
    Local maxima whose height and topographic prominence both reach min_prominence_frac x global max, in time order.
    When the maximum is not positive (a scope trace on a negative offset) the floor is taken on the span max - min
    and heights are measured from the minimum. Amplitudes are always the raw sample values.
    A waveform whose maximum sits on an edge with no interior peak returns that edge sample.
    """
    _check_fraction(min_prominence_frac)
    top = w.v.max()
    low = w.v.min()
    if top == low:
        raise DegenerateWaveform("constant waveform has no peaks")
    if top > 0:
        floor = min_prominence_frac * top
        height = floor
    else:
        floor = min_prominence_frac * (top - low)
        height = low + floor
    idx, props = find_peaks(w.v, height=height, prominence=floor)
    peaks = [Peak(float(w.t[i]), float(w.v[i]), int(i), float(p)) for i, p in zip(idx, props["prominences"])]
    if not peaks:
        i = int(numpy.argmax(w.v))
        peaks = [Peak(float(w.t[i]), float(top), i, float(top - low))]
    return peaks

def pulse_features(w, drive_edge_t=None, min_prominence_frac=0.02):
    peaks = detect_peaks(w, min_prominence_frac)
    primary = max(peaks, key=lambda p: p.amplitude)
    later = [p for p in peaks if p.t > primary.t]
    secondary = max(later, key=lambda p: p.amplitude) if later else None
    difference = primary.amplitude - (secondary.amplitude if secondary is not None else 0.0)
    delay = None if drive_edge_t is None else primary.t - drive_edge_t
    return PulseFeatures(primary, secondary, difference, delay)

def relative_delay(a_features, b_features):
    return b_features.primary_peak.t - a_features.primary_peak.t

def baseline(w):
    count = max(1, int(BASELINE_FRACTION * len(w)))
    return float(numpy.median(w.v[:count]))

def normalize_amplitude(w):
    """
    Maps the pre-pulse baseline (median of the first 5% of samples) to 0 and the maximum to 1.
    """
    base = baseline(w)
    top = w.v.max()
    if not top > base:
        raise DegenerateWaveform(f"waveform maximum {top} does not rise above its baseline {base}")
    return Waveform(w.t, (w.v - base) / (top - base))

def resample_uniform(w, n):
    if int(n) != n or n < MIN_SAMPLES:
        raise ConfigError(f"resample count must be an integer >= {MIN_SAMPLES}, got {n}")
    t = numpy.linspace(w.t[0], w.t[-1], int(n))
    return Waveform(t, numpy.interp(t, w.t, w.v))

def window(w, t_from, t_to=None):
    mask = w.t >= t_from
    if t_to is not None:
        mask &= w.t <= t_to
    return Waveform(w.t[mask], w.v[mask])

def _primary_index(w, min_prominence_frac):
    peaks = detect_peaks(w, min_prominence_frac)
    return max(peaks, key=lambda p: p.amplitude).index

def peak_shift(a, b, min_prominence_frac=0.02):
    """
    Samples by which b's primary peak lags a's. Both waveforms must share a's spacing.
    """
    return _primary_index(b, min_prominence_frac) - _primary_index(a, min_prominence_frac)

def align_primary_peaks(a, b, min_prominence_frac=0.02):
    """
    Shifts b by whole samples so both primary peaks coincide and crops both to the common window.
    b is first resampled onto a's spacing when the two differ. The result shares a's time axis.
    """
    if abs(b.dt - a.dt) > 1e-9 * a.dt:
        count = int(numpy.floor((b.t[-1] - b.t[0]) / a.dt + 1e-9)) + 1
        t = b.t[0] + numpy.arange(count) * a.dt
        b = Waveform(t, numpy.interp(t, b.t, b.v))
    shift = peak_shift(a, b, min_prominence_frac)
    lo = max(0, -shift)
    hi = min(len(a), len(b) - shift)
    if hi - lo < MIN_SAMPLES:
        raise NoOverlap(f"aligned waveforms share only {max(hi - lo, 0)} samples, need {MIN_SAMPLES}")
    logger.debug(f"aligning primary peaks: shift {shift} samples, common window {hi - lo} samples")
    return Waveform(a.t[lo:hi], a.v[lo:hi]), Waveform(a.t[lo:hi], b.v[lo + shift:hi + shift])

_separator = re.compile(r"[,;\s]+")

def readWaveform(path):
    """
    Reads a two-column time,value CSV (comma or whitespace delimited, optional header) or a gsim trace CSV,
    in which case the t_s and photon_per_m3 columns are used.
    """
    if not os.path.exists(path):
        raise ConfigError(f"waveform file {path} does not exist")
    with open(path, "r") as W:
        rows = [(lineno, _separator.split(line.strip())) for lineno, line in enumerate(W, start=1)
                if line.strip() and not line.strip().startswith("#")]
    if not rows:
        raise WaveformParseError(path, 1, "no data rows")
    columns = (0, 1)
    try:
        [float(x) for x in rows[0][1]]
    except ValueError:
        header = [x.strip().strip('"') for x in rows[0][1]]
        if "t_s" in header and "photon_per_m3" in header:
            columns = (header.index("t_s"), header.index("photon_per_m3"))
        rows = rows[1:]
    t, v = [], []
    for lineno, fields in rows:
        if len(fields) <= max(columns):
            raise WaveformParseError(path, lineno, f"expected at least {max(columns) + 1} columns, found {len(fields)}")
        try:
            t.append(float(fields[columns[0]]))
            v.append(float(fields[columns[1]]))
        except ValueError:
            raise WaveformParseError(path, lineno, f"could not read {','.join(fields)!r} as numbers") from None
    return Waveform(t, v)

def writeWaveform(w, path):
    pandas.DataFrame({"time": w.t, "value": w.v}).to_csv(path, index=False)
