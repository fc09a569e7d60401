"""
Injection-current profiles I(t): steps, pre-bias plus short perturbation pulses, ramps,
and a first-order low-pass variant standing in for the driver's electronic filter.
Segments are half-open, [t_start, t_end), except that the final segment also owns T_end.
"""
import logging, math, os, numpy, pandas
from dataclasses import dataclass, replace
from scipy.integrate import trapezoid
from scipy.signal import lfilter
from gsim.errors import ConfigError, DriveError

logger = logging.getLogger(__name__)

SHAPES = ("constant", "ramp")

@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    shape: str
    level_start: float
    level_end: float

    def level_at(self, t):
        if self.shape == "constant":
            return self.level_start
        return self.level_start + (self.level_end - self.level_start) * (t - self.t_start) / (self.t_end - self.t_start)

@dataclass(frozen=True)
class DriveProfile:
    """
    segments: tuple of Segment, contiguous and covering [0, t_end]
    filter_tau: optional low-pass time constant in s. Only sample() applies it.
    """
    segments: tuple
    filter_tau: float = None

    def __post_init__(self):
        if len(self.segments) == 0:
            raise DriveError("a drive profile needs at least one segment")
        if self.segments[0].t_start != 0:
            raise DriveError(f"first segment starts at {self.segments[0].t_start} s, expected 0")
        for k, seg in enumerate(self.segments):
            if seg.shape not in SHAPES:
                raise DriveError(f"segment {k}: unknown shape {seg.shape!r}, expected one of {SHAPES}")
            if not seg.t_end > seg.t_start:
                raise DriveError(f"segment {k}: t_end {seg.t_end} is not after t_start {seg.t_start}")
            if not (seg.level_start >= 0 and seg.level_end >= 0):
                raise DriveError(f"segment {k}: current levels must be >= 0")
            if k > 0 and seg.t_start != self.segments[k - 1].t_end:
                raise DriveError(f"segment {k} starts at {seg.t_start} s but segment {k - 1} ends at {self.segments[k - 1].t_end} s")
        if self.filter_tau is not None and not self.filter_tau > 0:
            raise DriveError(f"filter_tau must be > 0, got {self.filter_tau}")

    @property
    def t_end(self):
        return self.segments[-1].t_end

    def first_rise(self):
        """
        Start of the first segment whose level rises above the level at t = 0. None for a non-rising profile.
        """
        start = self.segments[0].level_start
        for seg in self.segments:
            if seg.level_start > start or seg.level_end > start:
                return seg.t_start
        return None

def _profile(pieces, t_end, filter_tau=None):
    #pieces are (t_start, level) pairs of constant segments. Zero-length pieces are dropped.
    segments = []
    for k, (t0, level) in enumerate(pieces):
        t1 = pieces[k + 1][0] if k + 1 < len(pieces) else t_end
        if t1 > t0:
            segments.append(Segment(t0, t1, "constant", level, level))
    return DriveProfile(tuple(segments), filter_tau)

def step_profile(i_low, i_high, t_on, t_off, t_end):
    if not 0 <= t_on < t_off <= t_end:
        raise DriveError(f"step needs 0 <= t_on < t_off <= t_end, got t_on={t_on}, t_off={t_off}, t_end={t_end}")
    return _profile([(0.0, i_low), (t_on, i_high), (t_off, i_low)], t_end)

def gain_switch_profile(i_bias, i_peak, t_pulse, width, t_end):
    """
    Pre-bias i_bias with a rectangular perturbation to i_peak on [t_pulse, t_pulse + width).
    """
    if not width > 0:
        raise DriveError(f"perturbation width must be > 0, got {width}")
    if t_pulse < 0 or t_pulse + width > t_end:
        raise DriveError(f"perturbation [{t_pulse}, {t_pulse + width}) s extends past the window [0, {t_end}] s")
    if t_pulse < 0.1 * t_end:
        logger.warning(f"perturbation at {t_pulse:g} s falls in the first 10% of the window; startup transients may overlap it")
    return _profile([(0.0, i_bias), (t_pulse, i_peak), (t_pulse + width, i_bias)], t_end)

def ramp_profile(i_start, i_end, t_start, t_stop, t_end):
    if not 0 <= t_start < t_stop <= t_end:
        raise DriveError(f"ramp needs 0 <= t_start < t_stop <= t_end")
    segments = []
    if t_start > 0:
        segments.append(Segment(0.0, t_start, "constant", i_start, i_start))
    segments.append(Segment(t_start, t_stop, "ramp", i_start, i_end))
    if t_stop < t_end:
        segments.append(Segment(t_stop, t_end, "constant", i_end, i_end))
    return DriveProfile(tuple(segments))

def apply_filter(profile, tau_rc):
    if not tau_rc > 0:
        raise DriveError(f"filter time constant must be > 0, got {tau_rc}")
    return replace(profile, filter_tau=tau_rc)

def current_at(profile, t):
    """
    Unfiltered I(t). Use sample() for the filtered waveform.
    """
    if not 0 <= t <= profile.t_end:
        raise DriveError(f"t = {t} s is outside the profile window [0, {profile.t_end}] s")
    for seg in profile.segments:
        if t < seg.t_end:
            return seg.level_at(t)
    return profile.segments[-1].level_at(t)

def levels_at(profile, times):
    """
    Vectorized current_at for an array of times. Times are clipped into [0, t_end].
    """
    times = numpy.clip(numpy.asarray(times, dtype=float), 0.0, profile.t_end)
    starts = numpy.array([seg.t_start for seg in profile.segments])
    idx = numpy.searchsorted(starts, times, side="right") - 1
    t0 = starts[idx]
    t1 = numpy.array([seg.t_end for seg in profile.segments])[idx]
    i0 = numpy.array([seg.level_start for seg in profile.segments])[idx]
    i1 = numpy.array([seg.level_end for seg in profile.segments])[idx]
    ramp = numpy.array([seg.shape == "ramp" for seg in profile.segments])[idx]
    return numpy.where(ramp, i0 + (i1 - i0) * (times - t0) / (t1 - t0), i0)

class DriveSampler:
    """
    Produces I(t) on the grid k*step, k = 0, 1, ... in consecutive blocks.
    The low-pass state is carried between blocks so a long run can be sampled piecewise:
    I_f[k] = I[k] + (I_f[k-1] - I[k]) * exp(-step/filter_tau), I_f[0] = I[0].
    """
    def __init__(self, profile, step):
        self.profile = profile
        self.step = step
        self.k = 0
        self.zi = None
        if profile.filter_tau is not None:
            self.decay = math.exp(-step / profile.filter_tau)

    def next(self, count):
        times = (self.k + numpy.arange(count)) * self.step
        self.k += count
        raw = levels_at(self.profile, times)
        if self.profile.filter_tau is None or count == 0:
            return raw
        if self.zi is None:
            self.zi = numpy.array([self.decay * raw[0]])
        out, self.zi = lfilter([1.0 - self.decay], [1.0, -self.decay], raw, zi=self.zi)
        return out

def sample(profile, step, count):
    return DriveSampler(profile, step).next(count)

def energy(profile, step, filtered=True):
    """
    Trapezoidal integral of the current over [0, t_end], in coulombs.
    """
    if not filtered:
        profile = replace(profile, filter_tau=None)
    count = int(round(profile.t_end / step)) + 1
    return trapezoid(sample(profile, step, count), dx=step)

def readDriveFile(path):
    """
    CSV of segments with columns t_start,t_end,shape,level_start,level_end.
    A comment line '# filter_tau = <seconds>' adds the driver filter.
    """
    if not os.path.exists(path):
        raise ConfigError(f"drive file {path} does not exist")
    filter_tau = None
    data_lines = []
    with open(path, "r") as D:
        for lineno, line in enumerate(D, start=1):
            text = line.strip().lstrip("#").strip()
            if line.strip().startswith("#") and text.startswith("filter_tau"):
                try:
                    filter_tau = float(text.split("=", 1)[1])
                except (IndexError, ValueError):
                    raise ConfigError(f"{path}, line {lineno}: expected '# filter_tau = <seconds>'") from None
            elif line.strip() and not line.strip().startswith("#"):
                data_lines.append(lineno)
    columns = ["t_start", "t_end", "shape", "level_start", "level_end"]
    try:
        frame = pandas.read_csv(path, comment="#", skipinitialspace=True, float_precision="round_trip")
    except (pandas.errors.ParserError, pandas.errors.EmptyDataError) as err:
        raise ConfigError(f"{path}: {err}") from None
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ConfigError(f"{path}: missing columns {missing}")
    segments = []
    #row k of the frame is the (k+1)th data line after the header
    for k, r in enumerate(frame.itertuples(index=False)):
        lineno = data_lines[k + 1] if k + 1 < len(data_lines) else "?"
        try:
            segments.append(Segment(float(r.t_start), float(r.t_end), str(r.shape).strip(), float(r.level_start), float(r.level_end)))
        except (TypeError, ValueError):
            raise ConfigError(f"{path}, line {lineno}: expected numbers for t_start, t_end, level_start and level_end") from None
    return DriveProfile(tuple(segments), filter_tau)

def writeDriveFile(profile, path):
    frame = pandas.DataFrame([vars(seg) for seg in profile.segments])
    with open(path, "w") as D:
        if profile.filter_tau is not None:
            D.write(f"# filter_tau = {profile.filter_tau!r}\n")
        frame.to_csv(D, index=False)
