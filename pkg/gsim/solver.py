"""
Fixed-step integration of the single-mode carrier/photon rate equations

    dn/dt   = -G(n) N_s/(1 + eps N_s) - n/tau_n + I/(qV)
    dN_s/dt =  G(n) N_s/(1 + eps N_s) + Gamma beta n/tau_mode - N_s/tau_p

with G(n) = Gamma a (n - n_g). Forward Euler is the production integrator, classic RK4 is kept
as an independent reference for convergence checks.
"""
import logging, math, os, numpy, pandas
from dataclasses import dataclass
from scipy.optimize import brentq
from gsim.params import validate, carrier_lifetime
from gsim.drive import DriveSampler, current_at
from gsim.pulses import Waveform
from gsim.errors import ConfigError, DriveError, StepTooLarge, NumericalBlowup

logger = logging.getLogger(__name__)

BLOWUP = 1e35
BLOCK = 1 << 16
TRACE_COLUMNS = ["t_s", "current_A", "carrier_per_m3", "photon_per_m3"]

@dataclass(frozen=True)
class SimState:
    t: float
    n: float
    n_s: float

class SimTrace:
    """
    Recorded samples of one simulation.
    t, current, n, n_s: numpy arrays, uniform spacing dt (= stride * solver_dt)
    params: validated LaserParams used for the run
    drive: DriveProfile used for the run
    method: str, "euler" or "rk4"
    clamp_count: int, number of times a density was clamped at zero
    """
    def __init__(self, t, current, n, n_s, dt, solver_dt, params, drive, method="euler", clamp_count=0):
        self.t = numpy.asarray(t)
        self.current = numpy.asarray(current)
        self.n = numpy.asarray(n)
        self.n_s = numpy.asarray(n_s)
        self.dt = dt
        self.solver_dt = solver_dt
        self.params = params
        self.drive = drive
        self.method = method
        self.clamp_count = clamp_count

    def __len__(self):
        return len(self.t)

    @property
    def final(self):
        return SimState(float(self.t[-1]), float(self.n[-1]), float(self.n_s[-1]))

    def to_frame(self):
        return pandas.DataFrame(dict(zip(TRACE_COLUMNS, [self.t, self.current, self.n, self.n_s])))

    def _window(self, values, t_from, t_to):
        mask = self.t >= t_from - 1e-6 * self.dt
        if t_to is not None:
            mask &= self.t <= t_to + 1e-6 * self.dt
        return Waveform(self.t[mask], values[mask])

    def photon_waveform(self, t_from=0.0, t_to=None):
        return self._window(self.n_s, t_from, t_to)

    def carrier_waveform(self, t_from=0.0, t_to=None):
        return self._window(self.n, t_from, t_to)

def writeTrace(trace, path):
    trace.to_frame().to_csv(path, index=False)

def readTrace(path):
    if not os.path.exists(path):
        raise ConfigError(f"trace file {path} does not exist")
    frame = pandas.read_csv(path)
    if list(frame.columns) != TRACE_COLUMNS:
        raise ConfigError(f"{path}: expected trace header {','.join(TRACE_COLUMNS)}")
    return frame

def _rate_function(params):
    ga = params.gamma * params.a_gain
    n_g = params.n_transparency
    eps = params.epsilon
    spont = params.gamma * params.beta / params.tau_mode
    inv_tau_n = 1.0 / carrier_lifetime(params)
    inv_tau_p = 1.0 / params.tau_p
    inv_qv = 1.0 / params.qv

    def rates(n, n_s, i_now):
        stim = ga * (n - n_g) * n_s / (1.0 + eps * n_s)
        return -stim - n * inv_tau_n + i_now * inv_qv, stim + spont * n - n_s * inv_tau_p
    return rates

def derivatives(state, i_now, params):
    """
    (dn/dt, dN_s/dt) at state for injection current i_now.
    """
    return _rate_function(params)(state.n, state.n_s, i_now)

def steady_state(params, i):
    """
    Exact fixed point for a constant current i. For a trial carrier density the photon balance is a
    quadratic in N_s with one non-negative root; the carrier balance is then solved for n with brentq.
    """
    params = validate(params)
    if i < 0:
        raise ConfigError(f"current must be >= 0, got {i}")
    if i == 0:
        return SimState(0.0, 0.0, 0.0)
    pump = i / params.qv
    spont = params.gamma * params.beta / params.tau_mode
    c = params.epsilon / params.tau_p

    def photons(n):
        g = params.gamma * params.a_gain * (n - params.n_transparency)
        r = spont * n
        b = g + r * params.epsilon - 1.0 / params.tau_p
        root = math.sqrt(b * b + 4.0 * c * r)
        if b < 0:
            return 2.0 * r / (root - b)
        if c == 0:
            return math.inf
        return (b + root) / (2.0 * c)

    def residual(n):
        n_s = photons(n)
        if not math.isfinite(n_s):
            return -pump
        return pump - n / params.tau_n + spont * n - n_s / params.tau_p

    n_hi = 2.0 * pump / (1.0 / params.tau_n - spont)
    n_star = brentq(residual, 0.0, n_hi, xtol=1e-12, rtol=4 * numpy.finfo(float).eps, maxiter=200)
    return SimState(0.0, n_star, photons(n_star))

def _check_grid(params, drive, dt, t_end, stride):
    if not dt > 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    if dt > params.tau_p / 20 * (1 + 1e-9):
        raise StepTooLarge(dt, params.tau_p)
    if not t_end >= dt:
        raise ConfigError(f"t_end = {t_end} s must be at least dt = {dt} s")
    if t_end > drive.t_end * (1 + 1e-9):
        raise DriveError(f"t_end = {t_end} s runs past the drive profile, which ends at {drive.t_end} s")
    if int(stride) != stride or stride < 1:
        raise ConfigError(f"output stride must be a positive integer, got {stride}")
    steps = int(math.floor(t_end / dt + 1e-9))
    #the last recorded sample must be the last step
    if steps % int(stride):
        raise ConfigError(f"output stride {int(stride)} does not divide the {steps} solver steps of t_end = {t_end} s; the trace would stop short of t_end")
    return steps, int(stride)

def _start(initial):
    if initial is None:
        return 0.0, 0.0
    if not (math.isfinite(initial.n) and math.isfinite(initial.n_s)) or initial.n < 0 or initial.n_s < 0:
        raise ConfigError(f"initial densities must be finite and >= 0, got n={initial.n}, n_s={initial.n_s}")
    return float(initial.n), float(initial.n_s)

def _blowup(t, n, n_s):
    if not n_s < BLOWUP:
        raise NumericalBlowup(t, "photon density", n_s)
    raise NumericalBlowup(t, "carrier density", n)

def _finish(params, drive, dt, stride, method, clamps, rec):
    if clamps:
        logger.warning(f"{method}: densities clamped at zero {clamps} times")
    t, current, n, n_s = (numpy.array(col) for col in rec)
    return SimTrace(t, current, n, n_s, dt * stride, dt, params, drive, method=method, clamp_count=clamps)

def simulate(params, drive, dt, t_end, initial=None, stride=1):
    """
    Forward-Euler integration on [0, t_end]. Densities are clamped at zero after each step;
    every stride-th step is recorded, stride must divide the step count so the final state is kept.
    initial defaults to the empty cavity (n = N_s = 0).
    """
    params = validate(params)
    steps, stride = _check_grid(params, drive, dt, t_end, stride)
    n, n_s = _start(initial)
    rates = _rate_function(params)
    rec = ([], [], [], [])
    clamps = 0
    sampler = DriveSampler(drive, dt)
    k = 0
    while k <= steps:
        for i_now in sampler.next(min(BLOCK, steps + 1 - k)).tolist():
            if k % stride == 0:
                rec[0].append(k * dt); rec[1].append(i_now); rec[2].append(n); rec[3].append(n_s)
            if k < steps:
                dn, dns = rates(n, n_s, i_now)
                n += dt * dn
                n_s += dt * dns
                if n < 0:
                    n = 0.0
                    clamps += 1
                if n_s < 0:
                    n_s = 0.0
                    clamps += 1
                if not (n < BLOWUP and n_s < BLOWUP):
                    _blowup((k + 1) * dt, n, n_s)
            k += 1
    return _finish(params, drive, dt, stride, "euler", clamps, rec)

def simulate_rk4(params, drive, dt, t_end, initial=None, stride=1):
    """
    Same contract as simulate() with classic fourth-order Runge-Kutta steps.
    The drive is sampled on a half-step grid so the midpoint stages see I(t + dt/2).
    """
    params = validate(params)
    steps, stride = _check_grid(params, drive, dt, t_end, stride)
    n, n_s = _start(initial)
    rates = _rate_function(params)
    half = 0.5 * dt
    rec = ([], [], [], [])
    clamps = 0
    sampler = DriveSampler(drive, half)
    i0 = float(sampler.next(1)[0])
    k = 0
    while True:
        todo = min(BLOCK, steps - k)
        grid = sampler.next(2 * todo).tolist()
        for j in range(todo):
            if k % stride == 0:
                rec[0].append(k * dt); rec[1].append(i0); rec[2].append(n); rec[3].append(n_s)
            i_mid, i1 = grid[2 * j], grid[2 * j + 1]
            a1, b1 = rates(n, n_s, i0)
            a2, b2 = rates(n + half * a1, n_s + half * b1, i_mid)
            a3, b3 = rates(n + half * a2, n_s + half * b2, i_mid)
            a4, b4 = rates(n + dt * a3, n_s + dt * b3, i1)
            n += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            n_s += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            if n < 0:
                n = 0.0
                clamps += 1
            if n_s < 0:
                n_s = 0.0
                clamps += 1
            if not (n < BLOWUP and n_s < BLOWUP):
                _blowup((k + 1) * dt, n, n_s)
            i0 = i1
            k += 1
        if k == steps:
            break
    rec[0].append(k * dt); rec[1].append(i0); rec[2].append(n); rec[3].append(n_s)
    return _finish(params, drive, dt, stride, "rk4", clamps, rec)

INTEGRATORS = {"euler": simulate, "rk4": simulate_rk4}

def initial_state(params, drive, kind):
    """
    'zero' starts from an empty device, 'steady' from the fixed point of the current at t = 0.
    """
    if kind == "zero":
        return SimState(0.0, 0.0, 0.0)
    elif kind == "steady":
        return steady_state(params, current_at(drive, 0.0))
    raise ConfigError(f"unknown initial state {kind!r}, expected 'zero' or 'steady'")
