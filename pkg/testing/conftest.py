"""
Shared fixtures. Simulations are cached for the whole session because several test modules reuse the same runs.
"""
import functools, numpy, pytest
from gsim.params import default_params, validate
from gsim.drive import DriveProfile, Segment, gain_switch_profile
from gsim.solver import simulate, simulate_rk4, steady_state
from gsim.pulses import Waveform

KICK_AT = 0.5e-9
KICK_WIDTH = 2e-12

def constant_profile(i, t_end):
    return DriveProfile((Segment(0.0, t_end, "constant", i, i),))

@pytest.fixture(scope="session")
def params():
    return validate(default_params())

@pytest.fixture(scope="session")
def kick_run(params):
    """
    A 2 ps current pulse on top of the exact steady state at bias_factor x I_th, sized to lift the carrier
    density by `fraction` x n_th. Small fractions keep the response in the linear small-signal regime.
    Returns a cached runner; traces are recorded every 1 ps.
    """
    @functools.lru_cache(maxsize=None)
    def run(fraction=0.002, dt=20e-15, t_end=4e-9, method="euler", bias_factor=2.0):
        bias = bias_factor * params.i_th
        height = fraction * params.n_th * params.qv / KICK_WIDTH
        drive = gain_switch_profile(bias, bias + height, KICK_AT, KICK_WIDTH, t_end)
        integrate = simulate if method == "euler" else simulate_rk4
        return integrate(params, drive, dt, t_end, steady_state(params, bias), stride=int(round(1e-12 / dt)))
    return run

@pytest.fixture(scope="session")
def constant_run(params):
    """
    Constant drive at factor x I_th from the empty device. Cached runner returning the SimTrace.
    """
    @functools.lru_cache(maxsize=None)
    def run(factor, dt=50e-15, t_end=30e-9, method="euler", stride=200):
        integrate = simulate if method == "euler" else simulate_rk4
        return integrate(params, constant_profile(factor * params.i_th, t_end), dt, t_end, None, stride=stride)
    return run

@pytest.fixture
def gaussian():
    def make(center=150, sigma=12.0, count=300, height=1.0, base=0.0, spacing=1e-12):
        t = numpy.arange(count) * spacing
        return Waveform(t, base + height * numpy.exp(-0.5 * ((numpy.arange(count) - center) / sigma) ** 2))
    return make
