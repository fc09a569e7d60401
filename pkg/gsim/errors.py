"""
Exceptions raised by gsim. ConfigError subclasses are user mistakes (exit code 2),
NumericalError subclasses are failures of the numerics (exit code 3).
"""

class GsimError(Exception):
    pass

class ConfigError(GsimError, ValueError):
    exit_code = 2

class NumericalError(GsimError, ArithmeticError):
    exit_code = 3

class NonPositiveField(ConfigError):
    def __init__(self, name, value=None):
        self.name = name
        super().__init__(f"{name} must be strictly positive, got {value}")

class ParameterRangeError(ConfigError):
    def __init__(self, name, value, bounds):
        self.name = name
        super().__init__(f"{name} = {value} is outside the allowed range {bounds}")

class InconsistentLifetimes(ConfigError):
    def __init__(self, tau_n, tau_nr, tau_mode):
        super().__init__(f"derived carrier lifetime {tau_n:g} s is not below min(tau_nr, tau_mode) = {min(tau_nr, tau_mode):g} s")

class InvalidParameters(ConfigError):
    """
    Carries every violated invariant found while validating a parameter set.
    problems: list of ConfigError
    """
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid laser parameters:\n  " + "\n  ".join(str(p) for p in self.problems))

class DriveError(ConfigError):
    pass

class StepTooLarge(ConfigError):
    def __init__(self, dt, tau_p):
        self.dt = dt
        self.tau_p = tau_p
        super().__init__(f"dt = {dt:g} s exceeds the stability ceiling tau_p/20 = {tau_p / 20:g} s")

class InsufficientDrive(ConfigError):
    def __init__(self, i, i_needed):
        super().__init__(f"current {i:g} A cannot reach the target carrier density (needs more than {i_needed:g} A)")

class EmptySample(ConfigError):
    pass

class WaveformParseError(ConfigError):
    def __init__(self, path, line, reason):
        self.path = path
        self.line = line
        super().__init__(f"{path}, line {line}: {reason}")

class CutoffTooSmall(ConfigError):
    def __init__(self, cutoff, tail):
        super().__init__(f"photon cutoff {cutoff} leaves a Poisson tail of {tail:.3g} (> tolerance); raise the cutoff")

class NumericalBlowup(NumericalError):
    def __init__(self, t, field, value):
        super().__init__(f"{field} = {value} at t = {t:g} s is non-finite or above 1e35 m^-3; reduce dt")

class DegenerateWaveform(NumericalError):
    pass

class NoOverlap(NumericalError):
    pass

class ZeroYield(NumericalError):
    def __init__(self, what):
        super().__init__(f"{what} is zero, error rate undefined")
