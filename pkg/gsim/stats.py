"""
Empirical CDFs and the two-sample Kolmogorov-Smirnov test used to decide whether a signal
and a decoy pulse are indistinguishable.

The exact null distribution walks the (n+1) x (m+1) lattice of merged-sample orderings.
Probability mass is pushed forward through the cells with |i/n - j/m| < d and every step that
leaves the band is summed, so small p-values keep their relative precision.
"""
import logging, math, numpy
from dataclasses import dataclass
from scipy.special import kolmogorov
from gsim.pulses import normalize_amplitude, align_primary_peaks, resample_uniform
from gsim.errors import ConfigError, EmptySample

logger = logging.getLogger(__name__)

EXACT_LIMIT = 1_000_000
TIE_WARNING_FRACTION = 0.1

@dataclass(frozen=True)
class ECDF:
    """
    values: sorted distinct sample values
    fractions: F at each value, right-continuous, last entry 1
    """
    values: numpy.ndarray
    fractions: numpy.ndarray

    def __call__(self, x):
        idx = numpy.searchsorted(self.values, x, side="right")
        return numpy.where(idx > 0, self.fractions[numpy.maximum(idx - 1, 0)], 0.0)

@dataclass(frozen=True)
class KsResult:
    d_statistic: float
    p_value: float
    n: int
    m: int
    method: str
    tie_warning: bool = False

    def verdict(self, alpha=0.05):
        return "indistinguishable" if self.p_value > alpha else "distinguishable"

    def to_dict(self, alpha=0.05):
        return {"d": self.d_statistic, "p": self.p_value, "n": self.n, "m": self.m, "method": self.method,
                "tie_warning": self.tie_warning, "alpha": alpha, "verdict": self.verdict(alpha)}

def _sample(x, name="sample"):
    x = numpy.asarray(x, dtype=float).ravel()
    if len(x) == 0:
        raise EmptySample(f"{name} is empty")
    if not numpy.all(numpy.isfinite(x)):
        raise ConfigError(f"{name} contains non-finite values")
    return x

def ecdf(samples):
    x = _sample(samples)
    values, counts = numpy.unique(x, return_counts=True)
    return ECDF(values, numpy.cumsum(counts) / len(x))

def ks_statistic(x, y):
    x = numpy.sort(_sample(x, "x"))
    y = numpy.sort(_sample(y, "y"))
    pooled = numpy.concatenate([x, y])
    cdf_x = numpy.searchsorted(x, pooled, side="right") / len(x)
    cdf_y = numpy.searchsorted(y, pooled, side="right") / len(y)
    return float(numpy.max(numpy.abs(cdf_x - cdf_y)))

def tie_fraction(x, y):
    pooled = numpy.concatenate([numpy.ravel(x), numpy.ravel(y)])
    return 1.0 - len(numpy.unique(pooled)) / len(pooled)

def _boundary(d, n, m):
    """
    Integer form of d on the lcm(n, m) grid: a lattice point is inside iff |i*(L/n) - j*(L/m)| < c.
    Values of d*L within rounding of an integer are snapped to it, so d = 5/201 is not lost to float error.
    """
    lcm = n // math.gcd(n, m) * m
    x = d * lcm
    k = round(x)
    c = k if abs(x - k) < 1e-7 * max(1.0, x) else math.ceil(x)
    return c, lcm // n, lcm // m

def _band(i, c, a, b, m):
    #j range with |i*a - j*b| < c
    return max(0, (i * a - c) // b + 1), min(m, -((-(i * a + c)) // b) - 1)

def _exact_pvalue(d, n, m):
    if d <= 0:
        return 1.0
    c, a, b = _boundary(d, n, m)
    if c <= 0:
        return 1.0
    total = n + m
    escaped = []
    row = [0.0] * (m + 1)
    row[0] = 1.0
    for i in range(n + 1):
        nxt = [0.0] * (m + 1)
        j_lo, j_hi = _band(i, c, a, b, m)
        lo_next, hi_next = _band(i + 1, c, a, b, m)
        for j in range(j_lo, j_hi + 1):
            mass = row[j]
            left = total - i - j
            if mass == 0.0 or left == 0:
                continue
            if i < n:
                step = mass * (n - i) / left
                if lo_next <= j <= hi_next:
                    nxt[j] += step
                else:
                    escaped.append(step)
            if j < m:
                step = mass * (m - j) / left
                if j + 1 <= j_hi:
                    row[j + 1] += step
                else:
                    escaped.append(step)
        row = nxt
    return min(1.0, math.fsum(escaped))

def _asymptotic_pvalue(d, n, m):
    lam = math.sqrt(n * m / (n + m)) * d
    return min(1.0, max(0.0, float(kolmogorov(lam))))

def ks_pvalue(d, n, m, method="auto", exact_limit=EXACT_LIMIT):
    """
    P(D_{n,m} >= d) under the null of a common continuous distribution.
    method: "exact" (lattice recursion), "asymptotic" (Kolmogorov limit) or "auto" (exact when n*m <= exact_limit).
    """
    if not 0 <= d <= 1:
        raise ConfigError(f"KS statistic must lie in [0, 1], got {d}")
    if int(n) != n or int(m) != m or n < 1 or m < 1:
        raise ConfigError(f"sample sizes must be positive integers, got n={n}, m={m}")
    n, m = int(n), int(m)
    method = _resolve(method, n, m, exact_limit)
    if method == "exact":
        return _exact_pvalue(d, n, m)
    return _asymptotic_pvalue(d, n, m)

def _resolve(method, n, m, exact_limit):
    if method == "auto":
        return "exact" if n * m <= exact_limit else "asymptotic"
    if method not in ("exact", "asymptotic"):
        raise ConfigError(f"unknown KS method {method!r}, expected auto, exact or asymptotic")
    return method

def ks_test(x, y, method="auto", exact_limit=EXACT_LIMIT):
    x = _sample(x, "x")
    y = _sample(y, "y")
    d = ks_statistic(x, y)
    resolved = _resolve(method, len(x), len(y), exact_limit)
    p = ks_pvalue(d, len(x), len(y), resolved, exact_limit)
    ties = tie_fraction(x, y)
    if ties > TIE_WARNING_FRACTION:
        logger.warning(f"{ties:.0%} of the pooled samples are ties; the KS null distribution assumes continuous data")
    return KsResult(d, p, len(x), len(y), resolved, ties > TIE_WARNING_FRACTION)

def permutation_pvalue(x, y, shuffles=100_000, seed=0, chunk=10_000):
    """
    Monte Carlo estimate of P(D >= d_observed) by shuffling the pooled sample labels.
    Assumes no ties. Returns (p, standard_error).
    """
    x = _sample(x, "x")
    y = _sample(y, "y")
    n, m = len(x), len(y)
    d_obs = ks_statistic(x, y)
    order = numpy.argsort(numpy.concatenate([x, y]), kind="stable")
    labels = (order < n).astype(numpy.int32)
    rng = numpy.random.default_rng(seed)
    hits = 0
    done = 0
    while done < shuffles:
        size = min(chunk, shuffles - done)
        perm = rng.permuted(numpy.tile(labels, (size, 1)), axis=1)
        cx = numpy.cumsum(perm, axis=1) / n
        cy = numpy.cumsum(1 - perm, axis=1) / m
        d_perm = numpy.max(numpy.abs(cx - cy), axis=1)
        hits += int(numpy.count_nonzero(d_perm >= d_obs - 1e-12))
        done += size
    p = hits / shuffles
    return p, math.sqrt(p * (1 - p) / shuffles)

@dataclass(frozen=True)
class WaveformComparison:
    """
    result: KsResult on the amplitude samples
    ecdf_a, ecdf_b: ECDF of each prepared waveform
    a, b: the normalized, aligned and resampled waveforms that were tested
    """
    result: KsResult
    ecdf_a: ECDF
    ecdf_b: ECDF
    a: object
    b: object

    def ecdf_table(self):
        grid = numpy.union1d(self.ecdf_a.values, self.ecdf_b.values)
        return {"value": grid, "F_a": self.ecdf_a(grid), "F_b": self.ecdf_b(grid)}

def compare_waveforms(a, b, n_points=201, min_prominence_frac=0.02, method="auto", exact_limit=EXACT_LIMIT):
    """
    normalize_amplitude -> align_primary_peaks -> resample_uniform(n_points) -> KS on the amplitude values.
    """
    a_aligned, b_aligned = align_primary_peaks(normalize_amplitude(a), normalize_amplitude(b), min_prominence_frac)
    a_rs = resample_uniform(a_aligned, n_points)
    b_rs = resample_uniform(b_aligned, n_points)
    result = ks_test(a_rs.v, b_rs.v, method, exact_limit)
    return WaveformComparison(result, ecdf(a_rs.v), ecdf(b_rs.v), a_rs, b_rs)
