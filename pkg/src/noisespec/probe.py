"""Measurement chain of the dephasing probe, and its time-domain oracle.

The chain is: overlap coefficient ``c`` -> survival probability
``p = (1 - exp(-c - Gamma*T)) / 2`` -> noisy readout -> inverted estimate
``c_hat``.  The oracle recomputes ``chi = 4 * double-integral of
y(t') y(t'') g(t' - t'')`` entirely in the time domain, with the
autocorrelation ``g`` of the even spectral extension in closed form, so it
shares nothing with the frequency-grid pipeline it cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import exp1

from .errors import UnsupportedOracleError
from .modulation import to_step_function
from .seeding import derive_seed, make_rng
from .spectra import SpectralDensity

_SATURATION_MARGIN = 1e-9


@dataclass(frozen=True)
class NoiseModel:
    """Detector and probe noise settings.

    Parameters
    ----------
    dp_max : float
        Maximal absolute detector error; each readout is shifted by a draw
        from ``uniform(-dp_max, dp_max)``.  Must lie in ``[0, 0.5)``.
    gamma : float
        Intrinsic dephasing rate of the probe (>= 0); adds ``gamma * T`` to
        the decoherence exponent.
    shots : int or None
        When set, the deterministic probability is replaced by a binomial
        frequency over this many shots before detector error is added.
    seed : int
        Master seed; per-filter streams derive from it by the documented
        XOR/splitmix64 rule, so parallel runs reproduce serial ones.
    """

    dp_max: float = 0.0
    gamma: float = 0.0
    shots: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dp_max < 0.5:
            raise ValueError(f"dp_max must be in [0, 0.5), got {self.dp_max}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.shots is not None and self.shots <= 0:
            raise ValueError(f"shots must be positive, got {self.shots}")


@dataclass(frozen=True)
class MeasurementRecord:
    """One simulated filter measurement."""

    filter_index: int
    c_true: float
    p_measured: float
    c_estimate: float
    saturated: bool
    dp_max: float
    gamma: float
    shots: int | None
    stream_seed: int

    def csv_row(self) -> str:
        return (f"{self.filter_index},{self.c_true!r},{self.p_measured!r},"
                f"{self.c_estimate!r},{int(self.saturated)},{self.stream_seed}")


def survival_probability(c: float, gamma: float, operation_time: float) -> float:
    """Probability ``(1 - exp(-c - gamma*T)) / 2`` of surviving readout."""
    if c < 0 or gamma < 0 or operation_time < 0:
        raise ValueError("c, gamma and T must be >= 0")
    return 0.5 * (1.0 - math.exp(-c - gamma * operation_time))


def invert_probability(p_measured: float, gamma: float,
                       operation_time: float) -> tuple[float, bool]:
    """Invert a measured probability back to a coefficient estimate.

    Returns ``(c_hat, saturated)``.  Saturated readouts
    (``p >= 1/2 - 1e-9``) carry no spectral information: ``c_hat`` is
    ``inf`` and the flag is set, so callers can drop them.  Negative
    estimates from noise are clamped to zero (c is an integral of
    nonnegative quantities).
    """
    if gamma < 0 or operation_time < 0:
        raise ValueError("gamma and T must be >= 0")
    if p_measured >= 0.5 - _SATURATION_MARGIN:
        return math.inf, True
    c_hat = -math.log1p(-2.0 * p_measured) - gamma * operation_time
    return max(0.0, c_hat), False


def measure(c: float, noise: NoiseModel, operation_time: float,
            filter_index: int = 0) -> MeasurementRecord:
    """Simulate one noisy measurement of the coefficient ``c``.

    Draw order within the per-filter stream is fixed: the binomial shot
    frequency (when ``shots`` is set) comes first, then the uniform detector
    error.  The result is clamped to ``[0, 1]`` and inverted.
    """
    p = survival_probability(c, noise.gamma, operation_time)
    stream_seed = derive_seed(noise.seed, filter_index)
    rng = make_rng(stream_seed)
    if noise.shots is not None:
        p = rng.binomial(noise.shots, p) / noise.shots
    if noise.dp_max > 0:
        p = p + rng.uniform(-noise.dp_max, noise.dp_max)
    p = min(1.0, max(0.0, p))
    c_hat, saturated = invert_probability(p, noise.gamma, operation_time)
    return MeasurementRecord(filter_index=filter_index, c_true=c,
                             p_measured=p, c_estimate=c_hat,
                             saturated=saturated, dp_max=noise.dp_max,
                             gamma=noise.gamma, shots=noise.shots,
                             stream_seed=stream_seed)


def relative_error_factor(c: float, gamma: float, operation_time: float) -> float:
    """Amplification ``exp(c + gamma*T) / c`` of relative coefficient error
    per unit of detector error; minimal at ``c = 1``."""
    if c <= 0:
        raise ValueError(f"relative error undefined for c <= 0, got {c}")
    return math.exp(c + gamma * operation_time) / c


def records_to_csv(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# columns: k,c_true,p_measured,c_estimate,saturated,stream_seed\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")


# ---------------------------------------------------------------------------
# time-domain oracle
# ---------------------------------------------------------------------------

def autocorrelation(spectrum: SpectralDensity, tau) -> np.ndarray:
    """Autocorrelation ``g(tau)`` of the field for an analytic spectrum.

    ``g`` is the inverse transform ``(1/pi) integral_0^inf S(w) cos(w tau) dw``
    of the even extension ``S(|w|)``.  Each Lorentzian component has the
    closed form (for ``w0 > 0``, ``a = sqrt(width_scale)``, ``tau > 0``)::

        g = (A/pi) Re[ (K+ - K-) / (2 i a) ],
        K+- = exp(i z+- tau) * (E1(i z+- tau) + {2 pi i  for z+}),
        z+- = w0 +- i/a,

    with ``E1`` the exponential integral; components centered at zero reduce
    to ``(A / 2a) exp(-|tau| / a)``.
    """
    if not spectrum.is_analytic:
        raise UnsupportedOracleError(
            "time-domain oracle supports analytic (Lorentzian mixture) spectra only")
    tau_arr = np.abs(np.atleast_1d(np.asarray(tau, dtype=float)))
    out = np.zeros(tau_arr.shape)
    for comp in spectrum.components:
        amp = spectrum.scale * comp.amplitude
        a = math.sqrt(comp.width_scale)
        w0 = comp.center
        if w0 == 0.0:
            out += (amp / (2.0 * a)) * np.exp(-tau_arr / a)
            continue
        zero = tau_arr == 0.0
        pos = ~zero
        if np.any(zero):
            out[zero] += (amp / (math.pi * a)) * (0.5 * math.pi + math.atan(a * w0))
        if np.any(pos):
            t = tau_arr[pos]
            zp = complex(w0, 1.0 / a)
            zm = complex(w0, -1.0 / a)
            kp = np.exp(1j * zp * t) * (exp1(1j * zp * t) + 2j * math.pi)
            km = np.exp(1j * zm * t) * exp1(1j * zm * t)
            out[pos] += (amp / math.pi) * ((kp - km) / (2j * a)).real
    return out if np.asarray(tau).ndim else float(out[0])


def _autocorr_breakpoints(bounds: np.ndarray, values: np.ndarray):
    """Piecewise-linear autocorrelation ``W(tau) = int y(t) y(t - tau) dt``
    as relu breakpoints: returns sorted positions p and slope jumps q with
    ``W(tau) = sum_k q_k * max(0, tau - p_k)``."""
    starts = bounds[:-1]
    ends = bounds[1:]
    vv = np.outer(values, values)
    pos = np.concatenate([
        (starts[:, None] - ends[None, :]).ravel(),
        (starts[:, None] - starts[None, :]).ravel(),
        (ends[:, None] - ends[None, :]).ravel(),
        (ends[:, None] - starts[None, :]).ravel(),
    ])
    q = np.concatenate([vv.ravel(), -vv.ravel(), -vv.ravel(), vv.ravel()])
    order = np.argsort(pos, kind="stable")
    pos = pos[order]
    q = q[order]
    uniq, inverse = np.unique(pos, return_inverse=True)
    q_merged = np.bincount(inverse, weights=q, minlength=uniq.size)
    return uniq, q_merged


class _StepAutocorrelation:
    """Exact autocorrelation of a piecewise-constant modulation."""

    def __init__(self, seq_or_set):
        bounds, values = to_step_function(seq_or_set)
        self.duration = float(bounds[-1])
        self.breaks, jumps = _autocorr_breakpoints(bounds, values)
        self._cum_slope = np.cumsum(jumps)
        self._cum_inter = np.cumsum(jumps * self.breaks)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        idx = np.searchsorted(self.breaks, tau, side="right") - 1
        idx = np.clip(idx, 0, self.breaks.size - 1)
        return self._cum_slope[idx] * tau - self._cum_inter[idx]


def _oracle_panels(breaks: np.ndarray, duration: float, rate_scale: float):
    """Integration panel edges on [0, T]: autocorrelation breakpoints,
    refined near zero (log-singular g derivative) and capped so each panel
    sees at most ~2 radians of the fastest autocorrelation oscillation."""
    edges = [0.0, duration]
    edges.extend(b for b in breaks if 0.0 < b < duration)
    first = min((b for b in breaks if b > 1e-300), default=duration)
    first = min(first, duration)
    edges.extend(first * 0.5 ** j for j in range(1, 11))
    edges = np.unique(np.asarray(edges))
    max_len = min(2.0 / rate_scale, duration / 8.0)
    out = [np.array([0.0])]
    for lo, hi in zip(edges[:-1], edges[1:]):
        n_sub = max(1, int(math.ceil((hi - lo) / max_len)))
        out.append(np.linspace(lo, hi, n_sub + 1)[1:])
    return np.concatenate(out)


def chi_time_domain(seq_or_set, spectrum: SpectralDensity,
                    operation_time: float | None = None,
                    gauss_order: int = 12) -> float:
    """Brute-force decoherence value ``chi`` from the time domain (oracle).

    Evaluates ``4 * int_0^T int_0^T y(t') y(t'') g(t' - t'') dt' dt''`` as
    ``8 * int_0^T g(tau) W(tau) dtau`` with the segment-exact piecewise
    linear autocorrelation ``W`` of ``y`` and closed-form ``g``.  Only
    analytic (Lorentzian mixture) spectra are supported.
    """
    if not spectrum.is_analytic:
        raise UnsupportedOracleError(
            "time-domain oracle supports analytic (Lorentzian mixture) spectra only")
    acf = _StepAutocorrelation(seq_or_set)
    if operation_time is not None and not math.isclose(operation_time, acf.duration):
        raise ValueError(f"operation_time {operation_time} != sequence duration "
                         f"{acf.duration}")
    rate_scale = max(
        max(c.center + 1.0 / math.sqrt(c.width_scale) for c in spectrum.components),
        1.0 / acf.duration)
    edges = _oracle_panels(acf.breaks, acf.duration, rate_scale)
    nodes, weights = np.polynomial.legendre.leggauss(gauss_order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    integrand = autocorrelation(spectrum, t) * acf(t)
    return 8.0 * float(np.sum(w * integrand))
