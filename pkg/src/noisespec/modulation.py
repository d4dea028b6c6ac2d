"""Pulse modulation functions.

A train of instantaneous population-flip pulses induces a piecewise-constant
modulation ``y(t)`` that starts at ``initial_sign`` and flips sign at every
switch time.  Multi-qubit probes carry one train per qubit; their summed
modulation is a staircase taking values in ``{-N, -N+2, ..., N}``.
Continuous drives are described by a phase ``phi(t)`` with
``y = cos(phi)``, ``z = sin(phi)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridRangeError


@dataclass(frozen=True, eq=False)
class PulseSequence:
    """Switch times of one pulse train on ``[0, duration]``.

    Switch times must be strictly increasing and lie strictly inside
    ``(0, duration)``; the induced ``y(t)`` is right-continuous at switches.
    """

    switch_times: np.ndarray
    duration: float
    initial_sign: int = 1

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.switch_times, dtype=float))
        if self.duration <= 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        if self.initial_sign not in (-1, 1):
            raise ValueError("initial_sign must be +1 or -1")
        if times.size:
            if not np.all(np.diff(times) > 0):
                raise ValueError("switch times must be strictly increasing")
            if times[0] <= 0 or times[-1] >= self.duration:
                raise ValueError("switch times must lie strictly inside (0, T)")
        object.__setattr__(self, "switch_times", times)

    @property
    def n_switches(self) -> int:
        return int(self.switch_times.size)

    def boundaries(self) -> np.ndarray:
        """Segment boundaries ``[0, t_1, ..., t_m, T]``."""
        return np.concatenate([[0.0], self.switch_times, [self.duration]])

    def segment_values(self) -> np.ndarray:
        """Value of y on each segment: ``initial_sign * (-1)**j``."""
        return self.initial_sign * (-1.0) ** np.arange(self.n_switches + 1)


@dataclass(frozen=True, eq=False)
class ModulationSet:
    """Per-qubit pulse trains sharing one duration; y(t) is their sum."""

    sequences: tuple[PulseSequence, ...]

    def __post_init__(self):
        seqs = tuple(self.sequences)
        if not seqs:
            raise ValueError("need at least one sequence")
        T = seqs[0].duration
        if any(s.duration != T for s in seqs):
            raise ValueError("all sequences must share the same duration")
        object.__setattr__(self, "sequences", seqs)

    @property
    def n_qubits(self) -> int:
        return len(self.sequences)

    @property
    def duration(self) -> float:
        return self.sequences[0].duration


@dataclass(frozen=True, eq=False)
class ContinuousModulation:
    """Phase modulation ``phi(t) = rate*t + sum_j a_j cos(nu_j t) + b_j sin(nu_j t)``.

    ``terms`` is a tuple of ``(nu, a, b)`` triples.  The induced modulation
    pair is ``y = cos(phi)``, ``z = sin(phi)``.
    """

    duration: float
    linear_rate: float = 0.0
    terms: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        object.__setattr__(self, "terms",
                           tuple((float(nu), float(a), float(b)) for nu, a, b in self.terms))

    def phase(self, t):
        t = np.asarray(t, dtype=float)
        phi = self.linear_rate * t
        for nu, a, b in self.terms:
            phi = phi + a * np.cos(nu * t) + b * np.sin(nu * t)
        return phi

    def phase_rate_bound(self) -> float:
        """Upper bound on ``|phi'(t)|``, used to size oscillatory quadrature."""
        return abs(self.linear_rate) + sum(abs(nu) * (abs(a) + abs(b))
                                           for nu, a, b in self.terms)


# ---------------------------------------------------------------------------
# protocol sequence generators
# ---------------------------------------------------------------------------

def _cosine_zero_times(rate: float, duration: float) -> np.ndarray:
    # zeros of cos(rate * t): t = (n + 1/2) pi / rate
    if rate <= 0:
        return np.array([])
    n_max = int(np.floor(rate * duration / np.pi + 0.5)) + 1
    times = (np.arange(n_max) + 0.5) * np.pi / rate
    return times[(times > 0) & (times < duration)]


def fo_sequence(k: int, K: int, omega_max: float, duration: float) -> PulseSequence:
    """Pulse train for orthogonalization-basis filter ``k`` of ``K``.

    Pulses sit at the zeros of ``cos(omega' t)`` with
    ``omega' = omega_max * (k - 1) / K``; ``k = 1`` yields free evolution
    (no pulses), the filter sensitive at zero frequency.
    """
    if not 1 <= k <= K:
        raise ValueError(f"k must be in 1..{K}, got {k}")
    if omega_max <= 0 or duration <= 0:
        raise ValueError("omega_max and duration must be > 0")
    rate = omega_max * (k - 1) / K
    return PulseSequence(_cosine_zero_times(rate, duration), duration)


def as_sequence(k: int, K: int, omega_max: float, duration: float) -> PulseSequence:
    """Pulse train for pointwise-protocol filter ``k`` of ``K``.

    Pulses sit at the zeros of ``sin(omega'' t)`` with
    ``omega'' = omega_max * k / K``; the filter peaks at ``omega''`` and the
    finest resolvable spacing (k = K) is ``pi / omega_max``.
    """
    if not 1 <= k <= K:
        raise ValueError(f"k must be in 1..{K}, got {k}")
    if omega_max <= 0 or duration <= 0:
        raise ValueError("omega_max and duration must be > 0")
    rate = omega_max * k / K
    n_max = int(np.floor(rate * duration / np.pi)) + 1
    times = np.arange(1, n_max + 1) * np.pi / rate
    times = times[times < duration]
    return PulseSequence(times, duration)


def staircase_split(target_frequency: float, n_qubits: int, duration: float) -> ModulationSet:
    """Distribute a cosine at ``target_frequency`` over ``n_qubits`` trains.

    The summed modulation is the nearest-level quantization of
    ``N cos(omega_f t)`` onto ``{-N, -N+2, ..., N}``: qubit ``j`` flips
    whenever ``N cos(omega_f t)`` crosses the mid-level threshold
    ``-N + 2j - 1``.  For ``N = 1`` this is exactly the square wave of
    :func:`fo_sequence` at the same frequency.
    """
    if n_qubits < 1:
        raise ValueError(f"n_qubits must be >= 1, got {n_qubits}")
    if duration <= 0:
        raise ValueError("duration must be > 0")
    if target_frequency < 0:
        raise ValueError("target_frequency must be >= 0")
    sequences = []
    for j in range(1, n_qubits + 1):
        threshold = -n_qubits + 2 * j - 1
        ratio = threshold / n_qubits
        if target_frequency == 0:
            times = np.array([])
        else:
            # crossings of cos(w t) = ratio: w t = 2 pi n +/- arccos(ratio)
            frac = np.arccos(ratio) / np.pi          # in (0, 1)
            n_max = int(np.floor(target_frequency * duration / (2 * np.pi))) + 1
            cycles = 2.0 * np.arange(n_max + 1)
            ups = np.pi * (cycles + frac) / target_frequency
            downs = np.pi * (cycles + (2.0 - frac)) / target_frequency
            times = np.sort(np.concatenate([ups, downs]))
            times = times[(times > 0) & (times < duration)]
        sequences.append(PulseSequence(times, duration))
    return ModulationSet(tuple(sequences))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def eval_modulation(seq_or_set, t):
    """Modulation level y(t); right-continuous at switch times.

    Accepts a :class:`PulseSequence` or a :class:`ModulationSet` (summed
    level).  Raises :class:`GridRangeError` outside ``[0, T]``.
    """
    if isinstance(seq_or_set, ModulationSet):
        total = 0.0
        for seq in seq_or_set.sequences:
            total = total + eval_modulation(seq, t)
        return total
    seq = seq_or_set
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > seq.duration):
        raise GridRangeError(f"t outside [0, {seq.duration}]")
    flips = np.searchsorted(seq.switch_times, t_arr, side="right")
    out = seq.initial_sign * (-1.0) ** flips
    return out if t_arr.ndim else float(out)


def eval_continuous(mod: ContinuousModulation, t):
    """Return ``(cos(phi(t)), sin(phi(t)))`` for ``t`` in ``[0, T]``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > mod.duration):
        raise GridRangeError(f"t outside [0, {mod.duration}]")
    phi = mod.phase(t_arr)
    return np.cos(phi), np.sin(phi)


def to_step_function(seq_or_set):
    """Merged representation ``(boundaries, values)`` of the summed y(t).

    ``boundaries`` has length ``n + 1`` including 0 and T; ``values[i]`` is
    the constant level on ``[boundaries[i], boundaries[i+1])``.
    """
    if isinstance(seq_or_set, PulseSequence):
        return seq_or_set.boundaries(), seq_or_set.segment_values()
    mset = seq_or_set
    T = mset.duration
    cuts = np.unique(np.concatenate(
        [[0.0, T]] + [s.switch_times for s in mset.sequences]))
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    values = np.zeros(mids.size)
    for seq in mset.sequences:
        flips = np.searchsorted(seq.switch_times, mids, side="right")
        values += seq.initial_sign * (-1.0) ** flips
    return cuts, values


def repair_switch_times(times, duration: float) -> np.ndarray:
    """Repair a candidate switch list: clip into (0, T), sort, and cancel
    coincident pairs (two flips at one instant are a no-op)."""
    eps = 1e-12 * duration
    t = np.clip(np.asarray(times, dtype=float), eps, duration - eps)
    t = np.sort(t)
    uniq, counts = np.unique(t, return_counts=True)
    return uniq[counts % 2 == 1]


def sequence_to_csv(seq: PulseSequence, path) -> None:
    """Write one switch time per row (for inspection and replay)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# duration,{seq.duration!r}\n")
        fh.write(f"# initial_sign,{seq.initial_sign}\n")
        for t in seq.switch_times:
            fh.write(f"{float(t)!r}\n")


def sequence_from_csv(path) -> PulseSequence:
    duration = None
    sign = 1
    times = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(",")
                key = key.strip()
                if key == "duration":
                    duration = float(value)
                elif key == "initial_sign":
                    sign = int(value)
                continue
            times.append(float(line))
    if duration is None:
        raise ValueError(f"{path}: missing '# duration,<T>' header")
    return PulseSequence(np.asarray(times), duration, sign)
