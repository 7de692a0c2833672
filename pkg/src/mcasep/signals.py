"""Test signals with known decompositions, the LFM processing chain, metrics.

Every generator returns the mixture together with its ground-truth parts,
and the mixture is formed as the literal sum of those parts.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.signal

from .frames import InvalidParameterError, Signal, as_samples


class UnsupportedRegimeError(ValueError):
    pass


class UndefinedMetricError(ValueError):
    pass


def _check_rate(a: Signal, b: Signal):
    if not math.isclose(a.sample_rate, b.sample_rate, rel_tol=1e-12):
        raise InvalidParameterError(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")


# analytic examples ---------------------------------------------------------------


def spike_plus_sine(N=1000, sample_rate=10e3, spike_index=50, tone_freq=1000.0,
                    spike_amplitude=1.0, tone_amplitude=1.0):
    """``y[n] = a * delta[n - spike_index] + b * sin(2 pi f n / fs)``.

    Returns ``(y, (spike, sinusoid))``.
    """
    if not 0 <= spike_index < N:
        raise InvalidParameterError(f"spike_index {spike_index} outside [0, {N})")
    if not 0 < tone_freq < sample_rate / 2:
        raise InvalidParameterError(f"tone frequency {tone_freq} outside (0, fs/2)")
    n = np.arange(N)
    spike = np.zeros(N)
    spike[spike_index] = spike_amplitude
    tone = tone_amplitude * np.sin(2 * np.pi * tone_freq * n / sample_rate)
    return Signal(spike + tone, sample_rate), (Signal(spike, sample_rate), Signal(tone, sample_rate))


@dataclass(frozen=True)
class OscillatorSpec:
    """Driven damped oscillator ``y'' + (2/tau) y' + (2 pi f0)^2 y = a sin(2 pi f t)``."""

    tau: float = 2e-3
    f0: float = 20e3
    f: float = 15e3
    forcing_amplitude: float = 1e10
    sample_rate: float = 100e3
    N: int = 1000

    def __post_init__(self):
        if not (self.tau > 0 and self.f0 > 0 and self.f > 0):
            raise InvalidParameterError("tau, f0 and f must be positive")
        if self.N < 1 or not self.sample_rate > 0:
            raise InvalidParameterError("N and sample_rate must be positive")


def oscillator_parts(spec: OscillatorSpec, t):
    """Closed-form (homogeneous, particular) zero-state solution at times ``t``."""
    w0 = 2 * np.pi * spec.f0
    if w0 <= 1.0 / spec.tau:
        raise UnsupportedRegimeError("only the underdamped case 2 pi f0 > 1/tau is supported")
    w = 2 * np.pi * spec.f
    a = spec.forcing_amplitude
    gain = 1.0 / (w0**2 - w**2 + 2j * w / spec.tau)
    particular = a * np.imag(gain * np.exp(1j * w * t))
    p0 = a * np.imag(gain)
    dp0 = a * np.imag(1j * w * gain)
    wd = math.sqrt(w0**2 - 1.0 / spec.tau**2)
    # y_h(0) = -y_p(0), y_h'(0) = -y_p'(0)
    ca = -p0
    cb = (-dp0 + ca / spec.tau) / wd
    homogeneous = np.exp(-t / spec.tau) * (ca * np.cos(wd * t) + cb * np.sin(wd * t))
    return homogeneous, particular


def driven_oscillator(spec: OscillatorSpec):
    """Sampled zero-state response and its homogeneous/particular split.

    Returns ``(y, homogeneous, particular)``.
    """
    t = np.arange(spec.N) / spec.sample_rate
    hom, par = oscillator_parts(spec, t)
    fs = spec.sample_rate
    return Signal(hom + par, fs), Signal(hom, fs), Signal(par, fs)


# synthetic elastic target ----------------------------------------------------------


@dataclass(frozen=True)
class Pulse:
    """Hann-windowed linear sweep across ``band`` (Hz) lasting ``duration`` s."""

    arrival: float
    duration: float
    band: tuple = (15e3, 45e3)
    amplitude: float = 1.0


@dataclass(frozen=True)
class WavePacket:
    """Tone burst ``amplitude * w(t) * sin(2 pi f (t - arrival))``.

    ``window`` is ``"rect"`` (flat over ``[arrival, arrival + duration)``) or
    ``"hann"``.
    """

    arrival: float
    duration: float
    frequency: float
    amplitude: float = 1.0
    window: str = "rect"


@dataclass(frozen=True)
class Resonance:
    """``amplitude * exp(-(t - start)/tau) * sin(2 pi f (t - start))`` for ``t >= start``.

    Under a steady-state target the same response repeats every record
    length and the overlapping tails add up.
    """

    frequency: float
    tau: float
    amplitude: float
    start: float


@dataclass(frozen=True)
class SyntheticTargetSpec:
    """Synthetic elastic target: short returns plus decaying resonances.

    With ``steady_state`` the target is insonified by a ping train whose
    repetition interval equals the record length ``N / sample_rate``, so the
    record also holds the still-ringing tails of earlier pings.  This is the
    periodic regime in which cyclic frames describe the resonances exactly.
    """

    pulse: Pulse | None = None
    wavepackets: tuple = (
        WavePacket(1.0e-3, 0.1e-3, 30e3, 1.0),
        WavePacket(1.15e-3, 0.27e-3, 23e3, 0.5),
        WavePacket(1.4e-3, 0.54e-3, 30e3, 0.3),
    )
    resonances: tuple = (
        Resonance(18e3, 3.16e-3, 0.08, 1e-3),
        Resonance(28e3, 5.62e-3, 0.05, 1e-3),
        Resonance(39e3, 10e-3, 0.04, 1e-3),
        Resonance(42e3, 2e-3, 0.06, 1e-3),
    )
    sample_rate: float = 100e3
    N: int = 600
    steady_state: bool = True

    def __post_init__(self):
        T = self.N / self.sample_rate
        times = [w.arrival for w in self.wavepackets] + [r.start for r in self.resonances]
        if self.pulse is not None:
            times.append(self.pulse.arrival)
        if any(not 0 <= t < T for t in times):
            raise InvalidParameterError(f"arrival times must lie in [0, {T})")
        if any(not r.tau > 0 for r in self.resonances):
            raise InvalidParameterError("resonance decay constants must be positive")
        if any(w.window not in _WINDOWS for w in self.wavepackets):
            raise InvalidParameterError(f"wavepacket window must be one of {sorted(_WINDOWS)}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTargetSpec":
        d = dict(d)
        if d.get("pulse") is not None:
            p = dict(d["pulse"])
            p["band"] = tuple(p.get("band", (15e3, 45e3)))
            d["pulse"] = Pulse(**p)
        if "wavepackets" in d:
            d["wavepackets"] = tuple(WavePacket(**w) for w in d["wavepackets"])
        if "resonances" in d:
            d["resonances"] = tuple(Resonance(**r) for r in d["resonances"])
        return cls(**d)


def _hann_burst(t, start, duration):
    u = (t - start) / duration
    inside = (u >= 0) & (u < 1)
    return np.where(inside, np.sin(np.pi * np.clip(u, 0, 1)) ** 2, 0.0)


def _rect_burst(t, start, duration):
    # half-sample guard so a burst spans exactly round(duration * fs) samples
    eps = 1e-9 * duration
    s = t - start
    return np.where((s >= -eps) & (s < duration - eps), 1.0, 0.0)


_WINDOWS = {"rect": _rect_burst, "hann": _hann_burst}


def _resonance(t, r: Resonance, period: float | None) -> np.ndarray:
    s = t - r.start
    if period is None:
        on = s >= 0
        out = np.zeros(t.size)
        out[on] = r.amplitude * np.exp(-s[on] / r.tau) * np.sin(2 * np.pi * r.frequency * s[on])
        return out
    # infinite ping train: sum over k >= 0 of the response at s0 + k * period
    z = complex(-1.0 / r.tau, 2 * np.pi * r.frequency)
    s0 = np.mod(s, period)
    return r.amplitude * (np.exp(z * s0) / (1.0 - np.exp(z * period))).imag


def synthetic_elastic_target(spec: SyntheticTargetSpec = SyntheticTargetSpec()):
    """Stand-in for an elastic scatterer with exact component truth.

    Short part: an optional swept pulse plus tone-burst wavepackets.  Long
    part: exponentially decaying resonances (periodically continued when
    ``spec.steady_state``).  Returns ``(y, short, long)``.
    """
    t = np.arange(spec.N) / spec.sample_rate
    short = np.zeros(spec.N)
    if spec.pulse is not None:
        p = spec.pulse
        s = t - p.arrival
        f_lo, f_hi = p.band
        phase = 2 * np.pi * (f_lo * s + 0.5 * (f_hi - f_lo) / p.duration * s**2)
        short += p.amplitude * _hann_burst(t, p.arrival, p.duration) * np.cos(phase)
    for w in spec.wavepackets:
        env = _WINDOWS[w.window](t, w.arrival, w.duration)
        short += w.amplitude * env * np.sin(2 * np.pi * w.frequency * (t - w.arrival))
    period = spec.N / spec.sample_rate if spec.steady_state else None
    long = np.zeros(spec.N)
    for r in spec.resonances:
        long += _resonance(t, r, period)
    fs = spec.sample_rate
    return Signal(short + long, fs), Signal(short, fs), Signal(long, fs)


# processing chain --------------------------------------------------------------------


def lfm_chirp(f_start: float, f_end: float, duration: float, sample_rate: float) -> Signal:
    """Real LFM pulse whose instantaneous frequency runs linearly f_start -> f_end."""
    if not duration > 0:
        raise InvalidParameterError("duration must be positive")
    nyq = sample_rate / 2
    if max(abs(f_start), abs(f_end)) > nyq:
        raise InvalidParameterError(f"chirp band [{f_start}, {f_end}] exceeds Nyquist {nyq}")
    n = max(1, int(math.floor(duration * sample_rate + 0.5)))
    t = np.arange(n) / sample_rate
    rate = (f_end - f_start) / duration
    return Signal(np.cos(2 * np.pi * (f_start * t + 0.5 * rate * t**2)), sample_rate)


def convolve_response(impulse_response: Signal, excitation: Signal) -> Signal:
    """Full linear convolution, length ``len(ir) + len(excitation) - 1``."""
    _check_rate(impulse_response, excitation)
    out = scipy.signal.convolve(impulse_response.samples, excitation.samples, mode="full")
    return Signal(out, impulse_response.sample_rate, impulse_response.start_time)


def matched_filter(received: Signal, replica: Signal) -> Signal:
    """Correlate with the replica; a copy of the replica at delay d peaks at index d.

    Output has the length and time axis of ``received``.
    """
    _check_rate(received, replica)
    full = scipy.signal.correlate(received.samples, replica.samples, mode="full")
    out = full[replica.N - 1:replica.N - 1 + received.N]
    return received.replace(out)


def butterworth_response(freqs, order: int, cutoff, btype: str = "low") -> np.ndarray:
    """Butterworth magnitude at normalized frequencies (1 = Nyquist)."""
    f = np.abs(np.asarray(freqs, dtype=float))

    def low(fc):
        return 1.0 / np.sqrt(1.0 + (f / fc) ** (2 * order))

    def high(fc):
        with np.errstate(divide="ignore"):
            r = np.where(f > 0, fc / np.where(f > 0, f, 1.0), np.inf)
        return 1.0 / np.sqrt(1.0 + r ** (2 * order))

    if btype == "low":
        return low(cutoff)
    if btype == "high":
        return high(cutoff)
    if btype == "band":
        lo, hi = cutoff
        return high(lo) * low(hi)
    raise InvalidParameterError(f"unknown filter type {btype!r}")


def butterworth_bandlimit(x: Signal, order: int = 3, cutoff=0.25, btype: str = "low") -> Signal:
    """Zero-phase Butterworth magnitude applied in the frequency domain.

    ``cutoff`` is a fraction of Nyquist (a ``(low, high)`` pair for
    ``btype="band"``); the -3 dB point sits exactly at the cutoff.
    """
    if order < 1:
        raise InvalidParameterError("order must be >= 1")
    cuts = cutoff if btype == "band" else (cutoff,)
    if any(not 0 < c < 1 for c in cuts):
        raise InvalidParameterError(f"cutoff must lie in (0, 1), got {cutoff}")
    y = x.samples
    f = np.fft.fftfreq(y.size) * 2.0
    out = np.fft.ifft(np.fft.fft(y) * butterworth_response(f, order, cutoff, btype))
    if not np.any(y.imag):
        out = out.real
    return x.replace(out)


def add_awgn(x: Signal, snr_db: float, seed, reference_power: float | None = None) -> Signal:
    """Add white Gaussian noise at ``snr_db`` relative to the mean signal power.

    ``reference_power`` overrides the signal power (for a common reference
    across a scan).  Real signals get real noise; complex signals get
    circular complex noise.
    """
    y = x.samples
    power = float(np.mean(np.abs(y) ** 2)) if reference_power is None else float(reference_power)
    if not power > 0:
        raise InvalidParameterError("signal power is zero; SNR undefined")
    noise_power = power / 10 ** (snr_db / 10)
    rng = np.random.default_rng(seed)
    if np.any(y.imag):
        sigma = math.sqrt(noise_power / 2)
        noise = sigma * (rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size))
    else:
        noise = math.sqrt(noise_power) * rng.standard_normal(y.size)
    return x.replace(y + noise)


# metrics ---------------------------------------------------------------------------------

ANALYTIC_INTERVALS = ((1e-3, 2e-3), (2e-3, 6e-3))
IMAGING_INTERVALS = ((4e-3, 6e-3), (6e-3, 8e-3))


@dataclass(frozen=True)
class IntervalMetrics:
    I1: tuple
    I2: tuple
    m1: float
    m2: float


def _interval_mask(sig: Signal, interval) -> np.ndarray:
    a, b = interval
    t = sig.times
    dt = 1.0 / sig.sample_rate
    if a < t[0] - 1e-9 * dt or b > t[-1] + dt * (1 + 1e-9) or not b > a:
        raise InvalidParameterError(f"interval {interval} outside signal span [{t[0]}, {t[-1] + dt}]")
    # half-open [a, b); tolerance absorbs float error on the grid
    eps = 1e-9 * dt
    return (t >= a - eps) & (t < b - eps)


def interval_errors(y: Signal, y1: Signal, y2: Signal, I1=ANALYTIC_INTERVALS[0], I2=ANALYTIC_INTERVALS[1],
                    reference: Signal | None = None) -> IntervalMetrics:
    """Relative errors of ``y1`` on ``I1`` and ``y2`` on ``I2``.

    ``m_i = ||ref|_Ii - y_i|_Ii|| / ||ref|_Ii||`` with ``ref = reference``
    when given (noisy experiments compare against the clean signal) and
    ``y`` otherwise.
    """
    ref = reference if reference is not None else y
    out = []
    for comp, interval in ((y1, I1), (y2, I2)):
        mask = _interval_mask(ref, interval)
        r = as_samples(ref)[mask]
        denom = np.linalg.norm(r)
        if denom == 0:
            raise UndefinedMetricError(f"reference has no energy on {interval}")
        out.append(float(np.linalg.norm(r - as_samples(comp)[mask]) / denom))
    return IntervalMetrics(tuple(I1), tuple(I2), out[0], out[1])


def relative_error(estimate, truth) -> float:
    truth = as_samples(truth)
    return float(np.linalg.norm(as_samples(estimate) - truth) / np.linalg.norm(truth))


@dataclass(frozen=True)
class LfmChain:
    """Excite with an LFM, add noise on the raw return, matched filter.

    The clean and noisy returns go through the same filter, so the
    ground-truth components carry through linearly.
    """

    f_start: float = 15e3
    f_end: float = 45e3
    duration: float = 1e-3
    butterworth: tuple | None = None  # (order, cutoff)

    def replica(self, sample_rate: float) -> Signal:
        return lfm_chirp(self.f_start, self.f_end, self.duration, sample_rate)

    def clean(self, target: Signal) -> Signal:
        """Raw (pre-filter) LFM return, cropped to the target length."""
        ir = target
        if self.butterworth is not None:
            ir = butterworth_bandlimit(ir, *self.butterworth)
        ret = convolve_response(ir, self.replica(target.sample_rate))
        return target.replace(ret.samples[:target.N])

    def compress(self, received: Signal) -> Signal:
        return matched_filter(received, self.replica(received.sample_rate))

    def run(self, target: Signal, snr_db: float | None, seed=0, reference_power=None):
        """Returns ``(clean_mf, noisy_mf)``; ``noisy_mf`` is None without noise."""
        raw = self.clean(target)
        clean_mf = self.compress(raw)
        if snr_db is None:
            return clean_mf, None
        noisy = add_awgn(raw, snr_db, seed, reference_power)
        return clean_mf, self.compress(noisy)
