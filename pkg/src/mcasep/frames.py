"""Signals, tight-frame operators and the soft-thresholding function.

Every frame exposes a synthesis operator ``synthesize`` (A) and its adjoint,
the analysis operator ``analyze`` (A*), with ``A A* = p I``.  The two frames
used by FFT MCA (identity and unitary DFT) live here; the enveloped sinusoid
frames are in :mod:`mcasep.esp`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InvalidDimensionError(ValueError):
    pass


class InvalidParameterError(ValueError):
    pass


@dataclass(frozen=True)
class Signal:
    """Complex sample vector with its sampling rate.

    ``start_time`` is the time (s) of sample 0; cropped scan windows use it so
    interval metrics can be given in absolute time.
    """

    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0
    labels: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.complex128).ravel()
        if x.size < 1:
            raise InvalidDimensionError("signal must have at least one sample")
        if not self.sample_rate > 0:
            raise InvalidParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "start_time", float(self.start_time))

    def __len__(self):
        return self.samples.size

    @property
    def N(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.N) / self.sample_rate

    @property
    def real(self) -> np.ndarray:
        return self.samples.real.copy()

    def replace(self, samples) -> "Signal":
        """Same sampling grid, new samples."""
        return Signal(samples, self.sample_rate, self.start_time, dict(self.labels))


def as_samples(y) -> np.ndarray:
    """Return the complex sample vector of a Signal or array-like."""
    if isinstance(y, Signal):
        return y.samples
    return np.asarray(y, dtype=np.complex128).ravel()


class FrameOperator:
    """Synthesis/analysis pair of a tight frame with ``A A* = p I``.

    Subclasses implement :meth:`analyze` (signal -> coefficients) and
    :meth:`synthesize` (coefficients -> signal).  Instances are immutable.
    """

    frame_id = "frame"

    def __init__(self, signal_dim: int, coeff_shape: tuple, frame_constant: float):
        if signal_dim < 1:
            raise InvalidDimensionError(f"signal dimension must be >= 1, got {signal_dim}")
        self._N = int(signal_dim)
        self._coeff_shape = tuple(int(s) for s in coeff_shape)
        self._p = float(frame_constant)

    @property
    def signal_dim(self) -> int:
        return self._N

    @property
    def coeff_shape(self) -> tuple:
        return self._coeff_shape

    @property
    def coeff_dim(self) -> int:
        return int(np.prod(self._coeff_shape))

    @property
    def frame_constant(self) -> float:
        return self._p

    def analyze(self, w) -> np.ndarray:
        raise NotImplementedError

    def synthesize(self, c) -> np.ndarray:
        raise NotImplementedError

    def analyze_into(self, w, out: np.ndarray, scale: float = 1.0) -> None:
        """``out[...] = scale * analyze(w)`` without a fresh coefficient array."""
        np.multiply(self.analyze(w), scale, out=out)

    def _check_signal(self, w) -> np.ndarray:
        w = as_samples(w)
        if w.size != self._N:
            raise InvalidDimensionError(f"{self.frame_id}: expected signal of length {self._N}, got {w.size}")
        return w

    def _check_coeffs(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.complex128)
        if c.shape != self._coeff_shape:
            raise InvalidDimensionError(
                f"{self.frame_id}: expected coefficients of shape {self._coeff_shape}, got {c.shape}"
            )
        return c

    def __repr__(self):
        return f"{type(self).__name__}(N={self._N}, p={self._p:g})"


class IdentityFrame(FrameOperator):
    frame_id = "identity"

    def __init__(self, N: int):
        super().__init__(N, (N,), 1.0)

    def analyze(self, w):
        return self._check_signal(w).copy()

    def synthesize(self, c):
        return self._check_coeffs(c).copy()


class DFTFrame(FrameOperator):
    """Unitary DFT: analysis is the forward transform, synthesis the inverse."""

    frame_id = "dft"

    def __init__(self, N: int):
        super().__init__(N, (N,), 1.0)

    def analyze(self, w):
        return np.fft.fft(self._check_signal(w), norm="ortho")

    def synthesize(self, c):
        return np.fft.ifft(self._check_coeffs(c), norm="ortho")


def identity_frame(N: int) -> IdentityFrame:
    return IdentityFrame(N)


def dft_frame(N: int) -> DFTFrame:
    return DFTFrame(N)


def soft_threshold(x, T: float):
    """Complex soft-thresholding: shrink magnitudes by ``T``, keep the phase.

    Entries with ``|x| <= T`` are set to exactly zero.
    """
    if T < 0:
        raise InvalidParameterError(f"threshold must be nonnegative, got {T}")
    x = np.asarray(x)
    mag = np.abs(x)
    keep = mag > T
    scale = np.zeros(mag.shape, dtype=np.float64)
    np.divide(mag - T, mag, out=scale, where=keep)
    out = x * scale
    if out.ndim == 0:
        return out[()]
    return out
