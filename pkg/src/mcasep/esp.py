"""Enveloped sinusoid Parseval (ESP) frames.

Given envelopes ``e_0 .. e_{L-1}`` in C^N, the frame vectors are all cyclic
shifts ``m`` and modulations ``k`` of every envelope::

    a[l, k, m][n] = e_l[(n - m) mod N] * exp(2j*pi*k*(n - m)/N)

and ``A A* = N * sum_l ||e_l||^2 * I``.  Coefficients are laid out as an
``(L, N, N)`` array indexed ``(l, k, m)``.

Analysis and synthesis are diagonalized by the FFT: with ``E_l = fft(e_l)``
the frequency response of the modulated envelope ``k`` is ``E_l[(f - k) mod N]``,
so every ``(l, k)`` row costs one length-N FFT and the dense ``N x L N^2``
matrix is never formed.  :func:`dense_synthesis_matrix` builds it anyway for
small problems and is used as a test oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import column_dot, modulate
from .frames import FrameOperator, InvalidDimensionError, as_samples


DEFAULT_MAX_ELEMENTS = 2**28


class InvalidEnvelopeError(ValueError):
    pass


@dataclass(frozen=True)
class EnvelopeSet:
    """``L`` nonzero envelopes of common length ``N``.

    ``specs`` keeps the recipe for each envelope (``kind``, ``param``) so the
    set can be written back to JSON; ``scale`` records Parseval rescaling.
    """

    envelopes: np.ndarray
    labels: tuple = ()
    sample_rate: float | None = None
    specs: tuple = field(default=(), compare=False)

    def __post_init__(self):
        e = np.atleast_2d(np.array(self.envelopes, dtype=np.complex128))
        if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 1:
            raise InvalidEnvelopeError(f"envelopes must be a nonempty (L, N) array, got shape {e.shape}")
        norms = np.linalg.norm(e, axis=1)
        if np.any(norms == 0):
            bad = [i for i, v in enumerate(norms) if v == 0]
            raise InvalidEnvelopeError(f"envelopes {bad} are identically zero")
        e.setflags(write=False)
        object.__setattr__(self, "envelopes", e)
        labels = tuple(self.labels) if self.labels else tuple(f"e{i}" for i in range(e.shape[0]))
        if len(labels) != e.shape[0]:
            raise InvalidEnvelopeError("one label per envelope required")
        object.__setattr__(self, "labels", labels)
        specs = tuple(self.specs) if self.specs else tuple({"kind": "raw"} for _ in range(e.shape[0]))
        object.__setattr__(self, "specs", specs)

    @property
    def L(self) -> int:
        return self.envelopes.shape[0]

    @property
    def N(self) -> int:
        return self.envelopes.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.envelopes, axis=1)

    def __add__(self, other: "EnvelopeSet") -> "EnvelopeSet":
        if other.N != self.N:
            raise InvalidEnvelopeError("cannot join envelope sets of different length")
        return EnvelopeSet(
            np.vstack([self.envelopes, other.envelopes]),
            self.labels + other.labels,
            self.sample_rate or other.sample_rate,
            self.specs + other.specs,
        )

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        items = []
        for i, spec in enumerate(self.specs):
            item = {"kind": spec.get("kind", "raw"), "param": spec.get("param")}
            if "scale" in spec:
                item["scale"] = spec["scale"]
            if item["kind"] == "raw":
                item["samples"] = [[float(v.real), float(v.imag)] for v in self.envelopes[i]]
            item["label"] = self.labels[i]
            items.append(item)
        return {"N": self.N, "sample_rate": self.sample_rate, "envelopes": items}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EnvelopeSet":
        N = int(d["N"])
        fs = d.get("sample_rate")
        rows, labels, specs = [], [], []
        for item in d["envelopes"]:
            kind = item.get("kind", "raw")
            if kind == "rectangular":
                one = make_rectangular_envelopes([item["param"]], fs, N)
            elif kind == "exponential":
                one = make_exponential_envelopes([item["param"]], fs, N)
            elif kind == "raw":
                s = np.asarray(item["samples"], dtype=np.float64)
                row = s[:, 0] + 1j * s[:, 1] if s.ndim == 2 else s.astype(np.complex128)
                one = EnvelopeSet(row[None, :], sample_rate=fs)
            else:
                raise InvalidEnvelopeError(f"unknown envelope kind {kind!r}")
            row = one.envelopes[0]
            spec = dict(one.specs[0])
            if "scale" in item and kind != "raw":
                row = row * item["scale"]
                spec["scale"] = item["scale"]
            rows.append(row)
            labels.append(item.get("label", one.labels[0]))
            specs.append(spec)
        return cls(np.array(rows), tuple(labels), fs, tuple(specs))

    @classmethod
    def from_json(cls, text: str) -> "EnvelopeSet":
        return cls.from_dict(json.loads(text))


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def make_rectangular_envelopes(durations, sample_rate: float, N: int) -> EnvelopeSet:
    """Rectangular windows ``e[n] = 1`` for ``0 <= n < round(T * fs)``."""
    if not sample_rate > 0:
        raise InvalidEnvelopeError("sample_rate must be positive")
    rows, labels, specs = [], [], []
    for T in durations:
        n = _round_half_away(T * sample_rate)
        if T <= 0 or n < 1:
            raise InvalidEnvelopeError(f"window of {T} s rounds to {n} samples at {sample_rate} Hz")
        if n > N:
            raise InvalidEnvelopeError(f"window of {T} s ({n} samples) exceeds signal length {N}")
        e = np.zeros(N)
        e[:n] = 1.0
        rows.append(e)
        labels.append(f"rect:{T:g}s")
        specs.append({"kind": "rectangular", "param": float(T)})
    return EnvelopeSet(np.array(rows), tuple(labels), float(sample_rate), tuple(specs))


def make_exponential_envelopes(time_constants, sample_rate: float, N: int) -> EnvelopeSet:
    """Decaying exponentials ``e[n] = exp(-n / (tau * fs))``."""
    if not sample_rate > 0:
        raise InvalidEnvelopeError("sample_rate must be positive")
    n = np.arange(N)
    rows, labels, specs = [], [], []
    for tau in time_constants:
        if not tau > 0:
            raise InvalidEnvelopeError(f"time constant must be positive, got {tau}")
        rows.append(np.exp(-n / (tau * sample_rate)))
        labels.append(f"exp:{tau:g}s")
        specs.append({"kind": "exponential", "param": float(tau)})
    return EnvelopeSet(np.array(rows), tuple(labels), float(sample_rate), tuple(specs))


def constant_envelope(N: int) -> EnvelopeSet:
    return EnvelopeSet(np.ones((1, N)), ("constant",))


def one_hot_envelope(N: int) -> EnvelopeSet:
    e = np.zeros((1, N))
    e[0, 0] = 1.0
    return EnvelopeSet(e, ("one-hot",))


def normalize_parseval(env: EnvelopeSet) -> EnvelopeSet:
    """Rescale every envelope to norm ``(N L)^(-1/2)`` so the frame is Parseval."""
    norms = env.norms()
    if np.any(norms == 0):
        raise InvalidEnvelopeError("cannot normalize a zero envelope")
    target = 1.0 / math.sqrt(env.N * env.L)
    scales = target / norms
    specs = []
    for spec, s in zip(env.specs, scales):
        spec = dict(spec)
        spec["scale"] = float(s) * spec.get("scale", 1.0)
        specs.append(spec)
    return EnvelopeSet(env.envelopes * scales[:, None], env.labels, env.sample_rate, tuple(specs))


class EspFrame(FrameOperator):
    """FFT-diagonalized ESP frame.

    ``synthesize`` is the bare synthesis operator A (no ``1/p`` factor), so
    ``synthesize(analyze(w)) == frame_constant * w``.
    """

    frame_id = "esp"

    def __init__(self, envelope_set: EnvelopeSet, max_elements: int = DEFAULT_MAX_ELEMENTS):
        L, N = envelope_set.L, envelope_set.N
        if L * N * N > max_elements:
            raise MemoryError(
                f"ESP coefficients would hold L*N*N = {L * N * N} elements (cap {max_elements}); "
                "shorten the signal or raise max_elements"
            )
        p = N * float(np.sum(np.abs(envelope_set.envelopes) ** 2))
        super().__init__(N, (L, N, N), p)
        self.envelope_set = envelope_set
        spectra = np.fft.fft(envelope_set.envelopes, axis=1)
        # rotated[l, k, f] = E_l[(f - k) mod N]
        idx =(np.arange(N)[None, :] - np.arange(N)[:, None]) % N
        self._rotated = np.ascontiguousarray(spectra[:, idx])
        self._rotated.setflags(write=False)

    @property
    def L(self) -> int:
        return self.envelope_set.L

    def analyze(self, w) -> np.ndarray:
        out = np.empty(self.coeff_shape, dtype=np.complex128)
        self.analyze_into(w, out)
        return out

    def analyze_into(self, w, out, scale=1.0):
        # c[l, k, :] = ifft(fft(w) * conj(E_l[(f - k) mod N]))
        W = np.fft.fft(self._check_signal(w))
        for l in range(self.L):
            modulate(self._rotated[l], W, scale, out[l])
            np.fft.ifft(out[l], axis=1, out=out[l])

    def synthesize(self, c) -> np.ndarray:
        c = self._check_coeffs(c)
        N = self.signal_dim
        scratch = np.empty((N, N), dtype=np.complex128)
        acc = np.zeros(N, dtype=np.complex128)
        for l in range(self.L):
            np.fft.fft(c[l], axis=1, out=scratch)
            column_dot(scratch, self._rotated[l], acc)
        return np.fft.ifft(acc)


def build_esp_frame(env: EnvelopeSet, max_elements: int = DEFAULT_MAX_ELEMENTS) -> EspFrame:
    return EspFrame(env, max_elements=max_elements)


def esp_analyze(frame: EspFrame, w) -> np.ndarray:
    return frame.analyze(w)


def esp_synthesize(frame: EspFrame, c) -> np.ndarray:
    return frame.synthesize(c)


# operators from the frame algebra -------------------------------------------


def shift(w, m: int = 1) -> np.ndarray:
    """Cyclic shift ``S^m w[n] = w[n - m mod N]``."""
    return np.roll(as_samples(w), m)


def diag(v, w) -> np.ndarray:
    """``D(v) w``: elementwise product."""
    return np.asarray(v) * np.asarray(w)


def conj_flip(w) -> np.ndarray:
    """``H w[n] = conj(w[-n mod N])``."""
    w = as_samples(w)
    return np.conj(np.roll(w[::-1], 1))


def frame_vector(env: EnvelopeSet, l: int, k: int, m: int) -> np.ndarray:
    """The frame vector ``a[l, k, m]`` evaluated directly from its definition."""
    N = env.N
    n = np.arange(N)
    return env.envelopes[l][(n - m) % N] * np.exp(2j * np.pi * k * (n - m) / N)


def dense_synthesis_matrix(env: EnvelopeSet) -> np.ndarray:
    """Dense ``N x (L*N*N)`` synthesis matrix, columns ordered ``(l, k, m)``.

    Only for small N; memory is ``L N^3``.
    """
    N, L = env.N, env.L
    if L * N**3 > 2**24:
        raise InvalidDimensionError("dense ESP matrix too large; use EspFrame")
    n = np.arange(N)[:, None, None]
    k = np.arange(N)[None, :, None]
    m = np.arange(N)[None, None, :]
    cols = []
    for l in range(L):
        a = env.envelopes[l][(n - m) % N] * np.exp(2j * np.pi * k * (n - m) / N)
        cols.append(a.reshape(N, N * N))
    return np.concatenate(cols, axis=1)
