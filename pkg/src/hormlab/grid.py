"""Uniform grids on the 2*pi-periodic torus and grid-function utilities."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import symexpr as se


@dataclass(frozen=True)
class TorusGrid:
    """``n`` points per side on [0, 2*pi)^d, nodes at ``2*pi*j/n``."""

    d: int
    n: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.n < 4 or self.n & (self.n - 1):
            raise ValueError(f"points per side must be a power of two >= 4, got {self.n}")

    def __hash__(self):
        return hash((self.d, self.n))

    @property
    def spacing(self) -> float:
        return 2 * np.pi / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.d, 0))

    @cached_property
    def nodes_1d(self) -> np.ndarray:
        return self.spacing * np.arange(self.n)

    @cached_property
    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``(d, n, ..., n)``."""
        return np.stack(np.meshgrid(*([self.nodes_1d] * self.d), indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates flattened to shape ``(d, n^d)``."""
        return self.mesh.reshape(self.d, -1)

    @cached_property
    def freqs_1d(self) -> np.ndarray:
        """Integer frequencies in FFT order; the Nyquist entry is ``-n/2``."""
        return np.fft.fftfreq(self.n, 1.0 / self.n)

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """Integer wavevectors, shape ``(d, n, ..., n)`` in FFT order."""
        return np.stack(np.meshgrid(*([self.freqs_1d] * self.d), indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        """``|k|^2`` on the frequency lattice."""
        return np.sum(self.wavevectors ** 2, axis=0)

    def sample(self, e: se.Expr) -> np.ndarray:
        return se.compile_exprs([e])(self.mesh)[0]

    def norm(self, phi: np.ndarray) -> np.ndarray:
        """Discrete L2 norm over the last ``d`` axes (trapezoid rule, exact for trig polys)."""
        w = self.spacing ** self.d
        return np.sqrt(w * np.sum(np.abs(phi) ** 2, axis=self.axes))

    def inner(self, psi: np.ndarray, phi: np.ndarray) -> complex:
        return self.spacing ** self.d * np.vdot(psi, phi)

    def fft(self, phi: np.ndarray) -> np.ndarray:
        return np.fft.fftn(phi, axes=self.axes)

    def ifft(self, phi_hat: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(phi_hat, axes=self.axes)

    def band_limited(self, coeffs: np.ndarray, max_freq: int) -> np.ndarray:
        """Real trigonometric polynomial with frequencies in ``[-max_freq, max_freq]^d``.

        ``coeffs`` has shape ``(*batch, 2K+1, ..., 2K+1)`` (complex); the real part
        of the series is sampled, so one coefficient array gives the same
        function on every grid with ``n/2 > max_freq``.
        """
        if 2 * max_freq >= self.n:
            raise ValueError(f"max frequency {max_freq} not resolved on n={self.n}")
        ks = np.arange(-max_freq, max_freq + 1)
        basis = np.exp(1j * np.outer(ks, self.nodes_1d))  # (2K+1, n)
        out = coeffs
        for _ in range(self.d):
            # contract the leading frequency axis of the trailing block, append a space axis
            out = np.tensordot(out, basis, axes=([out.ndim - self.d], [0]))
        return out.real

    def interpolate(self, phi: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate the trigonometric interpolant of ``phi`` at arbitrary points.

        ``phi`` has shape ``(*batch, n, ..., n)``, ``points`` shape ``(d, P)``;
        returns ``(*batch, P)``.  The Nyquist mode is interpolated with a cosine
        so real data stays real.
        """
        batch = phi.shape[: phi.ndim - self.d]
        coef = self.fft(phi) / self.size
        coef = coef.reshape((-1,) + self.shape)
        mats = []
        for j in range(self.d):
            e = np.exp(1j * np.outer(points[j], self.freqs_1d))  # (P, n)
            e[:, self.n // 2] = np.cos(0.5 * self.n * points[j])
            mats.append(e)
        # last axis first: one GEMM, then pointwise contractions over the rest
        b = coef.shape[0]
        t = coef.reshape(-1, self.n) @ mats[-1].T  # (b * n^(d-1), P)
        t = t.reshape((b,) + self.shape[:-1] + (points.shape[1],))
        for j in range(self.d - 2, -1, -1):
            t = np.einsum("b...kp,pk->b...p", t, mats[j])
        return t.real.reshape(batch + (points.shape[1],))
