"""Complex-vector numerics shared by every other module.

All spectra in this library use the unitary DFT convention: a factor of
1/sqrt(N) in both directions, so transforms preserve the Euclidean norm and
the inverse is the conjugate transpose of the forward matrix.
"""

import numpy as np

from .errors import DimensionError, FormatError

__all__ = [
    "dft",
    "circular_convolve",
    "complex_to_real",
    "real_to_complex",
]


def dft(v: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unitary DFT (or inverse DFT) along the last axis.

    Forward: X[k] = (1/sqrt(N)) * sum_n x[n] exp(-j*2*pi*k*n/N).
    The inverse undoes the forward transform exactly (up to roundoff).
    """
    v = np.asarray(v)
    if v.shape[-1] == 0:
        raise DimensionError("cannot transform an empty vector")
    if inverse:
        return np.fft.ifft(v, norm="ortho")
    return np.fft.fft(v, norm="ortho")


def circular_convolve(h: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Circular (cyclic) convolution of two equal-length vectors.

    Equivalent to multiplying x by the circulant matrix whose first column
    is h. Computed spectrally; the pointwise product of the sqrt(N)-scaled
    unitary spectra reduces to plain fft/ifft.
    """
    h = np.asarray(h)
    x = np.asarray(x)
    if h.shape[-1] != x.shape[-1]:
        raise DimensionError(
            f"length mismatch: h has {h.shape[-1]} samples, x has {x.shape[-1]}"
        )
    return np.fft.ifft(np.fft.fft(h) * np.fft.fft(x))


def complex_to_real(v: np.ndarray) -> np.ndarray:
    """Stack a complex vector as [Re(v); Im(v)] (length doubles).

    Works on batches: the stacking happens along the last axis.
    """
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=-1)


def real_to_complex(r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`complex_to_real`: first half Re, second half Im."""
    r = np.asarray(r)
    n2 = r.shape[-1]
    if n2 % 2 != 0:
        raise FormatError(f"real-packed vector must have even length, got {n2}")
    n = n2 // 2
    return r[..., :n] + 1j * r[..., n:]
