"""Multipath channel parameters and frequency-domain synthesis.

Every propagation path, direct or reflected, is summarized by a small
parameter tuple measured at a pair of reference points: a complex gain,
the absolute time of flight ``tau`` from the receive reference, the
arrival bearing ``aoa`` at the receive reference, the departure bearing
``aod`` at the transmit reference, and the ``parity`` of the cascaded
reflections.  Together with the orthogonal map tying transmit-side
displacements to displacements of the mirrored transmitter, these
numbers reproduce the exact path length for *any* nearby element pair,
which is what makes wideband synthesis over an aperture cheap.

Two distance models are provided: the exact mirrored-source form and its
first-order (plane-wave) approximation around the reference points.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyChannel, InvalidGeometry, SingularGeometry
from .geometry import ImagePath, OrthoMap2, wrap_angle
from .validation import as_vec2, check_parity, check_positive

SPEED_OF_LIGHT = 299_792_458.0
"""Propagation speed used throughout, in meters per second."""


def unit_vector(theta):
    """Unit vector(s) ``(cos theta, sin theta)`` with shape ``theta.shape + (2,)``."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def aod_from_aoa(aoa, alpha, parity):
    """Departure bearing implied by an arrival bearing and a reflection map.

    The mirrored transmitter sits along ``unit_vector(aoa)`` from the
    receive reference; pulling the reversed ray back through the
    reflection cascade gives the physical departure direction
    ``-inverse(Q) @ unit_vector(aoa)``, whose bearing reduces to
    ``parity * (aoa - alpha) + pi``.
    """
    return wrap_angle(np.asarray(parity) * (np.asarray(aoa) - np.asarray(alpha)) + np.pi)


def alpha_from_bearings(aoa, aod, parity):
    """Rotation phase of the reflection map recovered from the two bearings.

    Inverse of :func:`aod_from_aoa`: ``alpha = aoa - parity * (aod - pi)``.
    """
    return wrap_angle(np.asarray(aoa) - np.asarray(parity) * (np.asarray(aod) - np.pi))


@dataclass(eq=False)
class RmPathParams:
    """Mirrored-source description of one path.

    Parameters
    ----------
    gain : complex
        Path amplitude and phase, referenced to the element pair sitting
        exactly at the reference points.
    tau : float
        Absolute time of flight between the reference points, seconds.
    aoa : float
        Bearing of the mirrored transmitter seen from the receive
        reference, radians in ``(-pi, pi]``.
    aod : float
        Physical departure bearing at the transmit reference.
    parity : int
        ``+1`` after an even number of reflections, ``-1`` after an odd
        number.  Equals the determinant of the reflection map.

    The map's rotation phase ``alpha`` is derived from the bearings and
    the parity, so the three can never fall out of sync.
    """

    gain: complex
    tau: float
    aoa: float
    aod: float
    parity: int = 1

    def __post_init__(self):
        check_positive(self.tau, "tau")
        check_parity(self.parity)
        self.aoa = wrap_angle(float(self.aoa))
        self.aod = wrap_angle(float(self.aod))
        self.gain = complex(self.gain)

    @property
    def alpha(self):
        """Rotation phase of the reflection map."""
        return alpha_from_bearings(self.aoa, self.aod, self.parity)

    @property
    def map(self):
        """Orthogonal map from transmit displacements to image displacements."""
        return OrthoMap2(alpha=self.alpha, parity=self.parity)

    def image_point(self, rx_ref):
        """Mirrored-transmitter location implied by ``(tau, aoa)``."""
        rx_ref = as_vec2(rx_ref, "rx_ref")
        return rx_ref + SPEED_OF_LIGHT * self.tau * unit_vector(self.aoa)


def rm_from_alpha(gain, tau, aoa, alpha, parity):
    """Build :class:`RmPathParams` from the map phase instead of the aod."""
    return RmPathParams(
        gain=gain,
        tau=tau,
        aoa=aoa,
        aod=aod_from_aoa(aoa, alpha, parity),
        parity=parity,
    )


@dataclass(eq=False)
class PwaPathParams:
    """First-order description of one path over a measurement campaign.

    Parameters
    ----------
    gains : (K,) complex array
        One complex gain per measurement; captures lacking a shared
        phase reference force the gain to be placement-local.
    delta : float
        Relative delay in seconds, nonnegative by the convention that
        the earliest path of a set sits at zero.
    aoa, aod : float
        Arrival and departure bearings, radians.
    """

    gains: np.ndarray
    delta: float
    aoa: float
    aod: float

    def __post_init__(self):
        self.gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        self.delta = float(self.delta)
        if not np.isfinite(self.delta) or self.delta < 0:
            raise InvalidGeometry("delta must be finite and nonnegative")
        self.aoa = wrap_angle(float(self.aoa))
        self.aod = wrap_angle(float(self.aod))

    @property
    def strength(self):
        """Sum of squared gain magnitudes; ranks paths by absorbed energy."""
        return float(np.sum(np.abs(self.gains) ** 2))

    def amplitude(self):
        """Root-mean-square gain magnitude across measurements."""
        return float(np.sqrt(np.mean(np.abs(self.gains) ** 2)))


def image_to_rm_params(path: ImagePath, tx_ref, rx_ref) -> RmPathParams:
    """Parameter tuple of a geometric image path at a reference pair.

    ``tx_ref`` must be the point the image geometry was enumerated from;
    it fixes the convention and is kept explicit because every parameter
    is meaningless without its reference pair.
    """
    as_vec2(tx_ref, "tx_ref")
    rx_ref = as_vec2(rx_ref, "rx_ref")
    sep = path.image_point - rx_ref
    dist = float(np.hypot(*sep))
    if dist <= 0.0:
        raise SingularGeometry(
            "mirrored transmitter coincides with the receive reference")
    aoa = float(np.arctan2(sep[1], sep[0]))
    return rm_from_alpha(
        gain=path.gain,
        tau=dist / SPEED_OF_LIGHT,
        aoa=aoa,
        alpha=path.map.alpha,
        parity=path.map.parity,
    )


def path_distance_rm(params: RmPathParams, x_r, x_t, rx_ref, tx_ref):
    """Exact path length for element positions ``x_r`` and ``x_t``.

    The mirrored transmitter for an element at ``x_t`` sits at
    ``z0 + Q (x_t - tx_ref)`` with ``z0`` the image of the reference, so
    the straight-line distance from ``x_r`` is

    ``|| (x_r - rx_ref) - c * tau * u(aoa) - Q (x_t - tx_ref) ||``.

    ``x_r`` and ``x_t`` may carry leading batch dimensions; they
    broadcast against each other and the result drops the trailing axis.
    """
    x_r = np.asarray(x_r, dtype=float)
    x_t = np.asarray(x_t, dtype=float)
    rx_ref = as_vec2(rx_ref, "rx_ref")
    tx_ref = as_vec2(tx_ref, "tx_ref")
    z0_off = SPEED_OF_LIGHT * params.tau * unit_vector(params.aoa)
    moved = (x_t - tx_ref) @ params.map.matrix().T
    sep = (x_r - rx_ref) - z0_off - moved
    return np.linalg.norm(sep, axis=-1)


def path_distance_tx_form(params: RmPathParams, x_r, x_t, rx_ref, tx_ref):
    """Same length as :func:`path_distance_rm`, written from the transmit side.

    Mirrors the receive element back through the inverse map instead of
    mirroring the transmitter forward; the two forms agree to rounding
    because the map is orthogonal.
    """
    x_r = np.asarray(x_r, dtype=float)
    x_t = np.asarray(x_t, dtype=float)
    rx_ref = as_vec2(rx_ref, "rx_ref")
    tx_ref = as_vec2(tx_ref, "tx_ref")
    inv = params.map.inverse()
    sep = (x_t - tx_ref) - SPEED_OF_LIGHT * params.tau * unit_vector(params.aod)
    sep = sep - (x_r - rx_ref) @ inv.matrix().T
    return np.linalg.norm(sep, axis=-1)


def path_distance_pwa(params, x_r, x_t, rx_ref, tx_ref):
    """First-order path length around the reference points.

    ``c * tau - u(aoa) . (x_r - rx_ref) - u(aod) . (x_t - tx_ref)``;
    exact at the references and accurate to second order in the
    displacements.
    """
    x_r = np.asarray(x_r, dtype=float)
    x_t = np.asarray(x_t, dtype=float)
    rx_ref = as_vec2(rx_ref, "rx_ref")
    tx_ref = as_vec2(tx_ref, "tx_ref")
    base = SPEED_OF_LIGHT * params.tau
    d = base - (x_r - rx_ref) @ unit_vector(params.aoa)
    return d - (x_t - tx_ref) @ unit_vector(params.aod)


@dataclass(eq=False)
class FrequencyGrid:
    """Uniform tone comb of ``num_tones`` frequencies across ``bandwidth``.

    Tone ``i`` sits at ``center - bandwidth/2 + i * bandwidth /
    num_tones``, so the spacing is ``bandwidth / num_tones`` and an
    inverse DFT over the tones yields delay bins ``1 / bandwidth``
    apart.
    """

    center: float
    bandwidth: float
    num_tones: int

    def __post_init__(self):
        check_positive(self.center, "center")
        check_positive(self.bandwidth, "bandwidth")
        if int(self.num_tones) != self.num_tones or self.num_tones < 2:
            raise InvalidGeometry("num_tones must be an integer >= 2")
        self.num_tones = int(self.num_tones)
        if self.center <= self.bandwidth / 2.0:
            raise InvalidGeometry("band edge reaches below zero frequency")

    @property
    def spacing(self):
        return self.bandwidth / self.num_tones

    @property
    def wavelength(self):
        """Carrier wavelength in meters."""
        return SPEED_OF_LIGHT / self.center

    def tones(self):
        """All tone frequencies in Hz, shape ``(num_tones,)``."""
        i = np.arange(self.num_tones, dtype=float)
        return self.center - self.bandwidth / 2.0 + i * self.spacing


def synth_channel(paths, tx_positions, rx_positions, grid: FrequencyGrid,
                  refs, model="rm"):
    """Frequency response of a multipath channel over an element grid.

    Parameters
    ----------
    paths : sequence of RmPathParams
        One parameter tuple per propagation path.
    tx_positions : (N, 2) array_like
    rx_positions : (M, 2) array_like
    grid : FrequencyGrid
    refs : pair of (2,) array_like
        ``(tx_ref, rx_ref)``, the reference points the path parameters
        were measured at.
    model : {"rm", "pwa"}
        Exact mirrored-source distances (the default ground truth) or
        their plane-wave approximation, exposed for analysis.

    Returns
    -------
    (M, N, F) complex ndarray
        ``H[m, n, i] = sum_l gain_l * exp(-2j pi f_i d_l(m, n) / c)``.
    """
    from .validation import as_points

    paths = list(paths)
    if not paths:
        raise EmptyChannel("cannot synthesize a channel with no paths")
    tx_ref, rx_ref = refs
    tx_positions = as_points(tx_positions, "tx_positions")
    rx_positions = as_points(rx_positions, "rx_positions")
    if model not in ("rm", "pwa"):
        raise ValueError(f"unknown distance model {model!r}")
    dist_fn = path_distance_rm if model == "rm" else path_distance_pwa
    freqs = grid.tones()
    out = np.zeros((len(rx_positions), len(tx_positions), grid.num_tones),
                   dtype=complex)
    for p in paths:
        d = dist_fn(p, rx_positions[:, None, :], tx_positions[None, :, :],
                    rx_ref, tx_ref)
        out += p.gain * np.exp(-2j * np.pi / SPEED_OF_LIGHT * d[:, :, None] * freqs)
    return out


def rayleigh_distance(aperture, wavelength):
    """Far-field onset ``2 * aperture**2 / wavelength`` for a given array span.

    Beyond this range the plane-wave approximation of the phase front is
    conventionally considered safe; well inside it the curvature terms
    the mirrored-source model keeps become significant.
    """
    aperture = float(aperture)
    if aperture < 0:
        raise InvalidGeometry("aperture must be nonnegative")
    check_positive(wavelength, "wavelength")
    return 2.0 * aperture * aperture / float(wavelength)
