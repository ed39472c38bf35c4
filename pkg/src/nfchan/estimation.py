"""Sparse path recovery from non-coherent aperture measurements.

The measurement model treats every capture as a superposition of a few
parametric atoms, one per propagation path, each multiplied by a free
complex gain per placement (the unknown capture phases make the gains
placement-local).  Recovery proceeds in stages:

1. a matching-pursuit sweep over a separable (aoa, aod, delay) grid,
   scoring each candidate atom by the energy it can absorb across all
   placements at once;
2. coordinate refinement of the selected atoms off the grid;
3. bearing triangulation across track offsets to pin the mirrored
   transmitter of one anchor path in the plane, which restores the
   absolute time scale the capture phases destroyed;
4. a curvature test deciding each path's reflection parity by refitting
   the exact mirrored-source model under both hypotheses.

Delays inside the sweep are only meaningful relative to one another;
extraction reports them shifted so the earliest path sits at zero, and
stage 3 reattaches the absolute scale.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .aperture import MeasurementPlan, MeasurementSet, Pdp
from .channel import (
    SPEED_OF_LIGHT,
    FrequencyGrid,
    PwaPathParams,
    RmPathParams,
    alpha_from_bearings,
    path_distance_rm,
    rm_from_alpha,
    unit_vector,
)
from .errors import (
    DegenerateTriangulation,
    EmptyChannel,
    InconsistentAnchor,
    InvalidGeometry,
)
from .validation import as_vec2, check_positive, check_strictly_increasing

_PARALLEL_TOL = 1e-6


@dataclass(eq=False)
class DictionaryGrid:
    """Candidate (aoa, aod, delay) axes for the matching-pursuit sweep.

    Axes must be strictly increasing.  Delays that all sit on bins
    ``q / (2 * bandwidth)`` let the engine evaluate the delay axis with
    a zero-padded inverse FFT instead of dense inner products.
    """

    aoas: np.ndarray
    aods: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        self.aoas = check_strictly_increasing(self.aoas, "aoas")
        self.aods = check_strictly_increasing(self.aods, "aods")
        self.delays = check_strictly_increasing(self.delays, "delays")
        if np.any(self.delays < 0):
            raise InvalidGeometry("dictionary delays must be nonnegative")

    @property
    def shape(self):
        return (self.aoas.size, self.aods.size, self.delays.size)

    def aoa_step(self):
        return float(np.median(np.diff(self.aoas))) if self.aoas.size > 1 else 0.0

    def aod_step(self):
        return float(np.median(np.diff(self.aods))) if self.aods.size > 1 else 0.0

    def delay_step(self):
        """Smallest delay increment, the natural polish radius for unions
        of windows cut from a common comb."""
        return float(np.min(np.diff(self.delays))) if self.delays.size > 1 else 0.0


def fft_delay_bins(grid: FrequencyGrid, lo=0.0, hi=None):
    """Delay candidates on the half-bin comb ``q / (2 * bandwidth)``.

    These are exactly the delays the sweep engine can score via FFT.
    ``hi`` defaults to the full unambiguous span of the tone comb.
    """
    step = 1.0 / (2.0 * grid.bandwidth)
    n_max = 2 * grid.num_tones
    if hi is None:
        hi = (n_max - 1) * step
    q_lo = max(0, int(np.ceil(lo / step - 1e-9)))
    q_hi = min(n_max - 1, int(np.floor(hi / step + 1e-9)))
    if q_hi < q_lo:
        raise InvalidGeometry("empty delay range")
    return np.arange(q_lo, q_hi + 1) * step


@dataclass(eq=False)
class ExtractionResult:
    """Outcome of a matching-pursuit extraction.

    ``paths`` hold :class:`~nfchan.channel.PwaPathParams` sorted by
    descending strength, with deltas shifted so the earliest is zero;
    ``delay_origin`` is the sweep delay that shift removed, so the atom
    of any path lives at ``delta + delay_origin``.  ``selections`` keeps
    the raw grid index triples in pick order and ``residual_history``
    the residual energy after every pick (element 0 is the input
    energy).
    """

    paths: list
    selections: list
    initial_energy: float
    residual_energy: float
    iterations: int
    delay_origin: float = 0.0
    residual_history: list = field(default_factory=list)

    def residual_fraction(self):
        if self.initial_energy == 0:
            return 0.0
        return self.residual_energy / self.initial_energy


def steering_phase(aoa, aod, delta, x_r, x_t, refs, f):
    """Unit-modulus first-order response of one path at one element pair.

    ``exp(-2j pi f d / c)`` with the plane-wave distance
    ``d = c * delta - u(aoa).(x_r - rx_ref) - u(aod).(x_t - tx_ref)``,
    ``refs = (tx_ref, rx_ref)``.  All arguments broadcast.
    """
    tx_ref, rx_ref = refs
    x_r = np.asarray(x_r, dtype=float)
    x_t = np.asarray(x_t, dtype=float)
    d = (SPEED_OF_LIGHT * np.asarray(delta, dtype=float)
         - (x_r - as_vec2(rx_ref)) @ unit_vector(aoa)
         - (x_t - as_vec2(tx_ref)) @ unit_vector(aod))
    return np.exp(-2j * np.pi / SPEED_OF_LIGHT * d * np.asarray(f, dtype=float))


class ScoreEngine:
    """Evaluates atom correlations against campaign data.

    Precomputes the conjugated receive and transmit steering factors for
    a dictionary, then scores blocks of candidates one arrival angle at
    a time so the full score tensor never has to be materialized.
    """

    def __init__(self, plan: MeasurementPlan, grid: FrequencyGrid,
                 dictionary: DictionaryGrid):
        self.plan = plan
        self.grid = grid
        self.dictionary = dictionary
        freqs = grid.tones()
        self.freqs = freqs
        k2 = 2.0 * np.pi / SPEED_OF_LIGHT
        dr = plan.rx_positions - plan.rx_ref
        dt = plan.tx_positions - plan.tx_ref
        proj_r = np.einsum("ax,kmx->akm", unit_vector(dictionary.aoas), dr)
        proj_t = unit_vector(dictionary.aods) @ dt.T
        # Conjugated steering factors: multiplying the residual by these
        # and summing realizes <atom, residual> without forming atoms.
        self._wr = np.exp(-1j * k2 * proj_r[..., None] * freqs)
        self._wt = np.exp(-1j * k2 * proj_t[..., None] * freqs)
        self.mnf = plan.n_rx * plan.n_tx * grid.num_tones

        q = dictionary.delays * (2.0 * grid.bandwidth)
        q_round = np.round(q)
        self._use_fft = (
            np.all(np.abs(q - q_round) < 1e-6)
            and (q_round.size == 0 or q_round.max() < 2 * grid.num_tones)
        )
        if self._use_fft:
            self._q_idx = q_round.astype(int)
            self._n_fft = 2 * grid.num_tones
        else:
            self._dmat = np.exp(2j * np.pi * np.outer(freqs, dictionary.delays))

    def _delay_correlate(self, t):
        """Collapse the tone axis of ``t`` (..., F) against every delay."""
        if self._use_fft:
            c = np.fft.ifft(t, n=self._n_fft, axis=-1) * self._n_fft
            return c[..., self._q_idx]
        return t @ self._dmat

    def _score_block(self, residual, ia):
        """(B, D) scores for one arrival angle."""
        g = np.einsum("kmf,kmnf->knf", self._wr[ia], residual)
        t = np.einsum("bnf,knf->bkf", self._wt, g)
        c = self._delay_correlate(t)
        return np.sum(np.abs(c) ** 2, axis=1) / self.mnf

    def scores(self, residual):
        """Full (A, B, D) score tensor.  Meant for small dictionaries."""
        a, b, d = self.dictionary.shape
        out = np.empty((a, b, d))
        for ia in range(a):
            out[ia] = self._score_block(residual, ia)
        return out

    def best(self, residual):
        """Argmax over the whole dictionary without materializing it.

        Ties resolve to the lowest (aoa, aod, delay) index triple, same
        as a flat C-order argmax.
        """
        best_val = -1.0
        best_idx = (0, 0, 0)
        for ia in range(self.dictionary.aoas.size):
            block = self._score_block(residual, ia)
            flat = int(np.argmax(block))
            val = float(block.flat[flat])
            if val > best_val:
                ib, idl = np.unravel_index(flat, block.shape)
                best_val = val
                best_idx = (ia, int(ib), int(idl))
        return best_idx, best_val

    def atom(self, ia, ib, idl):
        """Unit-modulus atom (K, M, N, F) for a grid index triple."""
        return self.atom_for(
            self.dictionary.aoas[ia],
            self.dictionary.aods[ib],
            self.dictionary.delays[idl],
        )

    def atom_for(self, aoa, aod, delta):
        """Atom for arbitrary continuous parameters."""
        return response_atom(self.plan, self.grid, aoa, aod, delta)


def response_atom(plan: MeasurementPlan, grid: FrequencyGrid, aoa, aod, delta):
    """First-order unit-modulus response of a path over a whole plan.

    Shape (K, M, N, F): ``exp(-2j pi f d / c)`` with the plane-wave
    distance ``d = c delta - u(aoa).dr - u(aod).dt``.
    """
    dr = plan.rx_positions - plan.rx_ref
    dt = plan.tx_positions - plan.tx_ref
    d = (SPEED_OF_LIGHT * delta
         - (dr @ unit_vector(aoa))[:, :, None]
         - (dt @ unit_vector(aod))[None, None, :])
    return np.exp(-2j * np.pi / SPEED_OF_LIGHT * d[..., None] * grid.tones())


def rm_response_atom(plan: MeasurementPlan, grid: FrequencyGrid,
                     tau, aoa, aod, parity):
    """Exact mirrored-source response atom (K, M, N, F) for unit gain."""
    prm = rm_from_alpha(1.0, tau, aoa,
                        alpha_from_bearings(aoa, aod, parity), parity)
    d = path_distance_rm(
        prm,
        plan.rx_positions[:, :, None, :],
        plan.tx_positions[None, None, :, :],
        plan.rx_ref,
        plan.tx_ref,
    )
    return np.exp(-2j * np.pi / SPEED_OF_LIGHT * d[..., None] * grid.tones())


def _per_placement_lsq(atoms, data):
    """Joint least-squares gains per placement.

    atoms: (L, K, M, N, F), data: (K, M, N, F) -> gains (L, K).
    """
    l, k = atoms.shape[0], atoms.shape[1]
    a = atoms.reshape(l, k, -1)
    y = data.reshape(k, -1)
    gains = np.empty((l, k), dtype=complex)
    for j in range(k):
        g = a[:, j]
        gram = g.conj() @ g.T
        rhs = g.conj() @ y[j]
        try:
            gains[:, j] = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            gains[:, j] = np.linalg.lstsq(g.T, y[j], rcond=None)[0]
    return gains


def _model_sum(atoms, gains):
    return np.einsum("lk...,lk->k...", atoms, gains)


def _package_paths(raw, gains):
    """Shift raw sweep delays to a zero floor and sort by strength.

    raw: list of [aoa, aod, sweep_delay]; gains: (L, K).
    Returns (paths, delay_origin).
    """
    origin = min(p[2] for p in raw)
    paths = [
        PwaPathParams(gains=gains[j], delta=raw[j][2] - origin,
                      aoa=raw[j][0], aod=raw[j][1])
        for j in range(len(raw))
    ]
    paths.sort(key=lambda p: -p.strength)
    return paths, float(origin)


def _cyclic_polish(plan, grid, params, data, steps, passes):
    """Cyclic coordinate descent of every path against its peeled residual.

    ``params`` is a list of [aoa, aod, raw_delay] triples, modified in
    place.  Each path in turn is peeled out using the current joint
    gains, then each coordinate is line-searched inside +-1 step; a move
    is accepted only if it captures at least as much peeled energy as
    the current atom, and gains are refit jointly after every path
    update.  That ordering makes the joint residual non-increasing.

    Returns (params, atom stack, gains, residual energy).
    """
    mnf = plan.n_rx * plan.n_tx * grid.num_tones
    atoms = [response_atom(plan, grid, *p) for p in params]
    gains = _per_placement_lsq(np.stack(atoms), data)
    for _ in range(max(passes, 0)):
        for j in range(len(params)):
            if len(params) > 1:
                others = np.stack([a for i, a in enumerate(atoms) if i != j])
                peeled = data - _model_sum(others, np.delete(gains, j, axis=0))
            else:
                peeled = data
            for coord in range(3):
                step = steps[coord]
                if step <= 0:
                    continue
                center = params[j][coord]

                def negscore(x):
                    trial = list(params[j])
                    trial[coord] = x
                    return -_atom_score(response_atom(plan, grid, *trial),
                                        peeled, mnf)

                best = minimize_scalar(negscore,
                                       bounds=(center - step, center + step),
                                       method="bounded",
                                       options={"xatol": step * 1e-7})
                if -best.fun >= _atom_score(
                        response_atom(plan, grid, *params[j]), peeled, mnf):
                    params[j][coord] = float(best.x)
            atoms[j] = response_atom(plan, grid, *params[j])
            gains = _per_placement_lsq(np.stack(atoms), data)
    stack = np.stack(atoms)
    residual = data - _model_sum(stack, gains)
    return params, stack, gains, float(np.sum(np.abs(residual) ** 2))


def omp_extract(mset: MeasurementSet, dictionary: DictionaryGrid,
                l_max, stop_fraction=0.0, polish_passes=0):
    """Greedy block matching pursuit over a parameter dictionary.

    Each round scores every dictionary atom against the residual,
    selects the best one, then jointly refits all selected atoms' gains
    per placement against the raw data.  Stops after ``l_max`` rounds,
    when the residual energy falls below ``stop_fraction`` of the input
    energy, or when the sweep re-selects an atom it already holds.

    With ``polish_passes`` > 0 every round additionally runs that many
    cyclic coordinate-descent passes over all paths picked so far, so
    atoms slide off the grid before the next residual is formed.  That
    keeps an off-grid path from leaking into a second, spurious pick.
    Rounds that fail to shrink the residual are rolled back and stop
    the sweep, so re-selecting a grid cell is allowed while productive.

    Returns
    -------
    ExtractionResult
        Paths sorted by descending strength with deltas floored at
        zero; ``selections`` keeps the grid index triples in pick order
        for reproducibility checks, and ``residual_history`` the energy
        trajectory, which is non-increasing by construction.
    """
    if l_max < 1:
        raise InvalidGeometry("l_max must be at least 1")
    engine = ScoreEngine(mset.plan, mset.grid, dictionary)
    data = mset.responses
    initial = float(np.sum(np.abs(data) ** 2))
    if initial == 0.0:
        raise EmptyChannel("measurement set carries no energy")
    steps = (dictionary.aoa_step(), dictionary.aod_step(),
             dictionary.delay_step())
    residual = data.copy()
    selections = []
    params = []
    atoms = []
    gains = None
    res_energy = initial
    history = [initial]
    for _ in range(l_max):
        idx, _ = engine.best(residual)
        if polish_passes <= 0 and idx in selections:
            break
        ia, ib, idl = idx
        picked = [float(dictionary.aoas[ia]), float(dictionary.aods[ib]),
                  float(dictionary.delays[idl])]
        if polish_passes > 0:
            trial = [list(p) for p in params] + [picked]
            trial, stack, new_gains, new_energy = _cyclic_polish(
                plan=mset.plan, grid=mset.grid, params=trial, data=data,
                steps=steps, passes=polish_passes)
            if new_energy >= res_energy * (1.0 - 1e-12):
                break
            params = trial
        else:
            params.append(picked)
            atoms.append(engine.atom(*idx))
            stack = np.stack(atoms)
            new_gains = _per_placement_lsq(stack, data)
            new_energy = float(
                np.sum(np.abs(data - _model_sum(stack, new_gains)) ** 2))
        selections.append(idx)
        gains = new_gains
        residual = data - _model_sum(stack, gains)
        res_energy = new_energy
        history.append(res_energy)
        if res_energy <= stop_fraction * initial:
            break
    paths, origin = _package_paths(params, gains)
    return ExtractionResult(
        paths=paths,
        selections=selections,
        initial_energy=initial,
        residual_energy=res_energy,
        iterations=len(selections),
        delay_origin=origin,
        residual_history=history,
    )


def _atom_score(atom, residual, mnf):
    corr = np.einsum("kmnf,kmnf->k", atom.conj(), residual)
    return float(np.sum(np.abs(corr) ** 2)) / mnf


def refine_extraction(mset: MeasurementSet, result: ExtractionResult,
                      aoa_step, aod_step, delay_step=None, passes=2):
    """Push extracted paths off the grid by cyclic coordinate search.

    Each path in turn is scored against its own peeled residual (data
    minus the other paths) while one coordinate at a time is optimized
    inside +-1 grid step.  Gains are refit jointly after every path
    update.  Two passes are normally enough for the remaining motion to
    be far below a grid step.
    """
    if delay_step is None:
        delay_step = 1.0 / (2.0 * mset.grid.bandwidth)
    # Work in raw sweep delays so the zero floor does not clip the search
    params = [[p.aoa, p.aod, p.delta + result.delay_origin]
              for p in result.paths]
    if not params:
        return result
    params, _, gains, res_energy = _cyclic_polish(
        plan=mset.plan, grid=mset.grid, params=params, data=mset.responses,
        steps=(aoa_step, aod_step, delay_step), passes=passes)
    paths, origin = _package_paths(params, gains)
    return ExtractionResult(
        paths=paths,
        selections=list(result.selections),
        initial_energy=result.initial_energy,
        residual_energy=res_energy,
        iterations=result.iterations,
        delay_origin=origin,
        residual_history=list(result.residual_history) + [res_energy],
    )


@dataclass(eq=False)
class PdpPeaks:
    delays: np.ndarray
    magnitudes: np.ndarray
    bins: np.ndarray


def detect_paths_pdp(pdp: Pdp, threshold_db=30.0, min_separation_bins=2,
                     max_paths=None):
    """Candidate path delays from a delay profile.

    Finds circular local maxima of the profile, keeps those within
    ``threshold_db`` (power) of the strongest, then greedily suppresses
    neighbors closer than ``min_separation_bins``, strongest first with
    ties going to the lower bin.  Returned peaks are sorted by delay.
    """
    if threshold_db <= 0:
        raise InvalidGeometry("threshold_db must be positive")
    if min_separation_bins < 1:
        raise InvalidGeometry("min_separation_bins must be at least 1")
    m = np.asarray(pdp.magnitudes, dtype=float)
    empty = PdpPeaks(delays=np.empty(0), magnitudes=np.empty(0),
                     bins=np.empty(0, dtype=int))
    if m.size == 0 or m.max() == 0.0:
        return empty
    up = m >= np.roll(m, 1)
    down = m > np.roll(m, -1)
    cand = np.flatnonzero(up & down)
    floor = m.max() * 10.0 ** (-threshold_db / 20.0)
    cand = cand[m[cand] >= floor]
    if cand.size == 0:
        return empty
    order = cand[np.argsort(-m[cand], kind="stable")]
    kept = []
    n = m.size
    for i in order:
        dist = [min(abs(i - j), n - abs(i - j)) for j in kept]
        if all(d >= min_separation_bins for d in dist):
            kept.append(int(i))
        if max_paths is not None and len(kept) >= max_paths:
            break
    kept.sort()
    kept = np.asarray(kept, dtype=int)
    return PdpPeaks(delays=np.asarray(pdp.delay_bins)[kept],
                    magnitudes=m[kept], bins=kept)


@dataclass(eq=False)
class Bearing:
    """A ray observed from a known position: bearing angle plus a weight."""

    position: np.ndarray
    angle: float
    weight: float = 1.0

    def __post_init__(self):
        self.position = as_vec2(self.position, "position")
        self.angle = float(self.angle)
        if not np.isfinite(self.angle):
            raise InvalidGeometry("bearing angle must be finite")
        if self.weight <= 0 or not np.isfinite(self.weight):
            raise InvalidGeometry("bearing weight must be positive")


@dataclass(eq=False)
class TriangulationResult:
    point: np.ndarray
    behind: np.ndarray
    residual: float


def triangulate(bearings):
    """Weighted least-squares intersection of bearing rays.

    Minimizes the weighted sum of squared normal distances to the
    bearing lines; the achieved minimum is returned as ``residual``.
    Raises :class:`DegenerateTriangulation` when fewer than two bearings
    are given or all bearings are parallel.  ``behind`` flags bearings
    whose ray points away from the solution.
    """
    bearings = list(bearings)
    if len(bearings) < 2:
        raise DegenerateTriangulation("need at least two bearings")
    angles = np.array([b.angle for b in bearings])
    spread = np.abs(np.angle(np.exp(2j * (angles - angles[0]))))
    if np.all(spread < 2 * _PARALLEL_TOL):
        raise DegenerateTriangulation("bearings are parallel; no intersection")
    a = np.zeros((2, 2))
    rhs = np.zeros(2)
    for b in bearings:
        n = np.array([-np.sin(b.angle), np.cos(b.angle)])
        a += b.weight * np.outer(n, n)
        rhs += b.weight * n * (n @ b.position)
    try:
        point = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        raise DegenerateTriangulation("bearing geometry is singular")
    behind = np.array([
        (point - b.position) @ unit_vector(b.angle) < 0 for b in bearings
    ])
    errs = [
        b.weight * ((point - b.position)
                    @ np.array([-np.sin(b.angle), np.cos(b.angle)])) ** 2
        for b in bearings
    ]
    return TriangulationResult(
        point=point,
        behind=behind,
        residual=float(sum(errs)),
    )


@dataclass(eq=False)
class Heatmap:
    """Cell-centered score image anchored at ``origin`` with square cells."""

    origin: np.ndarray
    cell: float
    scores: np.ndarray

    def __post_init__(self):
        self.origin = as_vec2(self.origin, "origin")
        self.cell = float(self.cell)
        check_positive(self.cell, "cell")
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.ndim != 2:
            raise InvalidGeometry("scores must be a 2-D array (rows = y)")

    @property
    def xs(self):
        return self.origin[0] + (np.arange(self.scores.shape[1]) + 0.5) * self.cell

    @property
    def ys(self):
        return self.origin[1] + (np.arange(self.scores.shape[0]) + 0.5) * self.cell


def localization_heatmap(bearings, region, cell, concentration=200.0):
    """Bearing-consistency likelihood image over a rectangle.

    Cell value ``exp(-concentration * sum_j w_j * angdiff_j^2)`` where
    ``angdiff_j`` is the angular gap between bearing j and the direction
    from its origin to the cell center; normalized to unit total mass.

    Parameters
    ----------
    region : (xmin, xmax, ymin, ymax)
    cell : float
        Square cell edge in meters; the rectangle is covered by however
        many whole cells it takes.
    """
    bearings = list(bearings)
    if not bearings:
        raise DegenerateTriangulation("need at least one bearing for a heatmap")
    xmin, xmax, ymin, ymax = map(float, region)
    cell = float(cell)
    check_positive(cell, "cell")
    if not (xmax > xmin and ymax > ymin):
        raise InvalidGeometry("heatmap region is empty")
    nx = max(1, int(np.ceil((xmax - xmin) / cell - 1e-9)))
    ny = max(1, int(np.ceil((ymax - ymin) / cell - 1e-9)))
    xs = xmin + (np.arange(nx) + 0.5) * cell
    ys = ymin + (np.arange(ny) + 0.5) * cell
    gx, gy = np.meshgrid(xs, ys)
    cost = np.zeros((ny, nx))
    for b in bearings:
        ang = np.arctan2(gy - b.position[1], gx - b.position[0])
        diff = np.angle(np.exp(1j * (ang - b.angle)))
        cost += b.weight * diff * diff
    cost -= cost.min()
    scores = np.exp(-float(concentration) * cost)
    total = scores.sum()
    if total == 0 or not np.isfinite(total):
        scores = np.full((ny, nx), 1.0 / (nx * ny))
    else:
        scores = scores / total
    return Heatmap(origin=np.array([xmin, ymin]), cell=cell, scores=scores)


def image_from_polar(origin, angle, delay):
    """Point at range ``c * delay`` from ``origin`` along ``angle``."""
    origin = as_vec2(origin, "origin")
    angle = np.asarray(angle, dtype=float)
    delay = np.asarray(delay, dtype=float)
    return origin + SPEED_OF_LIGHT * delay[..., None] * unit_vector(angle)


def recover_abs_delays(tau_anchor, delta_anchor, deltas):
    """Anchor relative sweep deltas to an absolute time of flight.

    ``tau[l] = tau_anchor + (deltas[l] - delta_anchor)``.  Raises
    :class:`InconsistentAnchor` if any anchored delay comes out
    nonpositive, which means the anchor assignment cannot be right.
    """
    deltas = np.asarray(deltas, dtype=float).reshape(-1)
    if tau_anchor <= 0 or not np.isfinite(tau_anchor):
        raise InconsistentAnchor("anchor time of flight must be positive")
    out = float(tau_anchor) + (deltas - float(delta_anchor))
    if np.any(out <= 0):
        raise InconsistentAnchor(
            "anchoring produced a nonpositive time of flight; "
            "anchor path or its absolute delay is inconsistent"
        )
    return out


@dataclass(eq=False)
class ParityDecision:
    parity: int
    ambiguous: bool
    energies: dict
    aoa: float
    aod: float
    margin: float

    @property
    def alpha(self):
        """Reflection-map phase implied by the winning hypothesis."""
        return alpha_from_bearings(self.aoa, self.aod, self.parity)


def estimate_parity(mset: MeasurementSet, path: PwaPathParams, tau,
                    residual=None):
    """Decide reflection parity by exact-model fits of one path.

    Both hypotheses share the path's measured (aoa, aod, tau); each one
    implies its own reflection map, and the mirrored-source responses it
    predicts are fit with free per-placement gains only.  The two models
    agree to first order in the displacements by construction, so the
    decision rides on how transmit-side displacements bend the wavefront
    when seen from different placements: a reflected array is chiral,
    and a rotation cannot mimic it once the observation directions
    spread out.  The hypothesis with the lower residual energy wins.
    ``tau`` must already be absolute.

    Bearings are deliberately not refit here.  On a collinear track a
    free refit could always find an equivalent opposite-parity solution
    (the track direction alone cannot tell a rotation from a
    reflection), erasing the very curvature signal being tested.

    Parameters
    ----------
    residual : optional (K, M, N, F) array
        Data with other paths peeled off; defaults to the raw captures.

    Returns
    -------
    ParityDecision
        ``ambiguous`` is set when the energy gap is within rounding of
        zero, in which case ``parity`` falls back to +1.
    """
    y = mset.responses if residual is None else np.asarray(residual, dtype=complex)
    total = float(np.sum(np.abs(y) ** 2))
    if total == 0.0:
        raise EmptyChannel("nothing to fit a parity against")
    if tau <= 0:
        raise InconsistentAnchor("parity needs a positive absolute delay")
    plan, grid = mset.plan, mset.grid
    energies = {}
    for s in (+1, -1):
        atom = rm_response_atom(plan, grid, float(tau), path.aoa, path.aod, s)
        gains = _per_placement_lsq(atom[None], y)
        energies[s] = float(
            np.sum(np.abs(y - _model_sum(atom[None], gains)) ** 2))
    margin = abs(energies[+1] - energies[-1])
    ambiguous = margin <= 1e-12 * total
    parity = +1 if ambiguous or energies[+1] <= energies[-1] else -1
    return ParityDecision(
        parity=parity,
        ambiguous=ambiguous,
        energies=energies,
        aoa=path.aoa,
        aod=path.aod,
        margin=margin,
    )


def assemble_rm(result: ExtractionResult, anchor_tau, anchor_index, parities,
                alphas=None):
    """Anchor an extraction to absolute time and package every path.

    ``anchor_index`` names the path in ``result.paths`` whose absolute
    time of flight ``anchor_tau`` is known (from triangulation); every
    delta is shifted accordingly.  Gain magnitudes are the RMS over
    placements; phases are all read off the placement where the anchor
    path is strongest, the only deterministic common reference left once
    captures carry independent phases.

    Parameters
    ----------
    parities : sequence of int
        One parity per path, aligned with ``result.paths``.
    alphas : sequence of float, optional
        Reflection-composition angles, if already known.  They are fully
        determined by (aoa, aod, parity), so they are only checked for
        consistency, never trusted over the bearings.

    Returns
    -------
    list of RmPathParams
    """
    paths = result.paths
    if not paths:
        raise EmptyChannel("extraction holds no paths to assemble")
    if not 0 <= anchor_index < len(paths):
        raise InconsistentAnchor(f"anchor index {anchor_index} out of range")
    parities = [int(s) for s in parities]
    if len(parities) != len(paths):
        raise InvalidGeometry("need exactly one parity per path")
    if alphas is not None:
        if len(alphas) != len(paths):
            raise InvalidGeometry("need exactly one alpha per path")
        for p, parity, alpha in zip(paths, parities, alphas):
            implied = alpha_from_bearings(p.aoa, p.aod, parity)
            gap = np.abs(np.angle(np.exp(1j * (implied - alpha))))
            if gap > 1e-6:
                raise InvalidGeometry(
                    "alpha inconsistent with aoa/aod/parity: "
                    f"given {float(alpha):.8f}, implied {implied:.8f}")
    taus = recover_abs_delays(anchor_tau, paths[anchor_index].delta,
                              [p.delta for p in paths])
    k_star = int(np.argmax(np.abs(paths[anchor_index].gains)))
    out = []
    for p, tau, parity in zip(paths, taus, parities):
        gain = p.amplitude() * np.exp(1j * np.angle(p.gains[k_star]))
        out.append(RmPathParams(gain=gain, tau=float(tau),
                                aoa=p.aoa, aod=p.aod, parity=parity))
    return out
