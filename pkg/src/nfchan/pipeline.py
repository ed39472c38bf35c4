"""End-to-end runs: simulate a scenario, recover paths, localize, report.

The estimation side chains the lower-level stages:

1. delay support from the averaged power delay profile;
2. matching-pursuit sweep for (aoa, aod, delta) with per-placement
   gains, multiresolution by default (coarse grid, then 1-degree
   windows around the survivors), polished off-grid as it goes;
3. re-extraction on single-offset placement subsets to produce one
   bearing per path per subset, then weighted triangulation of every
   path's mirrored source;
4. the strongest triangulated path anchors the absolute time scale,
   restoring times of flight and image points for all paths;
5. a curvature test per path decides reflection parity, completing the
   mirrored-source parameters.

A linear track cannot tell an arrival from its mirror across the track
line, so when every element is collinear the sweep keeps only bearings
on the side of the track that faces the room interior.   Arrivals from
sources mirrored to the far side are physically indistinguishable with
such an aperture.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .aperture import MeasurementSet, mean_pdp, simulate_campaign
from .channel import SPEED_OF_LIGHT, RmPathParams, unit_vector
from .errors import (
    DegenerateTriangulation,
    EmptyChannel,
    InconsistentAnchor,
    InvalidGeometry,
)
from .estimation import (
    Bearing,
    DictionaryGrid,
    Heatmap,
    assemble_rm,
    detect_paths_pdp,
    estimate_parity,
    image_from_polar,
    localization_heatmap,
    omp_extract,
    recover_abs_delays,
    refine_extraction,
    response_atom,
    triangulate,
    _model_sum,
    _per_placement_lsq,
)
from .scenario import ScenarioConfig, build_grid, build_plan, build_room, true_paths

COARSE_AOA_STEP_DEG = 3.0
COARSE_AOD_STEP_DEG = 6.0
FINE_STEP_DEG = 1.0
FINE_WINDOW_DEG = 3.0
SUBSET_WINDOW_DEG = 2.0
SUBSET_PAD_HALFBINS = 3
MATCH_GATE = 18.0  # squared cost in (degree, half-bin) units


def _cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


def collinear_axis(points, rtol=1e-9):
    """Unit direction of a degenerate (collinear) point cloud, else None."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] < 2:
        return np.array([1.0, 0.0])
    centered = pts - pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    if sv[0] == 0.0:
        return np.array([1.0, 0.0])
    if sv.size > 1 and sv[1] > rtol * sv[0]:
        return None
    return vt[0]


def _angle_comb(step_deg):
    """Uniform grid over (-180, 180] degrees, returned in radians."""
    n = int(round(360.0 / step_deg))
    return np.deg2rad(-180.0 + step_deg * np.arange(1, n + 1))


def _angle_windows(centers, halfwidth_deg, step_deg):
    """Union of windows around ``centers`` (radians), cut from the
    full-circle comb of ``step_deg`` so separate calls share nodes."""
    period = int(round(360.0 / step_deg))
    ks = set()
    for c in np.atleast_1d(centers):
        cdeg = math.degrees(float(c)) + 180.0
        lo = math.floor((cdeg - halfwidth_deg) / step_deg)
        hi = math.ceil((cdeg + halfwidth_deg) / step_deg)
        for k in range(lo, hi + 1):
            ks.add((k - 1) % period + 1)
    vals = sorted(-180.0 + k * step_deg for k in ks)
    return np.deg2rad(np.array(vals))


def _fold(angles, axis, side):
    """Drop angles pointing away from the chosen side of the track."""
    if axis is None or side == 0.0:
        return angles
    u = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    s = (axis[0] * u[..., 1] - axis[1] * u[..., 0]) * side
    kept = angles[s >= -1e-12]
    return kept if kept.size else angles


def _fold_setup(plan, room):
    """(axis, side) for collinear apertures, (None, 0) otherwise."""
    axis = collinear_axis(plan.rx_positions.reshape(-1, 2))
    if axis is None or room is None:
        return None, 0.0
    side = np.sign(_cross2(axis, room.interior - plan.rx_ref))
    return axis, float(side)


def _delay_comb(q_indices, grid):
    step = 1.0 / (2.0 * grid.bandwidth)
    qs = sorted(q for q in q_indices if 0 <= q < 2 * grid.num_tones)
    if not qs:
        raise InvalidGeometry("delay window fell outside the tone comb span")
    return np.array(qs, dtype=float) * step


def _pdp_delay_support(mset, cfg):
    pdp = mean_pdp(mset, window="hann")
    peaks = detect_paths_pdp(pdp, threshold_db=cfg.detect_threshold_db,
                             min_separation_bins=cfg.min_separation_bins)
    if peaks.bins.size == 0:
        raise EmptyChannel("no delay peaks above the detection threshold")
    pad = 2 * int(cfg.delay_pad_bins)
    qs = set()
    for b in peaks.bins:
        qs.update(range(2 * int(b) - pad, 2 * int(b) + pad + 1))
    return _delay_comb(qs, mset.grid), peaks


def _grid_from_range(rng_deg):
    start, step, stop = rng_deg
    vals = np.arange(float(start), float(stop) + 1e-9 * max(1.0, abs(step)),
                     float(step))
    return np.deg2rad(vals)


def extract_paths(mset, cfg, room=None):
    """Stages 1-2: delay support, sweep, polish, final refinement.

    Explicit ``aoa_grid``/``aod_grid`` ranges in the scenario are swept
    literally in one pass.  Otherwise a coarse full-circle sweep (3 and
    6 degree steps) seeds 1-degree windows, which keeps the default
    resolution of one degree without paying for an exhaustive
    360x360 sweep.
    """
    axis, side = _fold_setup(mset.plan, room)
    delays, peaks = _pdp_delay_support(mset, cfg)
    halfstep = 1.0 / (2.0 * mset.grid.bandwidth)
    timing = {}

    t0 = time.perf_counter()
    if cfg.aoa_grid_deg is not None or cfg.aod_grid_deg is not None:
        aoas = (_grid_from_range(cfg.aoa_grid_deg)
                if cfg.aoa_grid_deg is not None else
                _fold(_angle_comb(FINE_STEP_DEG), axis, side))
        aods = (_grid_from_range(cfg.aod_grid_deg)
                if cfg.aod_grid_deg is not None else _angle_comb(FINE_STEP_DEG))
        dic = DictionaryGrid(aoas=aoas, aods=aods, delays=delays)
        result = omp_extract(mset, dic, l_max=cfg.l_max,
                             stop_fraction=cfg.stop_fraction, polish_passes=1)
        timing["sweep"] = time.perf_counter() - t0
    else:
        coarse = DictionaryGrid(
            aoas=_fold(_angle_comb(COARSE_AOA_STEP_DEG), axis, side),
            aods=_angle_comb(COARSE_AOD_STEP_DEG),
            delays=delays)
        rough = omp_extract(mset, coarse, l_max=cfg.l_max,
                            stop_fraction=cfg.stop_fraction, polish_passes=1)
        timing["coarse_sweep"] = time.perf_counter() - t0
        if not rough.paths:
            return rough, (axis, side), timing
        t1 = time.perf_counter()
        qs = set()
        for p in rough.paths:
            q0 = int(round((p.delta + rough.delay_origin) / halfstep))
            qs.update(range(q0 - SUBSET_PAD_HALFBINS, q0 + SUBSET_PAD_HALFBINS + 1))
        fine = DictionaryGrid(
            aoas=_fold(_angle_windows([p.aoa for p in rough.paths],
                                      FINE_WINDOW_DEG, FINE_STEP_DEG),
                       axis, side),
            aods=_angle_windows([p.aod for p in rough.paths],
                                FINE_WINDOW_DEG, FINE_STEP_DEG),
            delays=_delay_comb(qs, mset.grid))
        result = omp_extract(mset, fine, l_max=cfg.l_max,
                             stop_fraction=cfg.stop_fraction, polish_passes=1)
        timing["fine_sweep"] = time.perf_counter() - t1

    if cfg.refine and result.paths:
        t1 = time.perf_counter()
        result = refine_extraction(mset, result,
                                   aoa_step=np.deg2rad(FINE_STEP_DEG),
                                   aod_step=np.deg2rad(FINE_STEP_DEG),
                                   passes=cfg.refine_passes)
        timing["refine"] = time.perf_counter() - t1
    return result, (axis, side), timing


def subset_groups(plan, cfg):
    """Placement index groups feeding one bearing each."""
    spec = getattr(cfg, "subsets", "by-offset")
    if isinstance(spec, str):
        if spec != "by-offset":
            raise InvalidGeometry(f"unknown subset rule {spec!r}")
        if plan.offsets is None:
            raise InvalidGeometry(
                "plan carries no offset metadata; list subsets explicitly")
        return [np.flatnonzero(plan.offsets == off)
                for off in np.unique(plan.offsets)]
    groups = [np.asarray(g, dtype=int) for g in spec]
    seen = set()
    for g in groups:
        if g.size == 0 or g.min() < 0 or g.max() >= plan.n_placements:
            raise InvalidGeometry("subset indices out of range")
        if seen & set(g.tolist()):
            raise InvalidGeometry("subsets overlap")
        seen |= set(g.tolist())
    return groups


def subset_bearings(mset, result, cfg, fold_info=(None, 0.0)):
    """Stage 3: re-extract each single-offset subset, match paths back
    to the global extraction, and emit one bearing per match.

    Windows are seeded from the global paths: each subset's expected
    delay shifts by the track-motion projection onto the arrival
    direction, and its expected bearing re-aims at the implied source
    point seen from the subset centroid.
    """
    plan, grid = mset.plan, mset.grid
    axis, side = fold_info
    halfstep = 1.0 / (2.0 * grid.bandwidth)
    paths = result.paths
    bearings = [[] for _ in paths]
    subset_results = []
    if not paths:
        return bearings, subset_results
    for idx in subset_groups(plan, cfg):
        sub = plan.subset(idx, recenter=True)
        subm = MeasurementSet(responses=mset.responses[idx], plan=sub,
                              grid=grid, snr_db=mset.snr_db,
                              coherent=mset.coherent, seed=mset.seed)
        shift = sub.rx_ref - plan.rx_ref
        pred = []
        for p in paths:
            draw = p.delta + result.delay_origin
            dsub = draw - float(unit_vector(p.aoa) @ shift) / SPEED_OF_LIGHT
            v = image_from_polar(plan.rx_ref, p.aoa, draw) - sub.rx_ref
            pred.append((math.atan2(v[1], v[0]), p.aod, dsub))
        qs = set()
        for _, _, dsub in pred:
            q0 = int(round(dsub / halfstep))
            qs.update(range(q0 - SUBSET_PAD_HALFBINS,
                            q0 + SUBSET_PAD_HALFBINS + 1))
        dic = DictionaryGrid(
            aoas=_fold(_angle_windows([a for a, _, _ in pred],
                                      SUBSET_WINDOW_DEG, FINE_STEP_DEG),
                       axis, side),
            aods=_angle_windows([b for _, b, _ in pred],
                                SUBSET_WINDOW_DEG, FINE_STEP_DEG),
            delays=_delay_comb(qs, grid))
        rs = omp_extract(subm, dic, l_max=len(paths),
                         stop_fraction=cfg.stop_fraction, polish_passes=1)
        if cfg.refine and rs.paths:
            rs = refine_extraction(subm, rs,
                                   aoa_step=np.deg2rad(FINE_STEP_DEG),
                                   aod_step=np.deg2rad(FINE_STEP_DEG),
                                   passes=cfg.refine_passes)
        subset_results.append(rs)
        costed = []
        for si, sp in enumerate(rs.paths):
            dsr = sp.delta + rs.delay_origin
            for j, (pa, _, pd) in enumerate(pred):
                dang = math.degrees(abs(math.remainder(sp.aoa - pa,
                                                       2 * math.pi)))
                cost = dang ** 2 + ((dsr - pd) / halfstep) ** 2
                costed.append((cost, si, j))
        used_s, used_j = set(), set()
        for cost, si, j in sorted(costed):
            if cost > MATCH_GATE or si in used_s or j in used_j:
                continue
            used_s.add(si)
            used_j.add(j)
            sp = rs.paths[si]
            bearings[j].append(Bearing(position=sub.rx_ref, angle=sp.aoa,
                                       weight=max(sp.strength, 1e-30)))
    return bearings, subset_results


def localize_paths(plan, result, bearings, cfg):
    """Stage 4: triangulate per path, anchor on the strongest clean one.

    Candidate anchors whose implied absolute delays turn nonpositive
    for some other path are skipped in favour of the next strongest.
    Returns (anchor_index, taus, image_points, triangulations); the
    first three are None when no path both triangulates in front of
    its bearings and anchors consistently, in which case the absolute
    time scale stays unknown.
    """
    tris = []
    for blist in bearings:
        tri = None
        if len(blist) >= cfg.min_bearings:
            try:
                tri = triangulate(blist)
            except DegenerateTriangulation:
                tri = None
        tris.append(tri)
    for j, tri in enumerate(tris):  # paths are sorted strongest first
        if tri is None or tri.behind.any():
            continue
        tau_anchor = float(np.linalg.norm(tri.point - plan.rx_ref)
                           / SPEED_OF_LIGHT)
        try:
            taus = recover_abs_delays(tau_anchor, result.paths[j].delta,
                                      [p.delta for p in result.paths])
        except InconsistentAnchor:
            continue
        images = np.array([image_from_polar(plan.rx_ref, p.aoa, t)
                           for p, t in zip(result.paths, taus)])
        return j, np.asarray(taus, dtype=float), images, tris
    return None, None, None, tris


def parity_decisions(mset, result, taus):
    """Stage 5: reflection parity per path against its peeled residual."""
    paths = result.paths
    atoms = np.stack([response_atom(mset.plan, mset.grid, p.aoa, p.aod,
                                    p.delta + result.delay_origin)
                      for p in paths])
    gains = _per_placement_lsq(atoms, mset.responses)
    out = []
    for j, p in enumerate(paths):
        others = [i for i in range(len(paths)) if i != j]
        peeled = mset.responses
        if others:
            peeled = peeled - _model_sum(atoms[others], gains[others])
        out.append(estimate_parity(mset, p, taus[j], residual=peeled))
    return out


@dataclass(eq=False)
class RunReport:
    """Everything one estimation run produced, with errors when the
    ground truth is known.  ``matches`` maps estimated path index to
    true path index (or None); error arrays align with ``paths`` and
    hold inf where the quantity could not be formed.
    """

    extraction: object
    bearings: list
    triangulations: list
    anchor_index: object = None
    taus: object = None
    image_points: object = None
    parities: object = None
    parity_ambiguous: object = None
    rm_paths: object = None
    truth: object = None
    matches: object = None
    errors: object = None
    timing: dict = field(default_factory=dict)

    @property
    def paths(self):
        return self.extraction.paths

    def residual_fraction(self):
        return self.extraction.residual_fraction()

    def truth_image_error(self, true_index):
        """Image-point error (m) of the estimate matched to one true path."""
        if self.errors is None:
            raise InvalidGeometry("report carries no ground truth")
        for est, ti in enumerate(self.matches):
            if ti == true_index:
                return float(self.errors["image_m"][est])
        return float("inf")

    def los_image_error(self):
        """Localization error (m) for the direct path, inf if unmatched."""
        if self.truth is None:
            raise InvalidGeometry("report carries no ground truth")
        los = min(range(len(self.truth)), key=lambda i: self.truth[i].tau)
        return self.truth_image_error(los)


def _wrapped_deg(a, b):
    return math.degrees(abs(math.remainder(a - b, 2 * math.pi)))


def _match_truth(result, taus, truth):
    """One-to-one assignment of estimates to true paths on (aoa, delay)."""
    if not result.paths or not truth:
        return [None] * len(result.paths)
    halfbin = None
    cost = np.zeros((len(result.paths), len(truth)))
    for i, p in enumerate(result.paths):
        draw = (taus[i] if taus is not None
                else p.delta + result.delay_origin)
        for j, tp in enumerate(truth):
            cost[i, j] = (_wrapped_deg(p.aoa, tp.aoa) ** 2
                          + ((draw - tp.tau) * SPEED_OF_LIGHT) ** 2)
    rows, cols = linear_sum_assignment(cost)
    matches = [None] * len(result.paths)
    for r, c in zip(rows, cols):
        if cost[r, c] <= 10.0 ** 2 + 3.0 ** 2:
            matches[r] = int(c)
    return matches


def _error_table(report, plan):
    result = report.extraction
    truth = report.truth
    n = len(result.paths)
    inf = float("inf")
    errors = {
        "delay_ns": np.full(n, inf),
        "aoa_deg": np.full(n, inf),
        "aod_deg": np.full(n, inf),
        "image_m": np.full(n, inf),
        "parity_ok": np.full(n, False, dtype=bool),
    }
    true_images = [tp.image_point(plan.rx_ref) for tp in truth]
    for i, p in enumerate(result.paths):
        j = report.matches[i]
        if j is None:
            continue
        tp = truth[j]
        errors["aoa_deg"][i] = _wrapped_deg(p.aoa, tp.aoa)
        errors["aod_deg"][i] = _wrapped_deg(p.aod, tp.aod)
        if report.taus is not None:
            errors["delay_ns"][i] = abs(report.taus[i] - tp.tau) * 1e9
            errors["image_m"][i] = float(np.linalg.norm(
                report.image_points[i] - true_images[j]))
        if report.parities is not None:
            errors["parity_ok"][i] = (report.parities[i] == tp.parity)
    return errors


def run_synth(cfg: ScenarioConfig):
    """Simulate the scenario; returns (measurement set, true paths)."""
    plan = build_plan(cfg)
    grid = build_grid(cfg)
    truth = true_paths(cfg, plan)
    mset = simulate_campaign(truth, plan, grid, snr_db=cfg.snr_db,
                             coherent=cfg.coherent, seed=cfg.seed,
                             model=cfg.model)
    return mset, truth


def _rebind_plan(mset, cfg):
    """Datasets store raw positions only; reattach the scenario's plan
    (with offset metadata) after checking it describes the same layout."""
    if mset.plan.offsets is not None or cfg.offsets is None:
        return mset
    plan = build_plan(cfg)
    same = (plan.rx_positions.shape == mset.plan.rx_positions.shape
            and np.allclose(plan.rx_positions, mset.plan.rx_positions,
                            atol=1e-9)
            and np.allclose(plan.tx_positions, mset.plan.tx_positions,
                            atol=1e-9))
    if not same:
        raise InvalidGeometry("scenario does not describe the dataset's "
                              "measurement layout")
    return MeasurementSet(responses=mset.responses, plan=plan,
                          grid=mset.grid, snr_db=mset.snr_db,
                          coherent=mset.coherent, seed=mset.seed)


def run_estimate(mset, cfg: ScenarioConfig, truth=None) -> RunReport:
    """Full recovery pipeline on an existing measurement set."""
    t_all = time.perf_counter()
    mset = _rebind_plan(mset, cfg)
    room = build_room(cfg) if cfg.room_vertices is not None else None
    result, fold_info, timing = extract_paths(mset, cfg, room=room)

    t1 = time.perf_counter()
    bearings, _ = subset_bearings(mset, result, cfg, fold_info)
    timing["subsets"] = time.perf_counter() - t1

    t1 = time.perf_counter()
    anchor, taus, images, tris = localize_paths(mset.plan, result, bearings,
                                                cfg)
    timing["triangulate"] = time.perf_counter() - t1

    parities = ambiguous = rm_paths = None
    if cfg.parity and anchor is not None:
        t1 = time.perf_counter()
        decisions = parity_decisions(mset, result, taus)
        parities = [d.parity for d in decisions]
        ambiguous = [d.ambiguous for d in decisions]
        rm_paths = assemble_rm(result, float(taus[anchor]), anchor, parities)
        timing["parity"] = time.perf_counter() - t1

    report = RunReport(extraction=result, bearings=bearings,
                       triangulations=tris, anchor_index=anchor, taus=taus,
                       image_points=images, parities=parities,
                       parity_ambiguous=ambiguous, rm_paths=rm_paths,
                       timing=timing)
    if truth is not None:
        report.truth = list(truth)
        report.matches = _match_truth(result, taus, report.truth)
        report.errors = _error_table(report, mset.plan)
    timing["total"] = time.perf_counter() - t_all
    return report


def run_evaluate(cfg: ScenarioConfig) -> RunReport:
    """Synthesize and estimate in memory; report carries truth errors.

    Timing covers the estimation stages only, so reported runtimes stay
    comparable between synthetic and recorded datasets.
    """
    mset, truth = run_synth(cfg)
    return run_estimate(mset, cfg, truth=truth)


def run_heatmap(cfg: ScenarioConfig, report=None):
    """Localization heatmap for the anchor path's bearings."""
    if report is None:
        report = run_evaluate(cfg)
    anchor = report.anchor_index
    if anchor is None:
        raise DegenerateTriangulation(
            "no path triangulated; nothing to map")
    if cfg.heat_bounds is not None:
        xmin, xmax, ymin, ymax = cfg.heat_bounds
    else:
        verts = np.asarray(cfg.room_vertices, dtype=float)
        xmin, ymin = verts.min(axis=0)
        xmax, ymax = verts.max(axis=0)
    hm = localization_heatmap(report.bearings[anchor],
                              region=(xmin, xmax, ymin, ymax),
                              cell=cfg.heat_cell,
                              concentration=cfg.heat_concentration)
    return report, hm


_SWEEP_FIELDS = {
    "snr": ("snr_db", float),
    "seed": ("seed", int),
    "bandwidth": ("bandwidth_hz", float),
    "n_tones": ("n_tones", int),
    "l_max": ("l_max", int),
    "stop_fraction": ("stop_fraction", float),
    "max_order": ("max_order", int),
}
# the scenario-file key spellings work too
_SWEEP_ALIASES = {"snr_db": "snr", "bandwidth_hz": "bandwidth"}


def sweep_values(spec):
    """Expand "name=start:step:stop" (or a comma list) into values."""
    if "=" not in spec:
        raise InvalidGeometry("expected vary spec like snr=0:5:40")
    name, _, rng = spec.partition("=")
    name = _SWEEP_ALIASES.get(name.strip(), name.strip())
    if name not in _SWEEP_FIELDS:
        known = ", ".join(sorted(_SWEEP_FIELDS))
        raise InvalidGeometry(f"cannot vary {name!r}; knowns: {known}")
    rng = rng.strip()
    if ":" in rng:
        parts = rng.split(":")
        if len(parts) != 3:
            raise InvalidGeometry("range must be start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise InvalidGeometry("range step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        if count < 1:
            raise InvalidGeometry("empty sweep range")
        values = [start + i * step for i in range(count)]
    else:
        values = [float(v) for v in rng.split(",") if v.strip()]
        if not values:
            raise InvalidGeometry("no sweep values given")
    return name, values


def sweep_runs(cfg: ScenarioConfig, name, values):
    """Evaluate the scenario once per value; one summary row each.

    Every job reseeds deterministically from the master seed and its
    position in the ladder, so reruns reproduce byte-identical output
    while jobs stay statistically independent.
    """
    fieldname, cast = _SWEEP_FIELDS[name]
    rows = []
    for i, v in enumerate(values):
        seed = int(np.random.SeedSequence([int(cfg.seed), i])
                   .generate_state(1, np.uint64)[0])
        job = replace(cfg, **{fieldname: cast(v)})
        if fieldname != "seed":
            job = replace(job, seed=seed)
        t0 = time.perf_counter()
        report = run_evaluate(job)
        elapsed = time.perf_counter() - t0
        err = report.los_image_error()
        finite = [e for e in report.errors["image_m"] if math.isfinite(e)]
        rows.append({
            "value": v,
            "n_paths": len(report.paths),
            "residual_fraction": report.residual_fraction(),
            "los_error_m": err,
            "mean_image_error_m": (float(np.mean(finite)) if finite
                                   else float("inf")),
            "runtime_s": elapsed,
        })
    return rows
