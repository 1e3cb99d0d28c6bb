"""Manifest-driven batch runner.

A manifest is a single JSON document naming an analysis kind (single, pair,
generate, extend), the immersions involved (gallery builtins, wrappers, or
closed-form expression lists), a chart grid, tolerances and a seed.  The
runner dispatches to the library, collects every residual next to its
threshold, and writes one self-describing JSON report (plus optional
per-point CSV).  Identical manifests produce byte-identical reports: all
randomness is seeded and no clocks are recorded.

Exit codes: 0 all checks passed, 1 errors, 2 check failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys

import numpy as np

from . import __version__
from .conformal_calc import conformal_s_nullity, is_conformally_ruled, rigidity_criterion
from .errors import GeometryError, HypothesisOutOfRange, ManifestError
from .extension import (
    TransferData,
    extension_obstruction,
    generate_conformal_pair,
    ruled_extension,
    verify_extension,
)
from .gallery import MANIFESTS, build_immersion, catalog
from .indefinite_linalg import DEFAULT_TOL
from .jets import (
    ChartGrid,
    ImmersionJet,
    coordinate_distribution,
    fundamental_data,
    induced_metric,
)
from .lightcone import (
    LightConeModel,
    cone_projection,
    isometric_representative,
    position_identities,
    sff_transfer_check,
)
from .pair_pipeline import (
    PipelineConfig,
    analyze_pair,
    ruling_dimension_bound,
    verify_compatibility,
)

__all__ = ["run_manifest", "main"]


# ---------------------------------------------------------------------------
# manifest plumbing
# ---------------------------------------------------------------------------


def _require(doc: dict, key: str, types, where: str):
    if key not in doc:
        raise ManifestError(f"{where}.{key}", "missing required field")
    val = doc[key]
    if not isinstance(val, types):
        raise ManifestError(f"{where}.{key}", f"expected {types}, got {type(val).__name__}")
    return val


def _build_grid(spec: dict, where: str = "grid") -> ChartGrid:
    shape = _require(spec, "shape", list, where)
    spacing = _require(spec, "spacing", list, where)
    origin = _require(spec, "origin", list, where)
    if not (len(shape) == len(spacing) == len(origin)):
        raise ManifestError(where, "shape, spacing and origin lengths differ")
    if any((not isinstance(s, int)) or s < 1 for s in shape):
        raise ManifestError(f"{where}.shape", "entries must be positive integers")
    if len(shape) > 9:
        raise ManifestError(f"{where}.shape", "charts are limited to 9 axes")
    npoints = int(np.prod(shape))
    if npoints > 10_000:
        raise ManifestError(f"{where}.shape",
                            f"{npoints} points exceed the desk-scale cap of 10000")
    return ChartGrid(tuple(shape), tuple(float(h) for h in spacing),
                     tuple(float(o) for o in origin))


def _jet_from_spec(spec: dict, grid: ChartGrid, where: str):
    """Immersion jet from a spec: closed form, or an inline value table."""
    if isinstance(spec, dict) and "table" in spec:
        table = spec["table"]
        values = np.asarray(_require(table, "values", list, f"{where}.table"), dtype=float)
        if values.shape[0] != grid.npoints:
            raise ManifestError(f"{where}.table.values",
                                f"expected {grid.npoints} rows, got {values.shape[0]}")
        from .indefinite_linalg import ScalarProduct

        ambient = ScalarProduct.euclidean(values.shape[1])
        return None, ImmersionJet.from_values(values, grid, ambient)
    imap = build_immersion(spec, where=where)
    if grid.ndim != imap.chart_dim:
        raise ManifestError("grid", f"{where} expects a {imap.chart_dim}-dimensional chart")
    return imap, imap.jet(grid)


def _check(name: str, value: float, threshold: float) -> dict:
    return {
        "name": name,
        "value": float(value),
        "threshold": float(threshold),
        "passed": bool(value <= threshold),
    }


def _expect(name: str, actual, expected) -> dict:
    return {"name": name, "actual": actual, "expected": expected,
            "passed": bool(actual == expected)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# ---------------------------------------------------------------------------
# the four analysis kinds
# ---------------------------------------------------------------------------


def _lift_if_needed(left_jet: ImmersionJet, right_map, right_jet: ImmersionJet, notes: list):
    """Produce the isometric partner: direct, or the cone lift of a conformal map."""
    if right_jet.ambient.pseudo_pair:
        return right_jet
    gl = induced_metric(left_jet)
    gr = induced_metric(right_jet)
    scale = max(float(np.max(np.abs(gl))), 1e-300)
    if float(np.max(np.abs(gl - gr))) / scale < 1e-8:
        return right_jet
    factor = None
    if right_map is not None and right_map.factor_fn is not None:
        factor = right_map.factor_jets(right_jet.chart.points())
    lifted, _ = isometric_representative(right_jet, gl, factor=factor)
    notes.append("right immersion lifted to its isometric cone representative")
    return lifted


def _euclidean_codims(jf: ImmersionJet, jhat: ImmersionJet, branch: str):
    p = jf.codim
    if jhat.ambient.pseudo_pair:
        q = jhat.codim - 2 if branch == "degenerate" else jhat.codim
        b = 0 if branch == "degenerate" else 1
    else:
        q, b = jhat.codim, jhat.ambient.index
    return p, q, jf.ambient.index, b


def _region_report(state, jf, jhat, cfg, thresholds) -> dict:
    rep = {
        "branch": state.branch,
        "points": int(state.points.size),
        "ranks": dict(state.ranks),
        "residuals": {k: float(v) for k, v in state.residuals.items()},
        "claims": _jsonable(state.claims),
        "notes": list(state.notes),
    }
    compat = verify_compatibility(state)
    rep["compatibility"] = _jsonable(compat)
    bound_rep = {}
    try:
        obs = extension_obstruction(TransferData.from_region(state), fd_tol=cfg.fd_tol)
        rep["obstruction"] = {
            "kernel_dim": obs.s,
            "fiber_rank": obs.r,
            "residuals": _jsonable(obs.residuals),
        }
        n = state.left.metric.shape[1]
        p, q, a, b = _euclidean_codims(jf, jhat, state.branch)
        try:
            chk = ruling_dimension_bound(
                state.branch, n=n, p=p, q=q, a=a, b=b,
                ell=state.ell, d=state.ruling_dim, r=obs.r,
            )
            bound_rep = {
                "name": chk.name, "lhs": chk.lhs, "rhs": chk.rhs,
                "slack": chk.slack, "passed": chk.passed,
                "hypotheses_ok": chk.hypotheses_ok, "notes": chk.notes,
                "codimensions": {"n": n, "p": p, "q": q, "a": a, "b": b},
            }
        except HypothesisOutOfRange as exc:
            bound_rep = {"hypotheses_ok": False, "passed": None, "notes": str(exc)}
    except GeometryError as exc:
        rep["obstruction"] = {"error": str(exc)}
        bound_rep = {"hypotheses_ok": None, "passed": False, "notes": f"obstruction failed: {exc}"}
    rep["dimension_bound"] = bound_rep
    return rep


def _pair_checks(regions_rep: list[dict], doc: dict) -> list[dict]:
    checks = []
    expect = doc.get("expect", {})
    thr = doc.get("checks", {})
    compat_thr = thr.get("compatibility_threshold")
    claims_thr = thr.get("claims_threshold")
    for i, rep in enumerate(regions_rep):
        tag = f"region{i}"
        if "branch" in expect:
            checks.append(_expect(f"{tag}.branch", rep["branch"], expect["branch"]))
        if "rulings" in expect:
            checks.append(_expect(f"{tag}.rulings", rep["ranks"]["rulings"], expect["rulings"]))
        if "transfer_bundle" in expect:
            checks.append(_expect(f"{tag}.transfer_bundle", rep["ranks"]["transfer_bundle"],
                                  expect["transfer_bundle"]))
        for cname, claim in rep.get("claims", {}).items():
            if "passed" not in claim:
                continue  # informational record, not a gated claim
            checks.append({
                "name": f"{tag}.claim.{cname}",
                "passed": bool(claim["passed"]),
                "detail": claim,
            })
        if compat_thr is not None:
            for key in ("transfer_preserves_sff", "transfer_parallel",
                        "bundle_parallel_along_rulings"):
                checks.append(_check(f"{tag}.{key}", rep["compatibility"][key], compat_thr))
        bound = rep.get("dimension_bound", {})
        if bound.get("hypotheses_ok"):
            checks.append({
                "name": f"{tag}.dimension_bound",
                "passed": bool(bound.get("passed")),
                "detail": {k: bound[k] for k in ("lhs", "rhs", "slack") if k in bound},
            })
        elif bound.get("passed") is False:
            checks.append({"name": f"{tag}.dimension_bound", "passed": False,
                           "detail": bound.get("notes", "")})
    return checks


def _run_single(doc: dict, cfg: PipelineConfig, rng: np.random.Generator):
    grid = _build_grid(_require(doc, "grid", dict, "manifest"))
    imap, jet = _jet_from_spec(_require(doc, "immersion", dict, "manifest"), grid, "immersion")
    fund = fundamental_data(jet, tol=cfg.rank_tol)
    results: dict = {
        "immersion": imap.name if imap is not None else "table",
        "source": jet.source,
        "chart_points": grid.npoints,
        "codimension": jet.codim,
        "diagnostics": _jsonable(fund.diagnostics),
    }
    checks: list[dict] = []
    chk_spec = doc.get("checks", {})

    if "lightcone_identities" in chk_spec:
        opts = chk_spec["lightcone_identities"]
        dim = int(opts.get("dim", 4))
        count = int(opts.get("points", 1000))
        thr = float(opts.get("threshold", 1e-12))
        model = LightConeModel(dim)
        amb = model.ambient
        xs = rng.normal(size=(count, dim))
        ys = rng.normal(size=(count, dim))
        vs = rng.normal(size=(count, dim))
        ws = rng.normal(size=(count, dim))
        px, py = model.embed(xs), model.embed(ys)
        res = {
            "null_values": float(np.max(np.abs(amb.norm_sq(px)))),
            "unit_pairing": float(np.max(np.abs(
                amb.inner(px, np.broadcast_to(model.e0, px.shape)) - 1.0))),
            "isometric_differential": float(np.max(np.abs(
                amb.inner(model.embed_differential(xs, vs), model.embed_differential(xs, ws))
                - np.sum(vs * ws, axis=1)))),
            "distance_identity": float(np.max(np.abs(
                amb.inner(px, py) + 0.5 * np.sum((xs - ys) ** 2, axis=1)))),
        }
        results["lightcone_identities"] = res
        for key, val in res.items():
            checks.append(_check(f"lightcone.{key}", val, thr))

    if "position_identities" in chk_spec:
        thr = float(chk_spec["position_identities"].get("threshold", 1e-8))
        if not jet.ambient.pseudo_pair:
            raise ManifestError("checks.position_identities", "immersion is not cone-valued")
        res = position_identities(jet, fund)
        results["position_identities"] = _jsonable(res)
        checks.append(_check("position.shape_plus_identity",
                             res["shape_of_position_plus_identity"], thr))
        checks.append(_check("position.shape_of_null_generator", res["shape_of_field"], thr))

    if "roundtrip" in chk_spec:
        thr = float(chk_spec["roundtrip"].get("threshold", 1e-10))
        if jet.ambient.pseudo_pair:
            back = cone_projection(jet)
            again, _ = isometric_representative(back, induced_metric(jet))
            res = float(np.max(np.abs(again.values - jet.values)))
        else:
            lift, _ = isometric_representative(jet, induced_metric(jet))
            back = cone_projection(lift)
            res = float(np.max(np.abs(back.values - jet.values)))
        results["roundtrip_residual"] = res
        checks.append(_check("roundtrip", res, thr))

    if "fd_agreement" in chk_spec:
        if imap is None:
            raise ManifestError("checks.fd_agreement", "needs a closed-form immersion")
        thr = float(chk_spec["fd_agreement"].get("threshold", 1e-4))
        fd_jet = imap.jet_fd(grid)
        res = float(np.max(np.abs(fd_jet.d2 - jet.d2)))
        results["fd_agreement"] = res
        checks.append(_check("fd_agreement", res, thr))

    if "ruled" in doc:
        axes = doc["ruled"].get("axes", [])
        dist = coordinate_distribution(fund, list(axes))
        verdict = is_conformally_ruled(fund, dist)
        results["conformally_ruled"] = {
            "axes": list(axes),
            "ruled": verdict.ruled,
            "umbilic_residual": verdict.umbilic_residual,
            "bracket_residual": verdict.bracket_residual_max,
        }
        if "expect_ruled" in doc["ruled"]:
            checks.append(_expect("conformally_ruled", verdict.ruled, doc["ruled"]["expect_ruled"]))

    if "nullity" in doc:
        opts = doc["nullity"]
        svals = [int(s) for s in opts.get("s_values", [1])]
        points = None if opts.get("points", "center") == "all" else None
        if opts.get("points", "center") == "center":
            points = [grid.center_index()]
        table = {}
        for s in svals:
            reports = conformal_s_nullity(fund, s, points=points, seed=cfg.seed)
            table[str(s)] = {
                "max": max(rep.value for _, rep in reports),
                "exact": all(rep.exact for _, rep in reports),
                "per_point": [[idx, rep.value] for idx, rep in reports],
            }
        results["nullity"] = table
        for s_str, expected in doc.get("expect", {}).get("nu", {}).items():
            checks.append(_expect(f"nullity.s{s_str}", table[s_str]["max"], expected))

    if doc.get("rigidity_q") is not None:
        rep = rigidity_criterion(fund, int(doc["rigidity_q"]), seed=cfg.seed)
        results["rigidity"] = {
            "q": rep.q,
            "thresholds": _jsonable(rep.thresholds),
            "nu_lower_bounds": _jsonable(rep.nu_lower_bounds),
            "satisfied": rep.satisfied,
            "conclusive_violation": rep.conclusive_violation,
        }

    if "transfer" in doc:
        if imap is None:
            raise ManifestError("transfer", "needs a closed-form immersion")
        opts = doc["transfer"]
        base_map = build_immersion(opts["base"], where="transfer.base")
        base_jet = base_map.jet(grid)
        factor = imap.factor_jets(grid.points())
        data = sff_transfer_check(jet, base_jet, list(opts.get("ruling_axes", [0])),
                                  factor=factor)
        results["transfer_dictionary"] = _jsonable(data.residuals)
        for key, thr in opts.get("thresholds", {}).items():
            checks.append(_check(f"transfer.{key}", data.residuals[key], float(thr)))

    return results, checks, None


def _run_pair(doc: dict, cfg: PipelineConfig):
    grid = _build_grid(_require(doc, "grid", dict, "manifest"))
    left_map, jf = _jet_from_spec(_require(doc, "left", dict, "manifest"), grid, "left")
    right_map, jr = _jet_from_spec(_require(doc, "right", dict, "manifest"), grid, "right")
    notes: list[str] = []
    jhat = _lift_if_needed(jf, right_map, jr, notes)
    analysis = analyze_pair(jf, jhat, cfg)
    regions_rep = [_region_report(st, jf, jhat, cfg, doc.get("checks", {}))
                   for st in analysis.regions]
    results = {
        "left": left_map.name if left_map is not None else "table",
        "right": right_map.name if right_map is not None else "table",
        "notes": notes,
        "degeneracy": {
            "degenerate_points": int(np.sum(analysis.degeneracy.degenerate)),
            "radical_rank": _jsonable(sorted(set(analysis.degeneracy.omega_rank.tolist()))),
            "witness_pairing_min": float(np.min(analysis.degeneracy.witness_pairing))
            if analysis.degeneracy.degenerate.any() else None,
        },
        "regions": regions_rep,
    }
    checks = _pair_checks(regions_rep, doc)
    expect = doc.get("expect", {})
    if "witness_pairing" in expect and results["degeneracy"]["witness_pairing_min"] is not None:
        checks.append(_check("witness_pairing_gap",
                             abs(results["degeneracy"]["witness_pairing_min"]
                                 - expect["witness_pairing"]), 1e-9))
    csv_rows = _csv_rows(analysis, grid)
    return results, checks, csv_rows


def _csv_rows(analysis, grid: ChartGrid):
    pts = grid.points()
    region_of = np.full(grid.npoints, -1, dtype=int)
    branch_of = np.full(grid.npoints, "", dtype=object)
    for i, st in enumerate(analysis.regions):
        region_of[st.points] = i
        for q in st.points:
            branch_of[q] = st.branch
    header = ["point"] + [f"x{i + 1}" for i in range(grid.ndim)] + ["region", "branch"]
    rank_keys = sorted(analysis.regions[0].ranks.keys()) if analysis.regions else []
    header += [f"rank_{k}" for k in rank_keys]
    rows = [header]
    for q in range(grid.npoints):
        row = [q] + [f"{c!r}" for c in pts[q]] + [int(region_of[q]), branch_of[q]]
        if region_of[q] >= 0:
            st = analysis.regions[region_of[q]]
            row += [st.ranks[k] for k in rank_keys]
        else:
            row += ["" for _ in rank_keys]
        rows.append(row)
    return rows


def _run_generate(doc: dict, cfg: PipelineConfig):
    gen = _require(doc, "generator", dict, "manifest")
    left_map = build_immersion(_require(gen, "left", dict, "generator"), where="generator.left")
    lorentz_map = build_immersion(_require(gen, "lorentz", dict, "generator"),
                                  where="generator.lorentz")
    grid = _build_grid(_require(doc, "grid", dict, "manifest"))
    data = generate_conformal_pair(
        left_map, lorentz_map, grid,
        axis=int(gen.get("axis", 0)), branch=int(gen.get("branch", 0)),
    )
    results = {
        "left": left_map.name,
        "lorentz": lorentz_map.name,
        "slice_points": data.slice_chart.npoints,
        "diagnostics": _jsonable(data.diagnostics),
        "conformal_factor_range": [float(np.min(data.conformal_factor)),
                                    float(np.max(data.conformal_factor))],
    }
    checks = [
        _check("slice_metric_gap", data.diagnostics["slice_metric_gap"], 1e-6),
        _check("conformal_residual", data.diagnostics["conformal_residual"], 1e-6),
        _check("factor_vs_null_pairing", data.diagnostics["factor_vs_null_pairing"], 1e-6),
    ]
    csv_rows = None
    if gen.get("analyze_pair", False):
        jhat, _ = isometric_representative(data.projected, induced_metric(data.left))
        analysis = analyze_pair(data.left, jhat, cfg)
        regions_rep = [_region_report(st, data.left, jhat, cfg, doc.get("checks", {}))
                       for st in analysis.regions]
        results["degeneracy"] = {
            "degenerate_points": int(np.sum(analysis.degeneracy.degenerate)),
            "witness_pairing_min": float(np.min(analysis.degeneracy.witness_pairing))
            if analysis.degeneracy.degenerate.any() else None,
        }
        results["regions"] = regions_rep
        checks.extend(_pair_checks(regions_rep, doc))
        expect = doc.get("expect", {})
        if "witness_pairing" in expect and results["degeneracy"]["witness_pairing_min"] is not None:
            checks.append(_check("witness_pairing_gap",
                                 abs(results["degeneracy"]["witness_pairing_min"]
                                     - expect["witness_pairing"]), 1e-9))
        csv_rows = _csv_rows(analysis, data.slice_chart)
    return results, checks, csv_rows


def _run_extend(doc: dict, cfg: PipelineConfig):
    thr = doc.get("checks", {})
    if "generator" in doc:
        gen = doc["generator"]
        left_map = build_immersion(gen["left"], where="generator.left")
        lorentz_map = build_immersion(gen["lorentz"], where="generator.lorentz")
        grid = _build_grid(_require(doc, "grid", dict, "manifest"))
        sdata = generate_conformal_pair(left_map, lorentz_map, grid,
                                        axis=int(gen.get("axis", 0)),
                                        branch=int(gen.get("branch", 0)))
        jhat, _ = isometric_representative(sdata.projected, induced_metric(sdata.left))
        analysis = analyze_pair(sdata.left, jhat, cfg)
        state = analysis.regions[0]
        data = TransferData.from_region(state)
        inputs = {"left": left_map.name, "lorentz": lorentz_map.name,
                  "branch": state.branch}
    else:
        left_map = build_immersion(_require(doc, "left", dict, "manifest"), where="left")
        right_map = build_immersion(_require(doc, "right", dict, "manifest"), where="right")
        grid = _build_grid(_require(doc, "grid", dict, "manifest"))
        jf = left_map.jet(grid)
        jg = right_map.jet(grid)
        tspec = doc.get("transfer", "pipeline")
        if tspec == "pipeline":
            analysis = analyze_pair(jf, jg, cfg)
            state = analysis.regions[0]
            data = TransferData.from_region(state)
            inputs = {"left": left_map.name, "right": right_map.name,
                      "branch": state.branch}
        elif isinstance(tspec, dict) and "shared_flat_normal" in tspec:
            direction = np.asarray(tspec["shared_flat_normal"], dtype=float)
            if len(direction) != jf.m:
                raise ManifestError("transfer.shared_flat_normal",
                                    f"expected {jf.m} components")
            fl = fundamental_data(jf, tol=cfg.rank_tol)
            fr = fundamental_data(jg, tol=cfg.rank_tol)
            p = fl.metric.shape[0]
            lf = fl.normal_coordinates(np.broadcast_to(direction, (p, jf.m)))[:, :, None]
            lh = fr.normal_coordinates(np.broadcast_to(direction, (p, jf.m)))[:, :, None]
            axes = [int(a) for a in tspec.get("ruling_axes", [])]
            rul = np.zeros((p, jf.n, len(axes)))
            for col, ax in enumerate(axes):
                rul[:, :, col] = fl.tangent_frame_inv[:, :, ax]
            for q in range(p):
                rul[q] = np.linalg.qr(rul[q])[0]
            data = TransferData.from_frames(fl, fr, lf, lh, (1,), rul)
            inputs = {"left": left_map.name, "right": right_map.name,
                      "branch": "hand-built transfer"}
        else:
            raise ManifestError("transfer", "expected 'pipeline' or a shared_flat_normal object")

    obs = extension_obstruction(data, fd_tol=cfg.fd_tol)
    pair = ruled_extension(obs)
    report = verify_extension(pair, fd_tol=cfg.fd_tol)
    results = {
        "inputs": inputs,
        "kernel_dim": obs.s,
        "fiber_rank": obs.r,
        "radius": pair.radius,
        "obstruction_residuals": _jsonable(obs.residuals),
        "verification": _jsonable(report),
    }
    checks = [
        {"name": "zero_section_exact", "passed": bool(report["zero_section_exact"])},
        _check("fiber_straightness", report["fiber_straightness"], 1e-12),
        _check("metric_agreement", report["metric_agreement"],
               float(thr.get("metric_threshold", 1e-6))),
        _check("kernel_identity_gap", report["kernel_identity_gap"],
               float(thr.get("kernel_identity_threshold", 1e-6))),
        _check("rulings_inside_kernel", obs.residuals["rulings_inside_kernel"], 1e-6),
        _check("ruled_leaves", report["ruled_leaves"], 1e-6),
    ]
    return results, checks, None


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


_RUNNERS = {
    "single": lambda doc, cfg, rng: _run_single(doc, cfg, rng),
    "pair": lambda doc, cfg, rng: _run_pair(doc, cfg),
    "generate": lambda doc, cfg, rng: _run_generate(doc, cfg),
    "extend": lambda doc, cfg, rng: _run_extend(doc, cfg),
}


def run_manifest(doc: dict, tolerance: float | None = None, seed: int | None = None,
                 csv_dump: str | None = None, region: int | None = None):
    """Execute one manifest document; returns (report dict, exit code)."""
    kind = _require(doc, "analysis", str, "manifest")
    if kind not in _RUNNERS:
        raise ManifestError("analysis", f"unknown analysis kind {kind!r}")
    tol = float(tolerance if tolerance is not None else doc.get("tolerance", DEFAULT_TOL))
    if not (0.0 < tol <= 1e-3):
        raise ManifestError("tolerance", "tolerance must lie in (0, 1e-3]")
    fd_tol = float(doc.get("fd_tolerance", 1e-6))
    the_seed = int(seed if seed is not None else doc.get("seed", 0))
    cfg = PipelineConfig(rank_tol=tol, fd_tol=fd_tol, seed=the_seed)
    rng = np.random.default_rng(the_seed)

    canonical = json.dumps(doc, sort_keys=True).encode()
    results, checks, csv_rows = _RUNNERS[kind](doc, cfg, rng)
    passed = all(c.get("passed", False) for c in checks) if checks else True
    report = {
        "provenance": {
            "version": __version__,
            "manifest_sha256": hashlib.sha256(canonical).hexdigest(),
            "tolerance": tol,
            "fd_tolerance": fd_tol,
            "seed": the_seed,
        },
        "analysis": kind,
        "results": _jsonable(results),
        "checks": _jsonable(checks),
        "passed": bool(passed),
    }
    if region is not None and isinstance(report["results"], dict):
        regs = report["results"].get("regions")
        if regs is not None:
            if not 0 <= region < len(regs):
                raise ManifestError("--region", f"region {region} out of range (0..{len(regs) - 1})")
            report["results"]["regions"] = [regs[region]]
    if csv_dump and csv_rows:
        with open(csv_dump, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerows(csv_rows)
    return report, (0 if passed else 2)


def _write_report(report: dict, path: str):
    with open(path, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="confpair",
        description="Conformal/isometric pair analysis on chart grids",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", help="run a manifest file")
    p_an.add_argument("manifest")
    p_an.add_argument("--output", default=None, help="report path (default: manifest's output or report.json)")
    p_an.add_argument("--tolerance", type=float, default=None)
    p_an.add_argument("--seed", type=int, default=None)
    p_an.add_argument("--csv-dump", default=None)
    p_an.add_argument("--region", type=int, default=None)

    p_gal = sub.add_parser("gallery", help="list or run builtin material")
    gal_sub = p_gal.add_subparsers(dest="gallery_command", required=True)
    gal_sub.add_parser("list", help="print builtin immersions and manifests")
    p_run = gal_sub.add_parser("run", help="run a named builtin manifest")
    p_run.add_argument("name")
    p_run.add_argument("--output", default=None)
    p_run.add_argument("--tolerance", type=float, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--csv-dump", default=None)
    p_run.add_argument("--region", type=int, default=None)

    args = parser.parse_args(argv)

    try:
        if args.command == "gallery" and args.gallery_command == "list":
            print("builtin immersions:")
            for entry in catalog():
                kind = " (wrapper)" if entry["wrapper"] else ""
                print(f"  {entry['name']:<18}{kind} {entry['summary']}")
            print("named manifests:")
            for name in sorted(MANIFESTS):
                print(f"  {name}: {MANIFESTS[name]['analysis']}")
            return 0
        if args.command == "gallery":
            if args.name not in MANIFESTS:
                raise ManifestError("gallery.name", f"unknown manifest {args.name!r}")
            doc = json.loads(json.dumps(MANIFESTS[args.name]))
            out_path = args.output or f"{args.name}-report.json"
        else:
            with open(args.manifest) as fh:
                try:
                    doc = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ManifestError("manifest", f"invalid JSON at line {exc.lineno}: {exc.msg}")
            out_path = args.output or doc.get("output", "report.json")
        report, code = run_manifest(
            doc, tolerance=args.tolerance, seed=args.seed,
            csv_dump=args.csv_dump, region=args.region,
        )
        _write_report(report, out_path)
        status = "all checks passed" if code == 0 else "check failures"
        print(f"{out_path}: {status} ({len(report['checks'])} checks)")
        return code
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 1
    except GeometryError as exc:
        print(f"analysis error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
