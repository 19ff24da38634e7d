"""Batch front end: ``gaussfield {gauss|limit|energy|weyl|check}``.

A run reads one JSON document, evaluates the requested table and writes
``<command>.csv`` and ``<command>.json`` into the output directory.  Exit
codes: 0 when every check holds, 2 on a numeric tolerance violation or a
quadrature failure, 3 on a configuration error.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import click
import numpy as np

from . import __version__, cache
from .charges import (ChargeConfig, ChargeError, GeometryCase, MeasurementFn, build_dipole,
                      gauss_readout_with_error)
from .kernels import BACKEND
from .lightcone import C_FLAT, lattice_oracle, pair_D_position
from .limits_energy import (convergence_report, energy_shift_I, energy_shift_II,
                            longitudinal_energy)
from .propagators import C_D, QuadratureSpec, get_grid, pair_D, pair_Dflat
from .quadrature import QuadratureError
from .testfn import TestFn, box, factor_integral, partial
from .weyl import (NonObservableWord, NotGaugeInvariant, adjoint, normal_form, omega0, omega_m,
                   parse_script)

COMMANDS = ("gauss", "limit", "energy", "weyl", "check")
EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG = 0, 2, 3


class ConfigError(ValueError):
    """Invalid configuration document; the message names the offending field."""


class NumericFailure(RuntimeError):
    """A quadrature failed while evaluating a named object."""


# ---------------------------------------------------------------------------
# configuration

def _require(doc, key, path):
    if not isinstance(doc, dict) or key not in doc:
        raise ConfigError(f"{path}: missing field {key!r}")
    return doc[key]


def _float_list(value, path, increasing=True):
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a list of numbers") from None
    if not out:
        raise ConfigError(f"{path}: empty grid")
    if increasing and any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"{path}: grid must be strictly increasing")
    return out


def _normalize(f: TestFn, spec: dict, path: str) -> TestFn:
    if f.rank != "scalar":
        raise ConfigError(f"{path}: only scalar functions can be normalized")
    value = float(spec.get("value", 1.0))
    axes = [int(a) for a in spec.get("axes", (0, 1, 2, 3))]
    total = 0.0
    for i in range(f.n_atoms):
        term = f.coef[i]
        for mu in axes:
            term *= factor_integral(f.width[i, mu], f.mono[i, mu], f.pole[i, mu], f.plateau[i, mu])
        total += term
    if total == 0.0:
        raise ConfigError(f"{path}: cannot normalize a function with zero integral")
    return f * (value / total)


def _build_object(name: str, doc, objects: dict) -> TestFn:
    path = f"objects.{name}"
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object")

    def ref(n, where):
        if n is None:
            return TestFn.zero("scalar")
        if n not in objects:
            raise ConfigError(f"{path}.{where}: unknown object {n!r} (objects resolve in order)")
        return objects[n]

    try:
        if "vector" in doc:
            comps = doc["vector"]
            if not isinstance(comps, list) or len(comps) != 4:
                raise ConfigError(f"{path}.vector: expected 4 component names or null")
            f = TestFn.vector([ref(n, f"vector[{i}]") for i, n in enumerate(comps)])
        elif "curl" in doc:
            a, b, c = (ref(n, f"curl[{i}]") for i, n in enumerate(doc["curl"]))
            f = TestFn.vector([TestFn.zero("scalar"), partial(c, 2) - partial(b, 3),
                               partial(a, 3) - partial(c, 1), partial(b, 1) - partial(a, 2)])
        elif "sum" in doc:
            terms = [ref(n, f"sum[{i}]") * float(k) for i, (n, k) in enumerate(doc["sum"])]
            if not terms:
                raise ConfigError(f"{path}.sum: empty sum")
            f = terms[0]
            for t in terms[1:]:
                f = f + t
        else:
            f = TestFn.from_dict(doc)
        if "normalize" in doc:
            f = _normalize(f, doc["normalize"], f"{path}.normalize")
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return f


@dataclass
class RunConfig:
    spec: QuadratureSpec
    objects: dict
    charges: dict
    measurements: dict
    blocks: dict
    digest: str
    raw: dict = field(repr=False)

    def block(self, name: str) -> dict:
        blk = self.blocks.get(name)
        if not isinstance(blk, dict):
            raise ConfigError(f"{name}: missing command block")
        return blk

    def spec_for(self, blk: dict, path: str) -> QuadratureSpec:
        if "quadrature" not in blk:
            return self.spec
        doc = dict(self.raw.get("quadrature", {}))
        doc.update(blk["quadrature"])
        try:
            return QuadratureSpec.from_dict(doc)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}.quadrature: {exc}") from None

    def obj(self, name, path, rank=None) -> TestFn:
        if name not in self.objects:
            raise ConfigError(f"{path}: unknown object {name!r}")
        f = self.objects[name]
        if rank and f.rank != rank:
            raise ConfigError(f"{path}: object {name!r} must be {rank}, is {f.rank}")
        return f

    def charge(self, name, path) -> ChargeConfig:
        if name not in self.charges:
            raise ConfigError(f"{path}: unknown charge {name!r}")
        return self.charges[name]

    def measurement(self, name, path) -> MeasurementFn:
        if name not in self.measurements:
            raise ConfigError(f"{path}: unknown measurement {name!r}")
        return self.measurements[name]


def parse_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected a JSON object")
    try:
        spec = QuadratureSpec.from_dict(doc.get("quadrature", {}))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"quadrature: {exc}") from None
    raw_objects = doc.get("objects") or {}
    if not raw_objects:
        raise ConfigError("objects: no objects defined")
    objects: dict = {}
    for name, odoc in raw_objects.items():
        objects[name] = _build_object(name, odoc, objects)
    charges = {}
    for name, cdoc in (doc.get("charges") or {}).items():
        path = f"charges.{name}"
        theta = _require(cdoc, "theta", path)
        sigma = _require(cdoc, "sigma", path)
        tmp = RunConfig(spec, objects, {}, {}, {}, "", doc)
        try:
            charges[name] = ChargeConfig(tmp.obj(theta, f"{path}.theta", "scalar"),
                                         tmp.obj(sigma, f"{path}.sigma", "scalar"),
                                         float(cdoc.get("r", 1.0)))
        except ChargeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    measurements = {}
    for name, mdoc in (doc.get("measurements") or {}).items():
        path = f"measurements.{name}"
        tau = _require(mdoc, "tau", path)
        if tau not in objects:
            raise ConfigError(f"{path}.tau: unknown object {tau!r}")
        try:
            measurements[name] = MeasurementFn(
                objects[tau], tuple(float(v) for v in _require(mdoc, "plateau_center", path)),
                tuple(float(v) for v in _require(mdoc, "plateau_half", path)),
                float(_require(mdoc, "margin", path)))
        except (ChargeError, ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
    blocks = {k: doc[k] for k in COMMANDS if k in doc}
    digest = hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()
    return RunConfig(spec, objects, charges, measurements, blocks, digest, doc)


# ---------------------------------------------------------------------------
# results

@dataclass
class RunResult:
    command: str
    inputs_digest: str
    columns: list
    rows: list
    checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)


def _check(name, value, tolerance, passed, detail="") -> dict:
    return {"name": name, "value": value, "tolerance": tolerance, "passed": bool(passed), "detail": detail}


def _num(x):
    if isinstance(x, np.generic):
        return x.item()
    return x


def format_value(x) -> str:
    x = _num(x)
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def to_json(obj, indent: int = 2, level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits.

    Non-finite floats become ``null``.
    """
    obj = _num(obj)
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{to_json(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, float):
        return f"{obj:.17g}" if math.isfinite(obj) else "null"
    if isinstance(obj, complex):
        return to_json([obj.real, obj.imag], indent, level)
    return json.dumps(obj)


def write_result(res: RunResult, out: Path, meta: dict) -> tuple[Path, Path]:
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(res.columns)
    for row in res.rows:
        w.writerow([format_value(row.get(c)) for c in res.columns])
    csv_path = out / f"{res.command}.csv"
    csv_path.write_text(buf.getvalue(), encoding="utf-8", newline="")
    doc = {"command": res.command, "inputs_digest": res.inputs_digest, "metadata": meta,
           "columns": res.columns, "rows": [{c: _num(r.get(c)) for c in res.columns} for r in res.rows],
           "checks": res.checks, "passed": res.passed}
    doc.update(res.extra)
    doc["wall_time"] = res.wall_time
    json_path = out / f"{res.command}.json"
    json_path.write_text(to_json(doc) + "\n", encoding="utf-8")
    return csv_path, json_path


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))  # results keep input order


def _annotated(label, fn, *args):
    try:
        return fn(*args)
    except QuadratureError as exc:
        raise NumericFailure(f"{label}: {exc}") from exc


# ---------------------------------------------------------------------------
# commands

def cmd_gauss(cfg: RunConfig, threads: int = 1, tolerance_scale: float = 1.0) -> RunResult:
    blk = cfg.block("gauss")
    spec = cfg.spec_for(blk, "gauss")
    tol = float(blk.get("tolerance", 1e-3)) * tolerance_scale
    rows_doc = _require(blk, "rows", "gauss")
    if not rows_doc:
        raise ConfigError("gauss.rows: no rows")
    jobs = []
    for i, r in enumerate(rows_doc):
        path = f"gauss.rows[{i}]"
        jobs.append((r.get("name", f"row{i}"), cfg.charge(_require(r, "charge", path), f"{path}.charge"),
                     cfg.measurement(_require(r, "measurement", path), f"{path}.measurement")))

    def run(job):
        name, ch, meas = job
        res = _annotated(name, gauss_readout_with_error, build_dipole(ch), meas, spec)
        dev = None if res["expected"] is None else abs(res["value"] - res["expected"])
        return {"name": name, "case": res["case"], "charge": ch.charge, "r": ch.r,
                "readout": res["value"], "expected": res["expected"], "deviation": dev,
                "error": res["error"], "refinement_delta": res["refinement_delta"],
                "tail_bound": res["tail_bound"], "margin_bias_estimate": res["margin_bias_estimate"]}

    rows = _map(run, jobs, threads)
    checks = []
    for row in rows:
        if row["case"] == GeometryCase.INDETERMINATE.value:
            continue
        bound = tol * max(1.0, abs(row["charge"]))
        checks.append(_check(f"readout[{row['name']}]", row["deviation"], bound, row["deviation"] <= bound,
                             f"case {row['case']}"))
    cols = ["name", "case", "charge", "r", "readout", "expected", "deviation", "error",
            "refinement_delta", "tail_bound", "margin_bias_estimate"]
    extra = {"indeterminate": [r["name"] for r in rows if r["case"] == GeometryCase.INDETERMINATE.value]}
    return RunResult("gauss", cfg.digest, cols, rows, checks, extra)


def cmd_limit(cfg: RunConfig, threads: int = 1, tolerance_scale: float = 1.0) -> RunResult:
    blk = cfg.block("limit")
    spec = cfg.spec_for(blk, "limit")
    ch = cfg.charge(_require(blk, "charge", "limit"), "limit.charge")
    r_grid = _float_list(_require(blk, "r_grid", "limit"), "limit.r_grid")
    t_grid = _float_list(blk.get("t_grid", [0.0]), "limit.t_grid") if blk.get("t_grid") else []
    probe = cfg.obj(blk["probe"], "limit.probe", "vector") if blk.get("probe") else None
    meas = cfg.measurement(blk["measurement"], "limit.measurement") if blk.get("measurement") else None
    tol_end = float(blk.get("end_tolerance", 1e-3)) * tolerance_scale
    tol_fun = float(blk.get("functional_tolerance", 1e-3)) * tolerance_scale
    floor_factor = float(blk.get("floor_factor", 10.0))
    rep = _annotated("limit." + blk["charge"], convergence_report, ch.theta, ch.sigma, r_grid, t_grid,
                     spec, probe, meas, False)
    rows = []
    for k, r in enumerate(r_grid):
        row = {"r": r, "seminorm1_distance": rep.seminorm1_distance[k],
               "seminorm1_relative": rep.seminorm1_relative[k], "seminorm1_error": rep.seminorm1_error[k],
               "seminorm0_increment": rep.seminorm0_increments[k - 1] if k else None,
               "seminorm0_error": rep.seminorm0_error[k - 1] if k else None}
        if probe is not None:
            row["finite_r_functional"] = rep.finite_r_functional[k]
            row["functional_error"] = rep.functional_error[k]
        if meas is not None:
            row["gauss_readout"] = rep.gauss_readouts[k]
        rows.append(row)
    checks = [_check("seminorm1_monotone", rep.seminorm1_relative[-1], None, rep.seminorm1_decreasing),
              _check("seminorm1_end_relative", rep.seminorm1_relative[-1], tol_end,
                     rep.seminorm1_relative[-1] < tol_end)]
    for k, (inc, err) in enumerate(zip(rep.seminorm0_increments, rep.seminorm0_error)):
        checks.append(_check(f"seminorm0_floor[{r_grid[k]}->{r_grid[k + 1]}]", inc, floor_factor * err,
                             inc > floor_factor * err))
    extra = {"cocycle_angle": rep.cocycle_angle, "cocycle_residual0": rep.cocycle_residual0}
    if probe is not None:
        rel = abs(rep.richardson["value"] - rep.limit_value) / max(abs(rep.limit_value), 1e-300)
        checks.append(_check("richardson_vs_limit", rel, tol_fun, rel < tol_fun))
        extra.update({"limit_value": rep.limit_value, "limit_error": rep.limit_error,
                      "richardson": rep.richardson})
    cols = list(rows[0].keys())
    return RunResult("limit", cfg.digest, cols, rows, checks, extra)


def _energies(m, t, spec, coarse):
    check, e1 = energy_shift_I(m, t, spec)
    e2 = energy_shift_II(m, t, spec)
    e1c = energy_shift_I(m, t, coarse)[1]
    e2c = energy_shift_II(m, t, coarse)
    return {"t": t, "E_I": e1, "E_I_error": abs(e1 - e1c), "E_II": e2, "E_II_error": abs(e2 - e2c),
            "longitudinal": longitudinal_energy(m, t, spec), "gap": e2 - e1, "middle_term_check": check}


def _variation(values) -> float:
    v = np.asarray(values, dtype=float)
    return float((v.max() - v.min()) / max(abs(v.mean()), 1e-300))


def cmd_energy(cfg: RunConfig, threads: int = 1, tolerance_scale: float = 1.0) -> RunResult:
    blk = cfg.block("energy")
    spec = cfg.spec_for(blk, "energy")
    coarse = spec.coarse()
    t_grid = _float_list(blk.get("t_grid", [0.0]), "energy.t_grid")
    tol_t = float(blk.get("t_tolerance", 1e-6)) * tolerance_scale
    tol_tr = float(blk.get("transverse_tolerance", 1e-6)) * tolerance_scale
    gap_factor = float(blk.get("gap_factor", 10.0))
    subjects = []
    if blk.get("charge"):
        ch = cfg.charge(blk["charge"], "energy.charge")
        r_grid = _float_list(blk.get("r_grid", [ch.r]), "energy.r_grid")
        for r in r_grid:
            subjects.append((f"{blk['charge']}@r={r:g}", "dipole", r, build_dipole(ch.with_r(r))))
    if blk.get("transverse"):
        subjects.append((blk["transverse"], "transverse", None,
                         cfg.obj(blk["transverse"], "energy.transverse", "vector")))
    if not subjects:
        raise ConfigError("energy: give 'charge' and/or 'transverse'")
    jobs = [(s, t) for s in subjects for t in t_grid]

    def run(job):
        (name, kind, r, m), t = job
        row = {"subject": name, "kind": kind, "r": r}
        row.update(_annotated(name, _energies, m, t, spec, coarse))
        return row

    rows = _map(run, jobs, threads)
    checks = []
    for name, kind, _, _ in subjects:
        sub = [r for r in rows if r["subject"] == name]
        e1 = [r["E_I"] for r in sub]
        checks.append(_check(f"E_I_nonnegative[{name}]", min(e1), 0.0,
                             all(r["E_I"] >= -r["E_I_error"] for r in sub)))
        checks.append(_check(f"E_II_ge_E_I[{name}]", min(r["gap"] for r in sub), 0.0,
                             all(r["gap"] >= -(r["E_I_error"] + r["E_II_error"]) for r in sub)))
        checks.append(_check(f"E_I_t_variation[{name}]", _variation(e1), tol_t, _variation(e1) < tol_t))
        if kind == "dipole":
            worst = min(r["gap"] - gap_factor * (r["E_I_error"] + r["E_II_error"]) for r in sub)
            checks.append(_check(f"strict_gap[{name}]", min(r["gap"] for r in sub), None, worst > 0,
                                 f"gap above {gap_factor:g}x the error estimate"))
        else:
            rel = max(abs(r["gap"]) / max(abs(r["E_I"]), 1e-300) for r in sub)
            checks.append(_check(f"transverse_equal[{name}]", rel, tol_tr, rel < tol_tr))
    cols = ["subject", "kind", "r", "t", "E_I", "E_I_error", "E_II", "E_II_error", "longitudinal", "gap",
            "middle_term_check"]
    return RunResult("energy", cfg.digest, cols, rows, checks)


def _word_objects(cfg: RunConfig) -> dict:
    objs = dict(cfg.objects)
    for name, meas in cfg.measurements.items():
        objs.setdefault(name, meas.h)
    return objs


def cmd_weyl(cfg: RunConfig, threads: int = 1, tolerance_scale: float = 1.0) -> RunResult:
    blk = cfg.block("weyl")
    spec = cfg.spec_for(blk, "weyl")
    coarse = spec.coarse()
    words_doc = _require(blk, "words", "weyl")
    if not isinstance(words_doc, dict) or not words_doc:
        raise ConfigError("weyl.words: expected a non-empty mapping of name -> script")
    objs = _word_objects(cfg)
    words = {}
    for name, script in words_doc.items():
        text = "\n".join(script) if isinstance(script, list) else str(script)
        try:
            words[name] = parse_script(text, objs)
        except ValueError as exc:
            raise ConfigError(f"weyl.words.{name}: {exc}") from None
    states = {n: build_dipole(cfg.charge(n, f"weyl.states[{n}]")) for n in blk.get("states", [])}
    tol_unit = float(blk.get("unitarity_tolerance", 1e-10)) * tolerance_scale

    def run(item):
        name, w = item
        nf = _annotated(name, normal_form, w, spec)
        nfc = normal_form(w, coarse)
        row = {"word": name, "n_factors": len(w), "angle": nf.angle, "angle_error": abs(nf.angle - nfc.angle),
               "rho_atoms": nf.rho.n_atoms, "m_atoms": nf.m.n_atoms}
        try:
            om = omega0(nf, spec)
            row.update(gauge_invariant=True, omega0_re=om.real, omega0_im=om.imag)
        except NotGaugeInvariant:
            row.update(gauge_invariant=False, omega0_re=None, omega0_im=None)
        for sname, d in states.items():
            try:
                v = omega_m(d, w, spec)
                row[f"omega_m[{sname}]_re"], row[f"omega_m[{sname}]_im"] = v.real, v.imag
            except (NonObservableWord, NotGaugeInvariant):
                row[f"omega_m[{sname}]_re"] = row[f"omega_m[{sname}]_im"] = None
        unit = normal_form(w * adjoint(w), spec)
        row["unitarity_residual"] = abs(unit.angle)
        row["unitarity_exact"] = unit.rho.is_zero and unit.m.is_zero
        return row

    rows = _map(run, list(words.items()), threads)
    checks = []
    for row in rows:
        checks.append(_check(f"unitarity[{row['word']}]", row["unitarity_residual"], tol_unit,
                             row["unitarity_residual"] < tol_unit and row["unitarity_exact"]))
        if row["gauge_invariant"]:
            mod = math.hypot(row["omega0_re"], row["omega0_im"])
            checks.append(_check(f"omega0_bound[{row['word']}]", mod, 1.0, mod <= 1.0 + 1e-12))
    extra = {}
    if blk.get("witness"):
        wdoc = blk["witness"]
        ch = cfg.charge(_require(wdoc, "charge", "weyl.witness"), "weyl.witness.charge")
        meas = cfg.measurement(_require(wdoc, "measurement", "weyl.witness"), "weyl.witness.measurement")
        threshold = float(wdoc.get("threshold", 0.1))
        wit = _annotated("weyl.witness", outerness_witness, ch, meas, spec)
        extra["witness"] = wit
        checks.append(_check("outerness_witness", wit["difference"], threshold, wit["difference"] > threshold))
    cols = list(rows[0].keys())
    return RunResult("weyl", cfg.digest, cols, rows, checks, extra)


def outerness_witness(ch: ChargeConfig, meas: MeasurementFn, spec: QuadratureSpec) -> dict:
    """``|omega_m(V(delta d h)) - omega_0(V(delta d h))|`` for the dipole of ``ch``."""
    from .testfn import delta_d
    from .weyl import V, WeylWord
    w = WeylWord.of(V(delta_d(meas.h)))
    o0 = omega0(normal_form(w, spec), spec)
    om = omega_m(build_dipole(ch), w, spec)
    return {"omega0": [o0.real, o0.imag], "omega_m": [om.real, om.imag], "phase": float(np.angle(om / o0)),
            "difference": abs(om - o0)}


def cmd_check(cfg: RunConfig, threads: int = 1, tolerance_scale: float = 1.0) -> RunResult:
    blk = cfg.block("check")
    spec = cfg.spec_for(blk, "check")
    tols = {"box": 1e-2, "lattice": 0.05, "dual_route": 1e-6, "position": 1e-4}
    tols.update({k: float(v) for k, v in blk.get("tolerances", {}).items()})
    tols = {k: v * tolerance_scale for k, v in tols.items()}
    a_name, b_name = _require(blk, "pair", "check")
    a = cfg.obj(a_name, "check.pair[0]", "scalar")
    b = cfg.obj(b_name, "check.pair[1]", "scalar")
    jobs = []

    def box_oracle():
        lhs = pair_Dflat(a, box(b), spec)
        ref = pair_D(a, b, spec)
        return {"oracle": "box_Dflat_equals_D", "value": lhs, "reference": ref,
                "residual": abs(lhs - ref) / max(abs(ref), 1e-300), "tolerance": tols["box"]}

    def position_oracle():
        lhs = pair_D_position(a, b, spec)
        ref = pair_D(a, b, spec)
        return {"oracle": f"C_D={C_D:.17g} position_route", "value": lhs, "reference": ref,
                "residual": abs(lhs - ref) / max(abs(ref), 1e-300), "tolerance": tols["position"]}

    jobs += [box_oracle, position_oracle]
    if blk.get("lattice"):
        ldoc = blk["lattice"]
        src = cfg.obj(_require(ldoc, "source", "check.lattice"), "check.lattice.source", "scalar")

        def lattice():
            res = lattice_oracle(src, [float(v) for v in _require(ldoc, "point", "check.lattice")],
                                 n=int(ldoc.get("n", 32)), half=float(ldoc.get("half", 4.0)),
                                 steps=int(ldoc.get("steps", 32)))
            return {"oracle": f"C_FLAT={C_FLAT:.17g} lattice_convolution", "value": res["lattice"],
                    "reference": res["closed_form"], "residual": res["rel_diff"], "tolerance": tols["lattice"]}
        jobs.append(lattice)
    if blk.get("dipole"):
        ch = cfg.charge(blk["dipole"], "check.dipole")
        n_pts = int(blk.get("dual_points", 4))

        def dual_route():
            d = build_dipole(ch)
            # same radial rule, few directions: the table is compared node by node
            grid = get_grid(replace(spec, n_polar=8, n_azimuth=8))
            vals = grid.amplitude(d).values.reshape(4, -1)
            mom = grid.momenta()
            idx = np.linspace(0, mom.shape[0] - 1, n_pts + 2).astype(int)[1:-1]
            direct = d.momentum_direct(mom[idx])
            table = vals[:, idx].T
            scale = float(np.max(np.abs(direct)))
            res = float(np.max(np.abs(direct - table))) / max(scale, 1e-300)
            return {"oracle": "dipole_dual_route", "value": float(np.max(np.abs(table))), "reference": scale,
                    "residual": res, "tolerance": tols["dual_route"]}
        jobs.append(dual_route)

    rows = _map(lambda f: _annotated("check", f), jobs, threads)
    for r in rows:
        r["passed"] = r["residual"] < r["tolerance"]
    checks = [_check(r["oracle"], r["residual"], r["tolerance"], r["passed"]) for r in rows]
    cols = ["oracle", "value", "reference", "residual", "tolerance", "passed"]
    return RunResult("check", cfg.digest, cols, rows, checks)


DISPATCH = {"gauss": cmd_gauss, "limit": cmd_limit, "energy": cmd_energy, "weyl": cmd_weyl,
            "check": cmd_check}


def run_command(command: str, config_text: str, out: Path, threads: int = 1,
                tolerance_scale: float = 1.0) -> tuple[int, RunResult | None, str]:
    """Run one command end to end; returns ``(exit_code, result, message)``."""
    try:
        cfg = parse_config(config_text)
        cache.load()
        t0 = time.perf_counter()
        res = DISPATCH[command](cfg, threads, tolerance_scale)
        res.wall_time = time.perf_counter() - t0
    except ConfigError as exc:
        return EXIT_CONFIG, None, f"config error: {exc}"
    except (NumericFailure, QuadratureError) as exc:
        return EXIT_TOLERANCE, None, f"numeric failure: {exc}"
    meta = {"version": __version__, "backend": BACKEND, "quadrature": cfg.spec.to_dict(),
            "threads": threads, "tolerance_scale": tolerance_scale}
    write_result(res, out, meta)
    cache.save()
    failed = [c["name"] for c in res.checks if not c["passed"]]
    msg = f"{command}: {len(res.rows)} rows, {len(res.checks)} checks, {len(failed)} failed"
    if failed:
        msg += " (" + ", ".join(failed) + ")"
    return (EXIT_TOLERANCE if failed else EXIT_OK), res, msg


# ---------------------------------------------------------------------------
# click wiring

def _options(fn):
    fn = click.option("--tolerance-scale", type=float, default=1.0, show_default=True,
                      help="Multiply every tolerance by this factor.")(fn)
    fn = click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
                      help="Worker threads for independent rows.")(fn)
    fn = click.option("--out", "out", type=click.Path(file_okay=False), required=True,
                      help="Output directory for the CSV and JSON artifacts.")(fn)
    fn = click.option("--config", "config", type=click.Path(dir_okay=False), required=True,
                      help="JSON configuration document.")(fn)
    return fn


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="gaussfield")
def main():
    """Phase arithmetic, Gauss readouts, limits and energies for charged field states.

    Set GAUSSFIELD_CACHE_DIR to persist pairing caches between runs.
    """


def _make(command: str, doc: str):
    @_options
    def _cmd(config, out, threads, tolerance_scale):
        try:
            text = Path(config).read_text(encoding="utf-8")
        except OSError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        code, _, msg = run_command(command, text, Path(out), threads, tolerance_scale)
        click.echo(msg, err=code != EXIT_OK)
        sys.exit(code)
    _cmd.__doc__ = doc
    main.command(name=command)(_cmd)


_make("gauss", "Gauss readout table over geometry families.")
_make("limit", "Convergence of the dipole towards its scaling limit.")
_make("energy", "c-number energies of the shifted vacuum, approaches I and II.")
_make("weyl", "Normal forms and state values for Weyl word scripts.")
_make("check", "Oracle suite for the propagator calibration.")


if __name__ == "__main__":  # pragma: no cover
    main()
