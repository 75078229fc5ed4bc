"""JSON result documents and CSV exports.

Floats go through ``float.__repr__`` in JSON (shortest string that
round-trips, never more than 17 significant digits) and through ``%.17g``
in CSV, so every number written reads back bit-identically.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .cr3bp import Cr3bpConfig
from .lpv import AffineMatrixFunction, LpvPlant, ParameterBox
from .synthesis import SynthesisResult, noise_angle

FORMAT = "lpvp-result"
VERSION = 1


class DocumentError(ValueError):
    """A result or plant document is malformed or inconsistent."""


def _num(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _arr(a):
    if a is None:
        return None
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return _num(a)
    return [_arr(r) for r in a]


def _unnum(v):
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            raise DocumentError(f"not a number: {v!r}") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DocumentError(f"not a number: {v!r}")
    return float(v)


def _unarr(v, ndim=None, name="array"):
    if v is None:
        return None
    try:
        a = np.array(_deep(v), dtype=float)
    except (TypeError, ValueError) as exc:
        raise DocumentError(f"{name}: {exc}") from None
    if ndim is not None and a.ndim != ndim:
        raise DocumentError(f"{name}: expected {ndim}-d array, got shape {a.shape}")
    return a


def _deep(v):
    if isinstance(v, list):
        return [_deep(x) for x in v]
    return _unnum(v)


def affine_to_dict(f: AffineMatrixFunction) -> dict:
    return {"constant": _arr(f.constant),
            "basis": {str(i): _arr(m) for i, m in f.basis},
            "n_params": f.n_params}


def affine_from_dict(d, name="matrix") -> AffineMatrixFunction:
    if isinstance(d, list):
        return AffineMatrixFunction.const(_unarr(d, 2, name))
    try:
        basis = {int(k): _unarr(m, 2, f"{name}.basis[{k}]") for k, m in d.get("basis", {}).items()}
        return AffineMatrixFunction(_unarr(d["constant"], 2, name), basis, d.get("n_params"))
    except (KeyError, AttributeError) as exc:
        raise DocumentError(f"{name}: malformed affine matrix ({exc})") from None


def plant_to_dict(plant: LpvPlant) -> dict:
    return {
        "A": affine_to_dict(plant.A), "B_d": affine_to_dict(plant.B_d),
        "C_y": affine_to_dict(plant.C_y), "C_z": affine_to_dict(plant.C_z),
        "b": affine_to_dict(plant.b), "d": affine_to_dict(plant.d),
        "D_d": affine_to_dict(plant.D_d), "S_d": _arr(plant.S_d),
        "box": {"lower": _arr(plant.box.lower), "upper": _arr(plant.box.upper)},
        "channel_names": list(plant.channel_names),
    }


def plant_from_dict(d: dict) -> LpvPlant:
    try:
        box = ParameterBox(_unarr(d["box"]["lower"], 1, "box.lower"),
                           _unarr(d["box"]["upper"], 1, "box.upper"))
        opt = {k: affine_from_dict(d[k], k) for k in ("b", "d", "D_d") if d.get(k) is not None}
        return LpvPlant(A=affine_from_dict(d["A"], "A"), B_d=affine_from_dict(d["B_d"], "B_d"),
                        C_y=affine_from_dict(d["C_y"], "C_y"), C_z=affine_from_dict(d["C_z"], "C_z"),
                        S_d=_unarr(d["S_d"], 2, "S_d"), box=box,
                        channel_names=tuple(d.get("channel_names", ())), **opt)
    except KeyError as exc:
        raise DocumentError(f"plant document lacks {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DocumentError):
            raise
        raise DocumentError(f"invalid plant: {exc}") from None


def cr3bp_config_to_dict(cfg: Cr3bpConfig) -> dict:
    out = asdict(cfg)
    out["initial_state"] = [_num(v) for v in cfg.initial_state]
    return {k: (_num(v) if isinstance(v, float) else v) for k, v in out.items()}


def cr3bp_config_from_dict(d: dict) -> Cr3bpConfig:
    allowed = set(Cr3bpConfig.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise DocumentError(f"unknown cr3bp settings: {sorted(unknown)}")
    kw = {}
    for k, v in d.items():
        kw[k] = tuple(_unnum(x) for x in v) if k == "initial_state" else _unnum(v)
    try:
        return Cr3bpConfig(**kw)
    except ValueError as exc:
        raise DocumentError(str(exc)) from None


def result_to_dict(res: SynthesisResult, plant: LpvPlant | None = None,
                   cr3bp_config: Cr3bpConfig | None = None) -> dict:
    """Result document; ``plant`` and ``cr3bp_config`` make it self-contained."""
    doc = {
        "format": FORMAT, "version": VERSION,
        "norm": res.norm, "gamma": _num(res.gamma), "p": _num(res.p), "eps": _num(res.eps),
        "status": res.status, "solver_status": res.solver_status, "backend": res.backend,
        "L": _arr(res.L), "X": _arr(res.X), "Y": _arr(res.Y), "Q": _arr(res.Q),
        "beta": _arr(res.beta), "kappa": _arr(res.kappa), "noise_scale": _arr(res.noise_scale),
        "objective_value": _num(res.objective_value), "optimal_value": _num(res.optimal_value),
        "residuals": {k: _num(v) for k, v in res.residuals.items()},
        "vertex_set": None if res.vertex_set is None else [_arr(v) for v in res.vertex_set],
        "active": None if res.active is None else list(res.active),
        "kappa_policy": list(res.kappa_policy), "margin": _num(res.margin),
        "polished": res.polished, "channel_names": list(res.channel_names),
        "advisory_gamma": None if res.advisory_gamma is None else _num(res.advisory_gamma),
    }
    if plant is not None:
        doc["plant"] = plant_to_dict(plant)
    if cr3bp_config is not None:
        doc["cr3bp"] = cr3bp_config_to_dict(cr3bp_config)
    return doc


def result_from_dict(doc: dict) -> SynthesisResult:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise DocumentError(f"not a {FORMAT} document")
    try:
        vs = doc.get("vertex_set")
        res = SynthesisResult(
            norm=doc["norm"], gamma=_unnum(doc["gamma"]), status=doc["status"],
            p=_unnum(doc["p"]), eps=_unnum(doc["eps"]),
            L=_unarr(doc.get("L"), 2, "L"), X=_unarr(doc.get("X"), 2, "X"),
            Y=_unarr(doc.get("Y"), 2, "Y"), Q=_unarr(doc.get("Q"), 2, "Q"),
            beta=_unarr(doc.get("beta"), 1, "beta"), kappa=_unarr(doc.get("kappa"), 1, "kappa"),
            noise_scale=_unarr(doc.get("noise_scale"), 1, "noise_scale"),
            objective_value=_unnum(doc.get("objective_value", "nan")),
            optimal_value=_unnum(doc.get("optimal_value", "nan")),
            residuals={k: _unnum(v) for k, v in doc.get("residuals", {}).items()},
            vertex_set=None if vs is None else tuple(_unarr(v, 1, "vertex") for v in vs),
            active=None if doc.get("active") is None else tuple(bool(a) for a in doc["active"]),
            kappa_policy=tuple(doc.get("kappa_policy", ("sqrt", "inverse"))),
            margin=_unnum(doc.get("margin", "nan")), polished=bool(doc.get("polished", False)),
            backend=doc.get("backend", ""), solver_status=doc.get("solver_status", ""),
            channel_names=tuple(doc.get("channel_names", ())),
            advisory_gamma=None if doc.get("advisory_gamma") is None
            else _unnum(doc["advisory_gamma"]),
        )
    except KeyError as exc:
        raise DocumentError(f"result document lacks {exc}") from None
    if res.ok:
        if res.L is None or res.noise_scale is None:
            raise DocumentError("optimal result without L or noise_scale")
        if res.L.shape[1] != len(res.noise_scale):
            raise DocumentError(f"L has {res.L.shape[1]} columns but {len(res.noise_scale)} channels")
    return res


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (float, np.floating)):
        return _num(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


def write_json(path, doc) -> Path:
    """Write ``doc``; non-finite floats become the strings ``nan``/``inf``/``-inf``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(doc), indent=1, allow_nan=False) + "\n")
    return path


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                            f"{exc.msg}") from None


def write_result(path, res, plant=None, cr3bp_config=None) -> Path:
    return write_json(path, result_to_dict(res, plant, cr3bp_config))


def read_result(path):
    """Returns ``(result, plant or None, cr3bp config or None)``."""
    doc = read_json(path)
    res = result_from_dict(doc)
    plant = plant_from_dict(doc["plant"]) if doc.get("plant") else None
    cfg = cr3bp_config_from_dict(doc["cr3bp"]) if doc.get("cr3bp") else None
    if plant is not None and res.L is not None and res.L.shape != (plant.n_x, plant.n_y):
        raise DocumentError(f"L has shape {res.L.shape}, plant needs {(plant.n_x, plant.n_y)}")
    return res, plant, cfg


def _fmt(v) -> str:
    return "%.17g" % v


def trace_header(n_z: int = 2) -> list:
    return (["t"] + [f"x{i}" for i in range(1, 5)] + [f"xhat{i}" for i in range(1, 5)]
            + [f"y{i}" for i in range(1, 7)] + [f"n{i}" for i in range(1, 7)]
            + [f"eps{i}" for i in range(1, n_z + 1)])


def write_trace_csv(path, trace) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.column_stack([trace.times, trace.true_states, trace.estimates,
                            trace.measurements, trace.noise, trace.error_z])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_header(trace.error_z.shape[1]))
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[list, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DocumentError(f"{path}: empty CSV")
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)


def sweep_header(n_y: int) -> list:
    return (["gamma", "status"] + [f"beta{i}" for i in range(1, n_y + 1)]
            + [f"kappa{i}" for i in range(1, n_y + 1)] + ["theta1_deg"])


def write_sweep_csv(path, results, n_y: int) -> Path:
    """One row per gamma; ``theta1_deg`` is blank when undefined."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(sweep_header(n_y))
        for r in results:
            if r.ok:
                try:
                    ang = _fmt(noise_angle(r.kappa[0], r.kappa[1]).from_sin_deg)
                except ValueError:
                    ang = ""
                vals = [_fmt(v) for v in r.beta] + [_fmt(v) for v in r.kappa] + [ang]
            else:
                vals = [""] * (2 * n_y + 1)
            w.writerow([_fmt(r.gamma), r.status] + vals)
    return path
