"""JSON run configurations: schemas, validation and object builders."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from fracalc.errors import ConfigError
from fracalc.spatial import PRESETS, EllipticCoefficients, SpatialGrid, SpectralBasis, preset
from fracalc.timegrid import DistributionalSource, GridFunction, TimeGrid

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_num_list = {"type": "array", "items": _num}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_named = {"name": {"enum": ["constant", "sin", "cos", "exp"]}, "amplitude": _num, "rate": _num}

# nodal data: either explicit values or a named closed form
TIME_FUNCTION = {
    "oneOf": [
        _obj({"type": {"const": "grid"}, "values": _num_list}, ["type", "values"]),
        _obj({"type": {"const": "grid"}, **_named}, ["type", "name"]),
    ]
}

TIME_SOURCE = {
    "oneOf": [
        _obj({"type": {"const": "none"}}, ["type"]),
        _obj({"type": {"const": "grid"}, "values": _num_list}, ["type", "values"]),
        _obj({"type": {"const": "grid"}, **_named}, ["type", "name"]),
        _obj({"type": {"const": "power"}, "coeffs": _num_list, "exponents": _num_list}, ["type", "coeffs", "exponents"]),
        _obj({"type": {"const": "delta"}, "t0": _pos, "weight": _num}, ["type", "t0"]),
        _obj(
            {"type": {"const": "deriv_of"}, "order": _pos, "base": {"$ref": "#/definitions/time_function"}},
            ["type", "order", "base"],
        ),
    ]
}

SPATIAL = _obj(
    {
        "length": _pos,
        "m": {"type": "integer", "minimum": 3},
        "preset": {"enum": list(PRESETS)},
        "coeffs": _obj({"a": _num_list, "b": _num_list, "c": _num_list, "kappa": _pos}, ["a", "kappa"]),
    },
    ["length", "m"],
)

PROFILE = {
    "oneOf": [
        _obj({"preset": {"const": "mode"}, "index": {"type": "integer", "minimum": 1}, "scale": _num}, ["preset", "index"]),
        _obj({"preset": {"enum": ["zero", "sine", "bump", "ones", "ramp"]}, "scale": _num}, ["preset"]),
        _obj({"array": _num_list}, ["array"]),
    ]
}

_defs = {"time_function": TIME_FUNCTION, "time_source": TIME_SOURCE, "spatial": SPATIAL, "profile": PROFILE}
_ref = {k: {"$ref": f"#/definitions/{k}"} for k in _defs}
_time = {"horizon": _pos, "grid_n": {"type": "integer", "minimum": 4}}
_version = {"schema": {"const": SCHEMA_VERSION}}


def _top(props: dict, required=()) -> dict:
    out = _obj({**_version, **props}, ["schema", *required])
    out["definitions"] = _defs
    return out


SCHEMAS = {
    "ml-eval": _top(
        {"alpha": _pos, "beta": _pos, "z": _num_list, "branch": {"enum": ["series", "asymptotic", "contour"]}},
        ["alpha", "beta", "z"],
    ),
    "frac-op": _top(
        {
            **_time,
            "op": {"enum": ["J", "D", "Jdual"]},
            "alpha": _pos,
            "input_sha256": {"type": "string"},
        },
        ["op", "alpha", "input_sha256"],
    ),
    "ode-solve": _top(
        {
            **_time,
            "alpha": _pos,
            "lambda": _num,
            "a": _num,
            "source": _ref["time_source"],
            "multi_terms": {"type": "array", "items": _obj({"order": _pos, "coeff": _num}, ["order", "coeff"])},
            "method": {"enum": ["auto", "formula", "volterra", "weak"]},
        },
        ["horizon", "grid_n", "alpha", "lambda", "a"],
    ),
    "pde-solve": _top(
        {
            **_time,
            "alpha": _pos,
            "spatial": _ref["spatial"],
            "initial": _ref["profile"],
            "source": {
                "oneOf": [
                    _obj({"separable": _obj({"mu": _ref["time_source"], "f": _ref["profile"]}, ["mu", "f"])}, ["separable"]),
                    _obj({"array": {"type": "array", "items": _num_list}}, ["array"]),
                ]
            },
            "multi_terms": {
                "type": "array",
                "items": _obj({"order": _pos, "q": {"oneOf": [_num, _num_list]}}, ["order", "q"]),
            },
            "solver": _obj(
                {
                    "tol": _pos,
                    "max_iter": {"type": "integer", "minimum": 1},
                    "method": {"enum": ["auto", "symmetric", "mild", "multiterm", "weak"]},
                }
            ),
        },
        ["horizon", "grid_n", "alpha", "spatial"],
    ),
    "inverse-source": _top(
        {
            **_time,
            "alpha": _pos,
            "spatial": _ref["spatial"],
            "f": _ref["profile"],
            "theta": _ref["profile"],
            "eps": {"type": "number", "minimum": 0},
            "floor": _pos,
            "synthetic": _obj(
                {"mu": _ref["time_source"], "oversample": {"type": "integer", "minimum": 2}, "noise": {"type": "number", "minimum": 0}},
                ["mu"],
            ),
        },
        ["horizon", "grid_n", "alpha", "spatial", "f", "theta"],
    ),
    "convergence-study": _top(
        {
            "problem": {"enum": ["frac_integral", "ode", "pde"]},
            "alpha": _pos,
            "exponent": _num,
            "lam": _num,
            "horizon": _pos,
            "n_list": {"type": "array", "items": {"type": "integer", "minimum": 4}},
            "h_list": {"type": "array", "items": _pos},
            "grid_n": {"type": "integer", "minimum": 4},
        },
        ["problem"],
    ),
}


def load_config(path: str | Path, subcommand: str) -> dict:
    """Read and validate a JSON config.

    Raises
    ------
    ConfigError
        On unreadable files, invalid JSON or schema violations (including unknown keys).
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc.msg} at line {exc.lineno}") from exc
    validate(doc, subcommand)
    return doc


def validate(doc, subcommand: str) -> None:
    try:
        jsonschema.validate(doc, SCHEMAS[subcommand])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message.splitlines()[0][:200]}") from None


# ---------------------------------------------------------------------------
# builders


def time_grid(doc: dict) -> TimeGrid:
    return TimeGrid(float(doc.get("horizon", 1.0)), int(doc["grid_n"]))


def time_function(spec: dict, grid: TimeGrid) -> GridFunction:
    if "values" in spec:
        vals = np.asarray(spec["values"], dtype=float)
        if vals.shape != (grid.n + 1,):
            raise ConfigError(f"grid values need {grid.n + 1} entries, got {vals.shape[0]}")
        return GridFunction(grid, vals)
    t = grid.nodes
    amp, rate = float(spec.get("amplitude", 1.0)), float(spec.get("rate", 1.0))
    name = spec["name"]
    vals = {
        "constant": lambda: np.ones_like(t),
        "sin": lambda: np.sin(rate * t),
        "cos": lambda: np.cos(rate * t),
        "exp": lambda: np.exp(rate * t),
    }[name]()
    return GridFunction(grid, amp * vals)


def time_source(spec: dict | None, grid: TimeGrid) -> DistributionalSource | None:
    if spec is None or spec["type"] == "none":
        return None
    kind = spec["type"]
    if kind == "power":
        if len(spec["coeffs"]) != len(spec["exponents"]) or not spec["coeffs"]:
            raise ConfigError("power source needs matching nonempty coeffs and exponents")
        return DistributionalSource.power(spec["coeffs"], spec["exponents"])
    if kind == "delta":
        return DistributionalSource.delta(float(spec["t0"]), float(spec.get("weight", 1.0)))
    if kind == "deriv_of":
        return DistributionalSource.deriv_of(float(spec["order"]), time_function(spec["base"], grid))
    return DistributionalSource.grid_data(time_function(spec, grid))


def spatial(doc: dict) -> tuple[SpatialGrid, EllipticCoefficients]:
    sp = doc["spatial"]
    grid = SpatialGrid(float(sp["length"]), int(sp["m"]))
    if "coeffs" in sp and "preset" in sp:
        raise ConfigError("spatial: give either preset or coeffs")
    if "coeffs" in sp:
        c = sp["coeffs"]
        m = grid.m
        a = np.asarray(c["a"], dtype=float)
        b = np.asarray(c.get("b", np.zeros(m)), dtype=float)
        cc = np.asarray(c.get("c", np.zeros(m)), dtype=float)
        if a.shape != (m + 1,) or b.shape != (m,) or cc.shape != (m,):
            raise ConfigError(f"spatial/coeffs: a needs {m + 1} midpoint values, b and c need {m}")
        return grid, EllipticCoefficients(a, b, cc, float(c["kappa"]))
    return grid, preset(sp.get("preset", "laplacian"), grid)


def profile(spec: dict | None, grid: SpatialGrid, basis: SpectralBasis | None = None) -> np.ndarray:
    x = grid.x
    if spec is None:
        return np.zeros(grid.m)
    if "array" in spec:
        arr = np.asarray(spec["array"], dtype=float)
        if arr.shape != (grid.m,):
            raise ConfigError(f"profile array needs {grid.m} entries, got {arr.shape[0]}")
        return arr
    scale = float(spec.get("scale", 1.0))
    name = spec["preset"]
    if name == "mode":
        k = int(spec["index"])
        if basis is None or k > basis.m:
            raise ConfigError(f"mode index {k} is out of range")
        return scale * basis.mode(k)
    ell = grid.length
    shapes = {
        "zero": np.zeros_like(x),
        "ones": np.ones_like(x),
        "sine": np.sin(np.pi * x / ell),
        "bump": np.exp(-40 * (x / ell - 0.5) ** 2),
        "ramp": x / ell,
    }
    return scale * shapes[name]
