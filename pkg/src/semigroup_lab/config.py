"""Experiment configuration: YAML schema, validation and object construction.

The schema is versioned through ``schema_version``; unknown keys anywhere are
rejected so that an experiment is fully described by its file.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import yaml

from . import coefficient_models as cm

SCHEMA_VERSION = 1
TASKS = ("hypotheses", "intervals", "identity", "dissipativity", "analyticity",
         "weighted", "appendixB", "evolve")


class ConfigError(ValueError):
    """Schema violation; the CLI maps it to exit code 2."""


# allowed keys per section; a nested dict means a subsection
SCHEMA = {
    "schema_version": int,
    "seed": int,
    "output": str,
    "tasks": list,
    "field": {
        "family": str,
        "d": int,
        "m": int,
        "alpha": float,
        "params": {
            "k0": float, "B": list, "Q0": list, "G": list, "lambda_G": float,
            "k2": float, "k3": float, "diag_q": list, "Q0_antisym": list, "P": list, "E": list,
        },
        "potential": {"V0": list, "v_alpha": float},
    },
    "constants": {"c0": float, "scriptC": float},
    "sample_plan": {"lo": list, "hi": list, "mode": str, "resolution": int, "count": int},
    "weights": {"v": str, "v0": float, "gamma": float, "C_gamma": float, "c1": float, "psi": str},
    "exponents": None,  # "auto" or a list of numbers
    "quadrature": {"h": float, "n_functions": int, "widths": list, "center_box": float,
                   "kind": str, "rule": str, "identity_tol": float, "margin_tol": float},
    "appendix_b": {"instances": int},
    "evolve": {"N": int, "lo": float, "hi": float, "dt": float, "steps": int, "scheme": str,
               "audit_tol": float, "p_list": None, "width": float, "export_matrix": bool},
}

FAMILIES = ("heat", "case_I", "case_II", "case_III")


def _check(node, schema, path):
    if not isinstance(node, dict):
        raise ConfigError(f"section '{path or '<root>'}' must be a mapping")
    for key, val in node.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in schema:
            raise ConfigError(f"unknown key '{where}'")
        rule = schema[key]
        if isinstance(rule, dict):
            _check(val, rule, where)
        elif rule is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"key '{where}' must be a number")
        elif rule is int:
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"key '{where}' must be an integer")
        elif rule is not None and not isinstance(val, rule):
            raise ConfigError(f"key '{where}' must be of type {rule.__name__}")


def validate(cfg):
    """Check a parsed config dict; raises :class:`ConfigError`."""
    if cfg is None:
        raise ConfigError("config is empty")
    _check(cfg, SCHEMA, "")
    ver = cfg.get("schema_version")
    if ver != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {ver!r}")
    fld = cfg.get("field")
    if not fld or "family" not in fld:
        raise ConfigError("missing key 'field.family'")
    if fld["family"] == "custom":
        raise ConfigError("custom fields are only available through the library API")
    if fld["family"] not in FAMILIES:
        raise ConfigError(f"unknown family '{fld['family']}' (choose from {', '.join(FAMILIES)})")
    for key in ("d", "m"):
        if key not in fld or fld[key] < 1:
            raise ConfigError(f"missing or invalid key 'field.{key}'")
    tasks = cfg.get("tasks", list(TASKS))
    for t in tasks:
        if t not in TASKS:
            raise ConfigError(f"unknown task '{t}'")
    if "weighted" in tasks and "weights" not in cfg:
        raise ConfigError("task 'weighted' requires a 'weights' section")
    exps = cfg.get("exponents", "auto")
    if exps != "auto" and not (isinstance(exps, list) and all(
            isinstance(p, (int, float)) and not isinstance(p, bool) and p > 1 for p in exps)):
        raise ConfigError("key 'exponents' must be 'auto' or a list of numbers > 1")
    ev = cfg.get("evolve", {})
    pl = ev.get("p_list", "auto")
    if pl != "auto" and not (isinstance(pl, list) and all(isinstance(p, (int, float)) for p in pl)):
        raise ConfigError("key 'evolve.p_list' must be 'auto' or a list of numbers")
    w = cfg.get("weights", {})
    if w.get("v", "quadratic") not in ("quadratic", "constant"):
        raise ConfigError("key 'weights.v' must be 'quadratic' or 'constant'")
    if w.get("psi", "default") != "default":
        raise ConfigError("key 'weights.psi' only supports 'default'")
    sp_ = cfg.get("sample_plan", {})
    if sp_.get("mode", "grid") not in ("grid", "random"):
        raise ConfigError("key 'sample_plan.mode' must be 'grid' or 'random'")
    return cfg


def load(path):
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return validate(cfg)


def _arr(x, name, shape=None):
    try:
        a = np.asarray(x, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"key '{name}' must be a numeric array") from None
    if shape is not None and a.shape != shape:
        raise ConfigError(f"key '{name}' must have shape {shape}, got {a.shape}")
    return a


def _default_Q0(rng, d):
    M = rng.standard_normal((d, d))
    return M @ M.T + d * np.eye(d)


def build_field(cfg, seed):
    """Construct the coefficient field named in the config."""
    f = cfg["field"]
    d, m = f["d"], f["m"]
    alpha = float(f.get("alpha", 0.1))
    params = f.get("params", {})
    pot = f.get("potential", {})
    V0 = _arr(pot["V0"], "field.potential.V0", (m, m)) if "V0" in pot else None
    v_alpha = pot.get("v_alpha")
    rng = np.random.default_rng(seed)
    fam = f["family"]
    try:
        if fam == "heat":
            return cm.make_heat(d, m, V0=V0, v_alpha=v_alpha)
        Q0 = _arr(params["Q0"], "field.params.Q0", (d, d)) if "Q0" in params else _default_Q0(rng, d)
        if fam == "case_I":
            k0 = float(params.get("k0", 0.1 / (m * d)))
            if "B" in params:
                B = _arr(params["B"], "field.params.B", (d, d, m, m))
            else:
                W = rng.standard_normal((d * m, d * m))
                S = W @ W.T
                B = S.reshape(d, m, d, m).transpose(0, 2, 1, 3)
                B = B / np.abs(B).max()
            return cm.make_symmetric_case_I(Q0, k0, B, V0=V0, alpha=alpha, v_alpha=v_alpha)
        if fam == "case_II":
            if "G" in params:
                G = _arr(params["G"], "field.params.G", (m, m))
            else:
                lam = float(params.get("lambda_G", 0.2))
                R = rng.random((m, m))
                G = R @ R.T + np.diag(rng.random(m))
                G = G * (lam / np.linalg.eigvalsh((G + G.T) / 2)[-1])
            return cm.make_symmetric_case_II(Q0, G, V0=V0, alpha=alpha, v_alpha=v_alpha)
        k2 = float(params.get("k2", 0.05))
        k3 = float(params.get("k3", 0.025))
        dq, K, P, E = cm.random_case_III_parts(rng, d, m, k2, k3)
        if "diag_q" in params:
            dq = _arr(params["diag_q"], "field.params.diag_q", (d,))
        if "Q0_antisym" in params:
            K = _arr(params["Q0_antisym"], "field.params.Q0_antisym", (d, d))
        if "P" in params:
            P = _arr(params["P"], "field.params.P", (d, m, m))
        if "E" in params:
            E = _arr(params["E"], "field.params.E", (d, d, m, m))
        return cm.make_diag_antisym(dq, K, k2, k3, P, E, V0=V0, alpha=alpha, v_alpha=v_alpha)
    except cm.PreconditionError as exc:
        raise ConfigError(f"field parameters violate the family preconditions: {exc}") from None


def build_plan(cfg, d, seed):
    sp_ = cfg.get("sample_plan", {})
    lo = sp_.get("lo", [-1.0] * d)
    hi = sp_.get("hi", [1.0] * d)
    if len(lo) != d or len(hi) != d:
        raise ConfigError(f"sample_plan corners must have length {d}")
    try:
        return cm.SamplePlan(lo, hi, mode=sp_.get("mode", "grid"),
                             resolution=sp_.get("resolution", 9),
                             count=sp_.get("count", 1000), seed=seed)
    except ValueError as exc:
        raise ConfigError(f"invalid sample_plan: {exc}") from None


def build_weights(cfg):
    w = cfg.get("weights")
    if w is None:
        return None
    kind = w.get("v", "quadratic")
    c1 = w.get("c1", 1.0)
    if kind == "constant":
        out = cm.constant_potential_weight(float(w.get("v0", 1.0)), c1=c1)
    else:
        out = cm.quadratic_potential_weight(gamma=float(w.get("gamma", 2.0)),
                                            C_gamma=float(w.get("C_gamma", 0.0)), c1=c1)
    if "gamma" in w:
        out.gamma = float(w["gamma"])
    if "C_gamma" in w:
        out.C_gamma = float(w["C_gamma"])
    if "v0" in w:
        out.v0 = float(w["v0"])
    out.psi = cm.default_log_weight()
    return out


def rationalize(x, max_den=10 ** 6, rtol=1e-12):
    """A nearby simple fraction when one lies within ``rtol``; else the float."""
    if isinstance(x, Fraction):
        return x
    fr = Fraction(repr(float(x))) if len(repr(float(x))) <= 12 else Fraction(float(x)).limit_denominator(max_den)
    if abs(float(fr) - float(x)) <= rtol * max(1.0, abs(float(x))):
        return fr
    return float(x)


@dataclass
class Experiment:
    cfg: dict
    seed: int
    out_dir: str
    tasks: tuple
