"""Scenario files.

A scenario is a strict JSON object driving one pipeline run.  Particles
can be given directly::

    {
      "kernel": {"family": "raised_cosine", "params": [0.1]},
      "particles": {"x": [-1.0, 1.0], "v": [1.0, -1.0], "m": [0.5, 0.5]},
      "horizon": 2.0
    }

or through continuum initial data::

    {
      "kernel": {"family": "downstream_cosine", "params": [0.4]},
      "initial": {
        "M0": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
        "u0": {"kind": "const", "value": 0.0}
      },
      "N": 256,
      "horizon": 2.0
    }

Optional keys: ``snapshots`` (a list of times, or
``{"kind": "uniform"|"geometric", "count": k}``), ``tolerances``
(``substep``, ``event_time``, ``gap``), ``certificates`` (thresholds
and alphas), ``Ns``/``N_ref`` for convergence studies, ``seed``
(recorded in summaries for provenance; nothing in the pipeline draws
randomness), ``out_dir``.  Unknown keys are rejected so typos fail
loudly; every validation error names the offending key.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cumulative import PiecewiseLinearFlux
from .discretize import InitialDatum, VelocityProfile, particles_from_data
from .dynamics import ParticleSystem, Tolerances, compute_psi
from .errors import ParseError, ValidationError
from .kernels import BUILTIN_FAMILIES, Kernel, make_builtin

__all__ = [
    "CertificateThresholds",
    "Scenario",
    "parse_scenario",
    "scenario_from_dict",
    "resolve_particles",
]

DEFAULT_ALPHAS = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class CertificateThresholds:
    """Pass/fail thresholds for the certificate pipeline."""

    rh_tol: float = 1e-8
    oleinik_tol: float = 1e-8
    kruzkov_tol: float = 1e-6
    quad_tol: float = 1e-6
    alphas: tuple = DEFAULT_ALPHAS


@dataclass(frozen=True)
class Scenario:
    name: str
    kernel: Kernel
    horizon: float
    system: ParticleSystem | None = None
    datum: InitialDatum | None = None
    u0: VelocityProfile | None = None
    n: int | None = None
    ns: tuple[int, ...] = ()
    n_ref: int = 4096
    snapshots: tuple[float, ...] = ()
    tolerances: Tolerances = field(default_factory=Tolerances)
    certificates: CertificateThresholds = field(default_factory=CertificateThresholds)
    seed: int | None = None
    out_dir: str | None = None

    def summary_header(self) -> dict:
        d = {
            "scenario": self.name,
            "kernel": {"family": self.kernel.name, "params": list(self.kernel.params)},
            "horizon": self.horizon,
        }
        if self.n is not None:
            d["N"] = self.n
        if self.seed is not None:
            d["seed"] = self.seed
        return d


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ValidationError(f"missing key {path}{key}")
    return d[key]


def _no_extras(d: dict, allowed: set, path: str):
    extra = set(d) - allowed
    if extra:
        raise ValidationError(f"unknown key {path}{sorted(extra)[0]}")


def _positive(v, path: str) -> float:
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise ValidationError(f"{path} must be a number") from None
    if not (v > 0 and math.isfinite(v)):
        raise ValidationError(f"{path} must be positive and finite")
    return v


def _float_list(v, path: str) -> np.ndarray:
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{path} must be a list of numbers") from None
    if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ValidationError(f"{path} must be a non-empty list of finite numbers")
    return arr


def _parse_kernel(raw: dict) -> Kernel:
    spec = _require(raw, "kernel", "")
    if not isinstance(spec, dict):
        raise ValidationError("kernel must be an object")
    _no_extras(spec, {"family", "params"}, "kernel.")
    family = _require(spec, "family", "kernel.")
    if family not in BUILTIN_FAMILIES:
        raise ValidationError(
            f"kernel.family {family!r} unknown; choose one of {', '.join(BUILTIN_FAMILIES)}"
        )
    params = _require(spec, "params", "kernel.")
    arr = _float_list(params, "kernel.params")
    if arr.size != 1 or arr[0] <= 0:
        raise ValidationError("kernel.params must be a single positive radius")
    return make_builtin(family, arr)


def _parse_particles(spec: dict) -> ParticleSystem:
    _no_extras(spec, {"x", "v", "m"}, "particles.")
    x = _float_list(_require(spec, "x", "particles."), "particles.x")
    v = _float_list(_require(spec, "v", "particles."), "particles.v")
    m = _float_list(_require(spec, "m", "particles."), "particles.m")
    if not (x.size == v.size == m.size):
        raise ValidationError("particles.x, particles.v, particles.m must have equal length")
    try:
        return ParticleSystem.create(x=x, v=v, m=m)
    except ValueError as e:
        raise ValidationError(f"particles invalid: {e}") from None


def _parse_m0(spec: dict) -> InitialDatum:
    kind = _require(spec, "kind", "initial.M0.")
    try:
        if kind == "uniform":
            _no_extras(spec, {"kind", "lo", "hi"}, "initial.M0.")
            return InitialDatum.uniform(
                _require(spec, "lo", "initial.M0."), _require(spec, "hi", "initial.M0.")
            )
        if kind == "atoms":
            _no_extras(spec, {"kind", "positions", "masses"}, "initial.M0.")
            pos = _float_list(_require(spec, "positions", "initial.M0."), "initial.M0.positions")
            mas = _float_list(_require(spec, "masses", "initial.M0."), "initial.M0.masses")
            return InitialDatum.from_atoms(pos, mas)
        if kind == "table":
            _no_extras(spec, {"kind", "x", "cdf"}, "initial.M0.")
            xs = _float_list(_require(spec, "x", "initial.M0."), "initial.M0.x")
            cd = _float_list(_require(spec, "cdf", "initial.M0."), "initial.M0.cdf")
            return InitialDatum.from_table(xs, cd)
    except ValueError as e:
        raise ValidationError(f"initial.M0 invalid ({'masses' if kind == 'atoms' else kind}): {e}") from None
    raise ValidationError(f"initial.M0.kind {kind!r} unknown (uniform, atoms, table)")


def _parse_u0(spec: dict) -> VelocityProfile:
    kind = _require(spec, "kind", "initial.u0.")
    try:
        if kind == "const":
            _no_extras(spec, {"kind", "value"}, "initial.u0.")
            return VelocityProfile.constant(_require(spec, "value", "initial.u0."))
        if kind == "affine":
            _no_extras(spec, {"kind", "intercept", "slope"}, "initial.u0.")
            return VelocityProfile.affine(
                _require(spec, "intercept", "initial.u0."),
                _require(spec, "slope", "initial.u0."),
            )
        if kind == "table":
            _no_extras(spec, {"kind", "x", "u"}, "initial.u0.")
            return VelocityProfile.from_table(
                _float_list(_require(spec, "x", "initial.u0."), "initial.u0.x"),
                _float_list(_require(spec, "u", "initial.u0."), "initial.u0.u"),
            )
    except ValueError as e:
        raise ValidationError(f"initial.u0 invalid: {e}") from None
    raise ValidationError(f"initial.u0.kind {kind!r} unknown (const, affine, table)")


def _parse_snapshots(raw, horizon: float) -> tuple[float, ...]:
    if raw is None:
        raw = {"kind": "geometric", "count": 12}
    if isinstance(raw, dict):
        _no_extras(raw, {"kind", "count"}, "snapshots.")
        kind = _require(raw, "kind", "snapshots.")
        count = int(_require(raw, "count", "snapshots."))
        if count < 2:
            raise ValidationError("snapshots.count must be at least 2")
        if kind == "uniform":
            times = np.linspace(0.0, horizon, count)
        elif kind == "geometric":
            times = np.concatenate([[0.0], horizon * 0.5 ** np.arange(count - 2, -1, -1.0)])
        else:
            raise ValidationError(f"snapshots.kind {kind!r} unknown (uniform, geometric)")
        return tuple(float(t) for t in times)
    times = np.sort(_float_list(raw, "snapshots"))
    if times[0] < 0.0 or times[-1] > horizon * (1 + 1e-12):
        raise ValidationError("snapshots must lie within [0, horizon]")
    return tuple(float(t) for t in times)


def _parse_tolerances(raw) -> Tolerances:
    if raw is None:
        return Tolerances()
    _no_extras(raw, {"substep", "event_time", "gap"}, "tolerances.")
    kw = {}
    for key in ("substep", "event_time", "gap"):
        if key in raw:
            kw[key] = _positive(raw[key], f"tolerances.{key}")
    return Tolerances(**kw)


def _parse_certificates(raw) -> CertificateThresholds:
    if raw is None:
        return CertificateThresholds()
    _no_extras(raw, {"rh_tol", "oleinik_tol", "kruzkov_tol", "quad_tol", "alphas"}, "certificates.")
    kw = {}
    for key in ("rh_tol", "oleinik_tol", "kruzkov_tol", "quad_tol"):
        if key in raw:
            kw[key] = _positive(raw[key], f"certificates.{key}")
    if "alphas" in raw:
        alphas = _float_list(raw["alphas"], "certificates.alphas")
        if np.any(alphas < 0) or np.any(alphas > 1):
            raise ValidationError("certificates.alphas must lie in [0, 1]")
        kw["alphas"] = tuple(float(a) for a in alphas)
    return CertificateThresholds(**kw)


_TOP_KEYS = {
    "kernel",
    "particles",
    "initial",
    "N",
    "Ns",
    "N_ref",
    "horizon",
    "snapshots",
    "tolerances",
    "certificates",
    "seed",
    "out_dir",
}


def scenario_from_dict(raw: dict, name: str = "scenario") -> Scenario:
    if not isinstance(raw, dict):
        raise ValidationError("scenario must be a JSON object")
    _no_extras(raw, _TOP_KEYS, "")
    kernel = _parse_kernel(raw)
    horizon = _positive(_require(raw, "horizon", ""), "horizon")

    system = datum = u0 = None
    n = None
    if "particles" in raw and "initial" in raw:
        raise ValidationError("give either particles or initial, not both")
    if "particles" in raw:
        system = _parse_particles(raw["particles"])
    elif "initial" in raw:
        spec = raw["initial"]
        _no_extras(spec, {"M0", "u0", "R0"}, "initial.")
        datum = _parse_m0(_require(spec, "M0", "initial."))
        u0 = _parse_u0(_require(spec, "u0", "initial."))
        if "R0" in spec:
            r0 = _positive(spec["R0"], "initial.R0")
            if r0 < datum.r0 - 1e-12:
                raise ValidationError("initial.R0 smaller than the datum's own support radius")
        n = raw.get("N")
        if n is not None:
            n = int(n)
            if n < 1:
                raise ValidationError("N must be a positive integer")
    else:
        raise ValidationError("missing key particles or initial")

    ns = tuple(int(v) for v in raw.get("Ns", ()))
    if any(v < 1 for v in ns):
        raise ValidationError("Ns entries must be positive integers")
    n_ref = int(raw.get("N_ref", 4096))
    if ns and n_ref <= max(ns):
        raise ValidationError("N_ref must exceed every entry of Ns")

    seed = raw.get("seed")
    if seed is not None:
        seed = int(seed)

    return Scenario(
        name=name,
        kernel=kernel,
        horizon=horizon,
        system=system,
        datum=datum,
        u0=u0,
        n=n,
        ns=ns,
        n_ref=n_ref,
        snapshots=_parse_snapshots(raw.get("snapshots"), horizon),
        tolerances=_parse_tolerances(raw.get("tolerances")),
        certificates=_parse_certificates(raw.get("certificates")),
        seed=seed,
        out_dir=raw.get("out_dir"),
    )


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from None
    return scenario_from_dict(raw, name=Path(path).stem)


def resolve_particles(scn: Scenario) -> tuple[ParticleSystem, PiecewiseLinearFlux]:
    """Initial particle system and matching flux for a scenario.

    Direct particle lists get the flux with slopes psi_i computed from
    their own configuration; continuum data goes through the
    discretization pipeline (requires N).
    """
    if scn.system is not None:
        psi = compute_psi(scn.system, scn.kernel)
        return scn.system, PiecewiseLinearFlux.from_slopes(scn.system.m, psi)
    if scn.n is None:
        raise ValidationError("N is required to discretize continuum initial data")
    return particles_from_data(scn.datum, scn.u0, scn.kernel, scn.n)
