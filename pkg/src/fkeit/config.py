"""Run configuration: TOML tables in, validated objects out.

A configuration has top-level keys ``problem``, ``n_paths``, ``probes``,
``workers`` and ``out`` plus the tables ``[domain]``, ``[conductivity]``,
``[simulation]``, ``[boundary]``, ``[electrodes]``, ``[trace]`` and
``[oracle]``.  Lengths are in domain units, times in diffusion-time units,
local times in units of boundary length per unit area.  See README.md for
every key.
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .boundary_data import BoundaryFunction
from .conductivity import ConductivityField
from .errors import ConfigError
from .geometry import Domain, ElectrodeConfig, domain_from_dict
from .reflecting_sde import SimulationParams

PROBLEMS = ("dirichlet", "continuum", "cem", "dtn", "trace", "jump", "calibrate", "oracle")

_TOP_KEYS = {"problem", "n_paths", "probes", "workers", "out", "domain", "conductivity", "simulation", "boundary",
             "electrodes", "trace", "oracle"}
_SIM_KEYS = {"dt", "seed", "local_time_constant", "max_time", "kill_threshold", "tail_tolerance"}
_TRACE_KEYS = {"t", "n_starts", "S", "ds", "bins", "min_gap"}
_ORACLE_KEYS = {"resolution", "problem"}


def _check_keys(table: dict, allowed: set, where: str) -> None:
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def build_conductivity(table: dict, domain: Domain, base_dir: Path | None = None) -> ConductivityField:
    s = dict(table)
    kind = s.pop("kind", "constant")
    collar = float(s.pop("collar", 0.0))
    blend = s.pop("blend_width", None)
    c0 = float(s.pop("c0", 100.0))
    try:
        if kind == "constant":
            f = ConductivityField.constant(s.pop("matrix", s.pop("value", 1.0)))
        elif kind == "radial":
            f = ConductivityField.radial(s.pop("coefficients"), s.pop("center", (0.0, 0.0)))
        elif kind == "bump":
            f = ConductivityField.bump(s.pop("amplitude"), s.pop("center", (0.0, 0.0)), s.pop("radius", 0.5),
                                       s.pop("background", 1.0))
        elif kind == "affine":
            f = ConductivityField.affine(s.pop("value", 1.0), s.pop("gradient", (0.0, 0.0)))
        elif kind == "grid":
            if "csv" in s:
                p = Path(s.pop("csv"))
                if base_dir is not None and not p.is_absolute():
                    p = base_dir / p
                f = ConductivityField.from_grid_csv(p)
            else:
                f = ConductivityField.grid_sampled(s.pop("values"), s.pop("bbox"))
        elif kind == "inclusions":
            f = ConductivityField.inclusions(s.pop("background", 1.0), s.pop("discs"), s.pop("width", 0.0))
        else:
            raise ConfigError(f"unknown conductivity kind {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"conductivity kind {kind!r} is missing key {exc}") from None
    if s:
        raise ConfigError(f"unknown keys in [conductivity]: {sorted(s)}")
    f = ConductivityField(f.kind, f.params, f.grid, domain, 0.0, 0.0, 1.0, 1.0, c0)
    if collar > 0:
        f = f.with_collar(domain, collar, None if blend is None else float(blend))
    return f


def build_boundary(table: dict, domain: Domain) -> BoundaryFunction:
    s = dict(table)
    kind = s.pop("type", "fourier")
    if kind == "fourier":
        f = BoundaryFunction.fourier(domain, s.pop("cos", ()), s.pop("sin", ()), s.pop("constant", 0.0))
    elif kind == "coordinate":
        f = BoundaryFunction.coordinate(domain, int(s.pop("axis")))
    elif kind == "constant":
        f = BoundaryFunction.constant_on(domain, float(s.pop("value")))
    else:
        raise ConfigError(f"unknown boundary data type {kind!r}")
    if s:
        raise ConfigError(f"unknown keys in [boundary]: {sorted(s)}")
    return f


def build_electrodes(table: dict, domain: Domain) -> ElectrodeConfig:
    s = dict(table)
    try:
        cfg = ElectrodeConfig.for_domain(
            domain, [tuple(map(float, a)) for a in s.pop("arcs")], [float(v) for v in s.pop("voltages")],
            float(s.pop("contact_impedance", 1.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"[electrodes] is missing key {exc}") from None
    if s:
        raise ConfigError(f"unknown keys in [electrodes]: {sorted(s)}")
    return cfg


@dataclass
class RunConfig:
    """Validated run description; ``to_dict`` echoes it in re-parseable form."""

    problem: str
    domain: dict
    conductivity: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    simulation: dict = field(default_factory=dict)
    boundary: dict | None = None
    electrodes: dict | None = None
    trace: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    probes: list = field(default_factory=list)
    n_paths: int = 1000
    workers: int = 1
    out: str = "out"
    base_dir: str | None = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None, validate: bool = True) -> "RunConfig":
        d = copy.deepcopy(d)
        _check_keys(d, _TOP_KEYS, "configuration")
        problem = d.get("problem")
        if problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {problem!r}")
        if "domain" not in d:
            raise ConfigError("missing [domain] table")
        sim = d.get("simulation", {})
        _check_keys(sim, _SIM_KEYS, "[simulation]")
        _check_keys(d.get("trace", {}), _TRACE_KEYS, "[trace]")
        _check_keys(d.get("oracle", {}), _ORACLE_KEYS, "[oracle]")
        probes = [[float(a), float(b)] for a, b in d.get("probes", [])]
        cfg = cls(
            problem, d["domain"], d.get("conductivity", {"kind": "constant", "value": 1.0}), sim,
            d.get("boundary"), d.get("electrodes"), d.get("trace", {}), d.get("oracle", {}), probes,
            int(d.get("n_paths", 1000)), int(d.get("workers", 1)), str(d.get("out", "out")),
            None if base_dir is None else str(base_dir),
        )
        if validate:
            cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, validate: bool = True) -> "RunConfig":
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                d = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(d, path.parent, validate)

    def to_dict(self) -> dict:
        d = {
            "problem": self.problem, "n_paths": self.n_paths, "probes": self.probes, "workers": self.workers,
            "out": self.out, "domain": self.domain, "conductivity": self.conductivity, "simulation": self.simulation,
            "trace": self.trace, "oracle": self.oracle,
        }
        if self.boundary is not None:
            d["boundary"] = self.boundary
        if self.electrodes is not None:
            d["electrodes"] = self.electrodes
        return copy.deepcopy(d)

    # built objects ----------------------------------------------------
    def build_domain(self) -> Domain:
        try:
            return domain_from_dict(self.domain)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"[domain]: {exc}") from None

    def build_field(self) -> ConductivityField:
        base = None if self.base_dir is None else Path(self.base_dir)
        try:
            return build_conductivity(self.conductivity, self.build_domain(), base)
        except ConfigError:
            raise
        except (ValueError, TypeError, OSError) as exc:
            raise ConfigError(f"[conductivity]: {exc}") from None

    def build_params(self, seed: int | None = None, workers: int | None = None) -> SimulationParams:
        s = {k: v for k, v in self.simulation.items() if k != "tail_tolerance"}
        if seed is not None:
            s["seed"] = seed
        s["workers"] = self.workers if workers is None else workers
        try:
            return SimulationParams(**s)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[simulation]: {exc}") from None

    def build_boundary(self) -> BoundaryFunction:
        if self.boundary is None:
            raise ConfigError("this problem needs a [boundary] table")
        try:
            return build_boundary(self.boundary, self.build_domain())
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"[boundary]: {exc}") from None

    def build_electrodes(self) -> ElectrodeConfig:
        if self.electrodes is None:
            raise ConfigError("this problem needs an [electrodes] table")
        try:
            return build_electrodes(self.electrodes, self.build_domain())
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[electrodes]: {exc}") from None

    @property
    def tail_tolerance(self) -> float:
        return float(self.simulation.get("tail_tolerance", 0.005))

    def trace_value(self, key: str, default):
        return type(default)(self.trace.get(key, default))

    # validation -------------------------------------------------------
    def validate(self) -> None:
        from .feynman_kac import NeumannData

        domain = self.build_domain()
        field_ = self.build_field()
        self.build_params()
        if self.n_paths < 1:
            raise ConfigError("n_paths must be positive")
        rep = field_.check_ellipticity(domain, 2048, np.random.default_rng(0))
        if not rep.passed:
            raise ConfigError(
                f"conductivity violates the declared ellipticity bound c0 = {field_.c0}: "
                f"eigenvalues in [{rep.min_eigenvalue:.3g}, {rep.max_eigenvalue:.3g}]"
            )
        for p in self.probes:
            if domain.signed_distance(p) > domain.tolerance:
                raise ConfigError(f"probe {p} lies outside the domain")
        if self.problem in ("dirichlet", "continuum") or (self.problem == "dtn" and self.boundary is not None):
            f = self.build_boundary()
            if self.problem == "continuum":
                try:
                    NeumannData(f).check(domain)
                except Exception as exc:
                    raise ConfigError(str(exc)) from None
        if self.problem == "cem" or (self.problem == "oracle" and self.oracle.get("problem") == "cem"):
            self.build_electrodes()
        if self.problem in ("dirichlet", "continuum", "cem") and not self.probes:
            raise ConfigError("this problem needs at least one probe point")
        if not math.isfinite(self.tail_tolerance) or not 0 < self.tail_tolerance < 1:
            raise ConfigError("tail_tolerance must lie in (0, 1)")
