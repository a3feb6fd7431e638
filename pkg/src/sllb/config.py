"""TOML run configuration: one file drives every command.

Sections and keys are enumerated below; unknown sections or keys are
rejected so misspellings never fall back to silent defaults. All randomness
derives from [solver].seed (overridable on the command line); nothing reads
the wall clock.
"""

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .noise import Control, LevyMeasure
from .solver import SolverConfig
from .spectral import (
    Field, LlbConstants, PhysField, SpectralGrid, build_grid,
    field_from_cosines, synthesize,
)


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "grid": {"dim", "modes_per_dim", "colloc_per_dim"},
    "physics": {"h_constant", "h_modes", "m0_constant", "m0_modes",
                "kappa1", "gamma", "kappa", "mu"},
    "noise": {"atoms", "density_expr", "quadrature_nodes"},
    "solver": {"T", "dt", "eps", "scheme", "snapshot_stride", "seed",
               "blowup_guard", "include_nonlinear", "phi_mode", "rk4_step"},
    "control": {"n_cells", "theta_const", "theta", "file"},
    "experiment": {"n_samples", "n_paths", "eps_list", "mode_levels",
                   "condition1_n_list", "event_radius", "rate_margin",
                   "gap_tolerance", "penalty0", "penalty_growth",
                   "outer_iters", "sweeps", "rate_n_cells", "n_cap_multiplier",
                   "target", "target_shift", "theta_const",
                   "write_snapshots"},
}

_REQUIRED = {"grid": {"dim", "modes_per_dim", "colloc_per_dim"},
             "solver": {"T", "dt"}}

# safe namespace for mark-density expressions
_DENSITY_ENV = {"abs": abs, "exp": np.exp, "sqrt": np.sqrt, "log": np.log,
                "cos": np.cos, "sin": np.sin, "pi": np.pi, "min": min,
                "max": max}


@dataclass
class RunSetup:
    grid: SpectralGrid
    constants: LlbConstants
    h_field: Field
    h_phys: PhysField
    m0: Field
    nu: LevyMeasure
    solver: SolverConfig
    control: Control | None
    experiment: dict
    raw_text: str


def _check_keys(data: dict) -> None:
    for section, body in data.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"section [{section}] must be a table")
        for key in body:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    for section, required in _REQUIRED.items():
        if section not in data:
            raise ConfigError(f"missing required section [{section}]")
        missing = required - set(data[section])
        if missing:
            raise ConfigError(
                f"section [{section}] is missing keys {sorted(missing)}")


def _build_vector_field(grid, body, prefix) -> Field:
    const = body.get(f"{prefix}_constant")
    modes = body.get(f"{prefix}_modes")
    if const is not None and modes is not None:
        raise ConfigError(f"give either {prefix}_constant or {prefix}_modes")
    terms = []
    if const is not None:
        if len(const) != 3:
            raise ConfigError(f"{prefix}_constant must have 3 components")
        terms = [((0,) * grid.dim, c, float(v))
                 for c, v in enumerate(const) if v != 0.0]
    elif modes is not None:
        for entry in modes:
            extra = set(entry) - {"k", "comp", "amp"}
            if extra:
                raise ConfigError(f"unknown keys {sorted(extra)} in a "
                                  f"{prefix}_modes entry")
            terms.append((tuple(entry["k"]), int(entry["comp"]) - 1,
                          float(entry["amp"])))
    try:
        return field_from_cosines(grid, terms)
    except ValueError as exc:
        raise ConfigError(f"invalid {prefix} specification: {exc}") from exc


def _build_measure(body) -> LevyMeasure:
    atoms = body.get("atoms")
    density = body.get("density_expr")
    if atoms is not None and density is not None:
        raise ConfigError("give either atoms or density_expr, not both")
    try:
        if atoms is not None:
            pairs = []
            for entry in atoms:
                extra = set(entry) - {"l", "w"}
                if extra:
                    raise ConfigError(
                        f"unknown keys {sorted(extra)} in an atom entry")
                pairs.append((float(entry["l"]), float(entry["w"])))
            return LevyMeasure.from_atoms(pairs)
        if density is not None:
            nodes = int(body.get("quadrature_nodes", 16))
            fn = eval("lambda l: " + density,  # noqa: S307 - config-local
                      {"__builtins__": {}, **_DENSITY_ENV})
            return LevyMeasure.from_density(fn, nodes)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid noise specification: {exc}") from exc
    return LevyMeasure.from_atoms([])


def _build_control(body, nu: LevyMeasure, horizon: float,
                   base_dir: Path) -> Control:
    n_cells = int(body.get("n_cells", 4))
    given = [k for k in ("theta_const", "theta", "file") if k in body]
    if len(given) > 1:
        raise ConfigError("give exactly one of theta_const, theta, file")
    if "file" in body:
        from .persist import read_control_csv
        return read_control_csv(base_dir / body["file"], nu, horizon)
    if "theta" in body:
        vals = np.asarray(body["theta"], dtype=float)
        if vals.shape != (n_cells, nu.n_atoms):
            raise ConfigError(
                f"theta must be a {n_cells} x {nu.n_atoms} table, "
                f"got shape {vals.shape}")
        return Control(np.linspace(0.0, horizon, n_cells + 1), vals)
    value = float(body.get("theta_const", 1.0))
    return Control.constant(value, horizon, n_cells, max(nu.n_atoms, 1))


def load_config(path, seed_override: int | None = None) -> RunSetup:
    path = Path(path)
    text = path.read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error in {path.name}: {exc}") from exc
    _check_keys(data)

    gbody = data["grid"]
    try:
        grid = build_grid(int(gbody["dim"]), int(gbody["modes_per_dim"]),
                          int(gbody["colloc_per_dim"]))
    except ValueError as exc:
        raise ConfigError(f"invalid [grid]: {exc}") from exc

    pbody = data.get("physics", {})
    constants = LlbConstants(
        kappa1=float(pbody.get("kappa1", 1.0)),
        gamma=float(pbody.get("gamma", 1.0)),
        kappa=float(pbody.get("kappa", 1.0)),
        mu=float(pbody.get("mu", 1.0)))
    h_field = _build_vector_field(grid, pbody, "h")
    m0 = _build_vector_field(grid, pbody, "m0")

    nu = _build_measure(data.get("noise", {}))

    sbody = data["solver"]
    seed = int(sbody.get("seed", 0))
    if seed_override is not None:
        seed = seed_override
    try:
        solver = SolverConfig(
            grid=grid,
            T=float(sbody["T"]),
            dt=float(sbody["dt"]),
            eps=float(sbody.get("eps", 1.0)),
            scheme=str(sbody.get("scheme", "imex_euler")),
            snapshot_stride=int(sbody.get("snapshot_stride", 1)),
            seed=seed,
            blowup_guard=float(sbody.get("blowup_guard", 1e6)),
            constants=constants,
            include_nonlinear=bool(sbody.get("include_nonlinear", True)),
            phi_mode=str(sbody.get("phi_mode", "closed_form")),
            rk4_step=float(sbody.get("rk4_step", 1e-3)))
    except ValueError as exc:
        raise ConfigError(f"invalid [solver]: {exc}") from exc

    control = None
    if "control" in data:
        try:
            control = _build_control(data["control"], nu, solver.T,
                                     path.parent)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"invalid [control]: {exc}") from exc

    return RunSetup(grid=grid, constants=constants, h_field=h_field,
                    h_phys=synthesize(h_field), m0=m0, nu=nu, solver=solver,
                    control=control, experiment=dict(data.get("experiment", {})),
                    raw_text=text)
