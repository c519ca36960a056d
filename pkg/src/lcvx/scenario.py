"""JSON scenario files.

A scenario holds one problem instance plus the knobs of the pipeline. Every
section is a JSON object; unknown keys are rejected so that typos do not
silently fall back to defaults. Layout::

    {
      "name": "...", "description": "...",
      "plant": {"continuous": {"A_c": [[..]], "B_c": [[..]], "drift": [..]}}
             | {"discrete":   {"A": [[..]], "B": [[..]], "drift": [..]}},
      "horizon": {"t_f": 60.0, "N": 10},
      "control": {"g_kind": "NORM2", "rho_min": 2.25, "rho_max": 6.0}
               | {"g_kind": "NORM2", "thrust_max": 7500, "mass": 1000,
                  "throttle": [0.3, 0.8]},
      "cost": {"running": 1.0, "terminal_linear": [..], "terminal_constant": 0.0,
               "time_weighted": true},
      "boundary": {"fixed_final_state": [..]} | {"G": [[..]], "g": [..]},
      "initial_state": [..],
      "long_horizon": {"u_s": [..], "eps_t": 0.01, "early_stop": false, "max_iter": null},
      "perturbation": {"epsilon": 1e-7, "seed": 0, "q": null},
      "solver": {"tol": 1e-9, "max_iter": 100, "backend": "bundled"},
      "analysis": {"tol_v": 1e-6, "tol_c": 1e-6}
    }

``time_weighted`` (default: true for continuous plants, false for discrete
ones) multiplies the running coefficient by the step length, so the
discrete running cost approximates the integral of ``l(sigma)``.
"""

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .conic import SolverSettings, available_backends
from .exceptions import ScenarioError
from .model import BoundaryMap, ContinuousPlant, CostSpec, MagnitudeFn

BUNDLED = {
    "example1": "moon_landing_60s.json",
    "example2": "artificial_n3.json",
    "example3": "moon_landing_200s.json",
}

_TOP_KEYS = {
    "name", "description", "plant", "horizon", "control", "cost", "boundary",
    "initial_state", "long_horizon", "perturbation", "solver", "analysis",
}
_REQUIRED = ("plant", "horizon", "control", "boundary", "initial_state")


@dataclass(frozen=True)
class LongHorizonConfig:
    u_s: Optional[np.ndarray] = None
    eps_t: float = 1e-2
    early_stop: bool = False
    max_iter: Optional[int] = None


@dataclass(frozen=True)
class PerturbationConfig:
    epsilon: float = 1e-7
    seed: int = 0
    q: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Scenario:
    """Validated scenario contents."""

    name: str
    plant: Optional[ContinuousPlant]
    A: Optional[np.ndarray]
    B: Optional[np.ndarray]
    drift: Optional[np.ndarray]
    t_f: float
    N: int
    g: MagnitudeFn
    rho_min: float
    rho_max: float
    cost: CostSpec
    time_weighted: bool
    boundary: BoundaryMap
    x0: np.ndarray
    long_horizon: LongHorizonConfig = field(default_factory=LongHorizonConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    settings: SolverSettings = field(default_factory=SolverSettings)
    backend: str = "bundled"
    tol_v: float = 1e-6
    tol_c: float = 1e-6
    description: str = ""
    source: Optional[dict] = field(default=None, repr=False, compare=False)

    @property
    def continuous(self):
        return self.plant is not None

    @property
    def n_x(self):
        return self.x0.size

    def with_overrides(self, seed=None, eps_q=None, eps_t=None, tol=None, N=None):
        """Copy with CLI-style overrides applied.

        Overriding the seed or epsilon drops an explicit ``q`` so that the
        new values take effect.
        """
        sc = self
        if seed is not None or eps_q is not None:
            pert = self.perturbation
            pert = replace(
                pert,
                seed=pert.seed if seed is None else int(seed),
                epsilon=pert.epsilon if eps_q is None else float(eps_q),
                q=None,
            )
            sc = replace(sc, perturbation=pert)
        if eps_t is not None:
            if not eps_t > 0:
                raise ScenarioError("eps_t must be positive")
            sc = replace(sc, long_horizon=replace(sc.long_horizon, eps_t=float(eps_t)))
        if tol is not None:
            if not tol > 0:
                raise ScenarioError("tol must be positive")
            sc = replace(sc, settings=replace(sc.settings, tol_p=tol, tol_d=tol, tol_g=tol))
        if N is not None:
            sc = replace(sc, N=_positive_int(N, "horizon.N"))
        return sc


def _check_keys(section, allowed, where):
    if not isinstance(section, dict):
        raise ScenarioError(f"{where}: expected an object, got {type(section).__name__}")
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ScenarioError(f"{where}: unknown key(s) {', '.join(extra)}")


def _require(section, key, where):
    if key not in section:
        raise ScenarioError(f"{where}: missing required field '{key}'")
    return section[key]


def _matrix(value, where):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: not a numeric matrix ({exc})") from None
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise ScenarioError(f"{where}: expected a finite 2-D array")
    return M


def _vector(value, where, size=None):
    try:
        v = np.array(value, dtype=float).ravel()
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: not a numeric vector ({exc})") from None
    if not np.all(np.isfinite(v)):
        raise ScenarioError(f"{where}: entries must be finite")
    if size is not None and v.size != size:
        raise ScenarioError(f"{where}: expected length {size}, got {v.size}")
    return v


def _number(value, where, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    if not np.isfinite(value) or (positive and value <= 0):
        raise ScenarioError(f"{where}: expected a {'positive ' if positive else ''}finite number")
    return float(value)


def _positive_int(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise ScenarioError(f"{where}: expected a positive integer, got {value!r}")
    return int(value)


def _parse_plant(sec):
    _check_keys(sec, {"continuous", "discrete"}, "plant")
    if ("continuous" in sec) == ("discrete" in sec):
        raise ScenarioError("plant: give exactly one of 'continuous' or 'discrete'")
    if "continuous" in sec:
        c = sec["continuous"]
        _check_keys(c, {"A_c", "B_c", "drift"}, "plant.continuous")
        A_c = _matrix(_require(c, "A_c", "plant.continuous"), "plant.continuous.A_c")
        B_c = _matrix(_require(c, "B_c", "plant.continuous"), "plant.continuous.B_c")
        drift = _vector(c["drift"], "plant.continuous.drift") if "drift" in c else None
        try:
            plant = ContinuousPlant(A_c, B_c, drift)
        except ValueError as exc:
            raise ScenarioError(f"plant.continuous: {exc}") from None
        return plant, None, None, plant.drift
    d = sec["discrete"]
    _check_keys(d, {"A", "B", "drift"}, "plant.discrete")
    A = _matrix(_require(d, "A", "plant.discrete"), "plant.discrete.A")
    B = _matrix(_require(d, "B", "plant.discrete"), "plant.discrete.B")
    if A.shape[0] != A.shape[1]:
        raise ScenarioError(f"plant.discrete.A: must be square, got {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise ScenarioError(f"plant.discrete.B: expected {A.shape[0]} rows, got {B.shape[0]}")
    drift = _vector(d["drift"], "plant.discrete.drift", A.shape[0]) if "drift" in d else None
    return None, A, B, drift


def _parse_control(sec):
    _check_keys(sec, {"g_kind", "rho_min", "rho_max", "thrust_max", "mass", "throttle"}, "control")
    try:
        g = MagnitudeFn(sec.get("g_kind", "NORM2"))
    except ValueError:
        raise ScenarioError(
            f"control.g_kind: expected one of {[m.value for m in MagnitudeFn]}"
        ) from None
    physical = {"thrust_max", "mass", "throttle"} & set(sec)
    if physical:
        if {"rho_min", "rho_max"} & set(sec):
            raise ScenarioError("control: give rho bounds or thrust/mass/throttle, not both")
        t_max = _number(_require(sec, "thrust_max", "control"), "control.thrust_max", True)
        mass = _number(_require(sec, "mass", "control"), "control.mass", True)
        thr = _vector(_require(sec, "throttle", "control"), "control.throttle", 2)
        rho_min, rho_max = thr * t_max / mass
    else:
        rho_min = _number(_require(sec, "rho_min", "control"), "control.rho_min")
        rho_max = _number(_require(sec, "rho_max", "control"), "control.rho_max")
    if not 0 < rho_min < rho_max:
        raise ScenarioError(f"control: need 0 < rho_min < rho_max, got {rho_min}, {rho_max}")
    return g, float(rho_min), float(rho_max)


def _parse_boundary(sec, n_x):
    _check_keys(sec, {"fixed_final_state", "G", "g"}, "boundary")
    if "fixed_final_state" in sec:
        if {"G", "g"} & set(sec):
            raise ScenarioError("boundary: fixed_final_state excludes G/g")
        return BoundaryMap.fixed_final_state(
            _vector(sec["fixed_final_state"], "boundary.fixed_final_state", n_x)
        )
    G = _matrix(_require(sec, "G", "boundary"), "boundary.G")
    if G.shape[1] != n_x and G.shape[0] == n_x and G.shape[1] == 1:
        G = G.T
    if G.shape[1] != n_x:
        raise ScenarioError(f"boundary.G: expected {n_x} columns, got {G.shape[1]}")
    g = _vector(_require(sec, "g", "boundary"), "boundary.g", G.shape[0])
    return BoundaryMap(G, g)


def parse_scenario(source):
    """Parse and validate a scenario.

    Args:
        source: a path, or the JSON text itself, or an already-decoded dict.

    Raises:
        ScenarioError: malformed JSON (with line and column), unknown or
            missing fields, or inconsistent dimensions.
    """
    if isinstance(source, dict):
        data = source
        default_name = "scenario"
    else:
        text, default_name = _read_text(source)
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from None
    _check_keys(data, _TOP_KEYS, "scenario")
    for key in _REQUIRED:
        _require(data, key, "scenario")

    plant, A, B, drift = _parse_plant(data["plant"])
    n_x = plant.n_x if plant is not None else A.shape[0]
    n_u = plant.n_u if plant is not None else B.shape[1]

    hz = data["horizon"]
    _check_keys(hz, {"t_f", "N"}, "horizon")
    N = _positive_int(_require(hz, "N", "horizon"), "horizon.N")
    if plant is not None:
        t_f = _number(_require(hz, "t_f", "horizon"), "horizon.t_f", positive=True)
    else:
        t_f = _number(hz.get("t_f", float(N)), "horizon.t_f", positive=True)

    g, rho_min, rho_max = _parse_control(data["control"])

    cs = data.get("cost", {})
    _check_keys(cs, {"running", "terminal_linear", "terminal_constant", "time_weighted"}, "cost")
    running = _number(cs.get("running", 1.0), "cost.running", positive=True)
    term = _vector(cs["terminal_linear"], "cost.terminal_linear", n_x) if cs.get(
        "terminal_linear") is not None else None
    cost = CostSpec(running, term, _number(cs.get("terminal_constant", 0.0), "cost.terminal_constant"))
    time_weighted = cs.get("time_weighted", plant is not None)
    if not isinstance(time_weighted, bool):
        raise ScenarioError("cost.time_weighted: expected true or false")

    boundary = _parse_boundary(data["boundary"], n_x)
    x0 = _vector(data["initial_state"], "initial_state", n_x)

    lh = data.get("long_horizon", {})
    _check_keys(lh, {"u_s", "eps_t", "early_stop", "max_iter"}, "long_horizon")
    u_s = _vector(lh["u_s"], "long_horizon.u_s", n_u) if lh.get("u_s") is not None else None
    if u_s is not None:
        level = float(g(u_s[None, :])[0])
        if abs(level - rho_min) > 1e-10 * max(1.0, rho_min):
            raise ScenarioError(f"long_horizon.u_s: g(u_s)={level:g} must equal rho_min={rho_min:g}")
    early = lh.get("early_stop", False)
    if not isinstance(early, bool):
        raise ScenarioError("long_horizon.early_stop: expected true or false")
    max_iter = lh.get("max_iter")
    lhc = LongHorizonConfig(
        u_s=u_s,
        eps_t=_number(lh.get("eps_t", 1e-2), "long_horizon.eps_t", positive=True),
        early_stop=early,
        max_iter=None if max_iter is None else _positive_int(max_iter, "long_horizon.max_iter"),
    )

    pt = data.get("perturbation", {})
    _check_keys(pt, {"epsilon", "seed", "q"}, "perturbation")
    eps = _number(pt.get("epsilon", 1e-7), "perturbation.epsilon")
    if eps < 0:
        raise ScenarioError("perturbation.epsilon: must be nonnegative")
    seed = pt.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("perturbation.seed: expected a nonnegative integer")
    q = _vector(pt["q"], "perturbation.q") if pt.get("q") is not None else None
    pert = PerturbationConfig(eps, seed, q)

    sv = data.get("solver", {})
    _check_keys(sv, {"tol", "tol_p", "tol_d", "tol_g", "max_iter", "backend"}, "solver")
    base = _number(sv.get("tol", 1e-9), "solver.tol", positive=True)
    settings = SolverSettings(
        tol_p=_number(sv.get("tol_p", base), "solver.tol_p", positive=True),
        tol_d=_number(sv.get("tol_d", base), "solver.tol_d", positive=True),
        tol_g=_number(sv.get("tol_g", base), "solver.tol_g", positive=True),
        max_iter=_positive_int(sv.get("max_iter", 100), "solver.max_iter"),
    )
    backend = sv.get("backend", "bundled")
    if backend not in available_backends():
        raise ScenarioError(f"solver.backend: unknown backend {backend!r}")

    an = data.get("analysis", {})
    _check_keys(an, {"tol_v", "tol_c"}, "analysis")

    name = data.get("name", default_name)
    if not isinstance(name, str):
        raise ScenarioError("name: expected a string")
    return Scenario(
        name=name, plant=plant, A=A, B=B, drift=drift, t_f=t_f, N=N, g=g,
        rho_min=rho_min, rho_max=rho_max, cost=cost, time_weighted=time_weighted,
        boundary=boundary, x0=x0, long_horizon=lhc, perturbation=pert,
        settings=settings, backend=backend,
        tol_v=_number(an.get("tol_v", 1e-6), "analysis.tol_v", positive=True),
        tol_c=_number(an.get("tol_c", 1e-6), "analysis.tol_c", positive=True),
        description=str(data.get("description", "")), source=data,
    )


def _read_text(source):
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        path = Path(source)
        try:
            return path.read_text(encoding="utf-8"), path.stem
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
        except UnicodeDecodeError:
            raise ScenarioError(f"scenario {path} is not valid UTF-8") from None
    return source, "scenario"


def bundled_path(key):
    """Path of a bundled scenario (``example1``..``example3`` or a file name)."""
    fname = BUNDLED.get(key, key)
    ref = resources.files("lcvx") / "scenarios" / fname
    if not ref.is_file():
        raise ScenarioError(f"no bundled scenario named {key!r}")
    return Path(str(ref))


def load_bundled(key):
    return parse_scenario(bundled_path(key))
