"""JSON scenario files.

A scenario holds up to four blocks::

    {
      "system":     {"A": [[...]], "B": ..., "C": ..., "E": ..., "F": ...,
                     "positivization_mode": false},
      "gains":      {"L_upper": ..., "L_lower": ..., "K_upper": ..., "K_lower": ...},
      "simulation": {"T": 50, "N": 1, "seed": 0, "shape": 1.0,
                     "x0": "uniform01", "xbar0": "ones", "xlow0": "zeros"},
      "synthesis":  {"mode": "coupled", "eps": 1e-6, "D": 1e4,
                     "include_noise_conditions": false}
    }

Only ``system`` is mandatory.  Matrices are nested row arrays; a bare
number is read as a 1x1 matrix and a flat list as a column.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioError
from .model import GainSet, PositiveSystem
from .sim import NoiseConfig, uniform_initial_state
from .synthesis import COUPLED, DEFAULT_D, DEFAULT_EPS, THM1

PRESETS = ("uniform01", "ones", "zeros")
GAIN_KEYS = ("L_upper", "L_lower", "K_upper", "K_lower")
_SYSTEM_KEYS = {"A", "B", "C", "E", "F", "positivization_mode"}
_SIM_KEYS = {"T", "N", "seed", "shape", "x0", "xbar0", "xlow0"}
_SYNTH_KEYS = {"mode", "eps", "D", "include_noise_conditions"}


@dataclass
class SimulationSettings:
    T: int = 50
    N: int = 1
    seed: int = 0
    shape: float = 1.0
    x0: object = "uniform01"
    xbar0: object = "ones"
    xlow0: object = "zeros"

    def noise(self, seed=None):
        return NoiseConfig(self.shape, self.seed if seed is None else seed)

    def initial(self, n, seed=None):
        """Resolve presets into ``(x0, xbar0, xlow0)`` vectors."""
        seed = self.seed if seed is None else seed
        out = []
        for name in ("x0", "xbar0", "xlow0"):
            val = getattr(self, name)
            if val == "uniform01":
                out.append(uniform_initial_state(n, seed))
            elif val == "ones":
                out.append(np.ones(n))
            elif val == "zeros":
                out.append(np.zeros(n))
            else:
                arr = np.asarray(val, dtype=float).ravel()
                if arr.size != n:
                    raise ScenarioError(f"expected {n} entries, got {arr.size}",
                                        field=f"simulation.{name}")
                out.append(arr)
        return tuple(out)


@dataclass
class SynthesisSettings:
    mode: str = COUPLED
    eps: float = DEFAULT_EPS
    D: float = DEFAULT_D
    include_noise_conditions: bool = False


@dataclass
class Scenario:
    system: PositiveSystem
    gains: GainSet = None
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    synthesis: SynthesisSettings = None

    def to_dict(self):
        s = self.system
        out = {"system": {"A": _rows(s.A), "B": _rows(s.B), "C": _rows(s.C)}}
        if s.E is not None:
            out["system"]["E"] = _rows(s.E)
        if s.F is not None:
            out["system"]["F"] = _rows(s.F)
        out["system"]["positivization_mode"] = s.positivization_mode
        if self.gains is not None:
            out["gains"] = gains_to_dict(self.gains)
        out["simulation"] = {k: _plain(getattr(self.simulation, k)) for k in
                             ("T", "N", "seed", "shape", "x0", "xbar0", "xlow0")}
        if self.synthesis is not None:
            out["synthesis"] = dict(vars(self.synthesis))
        return out

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2)


def _rows(M):
    return np.asarray(M, dtype=float).tolist()


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def gains_to_dict(g):
    return {k: _rows(getattr(g, k)) for k in GAIN_KEYS}


def _matrix(block, key, where, required=True):
    if key not in block:
        if required:
            raise ScenarioError("missing matrix", field=f"{where}.{key}")
        return None
    val = block[key]
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError("not a numeric matrix (rows must have equal length)",
                            field=f"{where}.{key}") from None
    if arr.ndim > 2:
        raise ScenarioError("matrix nesting deeper than two levels", field=f"{where}.{key}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError("non-finite entry", field=f"{where}.{key}")
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def _unknown(block, allowed, where):
    extra = sorted(set(block) - allowed)
    if extra:
        raise ScenarioError(f"unknown field(s) {', '.join(extra)}", field=where)


def _block(data, name):
    blk = data.get(name)
    if blk is None:
        return None
    if not isinstance(blk, dict):
        raise ScenarioError("expected an object", field=name)
    return blk


def _number(blk, key, where, kind, default):
    if key not in blk:
        return default
    val = blk[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioError(f"expected a {kind.__name__}", field=f"{where}.{key}")
    if kind is int and float(val) != int(val):
        raise ScenarioError("expected an integer", field=f"{where}.{key}")
    return kind(val)


def _initial(blk, key, default):
    if key not in blk:
        return default
    val = blk[key]
    if isinstance(val, str):
        if val not in PRESETS:
            raise ScenarioError(f"unknown preset {val!r}; choose from {', '.join(PRESETS)}",
                                field=f"simulation.{key}")
        return val
    try:
        return [float(v) for v in np.asarray(val, dtype=float).ravel()]
    except (TypeError, ValueError):
        raise ScenarioError("expected a preset name or a numeric vector",
                            field=f"simulation.{key}") from None


def from_dict(data):
    """Build a :class:`Scenario`, raising :class:`ScenarioError` with the field path."""
    if not isinstance(data, dict):
        raise ScenarioError("top level must be an object")
    _unknown(data, {"system", "gains", "simulation", "synthesis"}, "<root>")
    sysb = _block(data, "system")
    if sysb is None:
        raise ScenarioError("missing block", field="system")
    _unknown(sysb, _SYSTEM_KEYS, "system")
    pmode = sysb.get("positivization_mode", False)
    if not isinstance(pmode, bool):
        raise ScenarioError("expected true or false", field="system.positivization_mode")
    try:
        system = PositiveSystem(
            _matrix(sysb, "A", "system"), _matrix(sysb, "B", "system"),
            _matrix(sysb, "C", "system"), _matrix(sysb, "E", "system", False),
            _matrix(sysb, "F", "system", False), pmode)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc), field="system") from None

    gains = None
    gb = _block(data, "gains")
    if gb is not None:
        _unknown(gb, set(GAIN_KEYS), "gains")
        try:
            gains = GainSet(*(_matrix(gb, k, "gains") for k in GAIN_KEYS))
            gains.check_dims(system)
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError(str(exc), field="gains") from None

    sim = SimulationSettings()
    sb = _block(data, "simulation")
    if sb is not None:
        _unknown(sb, _SIM_KEYS, "simulation")
        sim = SimulationSettings(
            T=_number(sb, "T", "simulation", int, sim.T),
            N=_number(sb, "N", "simulation", int, sim.N),
            seed=_number(sb, "seed", "simulation", int, sim.seed),
            shape=_number(sb, "shape", "simulation", float, sim.shape),
            x0=_initial(sb, "x0", sim.x0),
            xbar0=_initial(sb, "xbar0", sim.xbar0),
            xlow0=_initial(sb, "xlow0", sim.xlow0),
        )
        if sim.T < 0:
            raise ScenarioError("must be nonnegative", field="simulation.T")
        if sim.N < 1:
            raise ScenarioError("must be at least 1", field="simulation.N")
        if not 0 <= sim.seed < 2**64:
            raise ScenarioError("must fit in 64 unsigned bits", field="simulation.seed")
        if not sim.shape > 0:
            raise ScenarioError("must be positive", field="simulation.shape")

    synth = None
    yb = _block(data, "synthesis")
    if yb is not None:
        _unknown(yb, _SYNTH_KEYS, "synthesis")
        mode = yb.get("mode", COUPLED)
        if mode not in (THM1, COUPLED):
            raise ScenarioError(f"mode must be {THM1!r} or {COUPLED!r}", field="synthesis.mode")
        inc = yb.get("include_noise_conditions", False)
        if not isinstance(inc, bool):
            raise ScenarioError("expected true or false",
                                field="synthesis.include_noise_conditions")
        synth = SynthesisSettings(mode, _number(yb, "eps", "synthesis", float, DEFAULT_EPS),
                              _number(yb, "D", "synthesis", float, DEFAULT_D), inc)
    return Scenario(system, gains, sim, synth)


def loads(text, source="<string>"):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_dict(data)


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text, str(path))


def load_gains(path, system):
    """Read a gains file: either a bare gains block or a scenario holding one."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if isinstance(data, dict) and "gains" in data:
        data = data["gains"]
    g = GainSet(*(_matrix(data, k, "gains") for k in GAIN_KEYS))
    g.check_dims(system)
    return g
