"""Sectioned ``key = value`` experiment configs.

::

    # density relaxation
    [model]
    kind = sf
    alpha = 0.5

    [topology]
    n = 100000

    [run]
    scenario = E1

Sections are ``[model]``, ``[topology]``, ``[initial]`` and ``[run]``.
Errors carry the line number of the offending entry.
"""

from dataclasses import dataclass, fields, replace
import math
import os

from ..dynamics import ALL_ONES, ALL_TWOS, PRODUCT, SINGLE_ONE, InitialDistribution
from ..models import BIASED, GLAUBER, INTERVAL, PURE, RING, SA, SF, FlipRateSpec, ModelSpec, Topology

SCENARIOS = ("E1", "E2", "E3", "E4", "E5", "E6", "E7", "custom")
OUTPUT_ENV = "SANDFLIP_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    model: ModelSpec
    topology: Topology
    initial: InitialDistribution
    replicas: int = 20
    sample_times: tuple = ()
    seed: int = 0
    output_dir: str = ""
    epsilon: float = 1e-3
    t_max: float = 5.0
    t_avg_start: float = 10.0
    t_avg_end: float = 30.0
    t_step: float = 0.5
    window: int = 10
    sizes: tuple = ()
    alpha_grid: tuple = ()
    rho_grid: tuple = ()
    block_samples: int = 1_000_000
    workers: int = 1
    time_budget: float = 0.0


_RUN_FLOATS = ("epsilon", "t_max", "t_avg_start", "t_avg_end", "t_step", "time_budget")
_RUN_INTS = ("replicas", "seed", "window", "block_samples", "workers")
_RUN_FLOAT_LISTS = ("sample_times", "alpha_grid", "rho_grid")
_RUN_INT_LISTS = ("sizes",)
_RUN_KEYS = {"scenario", "output_dir", *_RUN_FLOATS, *_RUN_INTS, *_RUN_FLOAT_LISTS, *_RUN_INT_LISTS}

_SCENARIO_DEFAULTS = {
    "E1": dict(initial=InitialDistribution.product(0.5), replicas=20, sample_times=(0.25, 0.5, 1.0, 2.0)),
    "E2": dict(initial=InitialDistribution(ALL_ONES), replicas=5, sample_times=(1.0, 2.0, 5.0)),
    "E3": dict(initial=InitialDistribution.product(0.5), replicas=4),
    "E4": dict(initial=InitialDistribution.product(0.5), replicas=4),
    "E5": dict(initial=InitialDistribution.product(0.2), replicas=10,
               sample_times=(0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 1.9, 2.5, 3.0)),
    "E6": dict(initial=InitialDistribution.product(0.5), replicas=20,
               sample_times=(1.0, 2.0, 5.0, 10.0), rho_grid=(0.3, 0.5, 0.7)),
    "E7": dict(initial=InitialDistribution.single_one(0), replicas=400, sizes=(1000, 10000, 100000)),
    "custom": dict(initial=InitialDistribution.product(0.5), replicas=1),
}


def _sections(text):
    """Yield ``(section, key, value, line_no)``."""
    section = None
    seen = set()
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", no)
            section = line[1:-1].strip().lower()
            if section not in ("model", "topology", "initial", "run"):
                raise ConfigError(f"unknown section [{section}]", no)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
        if section is None:
            raise ConfigError("entry outside any section", no)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", no)
        seen.add((section, key))
        yield section, key, value, no


def _num(value, kind, key, line):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key} = {value!r} is not a valid {kind.__name__}", line) from None


def _list(value, kind, key, line):
    parts = [p for p in (s.strip() for s in value.split(",")) if p]
    return tuple(_num(p, kind, key, line) for p in parts)


def parse_config(text):
    """Parse and validate config text into an :class:`ExperimentSpec`."""
    entries = {}
    for section, key, value, line in _sections(text):
        entries.setdefault(section, {})[key] = (value, line)

    def take(section, key, default=None, required=False):
        if key in entries.get(section, {}):
            return entries[section].pop(key)
        if required:
            raise ConfigError(f"missing required key {key!r} in [{section}]")
        return default, None

    model = _parse_model(entries, take)
    topology = _parse_topology(take)
    scenario, sline = take("run", "scenario", required=True)
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}", sline)
    defaults = _SCENARIO_DEFAULTS[scenario]
    initial = _parse_initial(take, defaults["initial"], topology)
    run = {}
    lines = {"scenario": sline}
    for key, (value, line) in list(entries.get("run", {}).items()):
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key {key!r} in [run]", line)
        lines[key] = line
        if key in _RUN_FLOATS:
            run[key] = _num(value, float, key, line)
        elif key in _RUN_INTS:
            run[key] = _num(value, int, key, line)
        elif key in _RUN_FLOAT_LISTS:
            run[key] = _list(value, float, key, line)
        elif key in _RUN_INT_LISTS:
            run[key] = _list(value, int, key, line)
        else:
            run[key] = value
    entries.pop("run", None)
    for section, rest in entries.items():
        for key, (_, line) in rest.items():
            raise ConfigError(f"unknown key {key!r} in [{section}]", line)
    for key in ("replicas", "sample_times", "sizes", "rho_grid"):
        if key not in run and key in defaults:
            run[key] = defaults[key]
    if "output_dir" not in run:
        run["output_dir"] = os.path.join(os.environ.get(OUTPUT_ENV, "sandflip-out"), scenario)
    if "alpha_grid" not in run and scenario == "E4":
        ac = 1.0 - 2 * model.flip.gamma if model.flip.family == GLAUBER else 1.0 - model.flip.kappa
        run["alpha_grid"] = tuple(sorted({model.alpha, round(0.5 * ac, 10), round(1.2 * ac, 10)}))
    spec = ExperimentSpec(scenario=scenario, model=model, topology=topology, initial=initial, **run)
    _validate(spec, lines)
    return spec


def _parse_model(entries, take):
    kind, kline = take("model", "kind")
    if kind is None:
        # ``model = sf`` is accepted as a synonym
        kind, kline = take("model", "model", required=True)
    alpha_s, aline = take("model", "alpha", required=True)
    alpha = _num(alpha_s, float, "alpha", aline)
    if not math.isfinite(alpha):
        raise ConfigError("alpha must be finite", aline)
    if kind == SA:
        beta_s, bline = take("model", "beta", required=True)
        beta = _num(beta_s, float, "beta", bline)
        if not math.isfinite(beta):
            raise ConfigError("beta must be finite", bline)
        if alpha < 0 or beta < 0:
            raise ConfigError("rates must be nonnegative", aline if alpha < 0 else bline)
        return ModelSpec.sa(alpha, beta)
    if kind != SF:
        raise ConfigError(f"model kind must be 'sf' or 'sa', got {kind!r}", kline)
    if alpha < 0:
        raise ConfigError("alpha must be nonnegative", aline)
    family, fline = take("model", "flip", PURE)
    if family == GLAUBER:
        g, gline = take("model", "gamma", required=True)
        try:
            flip = FlipRateSpec.glauber(_num(g, float, "gamma", gline))
        except ValueError as e:
            raise ConfigError(str(e), gline) from None
    elif family == BIASED:
        k, kl = take("model", "kappa", required=True)
        try:
            flip = FlipRateSpec.biased(_num(k, float, "kappa", kl))
        except ValueError as e:
            raise ConfigError(str(e), kl) from None
    elif family == PURE:
        flip = FlipRateSpec.pure()
    else:
        raise ConfigError(f"unknown flip family {family!r}", fline)
    return ModelSpec.sf(alpha, flip)


def _parse_topology(take):
    kind, kline = take("topology", "kind", RING)
    n_s, nline = take("topology", "n", required=True)
    n = _num(n_s, int, "n", nline)
    if kind not in (RING, INTERVAL):
        raise ConfigError(f"topology kind must be 'ring' or 'interval', got {kind!r}", kline)
    if n < 3:
        raise ConfigError("n must be at least 3", nline)
    return Topology(kind, n)


def _parse_initial(take, default, topology):
    kind, kline = take("initial", "kind", None)
    if kind is None:
        kind = default.kind
    rho_s, rline = take("initial", "rho", None)
    y_s, yline = take("initial", "y", None)
    if kind not in (PRODUCT, ALL_ONES, ALL_TWOS, SINGLE_ONE):
        raise ConfigError(f"unknown initial kind {kind!r}", kline)
    if rho_s is not None and kind != PRODUCT:
        raise ConfigError("rho only applies to the product initial law", rline)
    if y_s is not None and kind != SINGLE_ONE:
        raise ConfigError("y only applies to single_one", yline)
    if kind == PRODUCT:
        rho = _num(rho_s, float, "rho", rline) if rho_s is not None else default.rho
        if not 0 <= rho <= 1:
            raise ConfigError("rho must lie in [0, 1]", rline)
        return InitialDistribution.product(rho)
    if kind == SINGLE_ONE:
        y = _num(y_s, int, "y", yline) if y_s is not None else topology.n // 2
        if not 0 <= y < topology.n:
            raise ConfigError("y outside the lattice", yline)
        return InitialDistribution.single_one(y)
    return InitialDistribution(kind)


def _validate(spec, lines):
    m = spec.model
    s = spec.scenario
    sline = lines["scenario"]

    def need(cond, message, key="scenario"):
        if not cond:
            raise ConfigError(message, lines.get(key, sline))

    need(0 <= spec.seed < 2**64, "seed must be a 64-bit unsigned integer", "seed")
    need(spec.replicas >= 1, "replicas must be at least 1", "replicas")
    need(list(spec.sample_times) == sorted(spec.sample_times), "sample_times must be sorted", "sample_times")
    need(all(t >= 0 for t in spec.sample_times), "sample_times must be nonnegative", "sample_times")
    need(0 < spec.epsilon < 1, "epsilon must lie in (0, 1)", "epsilon")
    need(spec.t_avg_start < spec.t_avg_end, "t_avg_start must precede t_avg_end", "t_avg_start")
    need(spec.t_step > 0, "t_step must be positive", "t_step")
    need(spec.workers >= 1, "workers must be at least 1", "workers")
    if s in ("E1", "E2", "E3", "E4", "E7"):
        need(m.variant == SF, f"{s} needs an sf model")
    if s in ("E5", "E6"):
        need(m.variant == SA, f"{s} needs an sa model")
    if s in ("E1", "E2", "E3", "E4", "E5", "E6"):
        need(spec.topology.is_ring, f"{s} runs on a ring")
    if s == "E2":
        need(m.alpha >= 1 and m.flip.family == PURE, "E2 needs pure flips with alpha >= 1")
    if s == "E3":
        need(m.alpha < 1 and m.flip.family == PURE, "E3 needs pure flips with alpha < 1")
    if s == "E4":
        need(m.flip.family in (GLAUBER, BIASED), "E4 needs glauber or biased flips")
        need(len(spec.alpha_grid) >= 1, "E4 needs a nonempty alpha_grid", "alpha_grid")
    if s == "E5":
        need(m.alpha != m.beta, "E5 needs alpha != beta")
    if s == "E6":
        need(m.alpha == m.beta, "E6 needs alpha == beta")
        need(all(0 < r < 1 for r in spec.rho_grid), "rho_grid entries must lie in (0, 1)", "rho_grid")
    if s == "E7":
        need(not spec.topology.is_ring, "E7 runs on an interval")
        need(m.alpha > 0 and m.flip.family == PURE, "E7 needs pure flips with alpha > 0")
        need(len(spec.sizes) >= 2 and all(n >= 3 for n in spec.sizes), "E7 needs at least two sizes", "sizes")


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_config(spec):
    """Config text that parses back to ``spec``."""
    m = spec.model
    out = ["[model]", f"kind = {m.variant}", f"alpha = {m.alpha!r}"]
    if m.variant == SA:
        out.append(f"beta = {m.beta!r}")
    else:
        out.append(f"flip = {m.flip.family}")
        if m.flip.family == GLAUBER:
            out.append(f"gamma = {m.flip.gamma!r}")
        elif m.flip.family == BIASED:
            out.append(f"kappa = {m.flip.kappa!r}")
    out += ["", "[topology]", f"kind = {spec.topology.kind}", f"n = {spec.topology.n}"]
    ini = spec.initial
    out += ["", "[initial]", f"kind = {ini.kind}"]
    if ini.kind == PRODUCT:
        out.append(f"rho = {ini.rho!r}")
    elif ini.kind == SINGLE_ONE:
        out.append(f"y = {ini.y}")
    out += ["", "[run]", f"scenario = {spec.scenario}"]
    for f in fields(ExperimentSpec):
        if f.name in ("scenario", "model", "topology", "initial"):
            continue
        out.append(f"{f.name} = {_fmt(getattr(spec, f.name))}")
    return "\n".join(out) + "\n"


def with_overrides(spec, **kw):
    return replace(spec, **kw)


__all__ = ["ConfigError", "ExperimentSpec", "parse_config", "emit_config", "SCENARIOS", "OUTPUT_ENV"]
