"""The experiment catalog and its on-disk record.

Every run writes into ``spec.output_dir``:

* ``data.csv``      rows ``t, replica, observable, value, theory, window_ok``
                    (``replica = -1`` marks the mean over replicas, an empty
                    ``t`` a time-free quantity such as a hitting time)
* ``summary.json``  ``{scenario, params, checks, descriptive, partial, manifest_path}``
* ``config.cfg``    the spec, re-emitted
* ``manifest.json`` seeds, version, wall clock and digests of the files above

Data files depend only on the spec, so two runs of one spec are
byte-identical.
"""

import csv
from dataclasses import asdict, dataclass, field
from functools import partial
import hashlib
import io
import json
import math
import os
import time

import numpy as np

from .. import __version__
from ..dynamics import (
    ALL_ONES,
    ALL_TWOS,
    PRODUCT,
    SINGLE_ONE,
    SimState,
    freezing_time,
    lone_one_vanish_time,
    replica_rng,
    replica_seed,
    run_until,
)
from ..models import Interval, ModelSpec, Ring
from ..observables import (
    LF,
    LS,
    SA_BLOCK,
    EstimationError,
    TheoryContext,
    critical_alpha,
    density_hitting_time,
    density_lower_bound,
    mc_generator_block_estimate,
    predicted_generator_block,
    predicted_stationary_density,
    product_consistency_rho,
)
from .config import emit_config

DATA_FILE = "data.csv"
SUMMARY_FILE = "summary.json"
CONFIG_FILE = "config.cfg"
MANIFEST_FILE = "manifest.json"
COLUMNS = ("t", "replica", "observable", "value", "theory", "window_ok")

# streams of one run: group * _GROUP + replica
_GROUP = 1_000_000
_BLOCK_GROUP = 999


class ExperimentError(RuntimeError):
    pass


@dataclass
class RunManifest:
    spec_text: str
    code_version: str
    master_seed: int
    replica_seeds: list
    wall_clock_seconds: float
    files: list
    output_dir: str
    partial: bool = False
    started_at: str = ""

    @property
    def manifest_path(self):
        return os.path.join(self.output_dir, MANIFEST_FILE)

    def data_files(self):
        return [os.path.join(self.output_dir, f["path"]) for f in self.files if f["path"].endswith(".csv")]

    def verify(self):
        """True when every listed file still has its recorded digest."""
        return all(_sha256(os.path.join(self.output_dir, f["path"])) == f["sha256"] for f in self.files)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        d["output_dir"] = os.path.dirname(os.path.abspath(path))
        return cls(**d)


class _Budget:
    def __init__(self, seconds):
        self.seconds = seconds
        self.start = time.monotonic()
        self.exhausted = False

    def ok(self):
        if self.seconds > 0 and time.monotonic() - self.start > self.seconds:
            self.exhausted = True
        return not self.exhausted


class _Run:
    """Accumulates rows, checks and streams for one scenario."""

    def __init__(self, spec):
        self.spec = spec
        self.budget = _Budget(spec.time_budget)
        self.rows = []
        self.checks = []
        self.descriptive = []
        self.streams = []
        self.n = spec.topology.n

    def window_ok(self, rho):
        lo = 4.0 / self.n
        return bool(lo < rho < 1.0 - lo)

    def row(self, t, replica, observable, value, theory, ok):
        self.rows.append((t, replica, observable, value, theory, ok))

    def check(self, name, measured, expected, tolerance, passed):
        self.checks.append(
            dict(name=name, measured=_num(measured), expected=_num(expected),
                 tolerance=_num(tolerance), **{"pass": bool(passed)})
        )

    def describe(self, name, measured, reference, note=""):
        self.descriptive.append(dict(name=name, measured=_num(measured), reference=_num(reference), note=note))

    def replicas(self, fn, group=0, count=None):
        """Run ``fn(rng)`` per replica; stops early when the time budget runs out."""
        spec = self.spec
        count = spec.replicas if count is None else count
        ids = [group * _GROUP + r for r in range(count)]
        if spec.workers > 1 and spec.time_budget <= 0:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=spec.workers) as ex:
                futs = [ex.submit(_call, fn, spec.seed, s) for s in ids]
                out = [f.result() for f in futs]
            self.streams += ids
            return out
        out = []
        for s in ids:
            if not self.budget.ok():
                break
            out.append(fn(replica_rng(spec.seed, s)))
            self.streams.append(s)
        return out


def _call(fn, seed, stream):
    return fn(replica_rng(seed, stream))


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _rho0(initial):
    return {PRODUCT: initial.rho, ALL_ONES: 1.0, ALL_TWOS: 0.0}.get(initial.kind, 0.0)


# -- replica bodies (module level so they pickle) --------------------------


def _density(state):
    return state.density


def _block_freq(n, state):
    ones = state.cfg.heights == 1
    acc = ones.copy()
    for k in range(1, n):
        acc &= np.roll(ones, -k)
    return float(acc.mean())


def _trace(spec, model, initial, times, rng):
    state = SimState.from_distribution(initial, spec.topology, rng)
    (vals,) = run_until(state, model, max(times) if len(times) else 0.0, [(times, _density)])
    return vals


def _freeze(spec, rng):
    state = SimState.from_distribution(spec.initial, spec.topology, rng)
    t_hit = freezing_time(state, spec.model, spec.epsilon, spec.t_max)
    times = np.array([s for s in spec.sample_times if s >= state.t], dtype=float)
    (vals,) = run_until(state, spec.model, max(spec.t_max, state.t), [(times, _density)])
    return t_hit, times, vals, state.density


def _long_run(spec, model, rng):
    times = np.arange(spec.t_avg_start, spec.t_avg_end + 1e-9, spec.t_step)
    state = SimState.from_distribution(spec.initial, spec.topology, rng)
    hooks = [(times, _density), (times, partial(_block_freq, 2)), (times, partial(_block_freq, 3))]
    return run_until(state, model, spec.t_avg_end, hooks)


def _vanish(size, spec, rng):
    return lone_one_vanish_time(Interval(size), spec.model.alpha, spec.window, rng, spec.model.flip)


# -- scenarios -------------------------------------------------------------


def _density_curves(run, model, initial, times, label, theory_fn, tol, check_pred, group=0):
    """Replica density traces at ``times`` with mean rows and per-time checks."""
    traces = run.replicas(partial(_trace, run.spec, model, initial, np.asarray(times, float)), group)
    if not traces:
        return None
    arr = np.array(traces)
    for r, vals in enumerate(arr):
        for t, v in zip(times, vals):
            run.row(t, r, label, v, theory_fn(t), run.window_ok(v))
    mean = arr.mean(axis=0)
    for t, v in zip(times, mean):
        th = theory_fn(t)
        ok = run.window_ok(v) and (th is None or run.window_ok(th))
        run.row(t, -1, label, v, th, ok)
        if tol is not None and check_pred(t, ok):
            run.check(f"{label}(t={t:g})", v, th, tol, abs(v - th) < tol)
    return mean


def _e1(run):
    spec = run.spec
    th = TheoryContext(spec.model)
    rho0 = _rho0(spec.initial)
    _density_curves(run, spec.model, spec.initial, spec.sample_times, "density",
                    lambda t: th.rho(t, rho0), 5e-3, lambda t, ok: True)


def _e2(run):
    spec = run.spec
    rho0 = _rho0(spec.initial)
    target = density_hitting_time(spec.epsilon, rho0, spec.model.alpha, spec.model.flip)
    res = run.replicas(partial(_freeze, spec))
    hits, finals = [], []
    for r, (t_hit, times, vals, final) in enumerate(res):
        run.row(None, r, "hitting_time", t_hit, target, True)
        for t, v in zip(times, vals):
            run.row(t, r, "density", v, 0.0, run.window_ok(v))
        run.row(spec.t_max, r, "final_density", final, 0.0, run.window_ok(final))
        hits.append(math.inf if t_hit is None else t_hit)
        finals.append(final)
    if not res:
        return
    h = float(np.mean(hits))
    f = float(np.mean(finals))
    run.row(None, -1, "hitting_time", h, target, True)
    run.row(spec.t_max, -1, "final_density", f, 0.0, run.window_ok(f))
    run.check(f"hitting_time(eps={spec.epsilon:g})", h, target, 0.02, abs(h - target) < 0.02)
    run.check("long_run_density", f, 0.0, 5e-3, f < 5e-3)


def _stationary(run, model, group, label):
    """Time-averaged density over [t_avg_start, t_avg_end] per replica; returns (means, H2, H3)."""
    res = run.replicas(partial(_long_run, run.spec, model), group)
    if not res:
        return None
    dens = np.array([r[0].mean() for r in res])
    h2 = np.array([r[1].mean() for r in res])
    h3 = np.array([r[2].mean() for r in res])
    th = predicted_stationary_density(model.alpha, model.flip)
    for r, d in enumerate(dens):
        run.row(run.spec.t_avg_end, r, label, d, th, run.window_ok(d))
    m = float(dens.mean())
    run.row(run.spec.t_avg_end, -1, label, m, th, run.window_ok(m))
    return m, th, float(h2.mean()), float(h3.mean())


def _blocks(run, items, rho=0.5):
    spec = run.spec
    n_ring = max(spec.topology.n, 1000)
    for k, (which, n) in enumerate(items):
        if not run.budget.ok():
            return
        stream = _BLOCK_GROUP * _GROUP + k
        rng = replica_rng(spec.seed, stream)
        run.streams.append(stream)
        try:
            est = mc_generator_block_estimate(rho, n, which, spec.block_samples, Ring(n_ring), rng)
        except EstimationError as e:
            raise ExperimentError(str(e)) from None
        target = predicted_generator_block(rho, n, which)
        label = f"generator_block[{which},n={n},rho={rho:g}]"
        run.row(None, -1, label, est.mean, target, True)
        run.row(None, -1, label + ".half_width", est.half_width, 0.02, True)
        run.check(label, est.mean, target, est.half_width, est.covers(target) and est.half_width <= 0.02)


def _e3(run):
    spec = run.spec
    res = _stationary(run, spec.model, 0, "stationary_density")
    if res is None:
        return
    m, th, h2, h3 = res
    run.check("stationary_density", m, th, 5e-3, abs(m - th) < 5e-3)
    t = spec.t_avg_end
    run.row(t, -1, "block_frequency_n2", h2, m**2, run.window_ok(m))
    run.row(t, -1, "block_frequency_n3", h3, m**3, run.window_ok(m))
    run.describe("block_frequency_n2_vs_product", h2, m**2, "product law with the measured density")
    run.describe("block_frequency_n3_vs_product", h3, m**3, "product law with the measured density")
    a = spec.model.alpha
    run.describe("product_consistency_rho_n2", product_consistency_rho(2, a), th,
                 "density a product stationary law would need, from the n=2 block balance")
    run.describe("product_consistency_rho_n3", product_consistency_rho(3, a), th,
                 "differs from n=2 unless alpha = 0: no product law is stationary")
    _blocks(run, [(LS, 2), (LS, 3), (LF, 2)])


def _e4(run):
    spec = run.spec
    f = spec.model.flip
    ac = critical_alpha(f)
    for g, a in enumerate(spec.alpha_grid):
        model = ModelSpec.sf(a, f)
        res = _stationary(run, model, g, f"stationary_density[alpha={a:g}]")
        if res is None:
            return
        m, th = res[0], res[1]
        if a < ac:
            run.check(f"stationary_density[alpha={a:g}]", m, th, 0.01, abs(m - th) < 0.01)
        else:
            run.check(f"frozen[alpha={a:g}]", m, 0.0, 5e-3, m < 5e-3)
        if a < f.m:
            lb = density_lower_bound(a, f)
            run.check(f"lower_bound[alpha={a:g}]", m, lb, None, m >= lb)


def _e5(run):
    spec = run.spec
    th = TheoryContext(spec.model)
    rho0 = _rho0(spec.initial)
    drift = spec.model.beta - spec.model.alpha

    def linear(t):
        return rho0 + drift * t

    mean = _density_curves(run, spec.model, spec.initial, spec.sample_times, "density",
                           lambda t: th.rho(t, rho0), 0.01,
                           lambda t, ok: ok and 0.0 < linear(t) < 1.0)
    if mean is None:
        return
    last = float(mean[-1])
    if drift > 0:
        run.check("absorbed_all_inactive", last, 1.0, 1e-3, last > 0.999)
    else:
        run.check("absorbed_all_active", last, 0.0, 1e-3, last < 1e-3)


def _e6(run):
    spec = run.spec
    for g, rho0 in enumerate(spec.rho_grid):
        init = type(spec.initial).product(rho0)
        _density_curves(run, spec.model, init, spec.sample_times, f"density[rho0={rho0:g}]",
                        lambda t, r=rho0: r, 0.01, lambda t, ok: True, group=g)
    _blocks(run, [(SA_BLOCK, 2), (SA_BLOCK, 3)])


def _e7(run):
    spec = run.spec
    a = spec.model.alpha
    medians = []
    for g, size in enumerate(spec.sizes):
        vals = run.replicas(partial(_vanish, size, spec), g)
        if not vals:
            return
        v = np.array([math.inf if x is None else x for x in vals])
        for r, x in enumerate(v):
            run.row(None, r, f"vanish_time[N={size}]", x, None, True)
        med = float(np.median(v))
        medians.append(med)
        ref = medians[0] * spec.sizes[0] / size
        run.row(None, -1, f"median_vanish_time[N={size}]", med, ref, True)
        run.describe(f"median_times_alpha_N[N={size}]", med * a * size, None, "constant under 1/(alpha N) scaling")
    for (n0, m0), (n1, m1) in zip(zip(spec.sizes, medians), zip(spec.sizes[1:], medians[1:])):
        expected = n1 / n0
        ratio = m0 / m1
        run.check(f"median_ratio[N={n0}->{n1}]", ratio, expected, 1.3,
                  expected / 1.3 <= ratio <= expected * 1.3)


def _custom(run):
    spec = run.spec
    th = TheoryContext(spec.model)
    rho0 = _rho0(spec.initial)
    theory = (lambda t: th.rho(t, rho0)) if spec.initial.kind != SINGLE_ONE else (lambda t: None)
    _density_curves(run, spec.model, spec.initial, spec.sample_times, "density", theory, None, None)


_SCENARIOS = {"E1": _e1, "E2": _e2, "E3": _e3, "E4": _e4, "E5": _e5, "E6": _e6, "E7": _e7, "custom": _custom}


# -- persistence -----------------------------------------------------------


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _csv_text(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[0]), str(r[1]), r[2], _fmt(r[3]), _fmt(r[4]), _fmt(bool(r[5]))])
    return buf.getvalue()


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _params(spec):
    d = asdict(spec)
    d["model"] = asdict(spec.model)
    return json.loads(json.dumps(d, default=list))


def run_experiment(spec, output_dir=None):
    """Execute ``spec`` and write its files; returns the :class:`RunManifest`.

    A run stopped by ``time_budget`` still writes everything it has, with
    ``partial`` set in the summary and the manifest.
    """
    out = output_dir or spec.output_dir
    if not out:
        raise ExperimentError("no output directory")
    os.makedirs(out, exist_ok=True)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    t0 = time.perf_counter()
    run = _Run(spec)
    _SCENARIOS[spec.scenario](run)
    partial_run = run.budget.exhausted
    manifest_path = os.path.join(out, MANIFEST_FILE)
    summary = dict(
        scenario=spec.scenario,
        params=_params(spec),
        checks=run.checks,
        descriptive=run.descriptive,
        partial=partial_run,
        manifest_path=MANIFEST_FILE,
    )
    text = emit_config(spec)
    _write(os.path.join(out, DATA_FILE), _csv_text(run.rows))
    _write(os.path.join(out, SUMMARY_FILE), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write(os.path.join(out, CONFIG_FILE), text)
    files = [dict(path=f, sha256=_sha256(os.path.join(out, f))) for f in (DATA_FILE, SUMMARY_FILE, CONFIG_FILE)]
    manifest = RunManifest(
        spec_text=text,
        code_version=__version__,
        master_seed=int(spec.seed),
        replica_seeds=[[s, replica_seed(spec.seed, s)] for s in run.streams],
        wall_clock_seconds=time.perf_counter() - t0,
        files=files,
        output_dir=os.path.abspath(out),
        partial=partial_run,
        started_at=started,
    )
    _write(manifest_path, manifest.to_json())
    return manifest


def load_summary(manifest):
    with open(os.path.join(manifest.output_dir, SUMMARY_FILE)) as fh:
        return json.load(fh)


def all_passed(manifest):
    s = load_summary(manifest)
    return not s["partial"] and all(c["pass"] for c in s["checks"])
