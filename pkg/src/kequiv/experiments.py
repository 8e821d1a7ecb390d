"""Monte-Carlo rejection-rate experiments and the population-discrepancy oracle.

A plan names a scenario, a list of sweep values and a repetition count. Each
(sweep value, repetition) pair draws fresh data from seeds derived from the
plan seed, the float64 bit pattern of the sweep value and the repetition
index, so results do not depend on sweep order or on the number of workers.

Scenarios and what their sweep value controls:

``GaussMeanShiftBySampleSize``  sample size ``n``
``GaussMeanShiftByMargin``      mean shift defining ``theta`` through the oracle
``GaussPowerSelectedTheta``     mean of ``Q``; ``theta`` is power-selected per replication
``RbmPerturbation``             standard deviation of the perturbation of ``b``
``TwoSampleGeneric``            ``theta``, on fixed user data

Gaussian scenarios draw ``X ~ N(q_mean, 1)`` and, for MMD tests,
``Y ~ N(p_mean, 1)``; the KSD model is ``N(p_mean, 1)``.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from kequiv.csvio import format_float, read_samples
from kequiv.equivalence import (
    TEST_NAMES,
    TestConfig,
    e_ksd_boot,
    e_ksd_normal,
    e_mmd_boot,
    e_mmd_normal,
    select_margin_ksd,
    select_margin_mmd,
)
from kequiv.kernels import KernelSpec, as_samples, median_heuristic
from kequiv.ksd import SteinContext, ksd_jackknife_variance, ksd_sq_vstat
from kequiv.mmd import MmdContext, mmd_jackknife_variance, mmd_sq_vstat
from kequiv.models import GaussianModel, GbRbmModel, gaussian_sample, rbm_gibbs_sample
from kequiv.resampling import child_seed

__all__ = [
    "SCENARIOS",
    "CurveRow",
    "ExperimentPlan",
    "OracleResult",
    "OracleSettings",
    "PlanConfig",
    "RejectionCurve",
    "gaussian_ksd_oracle",
    "gaussian_mmd_oracle",
    "load_plan",
    "population_discrepancy_mc",
    "rbm_perturbation_experiment",
    "reference_kernel",
    "run_rejection_curve",
]

SCENARIOS = (
    "GaussMeanShiftBySampleSize",
    "GaussMeanShiftByMargin",
    "GaussPowerSelectedTheta",
    "RbmPerturbation",
    "TwoSampleGeneric",
)

_KSD_TESTS = ("EKsdNormal", "EKsdBoot")
_MMD_TESTS = ("EMmdNormal", "EMmdBoot")

_DEFAULT_TESTS = {
    "GaussMeanShiftBySampleSize": TEST_NAMES,
    "GaussMeanShiftByMargin": TEST_NAMES,
    "GaussPowerSelectedTheta": ("EKsdBoot", "EMmdBoot"),
    "RbmPerturbation": _KSD_TESTS,
    "TwoSampleGeneric": _MMD_TESTS,
}
_ALLOWED_TESTS = {
    "RbmPerturbation": _KSD_TESTS,
    "TwoSampleGeneric": _MMD_TESTS,
}

_GAUSS_DEFAULTS = {
    "n": 200,
    "m": None,
    "q_mean": 0.0,
    "p_mean": 0.0,
    "margin_shift": 0.3,
    "beta": 0.2,
    "theta_prime": 0.0,
    "ksd_bandwidth_sq": "reference",
    "mmd_bandwidth_sq": "reference",
}
_RBM_DEFAULTS = {
    "n": 300,
    "d": 10,
    "d_prime": 3,
    "burn_in": 2000,
    "thin": 1,
    "beta": 0.2,
    "theta_prime": 0.0,
    "ksd_bandwidth_sq": "reference",
}
_TWO_SAMPLE_DEFAULTS = {"x_path": None, "y_path": None, "X": None, "Y": None, "mmd_bandwidth_sq": None}

REFERENCE_SIZE = 2000
MIN_MC_SIZE = 10_000

# purposes for derived seeds
_X, _Y, _TEST, _PERTURB = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# oracle


@dataclass(frozen=True)
class OracleResult:
    """Population discrepancy estimated from a large sample.

    ``std_error`` combines the jackknife standard error of the squared
    estimate with the ``O(1/N)`` bias bound of the V-statistic, and is mapped
    to the unsquared scale as half the width of ``[sqrt(v - s), sqrt(v + s)]``.
    """

    kind: str
    value: float
    std_error: float
    mc_size: int
    seed: int

    def __float__(self) -> float:
        return self.value

    def to_dict(self) -> dict:
        return asdict(self)


def _root_se(sq_value, sq_se):
    return 0.5 * (math.sqrt(sq_value + sq_se) - math.sqrt(max(sq_value - sq_se, 0.0)))


def population_discrepancy_mc(
    kind: str,
    kernel: KernelSpec,
    sample_q,
    mc_size: int,
    seed: int,
    model=None,
    sample_p=None,
) -> OracleResult:
    """KSD(Q, P) or MMD(Q, P) as the square root of a V-statistic on ``mc_size`` draws.

    ``sample_q(n, seed)`` (and ``sample_p`` for MMD) return ``n x d`` samples.
    KSD needs ``model`` for the score of ``P``; MMD uses two independent
    samples drawn with child seeds ``(seed, 0)`` and ``(seed, 1)``.
    """
    kind = kind.lower()
    if mc_size < MIN_MC_SIZE:
        raise ValueError(f"mc_size must be >= {MIN_MC_SIZE}, got {mc_size}")
    X = as_samples(sample_q(mc_size, child_seed(seed, 0)), "oracle sample")
    if kind == "ksd":
        if model is None:
            raise ValueError("KSD oracle needs a model")
        ctx = SteinContext(kernel, model, X)
        sq = ksd_sq_vstat(ctx)
        bias = abs(float(np.mean(ctx.diagonal())) - sq) / mc_size
        sq_se = math.sqrt(ksd_jackknife_variance(ctx) / mc_size) + bias
    elif kind == "mmd":
        if sample_p is None:
            raise ValueError("MMD oracle needs sample_p")
        Y = as_samples(sample_p(mc_size, child_seed(seed, 1)), "oracle sample")
        ctx = MmdContext(kernel, X, Y)
        sq = mmd_sq_vstat(ctx)
        bias = 2.0 * ctx.diag_value() / mc_size
        sq_se = math.sqrt(mmd_jackknife_variance(ctx).sigma_mmd_sq / (2 * mc_size)) + bias
    else:
        raise ValueError(f"kind must be 'ksd' or 'mmd', got {kind!r}")
    return OracleResult(kind, math.sqrt(sq), _root_se(sq, sq_se), int(mc_size), int(seed))


def _gauss_sampler(mean):
    model = GaussianModel([float(mean)])
    return lambda n, seed: gaussian_sample(model, n, seed)


@functools.lru_cache(maxsize=64)
def gaussian_ksd_oracle(shift: float, kernel: KernelSpec, mc_size: int, seed: int) -> OracleResult:
    """KSD between ``N(0, 1)`` data and the ``N(shift, 1)`` model; memoized per process."""
    return population_discrepancy_mc(
        "ksd", kernel, _gauss_sampler(0.0), mc_size, seed, model=GaussianModel([float(shift)])
    )


@functools.lru_cache(maxsize=64)
def gaussian_mmd_oracle(shift: float, kernel: KernelSpec, mc_size: int, seed: int) -> OracleResult:
    """MMD between ``N(0, 1)`` and ``N(shift, 1)``; memoized per process."""
    return population_discrepancy_mc(
        "mmd", kernel, _gauss_sampler(0.0), mc_size, seed, sample_p=_gauss_sampler(shift)
    )


@functools.lru_cache(maxsize=64)
def reference_kernel(kind: str, seed: int) -> KernelSpec:
    """Median-heuristic kernel on a seeded ``N(0, 1)`` reference sample.

    IMQ for ``ksd``; RBF on two pooled halves for ``mmd``.
    """
    X = gaussian_sample(GaussianModel([0.0]), REFERENCE_SIZE, child_seed(seed, 2))
    if kind == "ksd":
        return KernelSpec.imq(median_heuristic(X))
    if kind == "mmd":
        half = REFERENCE_SIZE // 2
        return KernelSpec.rbf(median_heuristic(X[:half], X[half:]))
    raise ValueError(f"kind must be 'ksd' or 'mmd', got {kind!r}")


# ---------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class OracleSettings:
    mc_size: int = 200_000
    mmd_mc_size: int = 100_000
    seed: int = 0

    def __post_init__(self):
        for name in ("mc_size", "mmd_mc_size"):
            if getattr(self, name) < MIN_MC_SIZE:
                raise ValueError(f"oracle {name} must be >= {MIN_MC_SIZE}")
        if self.seed < 0:
            raise ValueError("oracle seed must be non-negative")


@dataclass(frozen=True)
class PlanConfig:
    """Template for the per-replication ``TestConfig``; ``theta=None`` lets the scenario choose."""

    alpha: float = 0.05
    B: int = 500
    seed: int = 0
    theta: float | None = None

    def __post_init__(self):
        # validate through TestConfig so the rules live in one place
        TestConfig(self.alpha, 1.0 if self.theta is None else self.theta, self.B, self.seed)

    def make(self, theta: float, seed: int) -> TestConfig:
        return TestConfig(self.alpha, theta, self.B, seed)


@dataclass(frozen=True)
class ExperimentPlan:
    scenario: str
    sweep: tuple
    repetitions: int = 200
    tests: tuple | None = None
    config: PlanConfig = field(default_factory=PlanConfig)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    params: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        sweep = tuple(float(v) for v in self.sweep)
        if not sweep:
            raise ValueError("sweep must be non-empty")
        if not all(math.isfinite(v) for v in sweep):
            raise ValueError("sweep values must be finite")
        object.__setattr__(self, "sweep", sweep)
        if int(self.repetitions) != self.repetitions or self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        tests = tuple(self.tests) if self.tests is not None else _DEFAULT_TESTS[self.scenario]
        allowed = _ALLOWED_TESTS.get(self.scenario, TEST_NAMES)
        bad = [t for t in tests if t not in allowed]
        if bad or not tests:
            raise ValueError(f"tests {bad or '[]'} not available for {self.scenario}; choose from {allowed}")
        object.__setattr__(self, "tests", tests)
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        defaults = _scenario_defaults(self.scenario)
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ValueError(f"unknown params for {self.scenario}: {sorted(unknown)}")
        object.__setattr__(self, "params", {**defaults, **self.params})

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentPlan":
        doc = dict(doc)
        known = {"scenario", "sweep", "repetitions", "tests", "config", "oracle", "params", "workers"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown plan keys: {sorted(unknown)}")
        if "config" in doc:
            doc["config"] = PlanConfig(**doc["config"])
        if "oracle" in doc:
            doc["oracle"] = OracleSettings(**doc["oracle"])
        return cls(**doc)

    def to_dict(self) -> dict:
        params = {k: v for k, v in self.params.items() if k not in ("X", "Y")}
        return {
            "scenario": self.scenario,
            "sweep": list(self.sweep),
            "repetitions": self.repetitions,
            "tests": list(self.tests),
            "config": asdict(self.config),
            "oracle": asdict(self.oracle),
            "params": params,
            "workers": self.workers,
        }


def _scenario_defaults(scenario):
    if scenario.startswith("Gauss"):
        return _GAUSS_DEFAULTS
    if scenario == "RbmPerturbation":
        return _RBM_DEFAULTS
    return _TWO_SAMPLE_DEFAULTS


def load_plan(path) -> ExperimentPlan:
    with open(path) as fh:
        return ExperimentPlan.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class CurveRow:
    parameter: float
    test: str
    proportion: float
    ci_halfwidth: float
    theta: float
    theta_provenance: str
    repetitions: int
    rejections: int
    mean_discrepancy: float


CSV_FIELDS = (
    "parameter",
    "test",
    "proportion",
    "ci_halfwidth",
    "theta",
    "theta_provenance",
    "repetitions",
    "rejections",
    "mean_discrepancy",
)


@dataclass
class RejectionCurve:
    scenario: str
    rows: list
    failures: list
    reports: list
    metadata: dict

    def row(self, parameter: float, test: str) -> CurveRow:
        for r in self.rows:
            if r.parameter == parameter and r.test == test:
                return r
        raise KeyError((parameter, test))

    def proportions(self, test: str) -> dict:
        return {r.parameter: r.proportion for r in self.rows if r.test == test}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            cells = []
            for name in CSV_FIELDS:
                v = getattr(r, name)
                cells.append(format_float(v) if isinstance(v, float) else str(v))
            w.writerow(cells)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "rows": [asdict(r) for r in self.rows],
            "failures": list(self.failures),
            "metadata": self.metadata,
            "reports": list(self.reports),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def binomial_halfwidth(p: float, reps: int) -> float:
    """Normal-approximation 95% half-width ``1.96 sqrt(p (1 - p) / R)``."""
    return 1.96 * math.sqrt(p * (1.0 - p) / reps)


# ---------------------------------------------------------------------------
# running


def _point_seed(plan_seed: int, value: float, rep: int, purpose: int) -> np.random.SeedSequence:
    bits = int(np.float64(value).view(np.uint64))
    return np.random.SeedSequence([plan_seed, bits >> 32, bits & 0xFFFFFFFF, rep, purpose])


def _int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0])


_RUNNERS = {
    "EKsdNormal": e_ksd_normal,
    "EKsdBoot": e_ksd_boot,
    "EMmdNormal": e_mmd_normal,
    "EMmdBoot": e_mmd_boot,
}


class _Setup:
    """Everything shared by the replications of one plan: kernels, oracle values, models."""

    def __init__(self, plan: ExperimentPlan):
        self.plan = plan
        self.p = plan.params
        self.oracles = []
        self.wants_ksd = any(t in _KSD_TESTS for t in plan.tests)
        self.wants_mmd = any(t in _MMD_TESTS for t in plan.tests)
        seed = plan.oracle.seed
        if plan.scenario.startswith("Gauss"):
            self.ksd_kernel = self._kernel("ksd", self.p["ksd_bandwidth_sq"], seed)
            self.mmd_kernel = self._kernel("mmd", self.p["mmd_bandwidth_sq"], seed)
        elif plan.scenario == "RbmPerturbation":
            self.rbm = GbRbmModel.random(self.p["d"], self.p["d_prime"], child_seed(plan.config.seed, 9))
            bw = self.p["ksd_bandwidth_sq"]
            if bw == "reference":
                ref = rbm_gibbs_sample(
                    self.rbm, REFERENCE_SIZE, self.p["burn_in"], self.p["thin"], child_seed(seed, 2)
                )
                self.ksd_kernel = KernelSpec.imq(median_heuristic(ref))
            else:
                self.ksd_kernel = None if bw == "per-test" else KernelSpec.imq(float(bw))
        else:
            X = self.p["X"] if self.p["X"] is not None else _read(self.p["x_path"], "x_path")
            Y = self.p["Y"] if self.p["Y"] is not None else _read(self.p["y_path"], "y_path")
            self.X, self.Y = as_samples(X, "X"), as_samples(Y, "Y")
            bw = self.p["mmd_bandwidth_sq"]
            self.mmd_kernel = (
                KernelSpec.rbf(median_heuristic(self.X, self.Y, max_points=4096))
                if bw is None
                else KernelSpec.rbf(float(bw))
            )
            self.mmd_ctx = MmdContext(self.mmd_kernel, self.X, self.Y)

    @staticmethod
    def _kernel(kind, bw, seed):
        if bw == "reference":
            return reference_kernel(kind, seed)
        if bw == "per-test":
            return None
        return KernelSpec.imq(float(bw)) if kind == "ksd" else KernelSpec.rbf(float(bw))

    def metadata(self) -> dict:
        out = {"oracle": list(self.oracles)}
        for name in ("ksd_kernel", "mmd_kernel"):
            k = getattr(self, name, None)
            if k is not None:
                out[name] = k.to_dict()
        if hasattr(self, "rbm"):
            out["rbm"] = self.rbm.to_dict()["rbm"]
        return out

    def oracle_theta(self, margin_shift: float):
        """Oracle margins for the KSD and MMD tests at ``margin_shift``."""
        o = self.plan.oracle
        thetas = {}
        if self.wants_ksd:
            r = gaussian_ksd_oracle(margin_shift, self._need(self.ksd_kernel), o.mc_size, o.seed)
            thetas["ksd"] = r.value
            self._log(r, margin_shift)
        if self.wants_mmd:
            r = gaussian_mmd_oracle(margin_shift, self._need(self.mmd_kernel), o.mmd_mc_size, o.seed)
            thetas["mmd"] = r.value
            self._log(r, margin_shift)
        return thetas

    def _log(self, result, shift):
        entry = {**result.to_dict(), "shift": shift}
        if entry not in self.oracles:
            self.oracles.append(entry)

    @staticmethod
    def _need(kernel):
        if kernel is None:
            raise ValueError("an oracle margin needs a fixed kernel; set a bandwidth or use 'reference'")
        return kernel


def _read(path, name):
    if path is None:
        raise ValueError(f"TwoSampleGeneric needs {name} or an in-memory array")
    return read_samples(path)


def _gauss_point(setup: _Setup, value: float):
    """Per-point settings: sample sizes, means, and oracle margins if used."""
    p = dict(setup.p)
    scenario = setup.plan.scenario
    if scenario == "GaussMeanShiftBySampleSize":
        if value != int(value) or value < 2:
            raise ValueError(f"sample size must be an integer >= 2, got {value}")
        p["n"] = int(value)
    elif scenario == "GaussMeanShiftByMargin":
        p["margin_shift"] = value
    else:
        p["q_mean"] = value
    p["m"] = p["n"] if p["m"] is None else int(p["m"])
    if setup.plan.config.theta is not None:
        p["theta"], p["provenance"] = {"ksd": setup.plan.config.theta, "mmd": setup.plan.config.theta}, "user"
    elif scenario == "GaussPowerSelectedTheta":
        p["theta"], p["provenance"] = None, "power-selected"
    else:
        p["theta"], p["provenance"] = setup.oracle_theta(p["margin_shift"]), "oracle"
    return p


def _gauss_rep(setup: _Setup, value: float, p: dict, rep: int):
    plan = setup.plan
    seed = plan.config.seed
    test_seed = _int_seed(_point_seed(seed, value, rep, _TEST))
    X = gaussian_sample(GaussianModel([p["q_mean"]]), p["n"], _point_seed(seed, value, rep, _X))
    results = {}
    if setup.wants_ksd:
        kernel = setup.ksd_kernel
        model = GaussianModel([p["p_mean"]])
        ctx = SteinContext(kernel, model, X) if kernel else SteinContext.with_median_heuristic(model, X)
        theta = _theta(p, "ksd", lambda: select_margin_ksd(
            ctx, p["theta_prime"], plan.config.alpha, p["beta"], plan.config.B, test_seed))
        _run_tests(results, plan, ctx, _KSD_TESTS, theta, test_seed)
    if setup.wants_mmd:
        Y = gaussian_sample(GaussianModel([p["p_mean"]]), p["m"], _point_seed(seed, value, rep, _Y))
        kernel = setup.mmd_kernel
        ctx = MmdContext(kernel, X, Y) if kernel else MmdContext.with_median_heuristic(X, Y)
        theta = _theta(p, "mmd", lambda: select_margin_mmd(
            ctx, p["theta_prime"], plan.config.alpha, p["beta"], plan.config.B, test_seed))
        _run_tests(results, plan, ctx, _MMD_TESTS, theta, test_seed)
    return results


def _theta(p, kind, select):
    return p["theta"][kind] if p["theta"] is not None else select()


def _run_tests(results, plan, ctx, family, theta, test_seed):
    config = plan.config.make(theta, test_seed)
    for name in family:
        if name in plan.tests:
            results[name] = _RUNNERS[name](ctx, config)


def _rbm_point(setup: _Setup, value: float):
    if value < 0:
        raise ValueError(f"noise level must be >= 0, got {value}")
    p = dict(setup.p)
    if setup.plan.config.theta is not None:
        p["theta"], p["provenance"] = {"ksd": setup.plan.config.theta}, "user"
    else:
        p["theta"], p["provenance"] = None, "power-selected"
    return p


def _rbm_rep(setup: _Setup, value: float, p: dict, rep: int):
    plan = setup.plan
    seed = plan.config.seed
    test_seed = _int_seed(_point_seed(seed, value, rep, _TEST))
    base = setup.rbm
    rng = np.random.default_rng(_point_seed(seed, value, rep, _PERTURB))
    perturbed = GbRbmModel(base.B, base.b + value * rng.standard_normal(base.dim), base.c)
    X = rbm_gibbs_sample(perturbed, p["n"], p["burn_in"], p["thin"], _point_seed(seed, value, rep, _X))
    kernel = setup.ksd_kernel
    ctx = SteinContext(kernel, base, X) if kernel else SteinContext.with_median_heuristic(base, X)
    theta = _theta(p, "ksd", lambda: select_margin_ksd(
        ctx, p["theta_prime"], plan.config.alpha, p["beta"], plan.config.B, test_seed))
    results = {}
    _run_tests(results, plan, ctx, _KSD_TESTS, theta, test_seed)
    return results


def _two_sample_point(setup: _Setup, value: float):
    if value <= 0:
        raise ValueError(f"theta must be positive, got {value}")
    return {"theta": {"mmd": value}, "provenance": "user"}


def _two_sample_rep(setup: _Setup, value: float, p: dict, rep: int):
    plan = setup.plan
    test_seed = _int_seed(_point_seed(plan.config.seed, value, rep, _TEST))
    results = {}
    _run_tests(results, plan, setup.mmd_ctx, _MMD_TESTS, p["theta"]["mmd"], test_seed)
    return results


_HANDLERS = {
    "GaussMeanShiftBySampleSize": (_gauss_point, _gauss_rep),
    "GaussMeanShiftByMargin": (_gauss_point, _gauss_rep),
    "GaussPowerSelectedTheta": (_gauss_point, _gauss_rep),
    "RbmPerturbation": (_rbm_point, _rbm_rep),
    "TwoSampleGeneric": (_two_sample_point, _two_sample_rep),
}


def run_rejection_curve(plan: ExperimentPlan) -> RejectionCurve:
    """Run every sweep point of ``plan`` and tally rejection proportions.

    An exception inside a sweep point is recorded in ``failures`` and the
    remaining points still run.
    """
    setup = _Setup(plan)
    point_fn, rep_fn = _HANDLERS[plan.scenario]
    rows, failures, reports = [], [], []
    pool = ThreadPoolExecutor(max_workers=plan.workers) if plan.workers > 1 else None
    try:
        for value in plan.sweep:
            try:
                p = point_fn(setup, value)
                reps = range(plan.repetitions)
                call = functools.partial(rep_fn, setup, value, p)
                outcomes = list(pool.map(call, reps)) if pool else [call(r) for r in reps]
            except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
                failures.append({"parameter": value, "error": f"{type(exc).__name__}: {exc}"})
                continue
            for name in plan.tests:
                got = [o[name] for o in outcomes]
                k = sum(r.reject for r in got)
                prop = k / plan.repetitions
                rows.append(
                    CurveRow(
                        parameter=value,
                        test=name,
                        proportion=prop,
                        ci_halfwidth=binomial_halfwidth(prop, plan.repetitions),
                        theta=float(np.mean([r.theta for r in got])),
                        theta_provenance=p["provenance"],
                        repetitions=plan.repetitions,
                        rejections=int(k),
                        mean_discrepancy=float(np.mean([r.discrepancy_estimate for r in got])),
                    )
                )
            for rep, o in enumerate(outcomes):
                for name in plan.tests:
                    reports.append({"parameter": value, "repetition": rep, **o[name].to_dict()})
    finally:
        if pool:
            pool.shutdown()
    meta = {"plan": plan.to_dict(), **setup.metadata()}
    return RejectionCurve(plan.scenario, rows, failures, reports, meta)


def rbm_perturbation_experiment(
    base_seed: int,
    noise_levels,
    n: int = 300,
    d: int = 10,
    d_prime: int = 3,
    repetitions: int = 200,
    **kwargs,
) -> RejectionCurve:
    """Rejection curve of the KSD tests against perturbations ``b + sigma * N(0, I)``.

    ``P`` is a random RBM drawn from ``base_seed``; margins are power-selected
    unless ``config=PlanConfig(theta=...)`` is passed. Remaining keyword
    arguments go to ``ExperimentPlan`` (``params`` are merged).
    """
    params = {"n": n, "d": d, "d_prime": d_prime, **kwargs.pop("params", {})}
    config = kwargs.pop("config", PlanConfig(seed=base_seed))
    plan = ExperimentPlan(
        "RbmPerturbation",
        tuple(noise_levels),
        repetitions=repetitions,
        config=config,
        params=params,
        **kwargs,
    )
    return run_rejection_curve(plan)
