"""Equivalence tests of ``H0: D(Q, P) >= theta`` against ``H1: D(Q, P) < theta``.

Four tests are provided. The normal variants studentize the squared
V-statistic with a jackknife variance and compare against ``z_alpha``. The
bootstrap variants compare ``theta - D_hat`` against a weighted-bootstrap
quantile, and admit a power-driven choice of ``theta``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from kequiv.ksd import SteinContext, ksd_bootstrap_sq_samples, ksd_jackknife_variance, ksd_sq_vstat
from kequiv.mmd import MmdContext, mmd_jackknife_variance, mmd_pair_bootstrap, mmd_sq_vstat
from kequiv.resampling import empirical_quantile

__all__ = [
    "TEST_NAMES",
    "TestConfig",
    "TestReport",
    "e_ksd_boot",
    "e_ksd_normal",
    "e_mmd_boot",
    "e_mmd_normal",
    "norm_ppf",
    "select_margin_ksd",
    "select_margin_mmd",
]

DEGENERATE_VARIANCE = 1e-14

TEST_NAMES = ("EKsdNormal", "EKsdBoot", "EMmdNormal", "EMmdBoot")
_ALGORITHM = {name: i + 1 for i, name in enumerate(TEST_NAMES)}

# Acklam's rational approximation to the normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def norm_ppf(p: float) -> float:
    """Standard normal quantile.

    Acklam's approximation (relative error about 1e-9) followed by one
    Halley step against ``erfc``, which brings the error to rounding level.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if p > 0.5:
        # 1 - p is exact here, and the lower-tail residual keeps full precision
        return -norm_ppf(1.0 - p)
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@dataclass(frozen=True)
class TestConfig:
    """Level, margin and bootstrap settings for one test invocation."""

    __test__ = False  # not a pytest class

    alpha: float
    theta: float
    B: int = 500
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (math.isfinite(self.theta) and self.theta > 0.0):
            raise ValueError(f"theta must be positive, got {self.theta}")
        if int(self.B) != self.B or self.B < 1:
            raise ValueError(f"B must be a positive integer, got {self.B}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")
        object.__setattr__(self, "B", int(self.B))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class TestReport:
    """Outcome of one equivalence test; ``reject`` means equivalence is concluded."""

    __test__ = False

    test_name: str
    statistic: float
    critical_value: float
    reject: bool
    discrepancy_estimate: float
    variance_estimate: float | None
    n: int
    m: int | None
    alpha: float
    theta: float
    B: int | None
    seed: int | None
    degenerate_variance: bool = False

    def to_dict(self) -> dict:
        out = asdict(self)
        out["algorithm"] = _ALGORITHM[self.test_name]
        return out


def _normal_report(name, sq_est, var, scale, n, m, config):
    z = norm_ppf(config.alpha)
    gap = sq_est - config.theta**2
    degenerate = var <= DEGENERATE_VARIANCE
    if degenerate:
        statistic = math.sqrt(scale) * gap
        reject = gap < 0.0
    else:
        statistic = math.sqrt(scale) * gap / math.sqrt(var)
        reject = statistic < z
    return TestReport(
        test_name=name,
        statistic=float(statistic),
        critical_value=z,
        reject=bool(reject),
        discrepancy_estimate=math.sqrt(sq_est),
        variance_estimate=float(var),
        n=n,
        m=m,
        alpha=config.alpha,
        theta=config.theta,
        B=None,
        seed=None,
        degenerate_variance=bool(degenerate),
    )


def _boot_report(name, sq_est, replicates, n, m, config):
    statistic = config.theta - math.sqrt(sq_est)
    critical = empirical_quantile(replicates, 1.0 - config.alpha)
    return TestReport(
        test_name=name,
        statistic=float(statistic),
        critical_value=critical,
        reject=bool(statistic > critical),
        discrepancy_estimate=math.sqrt(sq_est),
        variance_estimate=None,
        n=n,
        m=m,
        alpha=config.alpha,
        theta=config.theta,
        B=config.B,
        seed=config.seed,
    )


def e_ksd_normal(ctx: SteinContext, config: TestConfig) -> TestReport:
    """Reject when ``sqrt(n) (KSD^2_n - theta^2) / sigma_hat < z_alpha``.

    If the jackknife variance is at most 1e-14 the decision falls back to
    ``KSD^2_n < theta^2`` and the report is flagged ``degenerate_variance``.
    """
    if ctx.n < 2:
        raise ValueError(f"E-KSD-Normal needs n >= 2, got {ctx.n}")
    return _normal_report(
        "EKsdNormal", ksd_sq_vstat(ctx), ksd_jackknife_variance(ctx), ctx.n, ctx.n, None, config
    )


def e_ksd_boot(ctx: SteinContext, config: TestConfig) -> TestReport:
    """Reject when ``theta - KSD_n`` exceeds the ``1 - alpha`` bootstrap quantile of ``sqrt(D^2_W)``."""
    reps = np.sqrt(ksd_bootstrap_sq_samples(ctx, config.B, config.seed))
    return _boot_report("EKsdBoot", ksd_sq_vstat(ctx), reps, ctx.n, None, config)


def e_mmd_normal(ctx: MmdContext, config: TestConfig) -> TestReport:
    if ctx.n < 2 or ctx.m < 2:
        raise ValueError(f"E-MMD-Normal needs n, m >= 2, got n={ctx.n}, m={ctx.m}")
    var = mmd_jackknife_variance(ctx).sigma_mmd_sq
    return _normal_report(
        "EMmdNormal", mmd_sq_vstat(ctx), var, ctx.n + ctx.m, ctx.n, ctx.m, config
    )


def e_mmd_boot(ctx: MmdContext, config: TestConfig) -> TestReport:
    reps = mmd_pair_bootstrap(ctx, config.B, config.seed)
    return _boot_report("EMmdBoot", mmd_sq_vstat(ctx), reps, ctx.n, ctx.m, config)


def _check_margin_args(theta_prime, alpha, beta, B):
    if not (math.isfinite(theta_prime) and theta_prime >= 0.0):
        raise ValueError(f"theta_prime must be >= 0, got {theta_prime}")
    for name, v in (("alpha", alpha), ("beta", beta)):
        if not 0.0 < v < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {v}")
    if B < 1:
        raise ValueError(f"B must be >= 1, got {B}")


def _margin(reps, theta_prime, alpha, beta):
    return (
        theta_prime
        + empirical_quantile(reps, 1.0 - alpha)
        + empirical_quantile(reps, 1.0 - beta)
    )


def select_margin_ksd(
    ctx: SteinContext, theta_prime: float, alpha: float, beta: float, B: int, seed
) -> float:
    """``theta' + gamma_{1-alpha} + gamma_{1-beta}`` from one bootstrap replicate vector.

    With this margin E-KSD-Boot has power at least ``1 - beta`` (up to
    bootstrap error) against every ``Q`` within ``theta'`` of ``P``.
    """
    _check_margin_args(theta_prime, alpha, beta, B)
    reps = np.sqrt(ksd_bootstrap_sq_samples(ctx, B, seed))
    return _margin(reps, theta_prime, alpha, beta)


def select_margin_mmd(
    ctx: MmdContext, theta_prime: float, alpha: float, beta: float, B: int, seed
) -> float:
    _check_margin_args(theta_prime, alpha, beta, B)
    return _margin(mmd_pair_bootstrap(ctx, B, seed), theta_prime, alpha, beta)
