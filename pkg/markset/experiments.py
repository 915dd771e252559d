"""
Experiment orchestration.

Each named experiment runs a pipeline of numeric checks, writes its curves and
reports under ``<output_dir>/<experiment>/`` and collects one CheckResult per
check into a RunManifest. A MarksetError raised inside a check is recorded as
a failed check and the pipeline moves on.
"""

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate

import markset
from markset.analysis.definiteness import (
    cnd_test_via_exponential,
    fourier_pd_test,
    gram_pd_test,
    max_at_origin_test,
    reproduce_witness,
)
from markset.config.config import Tolerances, config
from markset.core.covariance import CovarianceModel, from_params
from markset.core.gauss import (
    KMM_EXCESS_THRESHOLD,
    C_t,
    CovtEvidence,
    E_t,
    Psi,
    ThresholdModel,
    V_0,
    V_t,
    bivariate_conditional_moments,
    bivariate_moment_quadrature,
    cov_deriv_at_zero,
    derivative_numerator,
    f0,
    f_t,
    fig_covt_evidence,
    integral_identity_lhs,
    integral_identity_rhs,
    mean_mark,
    orthant_P,
    phi,
    richardson_forward_derivative,
    set_cov_deriv_at_zero,
    theory_t,
    theory_t0,
)
from markset.errors import DomainError, MarksetError
from markset.processors.data_processor import DataProcessor
from markset.processors.estimate import (
    EstimatorConfig,
    PairSums,
    epsilon_limit_diagnostic,
    estimate_characteristics,
    estimate_kappa,
    jackknife,
    kappa_table,
    pair_sums,
)
from markset.schemas import CheckResult, ExperimentConfig, RunManifest, SecondOrderCurve
from markset.series.monotonicity import DIRECT_ORDER, verify_absolute_monotonicity
from markset.services.grid import GridSpec, RngSeed
from markset.services.simulate import (
    PSD_CLIP,
    GaussianFieldSampler,
    excursion_sample,
    periodic_triangle_breakpoints,
    periodic_triangle_cov,
    periodic_triangle_cov_integral,
    periodic_triangle_sample,
    segment_singleton_sample,
)

logger = logging.getLogger(__name__)

CHARACTERISTICS = ("E", "cov", "gamma", "cor", "kmm")
BOUNDARY_T = (-2.0, -1.0, 0.0, 0.5, 1.0, 2.0)
ORACLE_T = (-1.0, -0.5, 0.0, 0.5, 1.0)
ORACLE_RHO = (-0.8, -0.4, 0.0, 0.4, 0.8)
MC_RHO = (0.2, 0.5, 0.8)
COVERAGE = 0.95

# grid defaults per simulation experiment: (nodes per axis, spacing)
DEFAULT_GRIDS = {
    "grf-empirical": (1024, 0.05),
    "periodic-example": (2000, 1.0 / 2000),
    "segment-singleton": (800, 0.01),
}
DEFAULT_LAGS = {
    "grf-empirical": [0.1 * k for k in range(1, 21)],
    "periodic-example": [0.025 * k for k in range(20)],
    "segment-singleton": [0.5, 1.0],
}
DEFAULT_EPS_LADDER = [0.08, 0.06, 0.04, 0.02, 0.0]
INTEGRAL_REPLICATES = 50


# ---------------------------------------------------------------------------
# replicate workers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicateJob:
    """A contiguous block of replicates for one sample model."""

    kind: str
    grid: GridSpec
    seed: RngSeed
    estimator: EstimatorConfig
    indices: Tuple[int, ...]
    params: Dict[str, Any] = field(default_factory=dict)


def run_replicate_block(job: ReplicateJob):
    """Pair sums, mark sums and the field value at node 0 for every replicate of ``job``.

    Top-level so that process pools can pickle it.
    """
    sampler = None
    if job.kind == "excursion":
        sampler = GaussianFieldSampler(
            job.grid, job.params["covariance"], psd_clip=job.params.get("psd_clip", PSD_CLIP)
        )
    sums, marks, origin_values = [], [], []
    for i in job.indices:
        origin_value = math.nan
        if job.kind == "excursion":
            values = sampler.sample(job.seed.stream(i))
            origin_value = float(values.flat[0])
            sample = excursion_sample(values, job.params["t"], job.grid, seed=job.seed.seed, replicate=i)
        elif job.kind == "periodic-triangle":
            sample = periodic_triangle_sample(job.params["p"], job.seed, i, job.grid)
        elif job.kind == "segment-singleton":
            sample = segment_singleton_sample(job.params["p"], job.seed, i, job.grid)
        else:
            raise DomainError(f"unknown sample model {job.kind!r}")
        sums.append(pair_sums(sample, job.estimator))
        marks.append(sample.mark_sums())
        origin_values.append(origin_value)
    return np.stack(sums), np.asarray(marks, dtype=float), np.asarray(origin_values)


def collect_pair_sums(
    kind: str,
    grid: GridSpec,
    seed: RngSeed,
    estimator: EstimatorConfig,
    replicates: int,
    workers: int = 1,
    params: Optional[Dict[str, Any]] = None,
) -> Tuple[PairSums, np.ndarray]:
    """Run ``replicates`` replicates, in parallel when ``workers > 1``.

    Blocks come back in replicate order, so the stacked sums do not depend on
    the worker count.
    """
    if replicates < 1:
        raise DomainError("need at least one replicate")
    estimator.validate(grid)
    block = max(1, math.ceil(replicates / (max(1, workers) * 4)))
    jobs = [
        ReplicateJob(kind, grid, seed, estimator, tuple(range(lo, min(lo + block, replicates))), dict(params or {}))
        for lo in range(0, replicates, block)
    ]
    logger.info(f"Running {replicates} {kind} replicates in {len(jobs)} blocks on {workers} worker(s)")
    if workers <= 1 or len(jobs) == 1:
        results = [run_replicate_block(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_replicate_block, jobs))
    sums = np.concatenate([r[0] for r in results])
    marks = np.concatenate([r[1] for r in results])
    origin_values = np.concatenate([r[2] for r in results])
    return PairSums.build(grid, estimator, sums, marks), origin_values


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------

def emit_plot_data(curves: Sequence[CovtEvidence], output_dir: Path) -> List[str]:
    """Write the f_t panel and the f_t' panel as CSV, one column per threshold."""
    if not curves:
        raise DomainError("no curves to emit")
    rho = curves[0].rho
    for curve in curves[1:]:
        if not np.array_equal(curve.rho, rho):
            raise DomainError("curves must share one rho grid")
    values = pd.DataFrame({"rho": rho, **{f"t={c.t:g}": c.values for c in curves}})
    derivative = pd.DataFrame({"rho": rho, **{f"t={c.t:g}": c.derivative for c in curves}})
    output_dir = Path(output_dir)
    return [
        DataProcessor.save_table(values, output_dir / "covt_values.csv"),
        DataProcessor.save_table(derivative, output_dir / "covt_derivative.csv"),
    ]


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the settings that determine the results."""
    data = cfg.model_dump(mode="json", exclude={"output_dir", "workers"})
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode("utf-8")).hexdigest()


class ExperimentRunner:
    """Runs one named experiment and records its checks."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        output_dir: Optional[Path] = None,
        workers: Optional[int] = None,
        tolerance_scale: Optional[float] = None,
        precision_bits: Optional[int] = None,
    ):
        defaults = config.get_run_defaults()
        if cfg.seed is None:
            cfg = cfg.model_copy(update={"seed": defaults["seed"]})
        self.cfg = cfg
        self.seed = RngSeed(cfg.seed)
        self.workers = workers or cfg.workers or defaults["workers"]
        scale = tolerance_scale if tolerance_scale is not None else cfg.tolerance_scale
        self.tolerances = Tolerances(**cfg.tolerances).scaled(scale)
        self.precision_bits = precision_bits or cfg.precision_bits or defaults["precision_bits"]
        self.data_processor = DataProcessor()
        self.output_dir = self.data_processor.get_output_dir(
            output_dir or cfg.output_dir or defaults["output_dir"], cfg.experiment
        )
        self.checks: List[CheckResult] = []
        self.artifacts: List[str] = []

    # -- bookkeeping -------------------------------------------------------

    def record(self, name: str, passed: bool, measured=None, expected=None, tolerance=None, message=None) -> bool:
        passed = bool(passed)
        self.checks.append(
            CheckResult(
                name=name,
                passed=passed,
                measured=_plain(measured),
                expected=_plain(expected),
                tolerance=tolerance,
                message=message,
            )
        )
        if passed:
            logger.info(f"PASS {name}")
        else:
            logger.error(f"FAIL {name}: measured={measured} expected={expected} tol={tolerance} {message or ''}")
        return passed

    def record_close(self, name: str, measured: float, expected: float, tolerance: float, message=None) -> bool:
        error = abs(measured - expected)
        return self.record(name, error <= tolerance, measured, expected, tolerance, message)

    @contextmanager
    def guard(self, name: str):
        """Record a MarksetError raised inside the block as a failed check ``name``."""
        try:
            yield
        except MarksetError as e:
            logger.error(f"Error in {name}: {str(e)}")
            self.record(f"{name}: error", False, message=f"{type(e).__name__}: {str(e)}")

    def save_table(self, rows, filename: str) -> None:
        self.artifacts.append(Path(self.data_processor.save_table(rows, self.output_dir / filename)).name)

    def save_json(self, data, filename: str) -> None:
        self.artifacts.append(Path(self.data_processor.save_json(data, self.output_dir / filename)).name)

    def grid(self) -> GridSpec:
        nodes, spacing = DEFAULT_GRIDS[self.cfg.experiment]
        g = self.cfg.grid
        return GridSpec.regular(g.nodes or nodes, g.spacing or spacing, g.dimension, g.periodic)

    def lags(self, grid: GridSpec) -> List[float]:
        raw = self.cfg.lags if self.cfg.lags is not None else DEFAULT_LAGS[self.cfg.experiment]
        return sorted({grid.lag_index(r) * grid.spacing for r in raw})

    def covariance(self) -> CovarianceModel:
        c = self.cfg.covariance
        return from_params(c.family, c.length_scale, nu=c.nu)

    # -- entry point -------------------------------------------------------

    def run(self) -> RunManifest:
        """Execute the configured pipeline and write ``manifest.json``."""
        experiment = self.cfg.experiment
        started_at = datetime.now(timezone.utc)
        start = time.perf_counter()
        logger.info(f"\n{'=' * 50}")
        logger.info(f"Starting experiment: {experiment} (seed {self.seed.seed})")
        logger.info(f"{'=' * 50}")

        pipeline = getattr(self, "_run_" + experiment.replace("-", "_"))
        with self.guard(experiment):
            pipeline()

        manifest = RunManifest(
            experiment=experiment,
            config_hash=config_hash(self.cfg),
            code_version=markset.__version__,
            seed=self.seed.seed,
            started_at=started_at,
            wall_time_s=time.perf_counter() - start,
            checks=self.checks,
            artifacts=list(self.artifacts),
        )
        self.data_processor.save_json(manifest, self.output_dir / "manifest.json")
        failed = [c.name for c in self.checks if not c.passed]
        if failed:
            logger.error(f"{experiment}: {len(failed)} of {len(self.checks)} checks failed: {failed}")
        else:
            logger.info(f"{experiment}: all {len(self.checks)} checks passed in {manifest.wall_time_s:.1f}s")
        return manifest

    # -- theory-t0 ---------------------------------------------------------

    def _run_theory_t0(self) -> None:
        tol = self.tolerances
        rho = np.linspace(-1.0, 1.0, self.cfg.rho_points)
        self.save_table([{"rho": float(r), **theory_t0(r).as_dict()} for r in rho], "theory_t0.csv")

        with self.guard("curves"):
            model = self.covariance()
            if not model.is_constant:
                r = np.linspace(0.0, 3.0 * model.length_scale, 61)
                values = [theory_t0(float(x)) for x in np.clip(model(r), -1.0, 1.0)]
                curves = [
                    SecondOrderCurve(
                        kind=kind, r_grid=r.tolist(), values=[getattr(v, kind) for v in values], provenance="closed-form"
                    )
                    for kind in CHARACTERISTICS
                ]
                self.save_json([c.model_dump() for c in curves], "curves.json")

        with self.guard("boundary identities"):
            errors = {"P_t(1) = Psi(t)": 0.0, "E_t(1) = phi(t)": 0.0, "C_t(1) = t phi + Psi": 0.0, "E_t(0) = phi Psi": 0.0}
            for t in BOUNDARY_T:
                p, s = phi(t), Psi(t)
                errors["P_t(1) = Psi(t)"] = max(errors["P_t(1) = Psi(t)"], abs(orthant_P(t, 1.0) - s))
                errors["E_t(1) = phi(t)"] = max(errors["E_t(1) = phi(t)"], abs(E_t(t, 1.0) - p))
                errors["C_t(1) = t phi + Psi"] = max(errors["C_t(1) = t phi + Psi"], abs(C_t(t, 1.0) - (t * p + s)))
                errors["E_t(0) = phi Psi"] = max(errors["E_t(0) = phi Psi"], abs(E_t(t, 0.0) - p * s))
            for name, err in errors.items():
                self.record(name, err <= tol.identity_abs, err, 0.0, tol.identity_abs)
            orthant = max(
                abs(orthant_P(0.0, r) - (math.asin(min(1.0, max(-1.0, r))) + 0.5 * math.pi) / (2 * math.pi))
                for r in np.linspace(-1.0, 1.0, 21)
            )
            self.record("orthant_P(0, rho) = (arcsin rho + pi/2) / 2pi", orthant <= tol.identity_abs, orthant, 0.0, tol.identity_abs)

        with self.guard("integral identity"):
            worst = max(
                abs(integral_identity_lhs(t, r) - integral_identity_rhs(t, r))
                for t in np.linspace(-3.0, 3.0, 13)
                for r in np.linspace(-0.99, 0.99, 19)
            )
            self.record("integral identity 13x19", worst <= tol.integral_abs, worst, 0.0, tol.integral_abs)

        with self.guard("f_t(0, .) = f0"):
            worst = max(abs(f_t(0.0, r) - f0(r)) for r in np.linspace(-0.99, 1.0, 41))
            self.record("f_t(0, .) = f0", worst <= tol.integral_abs, worst, 0.0, tol.integral_abs)

        with self.guard("closed-form limits"):
            at_one, at_zero = theory_t0(1.0), theory_t0(0.0)
            self.record_close("cov(rho=0) = 0", at_zero.cov, 0.0, tol.identity_abs)
            self.record_close("kmm(rho=0) = 1", at_zero.kmm, 1.0, tol.identity_abs)
            self.record_close("E(rho=1) = sqrt(2/pi)", at_one.E, math.sqrt(2.0 / math.pi), tol.identity_abs)
            self.record_close("cov(rho=1) = 1 - 2/pi", at_one.cov, 1.0 - 2.0 / math.pi, tol.identity_abs)
            self.record_close("kmm(rho=1) = pi/2", at_one.kmm, 0.5 * math.pi, tol.identity_abs)

        rows = []
        for k, r in enumerate(MC_RHO):
            with self.guard(f"monte carlo rho={r}"):
                mc = bivariate_conditional_moments(0.0, r, n=self.cfg.mc_pairs, seed=(self.seed.seed + k) % 2**64)
                exact = theory_t0(r)
                for name in CHARACTERISTICS:
                    value, se, target = getattr(mc.values, name), getattr(mc.stderr, name), getattr(exact, name)
                    rows.append({"rho": r, "kind": name, "estimate": value, "stderr": se, "theory": target})
                    self.record_close(f"monte carlo rho={r} {name}", value, target, tol.mc_sigmas * se)
        if rows:
            self.save_table(rows, "monte_carlo.csv")

    # -- general-t ---------------------------------------------------------

    def _run_general_t(self) -> None:
        tol = self.tolerances
        with self.guard("covt evidence"):
            curves = [fig_covt_evidence(t, tol=tol.integral_abs) for t in self.cfg.thresholds]
            self.artifacts.extend(Path(p).name for p in emit_plot_data(curves, self.output_dir))
            for curve in curves:
                self.record(f"f_t increasing on [0, 1] (t={curve.t:g})", curve.increasing, float(np.min(curve.derivative)), ">= 0")
                self.record(f"f_t convex on [0, 1] (t={curve.t:g})", curve.convex)
            by_t = {c.t: c for c in curves}
            if 0.0 in by_t:
                zero = by_t[0.0]
                self.record_close("f_0(0) = 0", float(zero.values[0]), 0.0, tol.identity_abs)
                self.record_close("f_0(1) = 1 - 2/pi", float(zero.values[-1]), 1.0 - 2.0 / math.pi, tol.integral_abs)

        oracle_rows = []
        with self.guard("quadrature oracle"):
            worst = {"E_t": 0.0, "C_t": 0.0, "V_t": 0.0, "V_0": 0.0}
            for t in ORACLE_T:
                for r in ORACLE_RHO:
                    for name, kind, value in (("E_t", "E", E_t(t, r)), ("C_t", "C", C_t(t, r)), ("V_t", "V", V_t(t, r))):
                        reference = bivariate_moment_quadrature(t, r, kind)
                        oracle_rows.append({"t": t, "rho": r, "kind": name, "closed_form": value, "oracle": reference})
                        worst[name] = max(worst[name], abs(value - reference))
            for r in ORACLE_RHO:
                worst["V_0"] = max(worst["V_0"], abs(V_0(r) - bivariate_moment_quadrature(0.0, r, "V")))
            for name, err in worst.items():
                self.record(f"oracle {name}", err <= tol.oracle_abs, err, 0.0, tol.oracle_abs)
        if oracle_rows:
            self.save_table(oracle_rows, "oracle.csv")

        with self.guard("theory_t at t=0"):
            worst = 0.0
            for r in np.linspace(-0.9, 1.0, 20):
                general, closed = theory_t(0.0, r).as_dict(), theory_t0(r).as_dict()
                worst = max(worst, max(abs(general[k] - closed[k]) for k in CHARACTERISTICS))
            self.record("theory_t(0, .) = theory_t0", worst <= tol.integral_abs, worst, 0.0, tol.integral_abs)

        rows = []
        for t in self.cfg.thresholds:
            with self.guard(f"characteristics t={t:g}"):
                for r in np.linspace(0.0, 1.0, self.cfg.rho_points):
                    rows.append({"t": t, "rho": float(r), **theory_t(t, float(r)).as_dict()})
        if rows:
            self.save_table(rows, "theory_t.csv")

    # -- derivative-check --------------------------------------------------

    def _run_derivative_check(self) -> None:
        tol = self.tolerances
        gauss = CovarianceModel.gaussian(1.0)
        rows = []
        for t in self.cfg.thresholds:
            with self.guard(f"derivatives t={t:g}"):
                model = ThresholdModel(t, gauss)
                exact_cov = cov_deriv_at_zero(model).value
                exact_set = set_cov_deriv_at_zero(model).value
                fd_cov = richardson_forward_derivative(lambda r: f_t(t, gauss(r)))
                fd_set = richardson_forward_derivative(lambda r: orthant_P(t, gauss(r)))
                rows.append({"t": t, "cov_closed": exact_cov, "cov_fd": fd_cov, "set_closed": exact_set, "set_fd": fd_set})
                for label, exact, fd in (("cov'(0+)", exact_cov, fd_cov), ("C'_set(0+)", exact_set, fd_set)):
                    rel = abs(fd - exact) / abs(exact)
                    self.record(f"{label} t={t:g}", rel <= tol.fd_rel, fd, exact, tol.fd_rel, f"relative error {rel:.2e}")
        if rows:
            self.save_table(rows, "derivatives.csv")

        with self.guard("numerator positivity"):
            grid = np.linspace(-10.0, 10.0, 401)
            values = derivative_numerator(grid)
            self.record("derivative numerator > 0 on [-10, 10]", bool(np.all(values > 0)), float(np.min(values)), "> 0")

        with self.guard("exponential covariance"):
            model = ThresholdModel(0.0, CovarianceModel.exponential(1.0))
            self.record("cov'(0+) = -inf for R = exp(-r)", not cov_deriv_at_zero(model).is_finite, str(cov_deriv_at_zero(model)), "-inf")
            self.record("C'_set(0+) = -inf for R = exp(-r)", not set_cov_deriv_at_zero(model).is_finite, str(set_cov_deriv_at_zero(model)), "-inf")

        try:
            cov_deriv_at_zero(ThresholdModel(0.0, CovarianceModel.constant()))
            self.record("constant covariance rejected", False, message="no DomainError raised")
        except DomainError as e:
            self.record("constant covariance rejected", True, message=str(e))

    # -- definiteness ------------------------------------------------------

    def _run_definiteness(self) -> None:
        tol = self.tolerances
        reports = {}

        with self.guard("kmm max at origin"):
            kmm = lambda r: theory_t0(math.exp(-float(r))).kmm
            report = max_at_origin_test(kmm, np.linspace(0.0, 2.0, 401), tol=tol.eigen_rel)
            reports["kmm_max_at_origin"] = report
            rho_w = math.exp(-report.witness["r"]) if report.violated else None
            self.record(
                "kmm (R = exp(-r)) not pd",
                report.violated and rho_w > KMM_EXCESS_THRESHOLD,
                rho_w,
                f"> {KMM_EXCESS_THRESHOLD:.6f}",
                message=f"witness r = {report.witness['r']}" if report.violated else None,
            )
            if report.violated:
                self._check_witness("kmm max-at-origin witness", report, kmm)
                gram = gram_pd_test(kmm, [0.0, report.witness["r"]], tol=tol.eigen_rel)
                reports["kmm_gram"] = gram
                self.record("kmm gram matrix not pd", gram.violated, gram.details["min_eigenvalue"], "< 0")
                if gram.violated:
                    self._check_witness("kmm gram witness", gram, kmm)

        with self.guard("variogram not cnd"):
            gamma = lambda r: theory_t0(math.cos(float(r))).gamma
            report = cnd_test_via_exponential(
                gamma, [1.0], period=2 * math.pi, breakpoints=(math.pi,), tol=tol.eigen_rel
            )
            reports["gamma_cnd"] = report
            first = report.details.get("coefficients", [math.nan, math.nan])[1]
            self.record("gamma (R = cos) not cnd", report.violated, report.verdict, "not-cnd")
            self.record_close("first Fourier coefficient of exp(-gamma)", first, -0.03364, tol.fourier_abs)
            if report.violated:
                s = report.witness["s"]
                kernel = lambda r: math.exp(-s * gamma(r))
                self._check_witness("exp(-gamma) Fourier witness", report, kernel)

        with self.guard("triangle covariance not pd"):
            for p in self.cfg.p_values:
                cov = lambda r, p=p: periodic_triangle_cov(r, p)
                report = fourier_pd_test(cov, 1.0, breakpoints=periodic_triangle_breakpoints(p), tol=tol.eigen_rel)
                reports[f"triangle_p{p:g}"] = report
                self.record(f"triangle covariance p={p:g} not pd", report.violated, report.details["coefficients"][0], "< 0")

        with self.guard("cov pd-consistent"):
            model = self.covariance()
            cov = lambda r: f0(float(np.clip(model(float(r)), -1.0, 1.0)))
            report = max_at_origin_test(cov, np.linspace(0.0, 4.0 * model.length_scale, 201), tol=tol.eigen_rel)
            reports["cov_max_at_origin"] = report
            self.record(f"cov ({model.family}) max at origin", not report.violated, report.verdict, "pd-consistent")

        if reports:
            self.save_json({k: v.model_dump() for k, v in reports.items()}, "definiteness.json")

    def _check_witness(self, name: str, report, f) -> None:
        """A recorded witness must reproduce its violation."""
        w = report.witness
        recorded = {
            "max-at-origin": w.get("excess"),
            "gram-matrix": w.get("min_eigenvalue"),
            "fourier-periodic": w.get("coefficient"),
        }[report.method]
        again = reproduce_witness(report, f)
        violated = again > 0 if report.method == "max-at-origin" else again < 0
        self.record(
            f"{name} reproduces",
            violated and abs(again - recorded) <= 2 * max(report.tolerance, self.tolerances.eigen_rel),
            again,
            recorded,
            2 * report.tolerance,
        )

    # -- monotonicity ------------------------------------------------------

    def _run_monotonicity(self) -> None:
        N = max(self.cfg.order, DIRECT_ORDER + 1)
        rows = []
        for tag in ("f0", "g0"):
            with self.guard(f"{tag} absolute monotonicity"):
                report = verify_absolute_monotonicity(
                    tag,
                    N,
                    precision_bits=self.precision_bits,
                    bound_order=self.cfg.bound_order,
                    circle_samples=self.cfg.circle_samples,
                )
                self.save_json(report, f"monotonicity_{tag}.json")
                rows.extend({"tag": tag, "n": n, "coefficient": c} for n, c in enumerate(report.coefficients))
                direct = min(report.coefficients[: DIRECT_ORDER + 1])
                self.record(f"{tag} coefficients 0..{DIRECT_ORDER} nonnegative", direct >= -report.tolerance, direct, ">= 0", report.tolerance)
                if tag == "f0":
                    last = report.crossover[-1].n if report.crossover else None
                    self.record(
                        f"f0 crossover a_n > b_n for {DIRECT_ORDER + 1} <= n <= {last}",
                        bool(report.crossover) and all(row.holds for row in report.crossover),
                        min(row.a_lower - row.b_upper for row in report.crossover) if report.crossover else None,
                        "> 0",
                    )
                    self.record("max |h''| on the unit circle < 0.182", report.circle_max < 0.182, report.circle_max, "< 0.182")
                    at_origin = min(report.circle_argmax, 2 * math.pi - report.circle_argmax)
                    self.record("max |h''| attained at phi = 0", at_origin < 1e-12, report.circle_argmax, 0.0)
                    self.record("|h''(1)| < 0.08", abs(report.h2_at_one) < 0.08, report.h2_at_one, "< 0.08")
        if rows:
            self.save_table(rows, "taylor_coefficients.csv")

    # -- periodic-example --------------------------------------------------

    def _run_periodic_example(self) -> None:
        tol = self.tolerances
        grid = self.grid()
        bias = 4.0 * grid.spacing
        lags = [r for r in self.lags(grid) if r < 0.5]
        for p in self.cfg.p_values:
            label = f"p={p:g}"
            with self.guard(f"integral {label}"):
                cuts = [0.0, *(b for b in periodic_triangle_breakpoints(p) if 0.0 < b < 1.0), 1.0]
                value = sum(
                    integrate.quad(lambda r: periodic_triangle_cov(r, p), a, b, epsabs=1e-13, epsrel=1e-12)[0]
                    for a, b in zip(cuts, cuts[1:])
                )
                closed = periodic_triangle_cov_integral(p)
                self.record_close(f"integral of cov matches closed form ({label})", value, closed, tol.closed_form_abs)
                self.record(f"integral of cov is negative ({label})", closed < 0, closed, "< 0")

            with self.guard(f"empirical cov {label}"):
                estimator = EstimatorConfig(lags=lags)
                sums, _ = collect_pair_sums(
                    "periodic-triangle", grid, self.seed, estimator, self.cfg.replicates, self.workers, {"p": p}
                )
                rows, worst = [], 0.0
                for est in estimate_characteristics(sums):
                    exact = periodic_triangle_cov(est.r, p)
                    excess = abs(est.values.cov - exact) - tol.mc_sigmas * est.stderr.cov
                    worst = max(worst, excess)
                    rows.append({"r": est.r, "estimate": est.values.cov, "stderr": est.stderr.cov, "theory": exact, "pairs": est.pairs})
                self.save_table(rows, f"periodic_cov_p{p:g}.csv")
                self.record(
                    f"empirical cov within {tol.mc_sigmas:g} SE + grid bias ({label})",
                    worst <= bias,
                    worst,
                    0.0,
                    bias,
                    f"{sums.replicates} replicates",
                )

            with self.guard(f"empirical integral {label}"):
                all_lags = [k * grid.spacing for k in range(grid.nodes)]
                sums, _ = collect_pair_sums(
                    "periodic-triangle",
                    grid,
                    self.seed,
                    EstimatorConfig(lags=all_lags),
                    min(self.cfg.replicates, INTEGRAL_REPLICATES),
                    self.workers,
                    {"p": p},
                )
                covs = np.array([est.values.cov for est in estimate_characteristics(sums)])
                # mean over whole periods equals the integral over one period
                empirical = float(np.mean(covs))
                closed = periodic_triangle_cov_integral(p)
                self.record(f"empirical integral of cov is negative ({label})", empirical < 0, empirical, "< 0")
                self.record_close(f"empirical integral of cov ({label})", empirical, closed, bias)

    # -- segment-singleton -------------------------------------------------

    def _run_segment_singleton(self) -> None:
        p = self.cfg.p
        grid = self.grid()
        lags = self.lags(grid)
        ladder = sorted(self.cfg.eps_ladder if self.cfg.eps_ladder is not None else DEFAULT_EPS_LADDER, reverse=True)

        with self.guard("segment-singleton"):
            estimator = EstimatorConfig(lags=lags, eps=ladder)
            sums, _ = collect_pair_sums("segment-singleton", grid, self.seed, estimator, self.cfg.replicates, self.workers, {"p": p})
            kappas = estimate_kappa(None, "c", estimator, sums=sums) + estimate_kappa(None, "e", estimator, sums=sums)
            self.save_table(kappa_table(kappas), "kappa.csv")

            target = grid.lag_index(1.0) * grid.spacing
            at_one = [k for k in kappas if k.f_tag == "c" and k.r == target]
            undilated = [k for k in at_one if k.eps == 0.0]
            if undilated:
                self.record("undilated pair count at r = 1 is 0", undilated[0].pairs == 0, undilated[0].pairs, 0)
            dilated = [k for k in at_one if k.eps > 0.0]
            for k in dilated:
                self.record(
                    f"dilated kappa_c at r = 1 finite (eps={k.eps:g})",
                    k.defined and math.isfinite(k.estimate),
                    k.estimate,
                    "finite",
                    message=f"{k.pairs} pairs",
                )

            limits = {}
            for tag in ("c", "e"):
                ladder_values = sorted(
                    (k for k in kappas if k.f_tag == tag and k.r == target and k.eps > 0.0), key=lambda k: -k.eps
                )
                limit = epsilon_limit_diagnostic([k.eps for k in ladder_values], [k.estimate for k in ladder_values])
                limits[f"kappa_{tag}"] = {
                    "eps": limit.eps,
                    "values": limit.values,
                    "extrapolated": limit.extrapolated,
                    "degree": limit.degree,
                    "trend": limit.trend,
                }
                self.record(
                    f"eps -> 0 extrapolation of kappa_{tag} at r = 1 is finite",
                    math.isfinite(limit.extrapolated),
                    limit.extrapolated,
                    "finite",
                    message=f"trend {limit.trend}",
                )
            self.save_json(limits, "epsilon_limit.json")

        try:
            segment_singleton_sample(0.4, self.seed)
            self.record("p >= 1/3 rejected", False, message="no DomainError raised")
        except DomainError as e:
            self.record("p >= 1/3 rejected", True, message=str(e))

    # -- grf-empirical -----------------------------------------------------

    def _run_grf_empirical(self) -> None:
        tol = self.tolerances
        t = self.cfg.t
        model = self.covariance()
        grid = self.grid()
        estimator = EstimatorConfig(lags=self.lags(grid))
        params = {"covariance": model, "t": t, "psd_clip": tol.psd_clip}
        R = self.cfg.replicates

        sums, origin_values = collect_pair_sums("excursion", grid, self.seed, estimator, R, self.workers, params)
        estimates = estimate_characteristics(sums)
        rows, curves = [], {k: ([], [], []) for k in CHARACTERISTICS}
        hits = {k: 0 for k in CHARACTERISTICS}
        for est in estimates:
            rho = float(np.clip(model(est.r), -1.0, 1.0))
            exact = theory_t0(rho) if t == 0.0 else theory_t(t, rho)
            for kind in CHARACTERISTICS:
                value, se, target = getattr(est.values, kind), getattr(est.stderr, kind), getattr(exact, kind)
                if math.isfinite(value) and math.isfinite(se) and abs(value - target) <= tol.mc_sigmas * se:
                    hits[kind] += 1
                rows.append({"r": est.r, "kind": kind, "estimate": value, "stderr": se, "theory": target, "pairs": est.pairs})
                curves[kind][0].append(est.r)
                curves[kind][1].append(value if math.isfinite(value) else None)
                curves[kind][2].append(se if math.isfinite(se) else None)
        self.save_table(rows, "grf_empirical.csv")
        self.save_json(
            [
                SecondOrderCurve(kind=k, r_grid=r, values=v, stderr=s, provenance="empirical", replicates=R).model_dump()
                for k, (r, v, s) in curves.items()
            ],
            "curves.json",
        )
        n_lags = len(estimates)
        for kind in CHARACTERISTICS:
            fraction = hits[kind] / n_lags
            self.record(
                f"empirical {kind} within {tol.mc_sigmas:g} SE at >= 95% of lags",
                fraction >= COVERAGE,
                fraction,
                COVERAGE,
                message=f"{hits[kind]} of {n_lags} lags",
            )

        with self.guard("field moments"):
            bound = 4.0 / math.sqrt(R)
            self.record_close("field mean at node 0", float(np.mean(origin_values)), 0.0, bound)
            self.record_close("field variance at node 0", float(np.mean(origin_values**2)), 1.0, math.sqrt(2.0) * bound)
            m, m_se = jackknife(lambda total: total[0] / total[1], sums.marks)
            self.record_close("mean mark", float(m), mean_mark(t), tol.mc_sigmas * float(m_se) if R > 1 else math.inf)

        with self.guard("determinism"):
            k = min(R, 16)
            alternate = 1 if self.workers > 1 else 2
            again, _ = collect_pair_sums("excursion", grid, self.seed, estimator, k, alternate, params)
            same = np.array_equal(again.sums, sums.sums[:k]) and np.array_equal(again.marks, sums.marks[:k])
            self.record(f"replicate sums identical with {alternate} worker(s)", same, k, "bit-identical")


def _plain(value):
    """Make numpy scalars and non-finite floats JSON friendly."""
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def run_experiment(cfg: ExperimentConfig, **overrides) -> RunManifest:
    """Run ``cfg.experiment`` and return its manifest."""
    return ExperimentRunner(cfg, **overrides).run()
