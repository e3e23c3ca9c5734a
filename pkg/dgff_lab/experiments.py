"""
Experiments Module

One function per experiment. Each receives an ``ExperimentContext`` holding
the validated configuration, the run's random streams, a work runner and the
manifest, writes its CSV/JSON/SVG artifacts through the context and returns
a JSON-compatible summary.

Experiments are kept in a registry so the command line can dispatch by name:

    @ExperimentRegistry.register("green")
    def green(ctx: ExperimentContext) -> Dict[str, Any]:
        ...

Verification experiments raise ``StatisticalGateError`` after writing their
report when a gate fails.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from dgff_lab import __version__
from dgff_lab.config import RunConfig, config_values, serialize_config
from dgff_lab.decorations import (
    ConstantDecoration,
    DecorationModel,
    DgffBallDecoration,
    TwoSiteDecoration,
)
from dgff_lab.errors import DgffLabError, ExperimentError, StatisticalGateError
from dgff_lab.fields import (
    extremal_stats,
    field_grid,
    field_to_csv,
    free_energy,
    high_points,
    limit_free_energy,
    m_rem,
    sample_dgff,
    sample_rem,
)
from dgff_lab.greens import (
    cholesky,
    green_exact,
    green_growth,
    green_mc,
    green_to_csv,
    harmonicity_residual,
)
from dgff_lab.lattice import DomainSpec, build_lattice, lattice_to_csv
from dgff_lab.limitproc import (
    TruncationPolicy,
    dominance_report,
    heat_bath_diagnostics,
    perturbed_inner_product,
    q_at_infinity,
    sample_Q,
    theorem2_gap,
    verify_shift,
)
from dgff_lab.manifest import RunManifest
from dgff_lab.output import write_csv, write_json
from dgff_lab.overlap import (
    IBP_CATALOG,
    derivative_identity,
    gaussian_ibp_check,
    mean_overlap_curve,
    near_far_mass,
    overlap_distribution,
    overlap_rows,
)
from dgff_lab.plots import PlotSeries, emit_plot
from dgff_lab.rng import StreamFactory, child_streams
from dgff_lab.runners.irunner import IRunner
from dgff_lab.runners.runner import Runner

logger = logging.getLogger(__name__)

CONTROL_OFFSET = 0.2
LEMMA_SUITE_MAX_LENGTH = 6

ExperimentFn = Callable[["ExperimentContext"], Dict[str, Any]]


@dataclass
class ExperimentContext:
    """Everything an experiment needs besides its own logic."""

    config: RunConfig
    streams: StreamFactory
    runner: IRunner
    manifest: RunManifest
    out_dir: Path
    logger: logging.Logger = field(default_factory=lambda: logging.getLogger(__name__))

    @property
    def name(self) -> str:
        return self.config.experiment

    def stream(self, index: int = 0, tag: Optional[str] = None) -> np.random.Generator:
        return self.streams.stream(tag or self.name, index)

    def write_csv(self, filename: str, fieldnames: List[str], rows: Iterable[Mapping[str, Any]]) -> Optional[Path]:
        if "csv" not in self.config.formats:
            return None
        path = write_csv(self.out_dir / filename, fieldnames, rows)
        self.manifest.add_artifact(path, kind="csv")
        return path

    def write_json(self, filename: str, payload: Mapping[str, Any]) -> Optional[Path]:
        if "json" not in self.config.formats:
            return None
        path = write_json(self.out_dir / filename, payload)
        self.manifest.add_artifact(path, kind="json")
        return path

    def emit_plot(self, filename: str, series: Any, kind: str) -> Optional[Path]:
        if "svg" not in self.config.formats:
            return None
        path = emit_plot(series, kind, self.out_dir / filename)
        self.manifest.add_artifact(path, kind="svg")
        return path

    def field_csv(self, filename: str, sample: Any) -> Optional[Path]:
        if "csv" not in self.config.formats:
            return None
        path = field_to_csv(sample, self.out_dir / filename)
        self.manifest.add_artifact(path, kind="csv")
        return path


class ExperimentRegistry:
    """
    Registry of experiments by name.
    """

    _experiments: Dict[str, ExperimentFn] = {}

    @classmethod
    def register(cls, name: str) -> Callable[[ExperimentFn], ExperimentFn]:
        """
        Register an experiment function under a name (decorator).

        Args:
            name: The name to register the experiment under.
        """

        def decorator(fn: ExperimentFn) -> ExperimentFn:
            cls._experiments[name] = fn
            return fn

        return decorator

    @classmethod
    def get(cls, name: str) -> ExperimentFn:
        """
        Look up an experiment by name.

        Raises:
            ValueError: If the name is not registered.
        """
        if name not in cls._experiments:
            raise ValueError(
                f"Unknown experiment: {name}. Available experiments: {', '.join(cls._experiments)}"
            )
        return cls._experiments[name]

    @classmethod
    def available_experiments(cls) -> List[str]:
        return list(cls._experiments.keys())


# ---------------------------------------------------------------- helpers


def domain_spec(config: RunConfig) -> DomainSpec:
    return DomainSpec(
        shape=config.domain,
        center=tuple(config.center),
        radius=config.radius,
        r_in=config.r_in,
        r_out=config.r_out,
    )


def build_decoration(config: RunConfig) -> DecorationModel:
    """Decoration model named by the ``model`` key."""
    if config.model == "constant":
        return ConstantDecoration(config.c)
    if config.model == "two-site":
        gaps = config.c_values or [config.c]
        return TwoSiteDecoration(gaps, config.c_probs or None)
    return DgffBallDecoration(
        r=config.r_ball,
        R=config.R_ball,
        burn_in=config.burn_in,
        sweeps=config.sweeps,
        bank_size=config.bank or 4096,
    )


def truncation_policy(config: RunConfig) -> TruncationPolicy:
    return TruncationPolicy(mode=config.truncation, eps=config.eps)


def _tag(value: float) -> str:
    return f"{value:g}".replace(".", "p").replace("-", "m")


def _finite_mean_se(values: Sequence[float]) -> Dict[str, float]:
    arr = np.asarray([v for v in values if math.isfinite(v)], dtype=float)
    if arr.size == 0:
        return {"mean": float("nan"), "se": float("nan"), "count": 0}
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "se": se, "count": int(arr.size)}


# ---------------------------------------------------------------- lattice experiments


@ExperimentRegistry.register("green")
def green(ctx: ExperimentContext) -> Dict[str, Any]:
    """Exact Green matrices, harmonicity residuals, growth and a Monte Carlo row check."""
    config = ctx.config
    spec = domain_spec(config)
    summary: Dict[str, Any] = {"lattices": []}
    for k, N in enumerate(config.N):
        lat = build_lattice(spec, N)
        G = green_exact(lat, site_cap=config.green_cap)
        if "csv" in config.formats:
            ctx.manifest.add_artifact(green_to_csv(G, ctx.out_dir / f"green_N{N}.csv"), kind="csv")
            ctx.manifest.add_artifact(lattice_to_csv(lat, ctx.out_dir / f"lattice_N{N}.csv"), kind="csv")
        estimate = green_mc(lat, 0, config.walks, ctx.stream(k), runner=ctx.runner)
        exact_row = G.values[0]
        z = np.where(estimate.se > 0, (estimate.mean - exact_row) / np.where(estimate.se > 0, estimate.se, 1.0), 0.0)
        ctx.write_csv(
            f"green_mc_N{N}.csv",
            ["site", "exact", "mc", "se", "z"],
            (
                {"site": j, "exact": float(exact_row[j]), "mc": float(estimate.mean[j]),
                 "se": float(estimate.se[j]), "z": float(z[j])}
                for j in range(G.size)
            ),
        )
        summary["lattices"].append(
            {
                "N": N,
                "lattice_id": lat.lattice_id,
                "sites": G.size,
                "max_diag": G.max_diag,
                "harmonicity_residual": harmonicity_residual(G),
                "mc_walks": config.walks,
                "mc_max_abs_z": float(np.max(np.abs(z))),
            }
        )
    growth = green_growth(spec, config.N, site_cap=config.green_cap)
    ctx.write_csv("green_growth.csv", ["N", "sites", "max_diag", "growth"], growth)
    if len(growth) > 1:
        ctx.emit_plot(
            "green_growth.svg",
            PlotSeries(
                label="max G - (2/pi) log N",
                x=[r["N"] for r in growth],
                y=[r["growth"] for r in growth],
                xlabel="N",
                ylabel="max_z G_N(z,z) - (2/pi) log N",
            ),
            "line",
        )
    summary["growth"] = growth
    return summary


@ExperimentRegistry.register("sample-field")
def sample_field(ctx: ExperimentContext) -> Dict[str, Any]:
    """One DGFF and one REM realization per N, with extremal statistics."""
    config = ctx.config
    spec = domain_spec(config)
    summary: Dict[str, Any] = {"fields": []}
    for k, N in enumerate(config.N):
        lat = build_lattice(spec, N)
        G = green_exact(lat, site_cap=config.green_cap)
        rng = ctx.stream(k)
        label = f"{config.seed}:{ctx.name}:{k}"
        dgff = sample_dgff(cholesky(G), rng, seed=label)
        rem = sample_rem(lat, G.max_diag, rng, seed=label)
        ctx.field_csv(f"field_dgff_N{N}.csv", dgff)
        ctx.field_csv(f"field_rem_N{N}.csv", rem)
        ctx.emit_plot(
            f"field_dgff_N{N}.svg",
            PlotSeries(label="h", grid=field_grid(lat, dgff.values), xlabel="x", ylabel="y",
                       title=f"DGFF on {lat.lattice_id}"),
            "heatmap",
        )
        entry: Dict[str, Any] = {"N": N, "lattice_id": lat.lattice_id, "sites": lat.size}
        if N > 1:
            stats_dgff = extremal_stats(dgff, config.r)
            entry.update(
                max_dgff=stats_dgff.max_value,
                recentered_max_dgff=stats_dgff.recentered_max,
                local_maxima=int(stats_dgff.local_maxima.size),
                max_rem=float(rem.values.max()),
                recentered_max_rem=float(rem.values.max()) - m_rem(N) if N > 2 else float("nan"),
            )
        summary["fields"].append(entry)
    return summary


def _field_replicas(ctx: ExperimentContext, k: int, N: int):
    lat = build_lattice(domain_spec(ctx.config), N)
    G = green_exact(lat, site_cap=ctx.config.green_cap)
    chol = cholesky(G)
    rng = ctx.stream(k)
    streams = child_streams(rng, ctx.config.replicas)
    return lat, G, chol, streams


@ExperimentRegistry.register("free-energy")
def free_energy_experiment(ctx: ExperimentContext) -> Dict[str, Any]:
    """log Z / log N^2 for DGFF and REM against the limiting curve."""
    config = ctx.config
    rows: List[Dict[str, Any]] = []
    for k, N in enumerate(config.N):
        lat, G, chol, streams = _field_replicas(ctx, k, N)

        def one(stream: np.random.Generator) -> np.ndarray:
            dgff = sample_dgff(chol, stream)
            rem = sample_rem(lat, G.max_diag, stream)
            return np.array([[free_energy(dgff, b), free_energy(rem, b)] for b in config.beta])

        values = np.array(ctx.runner.map(one, streams))
        for j, beta in enumerate(config.beta):
            for m, model in enumerate(("dgff", "rem")):
                column = values[:, j, m]
                se = float(column.std(ddof=1) / math.sqrt(column.size)) if column.size > 1 else 0.0
                rows.append({
                    "N": N, "beta": beta, "model": model, "estimate": float(column.mean()),
                    "se": se, "target": limit_free_energy(beta), "replicas": config.replicas,
                })
    ctx.write_csv("free_energy.csv", ["N", "beta", "model", "estimate", "se", "target", "replicas"], rows)
    if len(config.beta) > 1:
        series = []
        for model in ("dgff", "rem"):
            for N in config.N:
                picked = [r for r in rows if r["model"] == model and r["N"] == N]
                series.append(PlotSeries(label=f"{model} N={N}", x=[r["beta"] for r in picked],
                                         y=[r["estimate"] for r in picked], xlabel="beta",
                                         ylabel="log Z / log N^2"))
        series.append(PlotSeries(label="limit", x=list(config.beta),
                                 y=[limit_free_energy(b) for b in config.beta]))
        ctx.emit_plot("free_energy.svg", series, "line")
    return {"rows": rows}


@ExperimentRegistry.register("high-points")
def high_points_experiment(ctx: ExperimentContext) -> Dict[str, Any]:
    """Exponent of the number of lambda-high points, averaged over fields."""
    config = ctx.config
    rows: List[Dict[str, Any]] = []
    for k, N in enumerate(config.N):
        lat, G, chol, streams = _field_replicas(ctx, k, N)
        results = ctx.runner.map(lambda s: high_points(sample_dgff(chol, s), config.lam), streams)
        exponents = _finite_mean_se([r.exponent for r in results])
        rows.append({
            "N": N,
            "lam": config.lam,
            "exponent": exponents["mean"],
            "se": exponents["se"],
            "target": 1.0 - config.lam**2,
            "mean_count": float(np.mean([r.count for r in results])),
            "empty_fields": config.replicas - exponents["count"],
            "threshold": results[0].threshold,
        })
    ctx.write_csv(
        "high_points.csv",
        ["N", "lam", "exponent", "se", "target", "mean_count", "empty_fields", "threshold"],
        rows,
    )
    return {"rows": rows}


@ExperimentRegistry.register("overlap")
def overlap_experiment(ctx: ExperimentContext) -> Dict[str, Any]:
    """Law of the two-temperature overlap and the intermediate-distance mass."""
    config = ctx.config
    spec = domain_spec(config)
    rows: List[Dict[str, Any]] = []
    summary: Dict[str, Any] = {"estimates": []}
    index = 0
    for N in config.N:
        for beta, beta_prime in config.beta_pairs:
            estimate = overlap_distribution(
                spec, N, beta, beta_prime, config.replicas, config.pairs, ctx.stream(index),
                runner=ctx.runner, site_cap=config.green_cap, seed=f"{config.seed}:{ctx.name}:{index}",
            )
            rows.extend(overlap_rows(estimate, N))
            lat = build_lattice(spec, N)
            G = green_exact(lat, site_cap=config.green_cap)
            band_rng = ctx.stream(index, tag=f"{ctx.name}-band")
            band = near_far_mass(sample_dgff(cholesky(G), band_rng), G, beta, beta_prime,
                                 max(config.r, 1.0), band_rng, config.pairs)
            summary["estimates"].append({
                "N": N, "beta": beta, "beta_prime": beta_prime, "mean": estimate.mean,
                "se": estimate.se, "band_fraction": band.fraction, "band_se": band.se,
                "band": [band.low, band.high],
            })
            ctx.emit_plot(
                f"overlap_N{N}_b{_tag(beta)}_{_tag(beta_prime)}.svg",
                PlotSeries(label="q", values=estimate.draws, xlabel="q", ylabel="count",
                           title=f"N={N}, beta={beta:g}, beta'={beta_prime:g}"),
                "histogram",
            )
            index += 1
    ctx.write_csv("overlap.csv", ["N", "beta", "beta_prime", "a", "estimate", "se"], rows)
    return summary


@ExperimentRegistry.register("mean-overlap")
def mean_overlap_experiment(ctx: ExperimentContext) -> Dict[str, Any]:
    """Mean equal-temperature overlap of DGFF and REM against 1 - beta_c/beta."""
    config = ctx.config
    rows: List[Dict[str, Any]] = []
    for k, N in enumerate(config.N):
        curve = mean_overlap_curve(domain_spec(config), N, config.beta, config.replicas,
                                   ctx.stream(k), runner=ctx.runner, site_cap=config.green_cap)
        for j, beta in enumerate(curve.betas):
            rows.append({
                "N": N, "beta": float(beta), "dgff": float(curve.dgff_mean[j]),
                "dgff_se": float(curve.dgff_se[j]), "rem": float(curve.rem_mean[j]),
                "rem_se": float(curve.rem_se[j]), "limit": float(curve.limit[j]),
            })
        ctx.emit_plot(
            f"mean_overlap_N{N}.svg",
            [
                PlotSeries(label="DGFF", x=curve.betas, y=curve.dgff_mean, errors=curve.dgff_se,
                           xlabel="beta", ylabel="E<q>"),
                PlotSeries(label="REM", x=curve.betas, y=curve.rem_mean, errors=curve.rem_se),
                PlotSeries(label="1 - beta_c/beta", x=curve.betas, y=curve.limit),
            ],
            "line",
        )
    ctx.write_csv("mean_overlap.csv", ["N", "beta", "dgff", "dgff_se", "rem", "rem_se", "limit"], rows)
    return {"rows": rows}


@ExperimentRegistry.register("derivative-check")
def derivative_check(ctx: ExperimentContext) -> Dict[str, Any]:
    """Free-energy derivative against the mean overlap."""
    config = ctx.config
    rows: List[Dict[str, Any]] = []
    index = 0
    for N in config.N:
        for beta in config.beta:
            report = derivative_identity(domain_spec(config), N, beta, config.delta_beta,
                                         config.replicas, ctx.stream(index), runner=ctx.runner,
                                         site_cap=config.green_cap)
            rows.append({
                "N": N, "beta": beta, "delta_beta": config.delta_beta, "lhs": report.lhs,
                "lhs_se": report.lhs_se, "lhs_pathwise": report.lhs_pathwise, "rhs": report.rhs,
                "rhs_se": report.rhs_se, "rhs_exact": report.rhs_exact,
                "rhs_exact_se": report.rhs_exact_se, "difference": report.difference,
                "difference_se": report.difference_se, "fd_bias": report.fd_bias,
                "finite_size_bias": report.finite_size_bias, "passed": report.passed,
            })
            index += 1
    ctx.write_csv("derivative_check.csv", list(rows[0].keys()) if rows else ["N"], rows)
    return {"rows": rows}


# ---------------------------------------------------------------- limit experiments


@ExperimentRegistry.register("limit-q")
def limit_q(ctx: ExperimentContext) -> Dict[str, Any]:
    """Law of Q(beta, beta') next to Q_REM(beta, beta') on common atoms."""
    config = ctx.config
    model = build_decoration(config)
    policy = truncation_policy(config)
    summary: Dict[str, Any] = {"model": model.describe(), "estimates": []}
    for k, (beta, beta_prime) in enumerate(config.beta_pairs):
        estimate = sample_Q(beta, beta_prime, model, config.L, config.replicas, ctx.stream(k),
                            policy=policy, runner=ctx.runner)
        assert estimate.partner is not None
        suffix = f"b{_tag(beta)}_{_tag(beta_prime)}"
        ctx.write_csv(
            f"limit_q_{suffix}.csv",
            ["replicate", "q", "q_rem", "difference"],
            (
                {"replicate": i, "q": float(a), "q_rem": float(b), "difference": float(a - b)}
                for i, (a, b) in enumerate(zip(estimate.values, estimate.partner))
            ),
        )
        ctx.emit_plot(
            f"limit_q_{suffix}.svg",
            [PlotSeries(label="Q", values=estimate.values, xlabel="Q", ylabel="count"),
             PlotSeries(label="Q_REM", values=estimate.partner)],
            "histogram",
        )
        rem_mean = float(estimate.partner.mean())
        summary["estimates"].append({
            "beta": beta, "beta_prime": beta_prime, "mean_q": estimate.mean, "se_q": estimate.se,
            "mean_q_rem": rem_mean, "replicates": estimate.count, "resamples": estimate.resamples,
            "ledger": estimate.ledger,
        })
    return summary


@ExperimentRegistry.register("q-infinity")
def q_infinity(ctx: ExperimentContext) -> Dict[str, Any]:
    """Top-atom Gibbs weight with and without decorations."""
    config = ctx.config
    model = build_decoration(config)
    summary: Dict[str, Any] = {"model": model.describe(), "estimates": []}
    for k, beta in enumerate(config.beta):
        result = q_at_infinity(beta, model, config.L, config.replicas, ctx.stream(k),
                               policy=truncation_policy(config), runner=ctx.runner)
        suffix = f"b{_tag(beta)}"
        ctx.write_csv(
            f"q_infinity_{suffix}.csv",
            ["grid", "cdf_q", "cdf_q_rem"],
            ({"grid": float(g), "cdf_q": float(a), "cdf_q_rem": float(b)}
             for g, a, b in zip(result.grid, result.cdf_q, result.cdf_rem)),
        )
        ctx.emit_plot(
            f"q_infinity_{suffix}.svg",
            [PlotSeries(label="Q(beta, inf)", x=result.grid, y=result.cdf_q, xlabel="t", ylabel="P(. <= t)"),
             PlotSeries(label="Q_REM(beta, inf)", x=result.grid, y=result.cdf_rem)],
            "line",
        )
        summary["estimates"].append({
            "beta": beta, "mean_q": result.q.mean, "se_q": result.q.se,
            "mean_q_rem": result.q_rem.mean, "se_q_rem": result.q_rem.se,
            "max_violation": result.max_violation, "violation_se": result.violation_se,
            "ledger": result.q.ledger,
        })
    return summary


@ExperimentRegistry.register("theorem2")
def theorem2(ctx: ExperimentContext) -> Dict[str, Any]:
    """Paired gap E[Q] - E[Q_REM]."""
    config = ctx.config
    model = build_decoration(config)
    summary: Dict[str, Any] = {"model": model.describe(), "gaps": []}
    for k, (beta, beta_prime) in enumerate(config.beta_pairs):
        report = theorem2_gap(beta, beta_prime, model, config.L, config.replicas, ctx.stream(k),
                              policy=truncation_policy(config), runner=ctx.runner)
        ctx.write_csv(
            f"theorem2_b{_tag(beta)}_{_tag(beta_prime)}.csv",
            ["replicate", "difference"],
            ({"replicate": i, "difference": float(d)} for i, d in enumerate(report.differences)),
        )
        summary["gaps"].append({
            "beta": beta, "beta_prime": beta_prime, "mean_q": report.mean_q,
            "mean_q_rem": report.mean_q_rem, "difference": report.difference,
            "difference_se": report.difference_se, "pvalue": report.pvalue,
            "significant_at_0.01": report.significant(0.01), "ledger": report.ledger,
        })
    return summary


@ExperimentRegistry.register("dominance")
def dominance(ctx: ExperimentContext) -> Dict[str, Any]:
    """Empirical CDFs of Q and Q_REM at finite temperatures; nothing is asserted."""
    config = ctx.config
    model = build_decoration(config)
    summary: Dict[str, Any] = {"model": model.describe(), "reports": []}
    for k, (beta, beta_prime) in enumerate(config.beta_pairs):
        report = dominance_report(beta, beta_prime, model, config.L, config.replicas, ctx.stream(k),
                                  policy=truncation_policy(config), runner=ctx.runner)
        ctx.write_csv(
            f"dominance_b{_tag(beta)}_{_tag(beta_prime)}.csv",
            ["grid", "cdf_q", "cdf_q_rem"],
            ({"grid": float(g), "cdf_q": float(a), "cdf_q_rem": float(b)}
             for g, a, b in zip(report["grid"], report["cdf_q"], report["cdf_q_rem"])),
        )
        summary["reports"].append({
            "beta": beta, "beta_prime": beta_prime, "max_violation": report["max_violation"],
            "violation_se": report["violation_se"], "ledger": report["ledger"],
        })
    return summary


# ---------------------------------------------------------------- verification


def _gate(ctx: ExperimentContext, summary: Dict[str, Any], failures: List[str]) -> Dict[str, Any]:
    summary["passed"] = not failures
    summary["failures"] = failures
    if failures:
        ctx.write_json("summary.json", summary)
        message = f"Verification {ctx.name} failed: " + "; ".join(failures)
        ctx.logger.error(message)
        raise StatisticalGateError(message, summary)
    return summary


def _random_instance(rng: np.random.Generator) -> Dict[str, Any]:
    length = int(rng.integers(2, LEMMA_SUITE_MAX_LENGTH + 1))
    p = np.sort(rng.dirichlet(np.ones(length)))[::-1]
    if rng.random() < 0.2:
        p[int(rng.integers(1, length)):] = 0.0
        p /= p.sum()
    q = np.sort(rng.random(length))[::-1]
    if rng.random() < 0.1:
        q[:] = q[0]
    values = rng.uniform(0.1, 3.0, size=int(rng.integers(2, 4)))
    if rng.random() < 0.1:
        values[:] = values[0]
    probs = rng.dirichlet(np.ones(values.size))
    return {"p": p, "q": q, "a_values": values, "a_probs": probs}


@ExperimentRegistry.register("lemma32")
def lemma32(ctx: ExperimentContext) -> Dict[str, Any]:
    """
    Perturbed inner product: exact rational value of the configured instance
    and a randomized suite checking the bound and when it is strict.
    """
    config = ctx.config
    fixture = perturbed_inner_product(
        config.fractions("p"), config.fractions("q"), config.fractions("a_values"),
        config.fractions("a_probs"), mode="fraction",
    )
    rng = ctx.stream(0)
    rows: List[Dict[str, Any]] = []
    violations = 0
    mismatches = 0
    for i in range(config.samples):
        inst = _random_instance(rng)
        report = perturbed_inner_product(inst["p"], inst["q"], inst["a_values"], inst["a_probs"], mode="exact")
        if not report.within_bound:
            violations += 1
        if report.strict != report.strictness_expected:
            mismatches += 1
        rows.append({
            "instance": i, "length": int(inst["p"].size), "support": int(inst["a_values"].size),
            "expectation": report.expectation, "baseline": report.baseline,
            "strict": report.strict, "strictness_expected": report.strictness_expected,
            "hypotheses_hold": report.hypotheses_hold,
        })
    ctx.write_csv(
        "lemma32_suite.csv",
        ["instance", "length", "support", "expectation", "baseline", "strict",
         "strictness_expected", "hypotheses_hold"],
        rows,
    )
    summary: Dict[str, Any] = {
        "fixture": {
            "p": config.p, "q": config.q, "a_values": config.a_values, "a_probs": config.a_probs,
            "expectation": fixture.expectation, "baseline": fixture.baseline,
            "strict": fixture.strict, "strictness_expected": fixture.strictness_expected,
        },
        "suite": {"instances": config.samples, "violations": violations, "strictness_mismatches": mismatches},
    }
    failures = []
    if not fixture.within_bound:
        failures.append(f"fixture expectation {fixture.expectation} exceeds {fixture.baseline}")
    if fixture.strict != fixture.strictness_expected:
        failures.append("fixture strictness differs from the criterion")
    if violations:
        failures.append(f"{violations} suite instances exceed the bound")
    if mismatches:
        failures.append(f"{mismatches} suite instances disagree with the strictness criterion")
    return _gate(ctx, summary, failures)


@ExperimentRegistry.register("shift")
def shift(ctx: ExperimentContext) -> Dict[str, Any]:
    """Decorated point process against its c_beta shift, with a shifted negative control."""
    config = ctx.config
    model = build_decoration(config)
    policy = truncation_policy(config)
    rows: List[Dict[str, Any]] = []
    failures: List[str] = []
    for k, (beta, beta_prime) in enumerate(config.beta_pairs):
        joint_prime = beta_prime if config.beta_prime else None
        report = verify_shift(beta, model, config.L, config.n, ctx.stream(2 * k), policy=policy,
                              offset=config.offset, beta_prime=joint_prime, runner=ctx.runner)
        control = verify_shift(beta, model, config.L, config.n, ctx.stream(2 * k + 1), policy=policy,
                               offset=config.offset + CONTROL_OFFSET, runner=ctx.runner)
        for label, r in (("identity", report), ("control", control)):
            rows.append({
                "beta": beta, "check": label, "offset": r.offset, "statistic": r.statistic,
                "pvalue": r.pvalue, "c_beta": r.c_beta, "c_beta_se": r.c_beta_se, "n": r.n,
                "passed": r.passed,
            })
        if not report.passed:
            failures.append(f"shift identity rejected at beta={beta:g} (p={report.pvalue:.3g})")
        if control.passed:
            failures.append(f"negative control not rejected at beta={beta:g} (p={control.pvalue:.3g})")
    ctx.write_csv("shift.csv", ["beta", "check", "offset", "statistic", "pvalue", "c_beta", "c_beta_se", "n", "passed"], rows)
    return _gate(ctx, {"model": model.describe(), "rows": rows}, failures)


def _random_covariance(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    return a @ a.T / dim


@ExperimentRegistry.register("ibp")
def ibp(ctx: ExperimentContext) -> Dict[str, Any]:
    """Gaussian integration by parts on random covariances."""
    config = ctx.config
    functions = list(IBP_CATALOG) if config.ibp_function == "all" else [config.ibp_function]
    rng = ctx.stream(0)
    rows: List[Dict[str, Any]] = []
    failures: List[str] = []
    for name in functions:
        cov = _random_covariance(config.ibp_dim + 1, rng)
        report = gaussian_ibp_check(cov, name, config.mc_samples, rng)
        rows.append({"function": name, "lhs": report.lhs, "rhs": report.rhs, "diff": report.diff,
                     "se": report.se, "samples": report.samples, "passed": report.passed})
        if not report.passed:
            failures.append(f"{name}: |lhs - rhs| = {abs(report.diff):.3e} > 4 se = {4 * report.se:.3e}")
    ctx.write_csv("ibp.csv", ["function", "lhs", "rhs", "diff", "se", "samples", "passed"], rows)
    return _gate(ctx, {"dimension": config.ibp_dim, "rows": rows}, failures)


@ExperimentRegistry.register("decoration")
def decoration(ctx: ExperimentContext) -> Dict[str, Any]:
    """Self-consistency of the dgff-ball heat-bath sampler."""
    config = ctx.config
    model = DgffBallDecoration(r=config.r_ball, R=config.R_ball, burn_in=config.burn_in,
                               sweeps=config.sweeps, bank_size=config.bank or 4096)
    report = heat_bath_diagnostics(model, config.samples, ctx.stream(0))
    ctx.write_csv(
        "decoration_sites.csv",
        ["column", "truncated", "pvalue"],
        ({"column": j, "truncated": bool(t), "pvalue": float(p)}
         for j, (t, p) in enumerate(zip(report.truncated_sites, report.site_pvalues))),
    )
    summary = {
        "model": model.describe(),
        "pooled_statistic": report.pooled.statistic,
        "pooled_pvalue": report.pooled.pvalue,
        "updates": report.updates,
        "zero_mean": report.zero_mean,
        "zero_mean_se": report.zero_mean_se,
        "zero_mean_target": report.zero_mean_target,
    }
    failures = []
    if not report.pooled.passed():
        failures.append(f"pooled PIT values are not uniform (p={report.pooled.pvalue:.3g})")
    if not report.zero_mean_ok:
        failures.append(
            f"zero-neighbor conditional mean {report.zero_mean:.4f} differs from "
            f"{report.zero_mean_target:.4f} by more than 4 se"
        )
    return _gate(ctx, summary, failures)


# ---------------------------------------------------------------- driver


def run(
    config: RunConfig,
    runner: Optional[IRunner] = None,
    logger: Optional[logging.Logger] = None,
) -> RunManifest:
    """
    Execute the configured experiment and write its manifest.

    Args:
        config: Validated configuration.
        runner: Work runner; serial when omitted.
        logger: Logger; defaults to the module logger.

    Returns:
        RunManifest: The saved manifest.

    Raises:
        StatisticalGateError: If a verification gate fails (the manifest is saved first).
        ExperimentError: If the experiment fails; carries the cause's exit code.
    """
    log = logger or logging.getLogger(__name__)
    fn = ExperimentRegistry.get(config.experiment)
    out_dir = Path(config.out)
    streams = StreamFactory(config.seed)
    manifest = RunManifest(out_dir, logger=log).start()
    manifest.update({
        "experiment": config.experiment,
        "config": config_values(config),
        "config_text": serialize_config(config),
        "code_version": __version__,
        "master_seed": config.seed,
        "threads": config.threads,
    })
    ctx = ExperimentContext(
        config=config,
        streams=streams,
        runner=(runner or Runner()).with_logger(log),
        manifest=manifest,
        out_dir=out_dir,
        logger=log,
    )
    log.info(f"Running experiment {config.experiment} (seed {config.seed}, {config.threads} threads)")
    try:
        summary = fn(ctx)
        ctx.write_json("summary.json", summary)
    except StatisticalGateError:
        _finish(manifest, streams)
        raise
    except DgffLabError as e:
        log.error(f"Failed to run experiment {config.experiment}: {e}")
        raise ExperimentError(f"Failed to run experiment {config.experiment}: {e}", e) from e
    except Exception as e:
        log.error(f"Failed to run experiment {config.experiment}: {e}")
        raise ExperimentError(f"Failed to run experiment {config.experiment}: {e}", e) from e
    _finish(manifest, streams)
    return manifest


def _finish(manifest: RunManifest, streams: StreamFactory) -> None:
    manifest["seeds"] = streams.seed_ledger()
    manifest.stop()
    manifest.save()
