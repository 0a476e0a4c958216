"""Structure diagnostics, shape search, and reconstruction-error maps.

The centre diagnostics score how far a tensor's value mass sits from its
geometric middle; lower scores have empirically easier rank structure, so
the hyperparameter search ranks candidate shapes by that score before
spending its evaluation budget.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .tensor import DenseTensor, tensorize
from .tt import TtConfig, param_count, compression_ratio_ttd, tt_svd, reconstruct


class ZeroMassError(ValueError):
    """Total tensor mass is zero, so the mass centre is undefined."""


@dataclass(frozen=True)
class CentreReport:
    """Mass centre vs geometric centre, per mode and summed."""

    mass: tuple[float, ...]
    geometric: tuple[float, ...]
    dist_per_mode: tuple[float, ...]
    sigma: float


def mass_centre(t: DenseTensor, absolute: bool = False) -> list[float]:
    """Value-weighted mean of the 1-based indices along each mode.

    Weights are the raw entries; ``absolute=True`` weights by magnitude
    instead, which is the practical choice for sign-mixed embeddings.
    """
    arr = t.to_ndarray()
    weights = np.abs(arr) if absolute else arr
    total = float(weights.sum())
    if total == 0.0:
        raise ZeroMassError("undefined centre: total tensor mass is zero")
    centres = []
    for k, size in enumerate(t.dims):
        other_axes = tuple(a for a in range(t.order) if a != k)
        marginal = weights.sum(axis=other_axes) if other_axes else weights
        idx = np.arange(1, size + 1, dtype=np.float64)
        centres.append(float(np.dot(idx, marginal) / total))
    return centres


def geometric_centre(dims: Sequence[int]) -> list[float]:
    """Half of each mode size, o_k = I_k / 2."""
    return [size / 2 for size in dims]


def centre_report(t: DenseTensor, absolute: bool = False) -> CentreReport:
    mass = mass_centre(t, absolute=absolute)
    geo = geometric_centre(t.dims)
    dist = [abs(c - o) for c, o in zip(mass, geo)]
    return CentreReport(
        mass=tuple(mass),
        geometric=tuple(geo),
        dist_per_mode=tuple(dist),
        sigma=float(sum(dist)),
    )


def enumerate_shapes(d: int, max_order: int, min_mode_size: int = 2) -> list[tuple[int, ...]]:
    """All ordered factorizations of d into 1..max_order modes.

    Every mode is at least ``min_mode_size``.  Output is sorted by mode
    count, then lexicographically, so it is stable across runs.
    """
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    if min_mode_size < 1:
        raise ValueError(f"min_mode_size must be >= 1, got {min_mode_size}")

    def walk(n: int, slots: int) -> list[tuple[int, ...]]:
        found = []
        for f in range(min_mode_size, n + 1):
            if n % f:
                continue
            rest = n // f
            if rest == 1:
                found.append((f,))
            elif slots > 1:
                found.extend((f,) + tail for tail in walk(rest, slots - 1))
        return found

    return sorted(walk(d, max_order), key=lambda dims: (len(dims), dims))


def uniform_storage_h(d: int, mode_size: int, rank: int) -> float:
    """Storage cost r*I*log_I(d) of a uniform shape with one shared rank.

    Only defined when ``mode_size`` is an exact integer root of d, i.e.
    the tensor is I x I x ... x I.
    """
    if mode_size < 2:
        raise ValueError(f"mode_size must be >= 2, got {mode_size}")
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    power, order = mode_size, 1
    while power < d:
        power *= mode_size
        order += 1
    if power != d:
        raise ValueError(f"{mode_size} is not an integer root of {d}")
    return float(rank * mode_size * order)


# ---------------------------------------------------------------------------
# Hyperparameter search

DEFAULT_RANK_LADDER = (1, 2, 3, 4, 6, 8, 12, 16, 24, 32)


@dataclass(frozen=True)
class SearchConstraints:
    """Acceptance thresholds and search-space bounds.

    Unset thresholds are not enforced.  ``budget`` caps how many candidate
    plans are actually decomposed and measured.
    """

    min_eta_ttd: float | None = None
    max_rel_error: float | None = None
    max_mae: float | None = None
    max_order: int = 3
    budget: int = 16
    min_mode_size: int = 2

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.max_order < 1:
            raise ValueError(f"max_order must be >= 1, got {self.max_order}")


@dataclass(frozen=True)
class ShapeRankPlan:
    """One candidate configuration with its predicted cost and score."""

    dims: tuple[int, ...]
    rank_caps: tuple[int, ...]
    epsilon: float
    predicted_params: int
    predicted_eta_ttd: float
    sigma_score: float


@dataclass(frozen=True)
class EvaluatedPlan:
    """A plan plus what actually happened on the probe rows."""

    plan: ShapeRankPlan
    measured_params_per_row: float
    measured_eta_ttd: float
    max_rel_error: float
    mae: float
    passed: bool


@dataclass(frozen=True)
class SearchResult:
    plans: tuple[EvaluatedPlan, ...]
    feasible: bool
    best: EvaluatedPlan | None
    candidate_count: int


def _capped_bonds(dims: tuple[int, ...], cap: int) -> tuple[int, ...]:
    order = len(dims)
    caps = [1]
    for k in range(1, order):
        bond = min(math.prod(dims[:k]), math.prod(dims[k:]))
        caps.append(min(cap, bond))
    caps.append(1)
    return tuple(caps)


def _shape_sigma(probe: np.ndarray, dims: tuple[int, ...]) -> float:
    total, counted = 0.0, 0
    for row in probe:
        try:
            total += centre_report(tensorize(row, dims), absolute=True).sigma
        except ZeroMassError:
            continue
        counted += 1
    return total / counted if counted else math.inf


def _evaluate_plan(plan: ShapeRankPlan, probe: np.ndarray, constraints: SearchConstraints) -> EvaluatedPlan:
    cfg = TtConfig(dims=plan.dims, rank_caps=plan.rank_caps, epsilon=plan.epsilon)
    d = probe.shape[1]
    total_params = 0
    max_rel = 0.0
    abs_sum = 0.0
    for row in probe:
        cores = tt_svd(row, cfg)
        total_params += cores.param_count()
        recon = reconstruct(cores)
        diff = row - recon
        norm = float(np.linalg.norm(row))
        err = float(np.linalg.norm(diff))
        if norm > 0.0:
            rel = err / norm
        else:
            rel = 0.0 if err == 0.0 else math.inf
        max_rel = max(max_rel, rel)
        abs_sum += float(np.abs(diff).sum())
    per_row = total_params / probe.shape[0]
    eta = compression_ratio_ttd(d, total_params / probe.shape[0])
    mae = abs_sum / probe.size
    passed = (
        (constraints.min_eta_ttd is None or eta >= constraints.min_eta_ttd)
        and (constraints.max_rel_error is None or max_rel <= constraints.max_rel_error)
        and (constraints.max_mae is None or mae <= constraints.max_mae)
    )
    return EvaluatedPlan(
        plan=plan,
        measured_params_per_row=per_row,
        measured_eta_ttd=eta,
        max_rel_error=max_rel,
        mae=mae,
        passed=passed,
    )


def _violations(ev: EvaluatedPlan, constraints: SearchConstraints) -> int:
    count = 0
    if constraints.min_eta_ttd is not None and ev.measured_eta_ttd < constraints.min_eta_ttd:
        count += 1
    if constraints.max_rel_error is not None and ev.max_rel_error > constraints.max_rel_error:
        count += 1
    if constraints.max_mae is not None and ev.mae > constraints.max_mae:
        count += 1
    return count


def search_hyperparams(
    probe: np.ndarray,
    d: int,
    constraints: SearchConstraints,
    epsilon: float = 0.0,
    rank_ladder: Sequence[int] = DEFAULT_RANK_LADDER,
    parallelism: int = 1,
) -> SearchResult:
    """Rank candidate shapes by centre score and measure the best ones.

    Candidates are every enumerated shape crossed with a ladder of uniform
    rank caps (clamped to feasible bond sizes, duplicates dropped).  They
    are ordered by ascending sigma score, ties broken by smaller predicted
    parameter count and then by dims, and evaluated in that order until the
    budget runs out.  When no evaluated plan satisfies the constraints the
    result is flagged infeasible and ``best`` holds the evaluated plan with
    the fewest constraint violations (earliest in ranking order on ties).
    """
    probe = np.asarray(probe, dtype=np.float64)
    if probe.ndim != 2 or probe.shape[0] < 1:
        raise ValueError("probe must be a matrix with at least one row")
    if probe.shape[1] != d:
        raise ValueError(f"probe rows have length {probe.shape[1]}, expected {d}")
    if not np.isfinite(probe).all():
        raise ValueError("probe contains non-finite entries")
    if any(r < 1 for r in rank_ladder):
        raise ValueError("rank ladder entries must be >= 1")

    shapes = enumerate_shapes(d, constraints.max_order, constraints.min_mode_size)
    if not shapes:
        raise ValueError(
            f"no factorizations of d={d} with modes >= {constraints.min_mode_size}"
        )

    plans: list[ShapeRankPlan] = []
    for dims in shapes:
        sigma = _shape_sigma(probe, dims)
        seen: set[tuple[int, ...]] = set()
        for cap in rank_ladder:
            caps = _capped_bonds(dims, cap)
            if caps in seen:
                continue
            seen.add(caps)
            stored = param_count(dims, caps)
            plans.append(
                ShapeRankPlan(
                    dims=dims,
                    rank_caps=caps,
                    epsilon=epsilon,
                    predicted_params=stored,
                    predicted_eta_ttd=compression_ratio_ttd(d, stored),
                    sigma_score=sigma,
                )
            )
    plans.sort(key=lambda p: (p.sigma_score, p.predicted_params, p.dims, p.rank_caps))

    # Stored params can never drop below 1, so ratios above d - 1 are
    # unreachable regardless of shape; measure one plan and report failure.
    impossible = constraints.min_eta_ttd is not None and constraints.min_eta_ttd > d - 1
    picked = plans[:1] if impossible else plans[: constraints.budget]

    if parallelism > 1 and len(picked) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            evaluated = list(
                pool.map(lambda p: _evaluate_plan(p, probe, constraints), picked)
            )
    else:
        evaluated = [_evaluate_plan(p, probe, constraints) for p in picked]

    winners = [ev for ev in evaluated if ev.passed]
    if winners:
        best = winners[0]
        feasible = True
    else:
        ranked = sorted(
            range(len(evaluated)), key=lambda i: (_violations(evaluated[i], constraints), i)
        )
        best = evaluated[ranked[0]]
        feasible = False
    return SearchResult(
        plans=tuple(evaluated),
        feasible=feasible,
        best=best,
        candidate_count=len(plans),
    )


# ---------------------------------------------------------------------------
# Error maps


@dataclass(eq=False)
class ErrorMap:
    """Entrywise absolute errors between two equal-shape matrices."""

    grid: np.ndarray
    mae: float
    max_ae: float
    per_token_mae: np.ndarray


def error_map(original: np.ndarray, reconstructed: np.ndarray) -> ErrorMap:
    original = np.asarray(original, dtype=np.float64)
    reconstructed = np.asarray(reconstructed, dtype=np.float64)
    if original.ndim != 2:
        raise ValueError(f"expected 2-D matrices, got {original.ndim} axes")
    if original.shape != reconstructed.shape:
        raise ValueError(
            f"shape mismatch: {original.shape} vs {reconstructed.shape}"
        )
    if original.size == 0:
        raise ValueError("matrices are empty")
    grid = np.abs(original - reconstructed)
    return ErrorMap(
        grid=grid,
        mae=float(grid.mean()),
        max_ae=float(grid.max()),
        per_token_mae=grid.mean(axis=1),
    )


# ---------------------------------------------------------------------------
# CSV export


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def write_error_map_csv(em: ErrorMap, sink: str | Path | TextIO) -> None:
    """One CSV row of absolute errors per token row."""
    lines = [",".join(_fmt(v) for v in row) for row in em.grid]
    text = "\n".join(lines) + "\n"
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    else:
        sink.write(text)


def write_centre_reports_csv(
    reports: Sequence[tuple[int, CentreReport | None]], sink: str | Path | TextIO
) -> None:
    """Per-row centre diagnostics; rows with undefined centres are blank."""
    order = 0
    for _, rep in reports:
        if rep is not None:
            order = len(rep.mass)
            break
    head = ["row"]
    head += [f"mass_{k + 1}" for k in range(order)]
    head += [f"geometric_{k + 1}" for k in range(order)]
    head += [f"dist_{k + 1}" for k in range(order)]
    head.append("sigma")
    lines = [",".join(head)]
    for row_id, rep in reports:
        if rep is None:
            lines.append(",".join([str(row_id)] + [""] * (3 * order + 1)))
            continue
        cells = [str(row_id)]
        cells += [_fmt(v) for v in rep.mass]
        cells += [_fmt(v) for v in rep.geometric]
        cells += [_fmt(v) for v in rep.dist_per_mode]
        cells.append(_fmt(rep.sigma))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    else:
        sink.write(text)


def write_plan_table_csv(result: SearchResult, sink: str | Path | TextIO) -> None:
    """Ranked search results, one evaluated plan per row."""
    head = (
        "rank,dims,rank_caps,sigma_score,predicted_params,predicted_eta_ttd,"
        "measured_params_per_row,measured_eta_ttd,max_rel_error,mae,passed"
    )
    lines = [head]
    for i, ev in enumerate(result.plans):
        plan = ev.plan
        lines.append(
            ",".join(
                [
                    str(i + 1),
                    "x".join(str(v) for v in plan.dims),
                    "x".join(str(v) for v in plan.rank_caps),
                    _fmt(plan.sigma_score),
                    str(plan.predicted_params),
                    _fmt(plan.predicted_eta_ttd),
                    _fmt(ev.measured_params_per_row),
                    _fmt(ev.measured_eta_ttd),
                    _fmt(ev.max_rel_error),
                    _fmt(ev.mae),
                    "true" if ev.passed else "false",
                ]
            )
        )
    text = "\n".join(lines) + "\n"
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    else:
        sink.write(text)
