"""Command-line surface tying compression, analytics, and metrics together.

Commands

    compress      EMB1/CSV/raw matrix -> TTEV1 store + JSON report
    reconstruct   TTEV1 store -> EMB1 matrix
    info          TTEV1 store -> accounting JSON
    stats         matrix + dims -> per-row centre diagnostics CSV + JSON
    search        probe matrix + constraints -> ranked plan table CSV + JSON
    diff          two matrices -> absolute-error grid CSV + MAE summary
    ppl           logp text file -> perplexity JSON
    ppl-delta     two logp files -> per-sequence delta JSON
    add-token     TTEV1 store + vector -> updated TTEV1 store
    bench         synthetic or provided matrix -> latency profile JSON

Every command writes its JSON report to --report when given, otherwise to
stdout.  Numeric report fields carry 9 significant digits so outputs are
byte-stable across runs; --threads never changes output bytes, only wall
time (bench latency fields are wall-clock measurements and are the one
exception).  Failures print a machine-readable error object to stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import matio, metrics, synthetic, vocab
from .analytics import (
    SearchConstraints,
    ZeroMassError,
    centre_report,
    error_map,
    search_hyperparams,
    write_centre_reports_csv,
    write_error_map_csv,
    write_plan_table_csv,
)
from .tensor import tensorize
from .tt import TtConfig, compression_ratio_ttd, reconstruct, tt_svd

DEFAULT_PPL_MAX = 100.0
DEFAULT_MIN_ETA = 0.5


class CliUsageError(ValueError):
    """A command was invoked with missing or contradictory flags."""


@dataclass
class RunConfig:
    """Parsed invocation; command-specific requirements are checked in run()."""

    command: str
    input: Path | None = None
    against: Path | None = None
    output: Path | None = None
    report: Path | None = None
    dims: tuple[int, ...] | None = None
    ranks: tuple[int, ...] | None = None
    epsilon: float = 0.0
    threads: int = 1
    fmt: str | None = None
    rows: int | None = None
    dim: int | None = None
    ppl_max: float = DEFAULT_PPL_MAX
    min_eta: float = DEFAULT_MIN_ETA
    target_ratio: float | None = None
    max_rel_error: float | None = None
    max_mae: float | None = None
    max_order: int = 3
    budget: int = 16
    seed: int = 0
    tokens: int = 256
    kind: str = "gaussian"
    positions: int = 0
    model_total: float | None = None
    ppl_file: Path | None = None
    vector: str | None = None
    vector_file: Path | None = None
    normalized: bool = False
    absolute: bool = False


# ---------------------------------------------------------------------------
# Report generation


def _sig9(value):
    if isinstance(value, float):
        if not math.isfinite(value):
            return str(value)
        return float(f"{value:.9g}")
    if isinstance(value, dict):
        return {k: _sig9(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sig9(v) for v in value]
    return value


def generate_report(fields: dict) -> str:
    """Serialize a report with stable field order and 9-digit floats."""
    return json.dumps(_sig9(fields), indent=2) + "\n"


def _emit_report(fields: dict, cfg: RunConfig) -> None:
    text = generate_report(fields)
    if cfg.report is not None:
        Path(cfg.report).write_text(text)
    else:
        sys.stdout.write(text)


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            flag = "--" + name.replace("_", "-")
            raise CliUsageError(f"{cfg.command} requires {flag}")


def _read_input(cfg: RunConfig, path: Path) -> np.ndarray:
    return matio.read_matrix(path, cfg.fmt, cfg.rows, cfg.dim)


def _tt_config(cfg: RunConfig, dims: tuple[int, ...]) -> TtConfig:
    return TtConfig(dims=dims, rank_caps=cfg.ranks, epsilon=cfg.epsilon)


# ---------------------------------------------------------------------------
# Commands


def _reconstruct_all(store: vocab.CompressedVocabulary) -> np.ndarray:
    out = np.empty((store.vocab_size, store.d))
    for i, tok in enumerate(store.tokens):
        out[i] = reconstruct(tok)
    return out


def _ppl_block(cfg: RunConfig) -> dict | None:
    if cfg.ppl_file is None:
        return None
    seqs = metrics.read_logp_file(cfg.ppl_file)
    merged = metrics.ScoredSequence(tuple(lp for s in seqs for lp in s.logps))
    return {
        "n_tokens": len(merged),
        "ppl": metrics.perplexity(merged),
        "ln_ppl": metrics.log_perplexity(merged),
        "ppl_per_token": metrics.perplexity(merged, normalized=True),
    }


def _sound(cfg: RunConfig, eta_ttd: float, ppl_block: dict | None) -> bool:
    if eta_ttd < cfg.min_eta:
        return False
    if ppl_block is not None and ppl_block["ppl_per_token"] > cfg.ppl_max:
        return False
    return True


def _cmd_compress(cfg: RunConfig) -> int:
    _require(cfg, "input", "output", "dims")
    matrix = _read_input(cfg, cfg.input)
    ttcfg = _tt_config(cfg, cfg.dims)
    store = vocab.compress_vocabulary(matrix, ttcfg, parallelism=cfg.threads)
    vocab.save(store, cfg.output)
    # reload so every reported error describes the float32 bytes on disk,
    # not the float64 intermediate
    store = vocab.load(cfg.output)

    recon = _reconstruct_all(store)
    errors = error_map(matrix, recon)
    row_norms = np.linalg.norm(matrix, axis=1)
    diff_norms = np.linalg.norm(matrix - recon, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(row_norms > 0, diff_norms / row_norms, np.where(diff_norms > 0, np.inf, 0.0))
    accounting = vocab.layer_accounting(store)
    per_token = store.compressed_params() / store.vocab_size
    eta_ttd = compression_ratio_ttd(store.d, per_token)
    ppl_block = _ppl_block(cfg)

    report = {
        "command": "compress",
        "vocab_size": store.vocab_size,
        "d": store.d,
        "dims": list(store.dims),
        "rank_caps": list(cfg.ranks) if cfg.ranks else None,
        "epsilon": store.epsilon,
        "stored_params_total": store.compressed_params(),
        "stored_params_per_token": per_token,
        "eta_ttd": eta_ttd,
        "eta": accounting.eta,
        "eta_emb": accounting.eta_emb,
        "max_rel_error": float(rel.max()),
        "mae": errors.mae,
        "max_ae": errors.max_ae,
        "ppl": ppl_block,
        "min_eta": cfg.min_eta,
        "ppl_max": cfg.ppl_max,
        "sound_compression": _sound(cfg, eta_ttd, ppl_block),
        "store": str(cfg.output),
    }
    _emit_report(report, cfg)
    return 0


def _cmd_reconstruct(cfg: RunConfig) -> int:
    _require(cfg, "input", "output")
    store = vocab.load(cfg.input)
    matio.write_emb1(_reconstruct_all(store), cfg.output, dtype="f64")
    report = {
        "command": "reconstruct",
        "vocab_size": store.vocab_size,
        "d": store.d,
        "matrix": str(cfg.output),
    }
    _emit_report(report, cfg)
    return 0


def _cmd_info(cfg: RunConfig) -> int:
    _require(cfg, "input")
    store = vocab.load(cfg.input)
    accounting = vocab.layer_accounting(
        store, position_rows=cfg.positions, model_total_params=cfg.model_total
    )
    per_token = store.compressed_params() / store.vocab_size if store.vocab_size else 0.0
    eta_ttd = compression_ratio_ttd(store.d, per_token) if per_token else 0.0
    ranks_seen = sorted({tok.ranks for tok in store.tokens})
    report = {
        "command": "info",
        "vocab_size": store.vocab_size,
        "d": store.d,
        "dims": list(store.dims),
        "epsilon": store.epsilon,
        "position_rows": cfg.positions,
        "stored_params_total": store.compressed_params(),
        "stored_params_per_token": per_token,
        "eta_ttd": eta_ttd,
        "original_params": accounting.original_params,
        "compressed_params": accounting.compressed_params,
        "eta": accounting.eta,
        "eta_emb": accounting.eta_emb,
        "model_total_params": accounting.model_total_params,
        "whole_model_reduction_fraction": accounting.whole_model_reduction_fraction,
        "distinct_rank_chains": [list(r) for r in ranks_seen[:8]],
        "min_eta": cfg.min_eta,
        "sound_compression": _sound(cfg, eta_ttd, None),
    }
    _emit_report(report, cfg)
    return 0


def _cmd_stats(cfg: RunConfig) -> int:
    _require(cfg, "input", "dims")
    matrix = _read_input(cfg, cfg.input)
    if matrix.shape[1] != math.prod(cfg.dims):
        raise CliUsageError(
            f"--dims {cfg.dims} needs rows of length {math.prod(cfg.dims)}, "
            f"matrix has {matrix.shape[1]}"
        )
    reports = []
    sigmas = []
    for i in range(matrix.shape[0]):
        try:
            rep = centre_report(tensorize(matrix[i], cfg.dims), absolute=cfg.absolute)
            sigmas.append(rep.sigma)
        except ZeroMassError:
            rep = None
        reports.append((i, rep))
    if cfg.output is not None:
        write_centre_reports_csv(reports, cfg.output)
    report = {
        "command": "stats",
        "rows": matrix.shape[0],
        "dims": list(cfg.dims),
        "absolute": cfg.absolute,
        "defined_rows": len(sigmas),
        "undefined_rows": matrix.shape[0] - len(sigmas),
        "mean_sigma": float(np.mean(sigmas)) if sigmas else None,
        "max_sigma": float(np.max(sigmas)) if sigmas else None,
    }
    _emit_report(report, cfg)
    return 0


def _cmd_search(cfg: RunConfig) -> int:
    _require(cfg, "input")
    probe = _read_input(cfg, cfg.input)
    constraints = SearchConstraints(
        min_eta_ttd=cfg.target_ratio,
        max_rel_error=cfg.max_rel_error,
        max_mae=cfg.max_mae,
        max_order=cfg.max_order,
        budget=cfg.budget,
    )
    result = search_hyperparams(
        probe, probe.shape[1], constraints, epsilon=cfg.epsilon, parallelism=cfg.threads
    )
    if cfg.output is not None:
        write_plan_table_csv(result, cfg.output)

    def plan_entry(ev):
        return {
            "dims": list(ev.plan.dims),
            "rank_caps": list(ev.plan.rank_caps),
            "epsilon": ev.plan.epsilon,
            "sigma_score": ev.plan.sigma_score,
            "predicted_params": ev.plan.predicted_params,
            "predicted_eta_ttd": ev.plan.predicted_eta_ttd,
            "measured_params_per_row": ev.measured_params_per_row,
            "measured_eta_ttd": ev.measured_eta_ttd,
            "max_rel_error": ev.max_rel_error,
            "mae": ev.mae,
            "passed": ev.passed,
        }

    report = {
        "command": "search",
        "probe_rows": probe.shape[0],
        "d": probe.shape[1],
        "constraints": {
            "min_eta_ttd": cfg.target_ratio,
            "max_rel_error": cfg.max_rel_error,
            "max_mae": cfg.max_mae,
            "max_order": cfg.max_order,
            "budget": cfg.budget,
        },
        "candidate_count": result.candidate_count,
        "evaluated": len(result.plans),
        "feasible": result.feasible,
        "best": plan_entry(result.best) if result.best else None,
        "plans": [plan_entry(ev) for ev in result.plans],
    }
    _emit_report(report, cfg)
    return 0


def _cmd_diff(cfg: RunConfig) -> int:
    _require(cfg, "input", "against")
    original = _read_input(cfg, cfg.input)
    other = matio.read_matrix(cfg.against, cfg.fmt, cfg.rows, cfg.dim)
    errors = error_map(original, other)
    if cfg.output is not None:
        write_error_map_csv(errors, cfg.output)
    report = {
        "command": "diff",
        "rows": original.shape[0],
        "d": original.shape[1],
        "mae": errors.mae,
        "max_ae": errors.max_ae,
        "worst_row": int(np.argmax(errors.per_token_mae)),
    }
    _emit_report(report, cfg)
    return 0


def _cmd_ppl(cfg: RunConfig) -> int:
    _require(cfg, "input")
    seqs = metrics.read_logp_file(cfg.input)
    report = {"command": "ppl", **metrics.sequence_report(seqs, normalized=cfg.normalized)}
    _emit_report(report, cfg)
    return 0


def _cmd_ppl_delta(cfg: RunConfig) -> int:
    _require(cfg, "input", "against")
    base = metrics.read_logp_file(cfg.input)
    cmpr = metrics.read_logp_file(cfg.against)
    report = {"command": "ppl-delta", **metrics.delta_report(base, cmpr)}
    _emit_report(report, cfg)
    return 0


def _parse_vector(cfg: RunConfig) -> np.ndarray:
    if (cfg.vector is None) == (cfg.vector_file is None):
        raise CliUsageError("add-token needs exactly one of --vector or --vector-file")
    if cfg.vector is not None:
        try:
            return np.array([float(v) for v in cfg.vector.split(",")])
        except ValueError:
            raise CliUsageError("--vector must be a comma-separated list of numbers") from None
    matrix = matio.read_matrix(cfg.vector_file, cfg.fmt, cfg.rows, cfg.dim)
    if matrix.shape[0] != 1:
        raise CliUsageError(f"--vector-file must hold exactly one row, got {matrix.shape[0]}")
    return matrix[0]


def _cmd_add_token(cfg: RunConfig) -> int:
    _require(cfg, "input", "output")
    store = vocab.load(cfg.input)
    vector = _parse_vector(cfg)
    override = None
    if cfg.ranks is not None or cfg.epsilon != 0.0:
        override = TtConfig(dims=store.dims, rank_caps=cfg.ranks, epsilon=cfg.epsilon)
    token_id = vocab.add_token(store, vector, override)
    vocab.save(store, cfg.output)
    tok = store.tokens[token_id]
    report = {
        "command": "add-token",
        "token_id": token_id,
        "vocab_size": store.vocab_size,
        "ranks": list(tok.ranks),
        "stored_params_token": tok.param_count(),
        "store": str(cfg.output),
    }
    _emit_report(report, cfg)
    return 0


def _latency_stats(samples_ms: list[float]) -> dict:
    arr = np.array(samples_ms)
    return {
        "mean_ms_per_token": float(arr.mean()),
        "p50_ms_per_token": float(np.percentile(arr, 50)),
        "p95_ms_per_token": float(np.percentile(arr, 95)),
    }


def _cmd_bench(cfg: RunConfig) -> int:
    _require(cfg, "dims")
    d = math.prod(cfg.dims)
    if cfg.input is not None:
        matrix = _read_input(cfg, cfg.input)
        if matrix.shape[1] != d:
            raise CliUsageError(
                f"--dims {cfg.dims} needs rows of length {d}, matrix has {matrix.shape[1]}"
            )
    else:
        if cfg.tokens < 1:
            raise CliUsageError("--tokens must be >= 1")
        matrix = synthetic.make_matrix(cfg.kind, cfg.tokens, d, cfg.seed, dims=cfg.dims)
    ttcfg = _tt_config(cfg, cfg.dims)

    tt_svd(matrix[0], ttcfg)  # warm up BLAS paths before timing
    compress_ms = []
    tokens = []
    for row in matrix:
        t0 = time.perf_counter()
        cores = tt_svd(row, ttcfg)
        compress_ms.append((time.perf_counter() - t0) * 1e3)
        tokens.append(cores)

    reconstruct(tokens[0])
    reconstruct_ms = []
    for cores in tokens:
        t0 = time.perf_counter()
        reconstruct(cores)
        reconstruct_ms.append((time.perf_counter() - t0) * 1e3)

    t0 = time.perf_counter()
    for cores in tokens:
        reconstruct(cores)
    text_ms = (time.perf_counter() - t0) * 1e3

    total_params = sum(t.param_count() for t in tokens)
    report = {
        "command": "bench",
        "tokens_per_run": matrix.shape[0],
        "d": d,
        "dims": list(cfg.dims),
        "rank_caps": list(cfg.ranks) if cfg.ranks else None,
        "epsilon": cfg.epsilon,
        "matrix_kind": cfg.kind if cfg.input is None else "file",
        "seed": cfg.seed,
        "eta_ttd": compression_ratio_ttd(d, total_params / matrix.shape[0]),
        "compress": _latency_stats(compress_ms),
        "reconstruct": _latency_stats(reconstruct_ms),
        "text_reconstruct_ms": text_ms,
    }
    _emit_report(report, cfg)
    return 0


_COMMANDS = {
    "compress": _cmd_compress,
    "reconstruct": _cmd_reconstruct,
    "info": _cmd_info,
    "stats": _cmd_stats,
    "search": _cmd_search,
    "diff": _cmd_diff,
    "ppl": _cmd_ppl,
    "ppl-delta": _cmd_ppl_delta,
    "add-token": _cmd_add_token,
    "bench": _cmd_bench,
}


def run(cfg: RunConfig) -> int:
    """Dispatch one parsed invocation; returns the process exit code."""
    handler = _COMMANDS.get(cfg.command)
    if handler is None:
        raise CliUsageError(f"unknown command {cfg.command!r}")
    if cfg.threads < 1:
        raise CliUsageError(f"--threads must be >= 1, got {cfg.threads}")
    return handler(cfg)


# ---------------------------------------------------------------------------
# Argument parsing


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _default_threads() -> int:
    raw = os.environ.get("TTEMBED_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttembed",
        description="Training-free token-embedding compression via tensor-train decomposition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--input", type=Path, help="input file")
        p.add_argument("--against", type=Path, help="second input for two-file commands")
        p.add_argument("--output", type=Path, help="output artifact path")
        p.add_argument("--report", type=Path, help="write the JSON report here instead of stdout")
        p.add_argument("--dims", type=_int_list, help="tensor shape, e.g. 3,3,3")
        p.add_argument("--ranks", type=_int_list, help="rank caps r0,...,rN, e.g. 1,1,1,1")
        p.add_argument("--eps", type=float, default=0.0, dest="epsilon",
                       help="relative accuracy budget (0 = lossless at 64-bit precision)")
        p.add_argument("--threads", type=int, default=_default_threads(),
                       help="worker threads (default from TTEMBED_THREADS, else 1)")
        p.add_argument("--format", choices=["emb1", "csv", "raw"], dest="fmt",
                       help="input matrix container (default: sniff)")
        p.add_argument("--rows", type=int, help="row count for raw float32 input")
        p.add_argument("--dim", type=int, help="row length for raw float32 input")
        p.add_argument("--ppl-max", type=float, default=DEFAULT_PPL_MAX, dest="ppl_max",
                       help="soundness threshold on per-token perplexity")
        p.add_argument("--min-eta", type=float, default=DEFAULT_MIN_ETA, dest="min_eta",
                       help="soundness threshold on eta_ttd")
        p.add_argument("--seed", type=int, default=0, help="synthetic data seed")
        return p

    add("compress", "decompose a matrix into a TTEV1 store") \
        .add_argument("--ppl-file", type=Path, dest="ppl_file",
                      help="logp file scored under the compressed model, for the soundness flag")
    add("reconstruct", "expand a TTEV1 store back to an EMB1 matrix")
    p = add("info", "accounting for an existing TTEV1 store")
    p.add_argument("--positions", type=int, default=0,
                   help="extra position rows to include in accounting")
    p.add_argument("--model-total", type=float, dest="model_total",
                   help="whole-model parameter count for the reduction fraction")
    p = add("stats", "per-row centre diagnostics for a matrix")
    p.add_argument("--absolute", action="store_true",
                   help="weight mass by magnitudes instead of raw values")
    p = add("search", "rank shape/cap candidates on a probe matrix")
    p.add_argument("--target-ratio", type=float, dest="target_ratio",
                   help="required eta_ttd")
    p.add_argument("--max-rel-error", type=float, dest="max_rel_error",
                   help="allowed per-row relative reconstruction error")
    p.add_argument("--max-mae", type=float, dest="max_mae",
                   help="allowed mean absolute reconstruction error")
    p.add_argument("--max-order", type=int, default=3, dest="max_order",
                   help="largest tensor order to consider")
    p.add_argument("--budget", type=int, default=16, help="plans to evaluate")
    add("diff", "absolute-error map between two matrices")
    add("ppl", "perplexity of a logp file") \
        .add_argument("--normalized", action="store_true",
                      help="per-token normalization instead of the literal product form")
    add("ppl-delta", "log-perplexity change between two logp files")
    p = add("add-token", "append one embedding to an existing store")
    p.add_argument("--vector", help="comma-separated embedding values")
    p.add_argument("--vector-file", type=Path, dest="vector_file",
                   help="single-row matrix file holding the embedding")
    p = add("bench", "latency profile of decomposition and reconstruction")
    p.add_argument("--tokens", type=int, default=256, help="synthetic rows to generate")
    p.add_argument("--kind", choices=["gaussian", "separable", "striped"],
                   default="gaussian", help="synthetic matrix family")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    known = set(RunConfig.__dataclass_fields__)
    kwargs = {k: v for k, v in vars(args).items() if k in known and v is not None}
    kwargs["command"] = args.command
    return RunConfig(**kwargs)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = config_from_args(args)
    try:
        return run(cfg)
    except (ValueError, OSError, IndexError) as exc:
        error = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        sys.stderr.write(json.dumps(error) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
