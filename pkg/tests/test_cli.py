"""End-to-end coverage for the ttembed command-line interface."""

import json
import math
import shutil
import subprocess

import numpy as np
import pytest

from ttembed import cli, matio
from ttembed.analytics import error_map
from ttembed.synthetic import gaussian_matrix, separable_matrix

LN_HALF = math.log(0.5)


def run_cli(argv, capsys):
    """Invoke the entry point and parse whatever JSON it emitted."""
    rc = cli.main(argv)
    captured = capsys.readouterr()
    out = json.loads(captured.out) if captured.out else None
    err = json.loads(captured.err) if captured.err else None
    return rc, out, err


def write_emb(path, matrix):
    matio.write_emb1(matrix, path, dtype="f64")
    return str(path)


def test_compress_then_info_reports_the_rank_one_ratio(tmp_path, capsys):
    matrix = gaussian_matrix(5, 27, seed=3)
    src = write_emb(tmp_path / "m.emb1", matrix)
    store = tmp_path / "m.ttev"

    rc, report, _ = run_cli(
        ["compress", "--input", src, "--output", str(store),
         "--dims", "3,3,3", "--ranks", "1,1,1,1"],
        capsys,
    )
    assert rc == 0
    assert report["stored_params_per_token"] == 9.0
    assert report["eta_ttd"] == 2.0
    assert report["sound_compression"] is True

    rc, info, _ = run_cli(["info", "--input", str(store)], capsys)
    assert rc == 0
    assert info["vocab_size"] == 5
    assert info["d"] == 27
    assert info["eta_ttd"] == 2.0
    assert info["distinct_rank_chains"] == [[1, 1, 1, 1]]


def test_reconstruct_roundtrip_stays_within_storage_precision(tmp_path, capsys):
    matrix = separable_matrix(6, (2, 3, 4), seed=11)
    src = write_emb(tmp_path / "m.emb1", matrix)
    store = tmp_path / "m.ttev"
    back = tmp_path / "back.emb1"

    rc, _, _ = run_cli(
        ["compress", "--input", src, "--output", str(store), "--dims", "2,3,4"],
        capsys,
    )
    assert rc == 0
    rc, _, _ = run_cli(
        ["reconstruct", "--input", str(store), "--output", str(back)], capsys
    )
    assert rc == 0

    rc, report, _ = run_cli(
        ["diff", "--input", src, "--against", str(back)], capsys
    )
    assert rc == 0
    assert report["mae"] <= 1e-6
    assert report["max_ae"] <= 1e-5


def test_compress_is_deterministic_across_runs_and_threads(tmp_path, capsys):
    matrix = gaussian_matrix(24, 24, seed=7)
    src = write_emb(tmp_path / "m.emb1", matrix)
    outs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "8")):
        store = tmp_path / f"{name}.ttev"
        rep = tmp_path / f"{name}.json"
        rc = cli.main(
            ["compress", "--input", src, "--output", str(store),
             "--dims", "2,3,4", "--eps", "0.25", "--threads", threads,
             "--report", str(rep)]
        )
        assert rc == 0
        fields = json.loads(rep.read_text())
        fields.pop("store")
        outs.append((store.read_bytes(), fields))
    capsys.readouterr()
    assert outs[0] == outs[1]
    assert outs[0] == outs[2]


def test_search_reports_plans_in_sigma_order(tmp_path, capsys):
    probe = gaussian_matrix(4, 24, seed=5)
    src = write_emb(tmp_path / "probe.emb1", probe)
    table = tmp_path / "plans.csv"

    rc, report, _ = run_cli(
        ["search", "--input", src, "--budget", "6", "--max-order", "3",
         "--target-ratio", "1.0", "--output", str(table)],
        capsys,
    )
    assert rc == 0
    assert report["evaluated"] <= 6
    sigmas = [p["sigma_score"] for p in report["plans"]]
    assert sigmas == sorted(sigmas)
    assert isinstance(report["feasible"], bool)
    lines = table.read_text().splitlines()
    assert lines[0].startswith("rank,dims,rank_caps,")
    assert len(lines) == report["evaluated"] + 1


def test_unreachable_target_still_exits_cleanly(tmp_path, capsys):
    probe = gaussian_matrix(2, 12, seed=1)
    src = write_emb(tmp_path / "probe.emb1", probe)
    rc, report, _ = run_cli(
        ["search", "--input", src, "--target-ratio", "1e9"], capsys
    )
    assert rc == 0
    assert report["feasible"] is False
    assert report["evaluated"] == 1
    assert report["best"] is not None


def test_diff_report_agrees_with_the_library_error_map(tmp_path, capsys):
    a = gaussian_matrix(4, 10, seed=2)
    b = a + 1e-3 * gaussian_matrix(4, 10, seed=4)
    pa = write_emb(tmp_path / "a.emb1", a)
    pb = write_emb(tmp_path / "b.emb1", b)

    rc, report, _ = run_cli(["diff", "--input", pa, "--against", pb], capsys)
    assert rc == 0
    errors = error_map(a, b)
    assert report["mae"] == float(f"{errors.mae:.9g}")
    assert report["max_ae"] == float(f"{errors.max_ae:.9g}")
    assert report["worst_row"] == int(np.argmax(errors.per_token_mae))


def test_ppl_command_matches_hand_computed_values(tmp_path, capsys):
    logp = tmp_path / "base.logp"
    logp.write_text("\n".join([str(LN_HALF)] * 4) + "\n")

    rc, report, _ = run_cli(["ppl", "--input", str(logp)], capsys)
    assert rc == 0
    assert report["aggregate"]["n_tokens"] == 4
    assert report["aggregate"]["ppl"] == 16.0
    assert report["aggregate"]["ln_ppl"] == float(f"{4 * math.log(2):.9g}")

    rc, report, _ = run_cli(["ppl", "--input", str(logp), "--normalized"], capsys)
    assert report["aggregate"]["ppl"] == 2.0


def test_ppl_delta_of_identical_files_is_zero(tmp_path, capsys):
    logp = tmp_path / "a.logp"
    logp.write_text(f"{LN_HALF}\n{2 * LN_HALF}\n")
    rc, report, _ = run_cli(
        ["ppl-delta", "--input", str(logp), "--against", str(logp)], capsys
    )
    assert rc == 0
    assert report["aggregate"]["delta_ln_ppl"] == 0.0


def test_add_token_grows_the_store(tmp_path, capsys):
    matrix = gaussian_matrix(4, 12, seed=9)
    src = write_emb(tmp_path / "m.emb1", matrix)
    store = tmp_path / "m.ttev"
    rc, _, _ = run_cli(
        ["compress", "--input", src, "--output", str(store), "--dims", "3,4"],
        capsys,
    )
    assert rc == 0

    vec = ",".join(str(v) for v in np.arange(12, dtype=float))
    rc, report, _ = run_cli(
        ["add-token", "--input", str(store), "--output", str(store), "--vector", vec],
        capsys,
    )
    assert rc == 0
    assert report["token_id"] == 4
    assert report["vocab_size"] == 5

    row = tmp_path / "row.csv"
    matio.write_csv_matrix(gaussian_matrix(1, 12, seed=13), row)
    rc, report, _ = run_cli(
        ["add-token", "--input", str(store), "--output", str(store),
         "--vector-file", str(row)],
        capsys,
    )
    assert rc == 0
    assert report["vocab_size"] == 6

    rc, _, err = run_cli(
        ["add-token", "--input", str(store), "--output", str(store),
         "--vector", vec, "--vector-file", str(row)],
        capsys,
    )
    assert rc == 1
    assert err["error"]["type"] == "CliUsageError"


def test_bench_report_has_coherent_latency_fields(tmp_path, capsys):
    rep = tmp_path / "bench.json"
    rc = cli.main(
        ["bench", "--dims", "2,2,2", "--tokens", "8", "--kind", "gaussian",
         "--seed", "1", "--report", str(rep)]
    )
    capsys.readouterr()
    assert rc == 0
    report = json.loads(rep.read_text())
    assert report["tokens_per_run"] == 8
    assert report["d"] == 8
    for phase in ("compress", "reconstruct"):
        stats = report[phase]
        assert 0 < stats["p50_ms_per_token"] <= stats["p95_ms_per_token"]
        assert stats["mean_ms_per_token"] > 0
    assert report["text_reconstruct_ms"] > 0


def test_errors_surface_as_json_on_stderr(tmp_path, capsys):
    rc, out, err = run_cli(["compress", "--output", str(tmp_path / "x.ttev")], capsys)
    assert rc == 1
    assert out is None
    assert err["error"]["type"] == "CliUsageError"
    assert "--input" in err["error"]["message"]

    rc, _, err = run_cli(
        ["diff", "--input", str(tmp_path / "missing.emb1"),
         "--against", str(tmp_path / "missing.emb1")],
        capsys,
    )
    assert rc == 1
    assert "error" in err


def test_thread_default_comes_from_the_environment(monkeypatch):
    monkeypatch.setenv("TTEMBED_THREADS", "4")
    args = cli.build_parser().parse_args(["bench", "--dims", "2,2"])
    assert args.threads == 4
    monkeypatch.setenv("TTEMBED_THREADS", "zebra")
    args = cli.build_parser().parse_args(["bench", "--dims", "2,2"])
    assert args.threads == 1


@pytest.mark.skipif(shutil.which("ttembed") is None, reason="console script not on PATH")
def test_console_script_runs(tmp_path):
    logp = tmp_path / "a.logp"
    logp.write_text(f"{LN_HALF}\n")
    proc = subprocess.run(
        ["ttembed", "ppl", "--input", str(logp)],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["aggregate"]["ppl"] == 2.0
