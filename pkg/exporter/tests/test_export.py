"""Export pipeline tests, ending in the cross-component acceptance check.

The eviction toolkit is driven only through its external surface: the .kvqt
file format (via its public reader) and the ``kvevict`` command line.
"""

import shutil
import subprocess
import sys

import numpy as np
import pytest
import torch
from kvevict import read_trace_file

from kvqt_exporter import (
    CaptureSession,
    ExportRequest,
    FIDELITY_TOLERANCE,
    IncompatibleModel,
    InvalidRequest,
    export_trace,
)
from kvqt_exporter.cli import main as cli_main

def _export(checkpoint, prompt_text, tmp_path, name="t.kvqt", **kw):
    defaults = dict(decode_steps=8, max_prompt_tokens=512)
    defaults.update(kw)
    req = ExportRequest(
        model_id=checkpoint, prompt_text=prompt_text,
        out_path=str(tmp_path / name), **defaults,
    )
    return export_trace(req), req


class TestExport:
    def test_trace_reads_back_with_expected_geometry(self, checkpoint, prompt_text, tmp_path):
        report, req = _export(checkpoint, prompt_text, tmp_path)
        trace = read_trace_file(req.out_path)
        h = trace.header
        assert (h.num_layers, h.num_q_heads, h.num_kv_heads, h.head_dim) == (2, 4, 2, 16)
        assert h.prompt_len == report.prompt_len == 512
        assert h.decode_len == 8
        assert h.seed == 0
        assert int(h.rope_layout) == 1  # converted from a half-split runtime
        assert trace.prompt_positions.tolist() == list(range(512))
        assert trace.decode_positions.tolist() == list(range(512, 520))

    def test_decode_steps_zero_yields_valid_trace(self, checkpoint, prompt_text, tmp_path):
        report, req = _export(checkpoint, prompt_text, tmp_path, decode_steps=0)
        trace = read_trace_file(req.out_path)
        assert trace.header.decode_len == 0
        assert report.decode_len == 0

    def test_prompt_truncation(self, checkpoint, prompt_text, tmp_path):
        report, _ = _export(checkpoint, prompt_text, tmp_path, max_prompt_tokens=64)
        assert report.prompt_len == 64

    def test_layer_subset(self, checkpoint, prompt_text, tmp_path):
        report, req = _export(checkpoint, prompt_text, tmp_path, layers=(1,))
        assert report.num_layers == 1
        assert read_trace_file(req.out_path).header.num_layers == 1
        assert [layer for layer, _ in report.fidelity] == [1]

    def test_empty_prompt_rejected(self, checkpoint, tmp_path):
        req = ExportRequest(model_id=checkpoint, prompt_text="",
                            out_path=str(tmp_path / "t.kvqt"))
        with pytest.raises(InvalidRequest):
            export_trace(req)

    def test_bad_layer_subset_rejected(self, checkpoint, prompt_text, tmp_path):
        with pytest.raises(InvalidRequest):
            _export(checkpoint, prompt_text, tmp_path, layers=(5,))

    def test_unloadable_model(self, tmp_path):
        req = ExportRequest(model_id=str(tmp_path / "nope"), prompt_text="x",
                            out_path=str(tmp_path / "t.kvqt"))
        with pytest.raises(IncompatibleModel):
            export_trace(req)
        assert not (tmp_path / "t.kvqt").exists()

    def test_unhookable_model(self):
        class Bare(torch.nn.Module):
            def __init__(self):
                super().__init__()
                self.layers = torch.nn.ModuleList([torch.nn.Linear(4, 4)])

        with pytest.raises(IncompatibleModel):
            CaptureSession(Bare())

    def test_export_is_deterministic(self, checkpoint, prompt_text, tmp_path):
        _, first = _export(checkpoint, prompt_text, tmp_path, name="a.kvqt",
                           decode_steps=4, max_prompt_tokens=128)
        _, second = _export(checkpoint, prompt_text, tmp_path, name="b.kvqt",
                            decode_steps=4, max_prompt_tokens=128)
        a = open(first.out_path, "rb").read()
        b = open(second.out_path, "rb").read()
        assert a == b


class TestCli:
    def test_export_subcommand(self, checkpoint, prompt_file, tmp_path, capsys):
        out = tmp_path / "cli.kvqt"
        rc = cli_main([
            "export", "--model", checkpoint, "--prompt-file", prompt_file,
            "--decode-steps", "2", "--out", str(out),
            "--max-prompt-tokens", "96",
        ])
        assert rc == 0
        assert out.exists()
        assert (tmp_path / "cli.fidelity.csv").exists()
        assert "fidelity: max_abs_error" in capsys.readouterr().out

    def test_missing_prompt_file_exits_2(self, checkpoint, tmp_path, capsys):
        rc = cli_main([
            "export", "--model", checkpoint,
            "--prompt-file", str(tmp_path / "absent.txt"),
            "--out", str(tmp_path / "t.kvqt"),
        ])
        assert rc == 2
        assert "error:" in capsys.readouterr().err


def _kvevict_cmd():
    exe = shutil.which("kvevict")
    if exe:
        return [exe]
    return [sys.executable, "-c",
            "from kvevict.cli import main; raise SystemExit(main())"]


def test_criterion_11_exported_checkpoint_trace(checkpoint, prompt_file, tmp_path):
    """Full-size export passes validation, the fidelity oracle, and the
    recall pipeline, with the pseudo-query policy beating sink-plus-recency."""
    status = "FAIL"
    try:
        out = tmp_path / "full.kvqt"
        rc = cli_main([
            "export", "--model", checkpoint, "--prompt-file", prompt_file,
            "--decode-steps", "32", "--out", str(out),
        ])
        assert rc == 0

        trace = read_trace_file(str(out))  # validation: loads with no error
        prompt_len = trace.header.prompt_len
        assert prompt_len >= 1000
        assert trace.header.decode_len == 32

        sidecar = (tmp_path / "full.fidelity.csv").read_text().strip().splitlines()
        rows = [line.split(",") for line in sidecar[1:]]
        assert len(rows) == trace.header.num_layers
        for layer, err, tol, ok in rows:
            assert float(err) <= FIDELITY_TOLERANCE, f"layer {layer} error {err}"
            assert ok == "ok"

        recall_csv = tmp_path / "recall.csv"
        proc = subprocess.run(
            _kvevict_cmd() + ["recall", "--trace", str(out), "--budgets", "2%",
                              "--out", str(recall_csv)],
            capture_output=True, text=True, timeout=600,
        )
        assert proc.returncode == 0, proc.stderr

        summary = {}
        for line in recall_csv.read_bytes().decode().split("\r\n"):
            if ",all,all," in line:
                parts = line.split(",")
                summary[parts[0]] = float(parts[-1])
        assert set(summary) >= {"dapq", "snapkv", "h2o", "streamingllm"}
        assert summary["dapq"] >= summary["streamingllm"]
        stronger = "holds" if summary["dapq"] > summary["snapkv"] else "does not hold"
        print(f"\nrecall at 2% of {prompt_len}: {summary} "
              f"(dapq > snapkv {stronger}, reported only)")
        status = "PASS"
    finally:
        print(f"\nACCEPTANCE criterion 11 (checkpoint export end-to-end): {status}",
              flush=True)
