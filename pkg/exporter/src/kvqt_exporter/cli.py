"""Command line for the trace exporter.

    kvqt-export export --model ID --prompt-file PATH --decode-steps N --out PATH

Writes the .kvqt trace plus a .fidelity.csv sidecar recording the per-layer
capture-fidelity oracle. Errors print one ``error: <Type>: <message>`` line
to stderr and exit 2.
"""

import argparse
import sys

from .errors import ExporterError
from .export import ExportRequest, export_trace


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kvqt-export", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    e = sub.add_parser("export", help="capture a model's q/k tensors into a trace")
    e.add_argument("--model", required=True, help="checkpoint path or identifier")
    e.add_argument("--prompt-file", required=True, help="UTF-8 text file with the prompt")
    e.add_argument("--decode-steps", type=int, default=32)
    e.add_argument("--out", required=True, help="output .kvqt path")
    e.add_argument("--max-prompt-tokens", type=int, default=4096)
    e.add_argument("--layers", help="comma-separated layer subset, default all")
    return p


def cmd_export(args) -> int:
    try:
        with open(args.prompt_file, encoding="utf-8") as f:
            prompt = f.read()
    except OSError as e:
        raise ExporterError(f"could not read prompt file: {e}") from e
    layers = None
    if args.layers:
        layers = tuple(int(v) for v in args.layers.split(",") if v.strip())
    report = export_trace(ExportRequest(
        model_id=args.model,
        prompt_text=prompt,
        out_path=args.out,
        decode_steps=args.decode_steps,
        max_prompt_tokens=args.max_prompt_tokens,
        layers=layers,
    ))
    print(f"wrote {report.out_path} ({report.trace_bytes} bytes, "
          f"{report.num_layers} layers, prompt {report.prompt_len}, "
          f"decode {report.decode_len})")
    status = "ok" if report.fidelity_ok else "FAIL"
    print(f"fidelity: max_abs_error={report.max_fidelity_error:.3e} "
          f"(tolerance {report.tolerance:g}, {status}) -> {report.sidecar_path}")
    return 0 if report.fidelity_ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return cmd_export(args)
    except ExporterError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
