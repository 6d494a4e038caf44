"""Command-line interface for the codec, the containers, and the benchmarks.

Exit codes: 0 on success, 1 for data or codec failures, 2 for command-line
misuse.  Summaries go to stdout, diagnostics to stderr, reports to files.
"""

from __future__ import annotations

import argparse
import fnmatch
import json
import sys
from dataclasses import asdict

import numpy as np

from .cascade import compare_pipelines
from .container_io import (
    ContainerError,
    build_model,
    read_pqz,
    read_rtz,
    write_pqz,
    write_rtz,
)
from .diagnostics import SOURCE_KINDS, SyntheticSource, distortion_bench, gaussianity_report
from .gauss_quant import quantizer_mse, solve_centroids
from .polar_codec import (
    ROLE_BITS,
    QuantizedTensor,
    allocate_bits,
    bits_per_weight,
    polar_dequantize,
    polar_quantize,
)
from .tensors import DenseTensor, HalfTensor


def _load_layout(path) -> list[tuple[str, str]]:
    """Layout config: JSON list of {"pattern": glob, "role": role} entries."""
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    if not isinstance(entries, list):
        raise ValueError(f"layout file {path} must hold a JSON list")
    layout = []
    for entry in entries:
        pattern, role = entry["pattern"], entry["role"]
        if role not in ROLE_BITS:
            raise ValueError(f"layout file {path}: unknown role '{role}'")
        layout.append((pattern, role))
    return layout


def _resolve_role(name: str, layout: list[tuple[str, str]]) -> str:
    for pattern, role in layout:
        if fnmatch.fnmatchcase(name, pattern):
            return role
    print(f"warning: tensor '{name}' matches no layout pattern; keeping full precision",
          file=sys.stderr)
    return "keep_fp"


def _tensor_bpw(t) -> float:
    if isinstance(t, QuantizedTensor):
        return bits_per_weight(t.bits, t.block_size)
    return 16.0


def _param_count(t) -> int:
    return t.original_len if isinstance(t, QuantizedTensor) else t.data.size


def _print_model_summary(tensors) -> None:
    total_bits = 0.0
    total_params = 0
    for t in tensors:
        bpw = _tensor_bpw(t)
        bits_label = f"{t.bits}" if isinstance(t, QuantizedTensor) else "fp16"
        print(f"{t.name}  shape={list(t.shape)}  bits={bits_label}  bpw={bpw:.3f}")
        total_bits += bpw * _param_count(t)
        total_params += _param_count(t)
    avg = total_bits / total_params
    print(f"average bpw: {avg:.3f}  ({16.0 / avg:.1f}x vs 16-bit)")


def cmd_quantize(args) -> int:
    tensors_in = read_rtz(args.in_path)
    layout = _load_layout(args.layout) if args.mixed_bit else None
    awq = read_rtz(args.awq_scales) if args.awq_scales else {}

    out_tensors = []
    for name, arr in tensors_in.items():
        if layout is not None:
            bits = allocate_bits(_resolve_role(name, layout))
        else:
            bits = args.bits
        if bits is None:
            out_tensors.append(HalfTensor.from_array(name, arr))
            continue
        dense = DenseTensor.from_array(name, arr.astype(np.float32))
        scales = awq.get(name)
        if scales is not None:
            scales = np.asarray(scales).reshape(-1)
        out_tensors.append(
            polar_quantize(dense, bits, block_size=args.block_size, channel_scales=scales)
        )
    model = build_model(args.block_size, out_tensors)
    write_pqz(args.out_path, model)
    _print_model_summary(out_tensors)
    return 0


def cmd_dequantize(args) -> int:
    model = read_pqz(args.in_path)
    out: dict[str, np.ndarray] = {}
    for t in model.tensors:
        if isinstance(t, QuantizedTensor):
            out[t.name] = polar_dequantize(t, model.tables[t.bits]).array
        else:
            out[t.name] = t.array
    write_rtz(args.out_path, out)
    print(f"wrote {len(out)} tensors to {args.out_path}")
    return 0


def cmd_inspect(args) -> int:
    model = read_pqz(args.in_path)
    print(f"block size: {model.block_size}")
    print(f"tables: {sorted(model.tables)}")
    for t in model.tensors:
        if isinstance(t, QuantizedTensor):
            norms = t.norms.astype(np.float64)
            print(
                f"{t.name}  shape={list(t.shape)}  bits={t.bits}  "
                f"bpw={_tensor_bpw(t):.3f}  blocks={t.num_blocks}  "
                f"norms[min/mean/max]={norms.min():.4g}/{norms.mean():.4g}/{norms.max():.4g}"
                + ("  channel_scales" if t.channel_scales is not None else "")
            )
        else:
            print(f"{t.name}  shape={list(t.shape)}  bits=fp16  bpw=16.000")
    _print_model_summary(model.tensors)
    return 0


def cmd_centroids(args) -> int:
    table = solve_centroids(args.bits)
    for i, c in enumerate(table.centroids):
        print(f"{i:3d}  {c:+.6f}")
    print(f"mse: {quantizer_mse(table):.6g}")
    return 0


def cmd_bench(args) -> int:
    bits_list = [int(b) for b in args.bits.split(",") if b]
    source = SyntheticSource(kind=args.source, seed=args.seed, count=args.count)
    report = distortion_bench(source, bits_list, block_size=args.block_size)
    with open(args.out_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    print(f"wrote report to {args.out_path}")
    return 0


def cmd_cascade(args) -> int:
    tensors = read_rtz(args.in_path)
    reports = []
    for name, arr in tensors.items():
        dense = DenseTensor.from_array(name, arr.astype(np.float32))
        reports.append(asdict(compare_pipelines(dense, args.seed, group_size=args.group_size)))
    with open(args.out_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"reports": reports}, indent=2) + "\n")
    print(f"wrote report to {args.out_path}")
    return 0


def cmd_gaussianity(args) -> int:
    tensors = read_rtz(args.in_path)
    reports = []
    for name, arr in tensors.items():
        dense = DenseTensor.from_array(name, arr.astype(np.float32))
        rep = gaussianity_report(dense, block_size=args.block_size)
        reports.append({"tensor": name, **asdict(rep)})
    with open(args.out_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"reports": reports}, indent=2) + "\n")
    print(f"wrote report to {args.out_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polarquant", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", help="encode a .rtz tensor file into a .pqz model")
    q.add_argument("--in", dest="in_path", required=True)
    q.add_argument("--out", dest="out_path", required=True)
    mode = q.add_mutually_exclusive_group(required=True)
    mode.add_argument("--bits", type=int, choices=range(2, 9))
    mode.add_argument("--mixed-bit", action="store_true")
    q.add_argument("--layout", help="JSON [{pattern, role}] used with --mixed-bit")
    q.add_argument("--block-size", type=int, default=128)
    q.add_argument("--awq-scales", help=".rtz of per-column scales, matched by tensor name")
    q.set_defaults(fn=cmd_quantize)

    d = sub.add_parser("dequantize", help="decode a .pqz model back to .rtz")
    d.add_argument("--in", dest="in_path", required=True)
    d.add_argument("--out", dest="out_path", required=True)
    d.set_defaults(fn=cmd_dequantize)

    i = sub.add_parser("inspect", help="print the contents of a .pqz model")
    i.add_argument("--in", dest="in_path", required=True)
    i.set_defaults(fn=cmd_inspect)

    c = sub.add_parser("centroids", help="print the solved codebook for a bit width")
    c.add_argument("--bits", type=int, required=True, choices=range(2, 9))
    c.set_defaults(fn=cmd_centroids)

    b = sub.add_parser("bench", help="distortion benchmark over a synthetic source")
    b.add_argument("--source", required=True, choices=SOURCE_KINDS)
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--bits", required=True, help="comma-separated list, e.g. 3,5")
    b.add_argument("--count", type=int, default=1 << 20)
    b.add_argument("--block-size", type=int, default=128)
    b.add_argument("--out", dest="out_path", required=True)
    b.set_defaults(fn=cmd_bench)

    k = sub.add_parser("cascade", help="compare direct INT4 against cascaded pipelines")
    k.add_argument("--in", dest="in_path", required=True)
    k.add_argument("--seed", type=int, required=True)
    k.add_argument("--group-size", type=int, default=128)
    k.add_argument("--out", dest="out_path", required=True)
    k.set_defaults(fn=cmd_cascade)

    g = sub.add_parser("gaussianity", help="rotation diagnostics for a .rtz tensor file")
    g.add_argument("--in", dest="in_path", required=True)
    g.add_argument("--block-size", type=int, default=128)
    g.add_argument("--out", dest="out_path", required=True)
    g.set_defaults(fn=cmd_gaussianity)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if getattr(args, "mixed_bit", False) and not args.layout:
        print("error: --mixed-bit requires --layout", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (ContainerError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
