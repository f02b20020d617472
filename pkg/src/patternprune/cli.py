"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 malformed input file, 3 inconsistent inputs.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import analytics, codec, distill, memimage, shapes, sim, tensorio
from .errors import DomainError, PatternPruneError
from .model import SparsityConfig

log = logging.getLogger("patternprune")

EXIT_USAGE = 1
EXIT_FORMAT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _input_shape(text: str):
    try:
        h, w, c = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxWxC, got {text!r}") from None
    if min(h, w, c) < 1:
        raise argparse.ArgumentTypeError("input shape must be positive")
    return h, w, c


def _int_list(text: str):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _uniform(text: str):
    n, _, v = text.partition(":")
    try:
        return int(n), (int(v) if v else None)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or N:V, got {text!r}") from None


def cmd_gen(args):
    layers = shapes.generate(shapes.parse_shape(args.shape), seed=args.seed, std=args.std)
    if not all(layer.prunable for layer in layers):
        raise UsageError("PCT1 stores 3x3 layers only; this shape contains other kernel sizes")
    tensorio.write_pct1(args.out, layers)
    log.info("wrote %d layers to %s", len(layers), args.out)


def cmd_distill(args):
    layers = tensorio.read_pct1(args.model)
    if args.config:
        config = tensorio.read_config(args.config)
    else:
        n, v = args.uniform
        config = SparsityConfig.uniform(layers, n, v)
    report = distill.distill_model(layers, config, max_workers=args.workers)
    distill.write_report(args.out, report)


def cmd_prune(args):
    layers = tensorio.read_pct1(args.model)
    report = distill.read_report(args.report)
    projected = distill.project_model(layers, report)
    codec.write_pcp1(args.out, codec.encode(projected, report))


def cmd_pack(args):
    image = memimage.pack(codec.read_pcp1(args.pruned))
    memimage.write_image_dir(args.out_dir, image)


def cmd_simulate(args):
    if args.pruned:
        pruned = codec.read_pcp1(args.pruned)
    else:
        pruned = memimage.unpack(memimage.read_image_dir(args.from_images))
    report = sim.simulate_model(
        pruned,
        args.input_shape,
        act_density=args.act_density,
        seed=args.seed,
        pool_after=args.pool_after or (),
    )
    Path(args.out).write_text(report.to_csv())
    text = report.to_text()
    if args.text:
        Path(args.text).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_report(args):
    pruned = codec.read_pcp1(args.pruned)
    layers = tensorio.read_pct1(args.baseline)
    table = analytics.format_table(pruned, layers, label=args.label, baseline_bits_per_weight=args.baseline_bits)
    Path(args.out).write_text(table)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="patternprune", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic Gaussian model (PCT1)")
    g.add_argument("--shape", required=True, help="vgg16[@SIZE][/DIV] or HxWxC:64,64,M,128,...")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--std", type=float, default=1.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("distill", help="select per-layer patterns")
    d.add_argument("--model", required=True)
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="file of 'layer <i> n <n> v <v>' records")
    src.add_argument("--uniform", type=_uniform, help="N or N:V for every 3x3 layer")
    d.add_argument("--workers", type=int, default=None)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_distill)

    pr = sub.add_parser("prune", help="project onto the selected patterns and encode (PCP1)")
    pr.add_argument("--model", required=True)
    pr.add_argument("--report", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_prune)

    pk = sub.add_parser("pack", help="write SRAM images, PaC and hex dumps")
    pk.add_argument("--pruned", required=True)
    pk.add_argument("--out-dir", required=True)
    pk.set_defaults(func=cmd_pack)

    s = sub.add_parser("simulate", help="cycle-simulate the PE group")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--pruned")
    src.add_argument("--from-images", help="directory written by 'pack'")
    s.add_argument("--input-shape", type=_input_shape, required=True, help="HxWxC")
    s.add_argument("--act-density", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pool-after", type=_int_list, default=None, help="layers followed by a 2x2 max-pool")
    s.add_argument("--out", required=True, help="CSV report path")
    s.add_argument("--text", help="structured text report path (default: stdout)")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="compression and FLOPs table")
    r.add_argument("--pruned", required=True)
    r.add_argument("--baseline", required=True)
    r.add_argument("--baseline-bits", type=int, choices=(8, 32), default=8)
    r.add_argument("--label", default="Model")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "simulate" and not 0 < args.act_density <= 1:
        parser.error("--act-density must be in (0, 1]")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"patternprune: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PatternPruneError as exc:
        print(f"patternprune {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, DomainError) else exc.exit_code
    except OSError as exc:
        print(f"patternprune {args.command}: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    return 0


if __name__ == "__main__":
    sys.exit(main())
