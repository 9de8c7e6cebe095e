"""``pmm`` command-line interface.

Exit codes: 0 success, 2 validation failure, 3 decoder refusal, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import validate_model
from .decoders import (
    DEFAULT_C_MAX,
    HybridConfig,
    c_sweep,
    check_admissibility,
    find_c0,
    hybrid_decode,
    pmap_decode,
    rabiner_decode,
    viterbi_decode,
)
from .errors import DecoderRefusal, PmmError, ValidationError, ZeroProbabilityError
from .experiments import ExperimentConfig, all_cells_failed, bundled_config, run_table_experiment, sample_path
from .inference import InferenceContext
from .io import (
    canonical_json,
    csv_text,
    load_model,
    load_sequence,
    marginals_csv,
    model_from_spec,
    model_hash,
    model_to_dict,
    path_csv,
    read_json,
    write_json,
)

EXIT_OK, EXIT_VALIDATION, EXIT_REFUSAL, EXIT_IO = 0, 2, 3, 4


class Manifest:
    """Run record; its hash covers everything except the wall-clock timestamps."""

    def __init__(self, command: str, arguments: dict, seed=None, model_hash_=None):
        self.body = {
            "command": command,
            "arguments": arguments,
            "seed": seed,
            "model_hash": model_hash_,
            "versions": {"pmm": __version__, "numpy": np.__version__},
        }
        self.started = datetime.now(timezone.utc).isoformat()

    @property
    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.body).encode()).hexdigest()

    def write(self, path: Path) -> None:
        write_json(path, self.body | {"manifest_hash": self.hash, "timestamps": {
            "started": self.started, "finished": datetime.now(timezone.utc).isoformat()}})


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- build ------------------------------------------------------------------------------


def cmd_build(args) -> int:
    spec = read_json(args.spec)
    model = model_from_spec(spec)
    report = validate_model(model)
    data = model_to_dict(model)
    manifest = Manifest("build", {"spec": str(args.spec)}, model_hash_=model_hash(model))
    data["manifest_hash"] = manifest.hash
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    _emit(text, args.output)
    status = "valid" if not report else f"{len(report)} violation(s)"
    print(f"model: {model.n_states} states, |X|={model.x_alphabet.size}, |Y|={model.y_alphabet.size}; {status}",
          file=sys.stderr)
    for v in report:
        print(f"  {v.kind} at {v.location}: {v.message}", file=sys.stderr)
    return EXIT_OK if not report else EXIT_VALIDATION


# -- decode -----------------------------------------------------------------------------


def _decode_all(args, model, x, ctx):
    results = []
    if args.viterbi:
        results.append(viterbi_decode(model, x, ctx=ctx))
    if args.pmap:
        results.append(pmap_decode(model, x, ctx=ctx))
    for weights in args.hybrid or []:
        if len(weights) > 2:
            raise ValidationError("--hybrid takes C and an optional B")
        c = float(weights[0])
        b = float(weights[1]) if len(weights) > 1 else 1.0
        results.append(hybrid_decode(model, x, HybridConfig(c, b), ctx=ctx))
    for k in args.rabiner or []:
        results.append(rabiner_decode(model, x, k, ctx=ctx))
    return results


def cmd_decode(args) -> int:
    model = load_model(args.model)
    x = load_sequence(args.sequence, model.x_alphabet.labels, args.index_mode)
    true_y = (load_sequence(args.truth, model.y_alphabet.labels, args.index_mode)
              if args.truth else None)
    ctx = InferenceContext(model, x)
    labels = model.y_alphabet.labels
    manifest = Manifest("decode", {k: v for k, v in vars(args).items() if k != "func"},
                        model_hash_=model_hash(model))
    out = {"manifest_hash": manifest.hash, "n": ctx.n, "log_likelihood": ctx.log_likelihood, "paths": []}
    refusal = None
    try:
        for path in _decode_all(args, model, x, ctx):
            d = path.as_dict(labels)
            adm = check_admissibility(model, x, path.states)
            d["inadmissible_positions"] = list(adm.positions)
            out["paths"].append(d)
            if args.csv_dir:
                tag = path.method + "".join(f"_{k}{v:g}" for k, v in path.params.items())
                Path(args.csv_dir, f"{tag}.csv").write_text(path_csv(path.states, labels, true_y), encoding="utf-8")
        if args.c0:
            bp = find_c0(model, x, c_max=args.c_max, ctx=ctx)
            out["c0"] = {"c_o": bp.c_o, "k_o": bp.k_o, "tolerance": bp.tolerance}
    except DecoderRefusal as exc:
        refusal = str(exc)
        out["refusal"] = refusal
    if args.sweep:
        pts = c_sweep(model, x, [float(c) for c in args.sweep], ctx=ctx)
        text = csv_text(("C", "r1_bar", "rinf_bar", "path_changed"),
                        [(f"{p.c:g}", repr(p.r1_bar), repr(p.rinf_bar), int(p.changed)) for p in pts])
        if args.sweep_csv:
            Path(args.sweep_csv).write_text(text, encoding="utf-8")
        out["sweep"] = [{"C": p.c, "r1_bar": p.r1_bar, "rinf_bar": p.rinf_bar, "changed": p.changed} for p in pts]
    if args.marginals_csv:
        Path(args.marginals_csv).write_text(marginals_csv(ctx.marginals, labels), encoding="utf-8")
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", args.output)
    if args.c0 and "c0" in out:
        print(f"C0 = {out['c0']['c_o']:.6f} (k0 = {out['c0']['k_o']})", file=sys.stderr)
    if refusal:
        print(f"refused: {refusal}", file=sys.stderr)
        return EXIT_REFUSAL
    return EXIT_OK


# -- simulate ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    pair = sample_path(model, args.n, args.seed)
    xl, yl = model.x_alphabet.labels, model.y_alphabet.labels
    if args.index_mode:
        xs, ys = [str(int(v)) for v in pair.x], [str(int(v)) for v in pair.y]
    else:
        xs, ys = [xl[v] for v in pair.x], [yl[v] for v in pair.y]
    Path(args.x_out).write_text("\n".join(xs) + "\n", encoding="utf-8")
    if args.y_out:
        Path(args.y_out).write_text("\n".join(ys) + "\n", encoding="utf-8")
    return EXIT_OK


# -- experiment ---------------------------------------------------------------------------


def cmd_experiment(args) -> int:
    if Path(args.config).exists():
        cfg = ExperimentConfig.from_dict(read_json(args.config))
    elif args.config in ("table1", "table2", "table3"):
        cfg = bundled_config(args.config)
    else:
        raise FileNotFoundError(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.replicates is not None:
        cfg.replicates = args.replicates
    table = run_table_experiment(cfg, workers=args.workers)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("experiment", {"config": cfg.name, "n": cfg.n, "replicates": cfg.replicates},
                        seed=cfg.seed, model_hash_=[m["hash"] for m in table.metadata["models"]])
    table.metadata["manifest_hash"] = manifest.hash
    (out_dir / f"{cfg.name}.csv").write_text(f"# manifest {manifest.hash}\n" + table.to_csv(), encoding="utf-8")
    write_json(out_dir / f"{cfg.name}.json", table.to_json())
    manifest.write(out_dir / f"{cfg.name}.manifest.json")
    failed = [r for r in table.rows if r["failures"]]
    if failed:
        print(f"warning: {len(failed)} cell(s) with decoder failures", file=sys.stderr)
    return EXIT_REFUSAL if all_cells_failed(table) else EXIT_OK


# -- parser -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pmm", description="Pairwise Markov models: inference and decoding.")
    p.add_argument("--version", action="version", version=f"pmm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="expand a family spec into an explicit model file")
    b.add_argument("spec")
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_build)

    d = sub.add_parser("decode", help="decode a hidden path from an observation sequence")
    d.add_argument("model")
    d.add_argument("sequence")
    d.add_argument("--index-mode", action="store_true", help="sequence files hold integer indices")
    d.add_argument("--viterbi", action="store_true")
    d.add_argument("--pmap", action="store_true")
    d.add_argument("--hybrid", nargs="+", action="append", metavar="C [B]")
    d.add_argument("--rabiner", type=int, action="append", metavar="K")
    d.add_argument("--c0", action="store_true", help="locate the breakpoint C0")
    d.add_argument("--c-max", type=float, default=DEFAULT_C_MAX)
    d.add_argument("--sweep", nargs="+", metavar="C", help="hybrid paths over a grid of C")
    d.add_argument("--sweep-csv")
    d.add_argument("--truth", help="true hidden path, added to CSV output")
    d.add_argument("--csv-dir", help="write one path CSV per decoder here")
    d.add_argument("--marginals-csv")
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_decode)

    s = sub.add_parser("simulate", help="sample an (X, Y) path")
    s.add_argument("model")
    s.add_argument("-n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--x-out", required=True)
    s.add_argument("--y-out")
    s.add_argument("--index-mode", action="store_true")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("experiment", help="run a Monte-Carlo table experiment")
    e.add_argument("config", help="config JSON, or table1/table2/table3 for a bundled one")
    e.add_argument("--out-dir", default=".")
    e.add_argument("--seed", type=int)
    e.add_argument("--replicates", type=int)
    e.add_argument("--workers", type=int, help="process count (default: $PMM_WORKERS or 1)")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ZeroProbabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DecoderRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSAL
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
