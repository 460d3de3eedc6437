"""Command-line entry point: ``python -m hgnn_ima <subcommand> ...``.

Every failure exits with status 2 and a single line ``ERROR <code>: <message>``
on stderr (gradcheck exits 1 when the check itself fails).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .data import ConfigError, DatasetError, load_dataset, save_dataset
from .export import export_attention, pair_analysis
from .fixtures import GRADCHECK_CONFIG, GRADCHECK_COORDS, GRADCHECK_ORDER, GRADCHECK_STEP, twelve_node_fixture
from .model import VARIANTS, HgnnIma, ParameterSet, RunConfig, variant_config
from .numerics import Tape, Tensor, backward, finite_diff_check, load_checkpoint, save_checkpoint
from .probe import complexity_probe, fit_exponent, format_table
from .synthetic import PLANTING_MODES, SIZES, generate_synthetic_mmhn
from .trainer import TrainingDiverged, evaluate, run_seeds, train

GRADCHECK_TOL = 1e-4

# short names for parameter roles accepted by ``gradcheck --blocks``
BLOCK_ALIASES = {
    "l_I": "input", "l_K": "key", "l_Q": "query", "l_M": "message", "l_A": "output",
    "W_node": "node_att", "W_modal": "modal_att", "W_msg": "msg",
}


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


# --------------------------------------------------------------------------- config

def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def effective_config(config_path: str | None, overrides: list[str] | None, seed: int | None = None) -> RunConfig:
    """File values, then ``key=value`` overrides, then ``--seed``."""
    doc: dict = {}
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise CliError("missing_file", f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise CliError("bad_config", f"{path}: {exc}") from None
    base = RunConfig.from_dict(doc)  # validates the file's keys
    merged = base.to_dict()
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise CliError("bad_override", f"override {item!r} is not key=value")
        if key not in merged:
            raise CliError("unknown_key", f"unknown config key {key!r}")
        merged[key] = _parse_value(raw)
    if seed is not None:
        merged["seed"] = seed
    try:
        return RunConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise CliError("bad_config", str(exc)) from None


def _load_data(path: str | None):
    if not path:
        raise CliError("missing_argument", "--data is required")
    if not Path(path).is_file():
        raise CliError("missing_file", f"dataset manifest not found: {path}")
    return load_dataset(path)


def _dump(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _seeds(args) -> list[int]:
    if args.seeds:
        return [int(s) for s in args.seeds.split(",") if s.strip()]
    return [args.seed if args.seed is not None else 0]


def _model_card(dataset, config: RunConfig) -> dict:
    return {"config": config.to_dict(), "dataset_hash": dataset.fingerprint(), "schema_hash": dataset.schema_hash()}


def _restore(checkpoint: str, dataset):
    """Rebuild model + parameters from a checkpoint, refusing a schema mismatch."""
    if not Path(checkpoint).is_file():
        raise CliError("missing_file", f"checkpoint not found: {checkpoint}")
    tensors, meta = load_checkpoint(checkpoint)
    if meta.get("schema_hash") != dataset.schema_hash():
        raise CliError("schema_mismatch", f"checkpoint schema {meta.get('schema_hash')} does not match dataset "
                                          f"schema {dataset.schema_hash()}")
    config = RunConfig.from_dict(meta["config"])
    model = HgnnIma.for_dataset(dataset, config.model)
    params = ParameterSet({k: Tensor(v.data, requires_grad=True, name=k) for k, v in tensors.items()})
    if set(params) != set(model.shapes):
        raise CliError("bad_checkpoint", "checkpoint parameters do not match the configured model")
    return model, params, config


# --------------------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    spec = dataclasses.replace(SIZES[args.size], planting=args.spec)
    if args.missing:
        spec = dataclasses.replace(spec, missing=tuple((t, tuple(m.split("+"))) for t, m in
                                                       (x.split(":", 1) for x in args.missing)))
    seed = args.seed if args.seed is not None else 0
    ds = generate_synthetic_mmhn(spec, seed)
    path = save_dataset(ds, _out(args))
    print(f"manifest\t{path}\ndataset_hash\t{ds.fingerprint()}")
    return 0


def _out(args) -> Path:
    if not args.out:
        raise CliError("missing_argument", "--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    config = effective_config(args.config, args.set, args.seed)
    if args.variant:
        if len(args.variant) > 1:
            raise CliError("bad_variant", "train accepts a single --variant; use ablate for several")
        config = RunConfig(_variant(config, args.variant[0]), config.train)
    dataset = _load_data(args.data)
    out = _out(args)
    params, report = train(dataset, config)
    card = _model_card(dataset, config)
    save_checkpoint(out / "checkpoint.json", params, card)
    _dump(out / "config.json", {**card})
    _dump(out / "report.json", {**card, "report": report.to_dict()})
    _dump(out / "timing.json", {"seconds_per_iteration": report.seconds_per_iteration})
    print("part\tmicro_f1\tmacro_f1")
    print(f"test\t{report.test_micro_f1:.6f}\t{report.test_macro_f1:.6f}")
    return 0


def cmd_eval(args) -> int:
    dataset = _load_data(args.data)
    if not args.checkpoint:
        raise CliError("missing_argument", "--checkpoint is required")
    model, params, _ = _restore(args.checkpoint, dataset)
    micro, macro = evaluate(model, params, dataset, args.part)
    text = f"part\tmicro_f1\tmacro_f1\n{args.part}\t{micro!r}\t{macro!r}\n"
    sys.stdout.write(text)
    if args.out:
        (_out(args) / "metrics.tsv").write_text(text)
    return 0


def _variant(config: RunConfig, name: str):
    if name not in VARIANTS:
        raise CliError("unknown_variant", f"unknown variant {name!r}")
    return variant_config(config.model, name)


def cmd_ablate(args) -> int:
    names = list(args.variants or []) + list(args.variant or [])
    if not names:
        raise CliError("missing_argument", "name at least one variant")
    for n in names:
        if n not in VARIANTS:
            raise CliError("unknown_variant", f"unknown variant {n!r}")
    config = effective_config(args.config, args.set)
    dataset = _load_data(args.data)
    seeds = _seeds(args)
    rows, docs = [], {}
    for name in names:
        cfg = RunConfig(_variant(config, name), config.train)
        summary = run_seeds(dataset, cfg, seeds, workers=args.workers, with_std=False)
        rows.append((name, summary.mean["test_micro_f1"], summary.mean["test_macro_f1"]))
        docs[name] = {"config": cfg.to_dict(), **summary.to_dict()}
    lines = ["variant\tmicro_f1\tmacro_f1"] + [f"{n}\t{mi:.6f}\t{ma:.6f}" for n, mi, ma in rows]
    print("\n".join(lines))
    if args.out:
        out = _out(args)
        (out / "ablation.tsv").write_text("\n".join(lines) + "\n")
        _dump(out / "ablation.json", {"dataset_hash": dataset.fingerprint(), "seeds": seeds, "variants": docs})
    return 0


def gradcheck_blocks(spec: list[str] | None) -> list[str] | None:
    if not spec:
        return None
    names = [b for item in spec for b in item.split(",") if b]
    return [BLOCK_ALIASES.get(b, b) for b in names]


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    ds = twelve_node_fixture(seed)
    model = HgnnIma.for_dataset(ds, GRADCHECK_CONFIG)
    inputs = model.prepare(ds.store)
    params = model.init_params()
    ids = ds.split.train_ids
    f = model.loss_fn(inputs, ids, ds.split.label_array(ids))
    blocks = gradcheck_blocks(args.blocks)
    analytic = None
    if args.inject_fault:
        with Tape() as tape:
            grads = backward(tape, f(params))
        analytic = {n: grads[t] * 1.01 + 1e-3 for n, t in params.items()}
    try:
        result = finite_diff_check(f, params, h=GRADCHECK_STEP, n_coords=GRADCHECK_COORDS, seed=seed,
                                   order=GRADCHECK_ORDER, blocks=blocks, analytic=analytic)
    except ValueError as exc:
        raise CliError("bad_blocks", str(exc)) from None
    print("block\tmax_rel_error")
    for name, err in result.per_block.items():
        print(f"{name}\t{err:.3e}")
    ok = result.passed(GRADCHECK_TOL)
    print(f"{'PASS' if ok else 'FAIL'}\tmax_rel_error={result.max_rel_error:.3e}\ttol={GRADCHECK_TOL:g}")
    return 0 if ok else 1


def cmd_export_attention(args) -> int:
    dataset = _load_data(args.data)
    if not args.checkpoint:
        raise CliError("missing_argument", "--checkpoint is required")
    model, params, _ = _restore(args.checkpoint, dataset)
    res = model.forward(params, model.prepare(dataset.store), "eval")
    K = res.state.layers
    if not -K <= args.layer < K:
        raise CliError("bad_layer", f"layer {args.layer} out of range for {K} layers")
    out = _out(args)
    path = export_attention(res.state, model.graph, args.layer, out / "attention.csv", dataset.split.labels)
    pa = pair_analysis(res.state, dataset.split.labels, args.layer)
    print(f"csv\t{path}\npositive_pct\t{pa.positive_pct!r}\nnegative_pct\t{pa.negative_pct!r}")
    return 0


def cmd_probe(args) -> int:
    names = [s for s in args.sizes.split(",") if s]
    unknown = [s for s in names if s not in SIZES]
    if unknown:
        raise CliError("unknown_size", f"unknown size {unknown[0]!r}; choose from {sorted(SIZES)}")
    config = effective_config(args.config, args.set)
    rows = complexity_probe([SIZES[s] for s in names], config.model, repeats=args.repeats)
    table = format_table(rows)
    print(table)
    if len({r.edges for r in rows}) > 1:
        print(f"edge_exponent\t{fit_exponent([r.edges for r in rows], [r.seconds for r in rows]):.3f}")
    if args.out:
        (_out(args) / "probe.tsv").write_text(table + "\n")
    return 0


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate, "synth": cmd_synth,
    "gradcheck": cmd_gradcheck, "export-attention": cmd_export_attention, "probe": cmd_probe,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hgnn-ima", description="HGNN-IMA node classification on multi-modal heterogeneous networks")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True, config=True):
        if data:
            sp.add_argument("--data", help="dataset manifest (JSON)")
        if config:
            sp.add_argument("--config", help="JSON config file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("train", help="train one model")
    common(sp)
    sp.add_argument("--variant", action="append")

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp, config=False)
    sp.add_argument("--checkpoint")
    sp.add_argument("--part", default="test", choices=("train", "val", "test"))

    sp = sub.add_parser("ablate", help="train several variants with the same seeds")
    common(sp)
    sp.add_argument("variants", nargs="*")
    sp.add_argument("--variant", action="append")
    sp.add_argument("--seeds", help="comma separated seed list")
    sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    common(sp, data=False, config=False)
    sp.add_argument("--spec", default="cross-modal", choices=PLANTING_MODES)
    sp.add_argument("--size", default="small", choices=sorted(SIZES))
    sp.add_argument("--missing", action="append", metavar="TYPE:MOD[+MOD]",
                    help="drop modalities for an auxiliary node type")

    sp = sub.add_parser("gradcheck", help="finite-difference check of the gradients")
    common(sp, data=False, config=False)
    sp.add_argument("--blocks", action="append", help="restrict to parameter roles, e.g. W_modal or fusion")
    sp.add_argument("--inject-fault", action="store_true", help="perturb the analytic gradient (self-test)")

    sp = sub.add_parser("export-attention", help="write attention records as CSV")
    common(sp, config=False)
    sp.add_argument("--checkpoint")
    sp.add_argument("--layer", type=int, default=-1)

    sp = sub.add_parser("probe", help="per-iteration time on synthetic sizes")
    common(sp, data=False)
    sp.add_argument("--sizes", default="small,medium")
    sp.add_argument("--repeats", type=int, default=3)
    return p


def _protect_variants(argv: list[str]) -> list[str]:
    """Let variant names that start with a dash (``-cross``) stand as
    positional arguments of ``ablate``."""
    if "ablate" not in argv:
        return argv
    return [f"--variant={a}" if a.startswith("-") and a in VARIANTS else a for a in argv]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_protect_variants(argv))
        return COMMANDS[args.command](args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except KeyError as exc:
        code, msg = "unknown_key", str(exc.args[0]) if exc.args else "unknown key"
    except (DatasetError, ConfigError) as exc:
        code, msg = "dataset", str(exc)
    except TrainingDiverged as exc:
        code, msg = "diverged", str(exc)
    except FileNotFoundError as exc:
        code, msg = "missing_file", str(exc)
    except (ValueError, IndexError) as exc:
        code, msg = "invalid", str(exc)
    print(f"ERROR {code}: {' '.join(msg.split())}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
