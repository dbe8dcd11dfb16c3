"""Build, train and evaluate multiple-choice video QA models from the command line.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 invariant violation.
Logs go to standard error; reports go to files.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("fwqa")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INVARIANT = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FWQA_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"FWQA_SEED must be an integer, got {env!r}") from None


def _ratios(text: str) -> tuple[float, float, float]:
    from .dataset import check_ratios
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--ratios must be comma-separated numbers, got {text!r}") from None
    try:
        return check_ratios(parts)
    except ValueError as exc:
        raise UsageError(f"bad --ratios {text}: {exc}") from None


def _read_lines(path) -> list[str]:
    return [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        from .io import FormatError
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def _instances(path):
    from .data import QAInstance
    from .io import read_jsonl
    return [QAInstance.from_json(d) for d in read_jsonl(path)]


# -- commands ------------------------------------------------------------------------

def cmd_build_dataset(args) -> int:
    from .dataset import QARecord, build_dataset
    from .io import atomic_write_text, dumps_jsonl, read_jsonl

    records = [QARecord.from_json(d) for d in read_jsonl(args.inp)]
    lexicon = frozenset(_read_lines(args.noun_lexicon)) if args.noun_lexicon else None
    blocklist = _read_lines(args.blocklist) if args.blocklist else None
    res = build_dataset(records, seed=_seed(args), min_count=args.min_noun_count,
                        blocklist=blocklist, lexicon=lexicon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "instances.jsonl", dumps_jsonl(i.to_json() for i in res.instances))
    atomic_write_text(out / "discards.jsonl", dumps_jsonl(res.discards))
    for name, lst in (("entities.txt", res.entity_list), ("nouns.txt", res.noun_list)):
        if lst is not None:
            atomic_write_text(out / name, "".join(f"{w}\t{lst.counts[w]}\n" for w in lst.words))
    log.info("%d instances, %d discarded", len(res.instances), len(res.discards))
    return EXIT_OK


def cmd_split(args) -> int:
    from .dataset import split_dataset
    from .io import read_jsonl, write_jsonl

    rows = read_jsonl(args.inp)
    parts = split_dataset(rows, args.ratios, _seed(args))
    out = Path(args.out) if args.out else Path(args.inp).parent
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "val", "test"), parts):
        write_jsonl(out / f"{name}.jsonl", part)
    log.info("split %d instances into %d/%d/%d", len(rows), *map(len, parts))
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import SynthConfig, synth_generate, write_synth

    cfg = _load_json(args.config) if args.config else {}
    if args.seed is not None or "FWQA_SEED" in os.environ:
        cfg["seed"] = _seed(args)
    data = synth_generate(SynthConfig.from_dict(cfg))
    write_synth(data, args.out)
    return EXIT_OK


def _train_configs(path):
    """Config file schema::

        {"model_preset": "toy" | "small" | "full",      # default "toy"
         "model": {ModelConfig overrides},
         "train_preset": "standard" | "paper",           # default "standard"
         "train": {TrainConfig fields}}
    """
    from .models import ModelConfig
    from .training import TrainConfig

    raw = _load_json(path) if path else {}
    unknown = set(raw) - {"model_preset", "model", "train_preset", "train"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    mc = ModelConfig.preset(raw.get("model_preset", "toy"), **raw.get("model", {}))
    tpreset = raw.get("train_preset", "standard")
    if tpreset == "paper":
        tc = TrainConfig.paper(**raw.get("train", {}))
    elif tpreset == "standard":
        tc = TrainConfig(**raw.get("train", {}))
    else:
        raise ValueError(f"unknown train_preset {tpreset!r}")
    return mc, tc


def cmd_train(args) -> int:
    from .data import EmbeddingTable, prepare
    from .io import atomic_write_text, save_checkpoint
    from .training import history_csv, train

    mc, tc = _train_configs(args.config)
    if args.seed is not None or "FWQA_SEED" in os.environ:
        tc.seed = _seed(args)
    table = EmbeddingTable.load(args.embeddings, oov_seed=args.oov_seed)
    tr = prepare(_instances(args.train), args.features, table, mc.n_frames)
    va = prepare(_instances(args.val), args.features, table, mc.n_frames)
    res = train(args.model, tr, va, tc, mc)
    save_checkpoint(args.out, res.params)
    best = next(h for h in res.history if h.epoch == res.best_epoch)
    sidecar = {"kind": args.model, "model": res.model_config.to_dict(), "train": tc.to_dict(),
               "best_epoch": res.best_epoch, "val_accuracy": best.val_accuracy,
               "oov_seed": args.oov_seed}
    atomic_write_text(f"{args.out}.json", json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    atomic_write_text(args.history or f"{args.out}.history.csv", history_csv(res.history))
    log.info("best epoch %d, val accuracy %.4f", res.best_epoch, best.val_accuracy)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .data import EmbeddingTable, prepare
    from .io import atomic_write_text, load_checkpoint
    from .metrics import Taxonomy, evaluate
    from .models import ModelConfig, infer_config, infer_kind
    from .training import params_from_arrays, predict

    arrays = load_checkpoint(args.checkpoint)
    side_path = Path(f"{args.checkpoint}.json")
    if side_path.exists():
        side = _load_json(side_path)
        kind, mc = side["kind"], ModelConfig.from_dict(side["model"])
        oov_seed = side.get("oov_seed", 0)
    else:
        kind = infer_kind(arrays)
        mc = infer_config(arrays, args.n_frames)
        oov_seed = args.oov_seed
    if args.n_frames is not None:
        mc.n_frames = args.n_frames
    params = params_from_arrays(arrays)
    table = EmbeddingTable.load(args.embeddings, oov_seed=oov_seed)
    test = prepare(_instances(args.test), args.features, table, mc.n_frames)
    probs = predict(kind, params, test)
    tax = Taxonomy.load(args.taxonomy) if args.taxonomy else None
    report = evaluate(np.argmax(probs, axis=1), test.instances, tax)
    d = report.to_dict()
    d["kind"] = kind
    atomic_write_text(args.report, json.dumps(d, indent=2) + "\n")
    if args.probabilities:
        atomic_write_text(args.probabilities,
                          "".join(" ".join(repr(float(p)) for p in row) + "\n" for row in probs))
    print(report.table())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import check_model
    from .models import KINDS, ModelConfig

    kinds = KINDS if args.model == "all" else (args.model,)
    cfg = ModelConfig.preset(args.dims)
    if args.dims == "full":
        raise UsageError("gradcheck at full dims is impractically slow; use toy or small")
    results, ok = {}, True
    for kind in kinds:
        rep = check_model(kind, cfg, tol=args.tol, seed=_seed(args), max_coords=args.max_coords)
        results[kind] = rep.as_dict()
        ok &= rep.passed
        print(f"{kind:16s} max_rel_error={rep.max_rel_error:.3e} coords={rep.n_checked} "
              f"{'PASS' if rep.passed else 'FAIL'}")
    if args.report:
        from .io import atomic_write_text
        atomic_write_text(args.report, json.dumps(results, indent=2) + "\n")
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_wups(args) -> int:
    from .metrics import Taxonomy, wups

    preds, truths = _read_lines(args.pred), _read_lines(args.truth)
    tax = Taxonomy.load(args.taxonomy) if args.taxonomy else None
    for theta in args.theta:
        print(f"WUPS@{theta}: {wups(preds, truths, theta, tax):.4f}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .models import KINDS

    p = _Parser(prog="fwqa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seed_arg(sp):
        sp.add_argument("--seed", type=int, default=None, help="seed (falls back to $FWQA_SEED, then 0)")

    b = sub.add_parser("build-dataset", help="QA records -> 8-candidate instances")
    b.add_argument("--in", dest="inp", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--min-noun-count", type=int, default=5)
    b.add_argument("--noun-lexicon")
    b.add_argument("--blocklist")
    seed_arg(b)
    b.set_defaults(func=cmd_build_dataset)

    s = sub.add_parser("split", help="split instances by video into train/val/test")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--ratios", type=str, default="0.801,0.086,0.113")
    s.add_argument("--out", help="output directory (default: next to the input)")
    seed_arg(s)
    s.set_defaults(func=cmd_split)

    y = sub.add_parser("synth", help="generate a synthetic corpus")
    y.add_argument("--config", help="SynthConfig JSON (defaults when omitted)")
    y.add_argument("--out", required=True)
    seed_arg(y)
    y.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--model", required=True, choices=KINDS)
    t.add_argument("--config")
    t.add_argument("--train", required=True)
    t.add_argument("--val", required=True)
    t.add_argument("--features", required=True)
    t.add_argument("--embeddings", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--history", help="history CSV (default: <out>.history.csv)")
    t.add_argument("--oov-seed", type=int, default=0)
    seed_arg(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--features", required=True)
    e.add_argument("--embeddings", required=True)
    e.add_argument("--taxonomy")
    e.add_argument("--report", required=True)
    e.add_argument("--probabilities", help="also write per-instance probabilities")
    e.add_argument("--n-frames", type=int, default=None)
    e.add_argument("--oov-seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference check of a model's gradients")
    g.add_argument("--model", default="all", choices=KINDS + ("all",))
    g.add_argument("--dims", default="toy", choices=("toy", "small", "full"))
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--max-coords", type=int, default=None)
    g.add_argument("--report")
    seed_arg(g)
    g.set_defaults(func=cmd_gradcheck)

    w = sub.add_parser("wups", help="WUPS of predicted vs true answers (one per line)")
    w.add_argument("--pred", required=True)
    w.add_argument("--truth", required=True)
    w.add_argument("--taxonomy")
    w.add_argument("--theta", type=float, nargs="+", default=[0.0, 0.9])
    w.set_defaults(func=cmd_wups)
    return p


def run_command(argv) -> int:
    from .io import FormatError

    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "ratios", None) is not None:
            args.ratios = _ratios(args.ratios)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, RuntimeError) as exc:
        print(f"invariant violation: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


def main(argv=None) -> None:
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
