"""Command line interface.

Subcommands: gen-data, train, eval, equiv-test, gradcheck.

Exit codes:
  0  success
  1  usage or configuration error
  2  incompatible file (schema version, malformed scene, checkpoint mismatch)
  3  empty or missing input data
  4  refused contract (e.g. rotating invariance check in world-frame mode)
  5  a verification command ran but the check failed its tolerance
"""

from __future__ import annotations

import argparse
import json
import sys

from .dataset import load_split, write_dataset
from .equivcheck import (
    TRANSFORM_FAMILIES,
    check_prediction_invariance,
    layer_equivariance_suite,
)
from .errors import (
    CheckpointError,
    ConfigurationError,
    ContractRefusal,
    DataError,
    DomainError,
    EmptySetError,
    SceneFormatError,
    SceneValidationError,
    SchemaVersionError,
)
from .generator import generate_scene
from .gnn import PRESETS
from .graphbuild import MODES
from .model import Model, ModelConfig
from .nn import Adam
from .trainer import (
    TrainConfig,
    evaluate,
    gradcheck,
    load_checkpoint,
    prepare_scenes,
    save_checkpoint,
    train,
    write_history,
)

USAGE_EXIT = 1
COMPAT_EXIT = 2
EMPTY_EXIT = 3
REFUSAL_EXIT = 4
VERIFY_EXIT = 5


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="esgnn", description="Equivariant scene-graph pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a synthetic scene corpus")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True, help="dataset directory or manifest")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--preset", default="esgnn1", choices=sorted(PRESETS))
    p.add_argument("--mode", default="strict", choices=MODES)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-every", type=int, default=50)
    p.add_argument("--lambda-pred", type=float, default=1.0)
    p.add_argument("--weighted-edges", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--weighted-nodes", action=argparse.BooleanOptionalAction, default=False)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--json", help="also write the report to this file")

    p = sub.add_parser("equiv-test", help="verify invariance under rigid motion")
    p.add_argument("--checkpoint", help="model to test; default is a fresh model")
    p.add_argument("--preset", default="esgnn1", choices=sorted(PRESETS))
    p.add_argument("--mode", default="strict", choices=MODES)
    p.add_argument("--family", default="yaw", choices=TRANSFORM_FAMILIES)
    p.add_argument("--data", help="dataset to draw scenes from (test split)")
    p.add_argument("--scenes", type=int, default=10, help="scene count")
    p.add_argument("--transforms", type=int, default=2, help="transforms per scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--layer-suite", action="store_true",
                   help="run the 100-case layer equivariance suite instead")
    p.add_argument("--layer-tol", type=float, default=1e-9)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--preset", default="esgnn1", choices=sorted(PRESETS))
    p.add_argument("--mode", default="strict", choices=MODES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    return parser


def cmd_gen_data(args) -> int:
    manifest = write_dataset(args.out, args.count, args.seed)
    splits = {k: len(v) for k, v in manifest["splits"].items()}
    print(f"wrote {manifest['count']} scenes to {args.out} (splits {splits})")
    return 0


def cmd_train(args) -> int:
    import os

    train_scenes = load_split(args.data, "train")
    val_scenes = load_split(args.data, "val")
    if not train_scenes:
        raise EmptySetError("training split is empty")
    config = ModelConfig(preset=args.preset, mode=args.mode, lambda_pred=args.lambda_pred)
    model = Model(config, seed=args.seed)
    tc = TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        eval_every=args.eval_every,
        weighted_nodes=args.weighted_nodes,
        weighted_edges=args.weighted_edges,
    )
    result = train(model, train_scenes, val_scenes, tc)
    os.makedirs(args.out, exist_ok=True)
    history_path = os.path.join(args.out, "history.csv")
    ckpt_path = os.path.join(args.out, "checkpoint.json")
    write_history(result.history, history_path)
    save_checkpoint(ckpt_path, model, result.adam, result.final_step, tc.seed)
    last_val = [r for r in result.history if r["split"] == "val"]
    if last_val:
        row = last_val[-1]
        print(
            f"step {row['step']}: val loss {row['loss']:.4f}, "
            f"node recall {row['node_recall']}, edge recall {row['edge_recall']}"
        )
    print(f"wrote {history_path} and {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    model, _, step, _ = load_checkpoint(args.checkpoint)
    scenes = load_split(args.data, args.split)
    if not scenes:
        raise EmptySetError(f"split {args.split!r} is empty")
    prepared, skipped = prepare_scenes(model, scenes)
    if not prepared:
        raise EmptySetError("no scene in the split could be prepared")
    loss, report = evaluate(model, prepared)
    doc = {"checkpoint_step": step, "split": args.split, "loss": loss,
           "skipped_scenes": skipped}
    doc.update(report.to_dict())
    text = json.dumps(doc, indent=1)
    print(text)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def cmd_equiv_test(args) -> int:
    import numpy as np

    if args.layer_suite:
        report = layer_equivariance_suite(n_cases=100, seed=args.seed)
        print(
            f"layer suite: {report.n_cases} cases, max feature error "
            f"{report.max_h_err:.3e}, max coordinate error {report.max_x_err:.3e}"
        )
        if report.max_err() >= args.layer_tol:
            print(f"FAIL: exceeds tolerance {args.layer_tol}", file=sys.stderr)
            return VERIFY_EXIT
        print("PASS")
        return 0

    if args.checkpoint:
        model, _, _, _ = load_checkpoint(args.checkpoint)
    else:
        model = Model(ModelConfig(preset=args.preset, mode=args.mode), seed=args.seed)
    if args.data:
        scenes = load_split(args.data, "test")[: args.scenes]
    else:
        scenes = [
            generate_scene(np.random.default_rng([args.seed, 500 + i]), f"equiv-{i}")
            for i in range(args.scenes)
        ]
    if not scenes:
        raise EmptySetError("no scenes to test invariance on")
    report = check_prediction_invariance(
        model, scenes, family=args.family,
        transforms_per_scene=args.transforms, seed=args.seed,
    )
    print(
        f"{report.n_scenes} scenes x {report.n_transforms} {args.family} transforms: "
        f"max prob diff {report.max_prob_diff():.3e}, "
        f"argmax match {report.argmax_match():.4f}"
    )
    if report.max_prob_diff() >= args.tol or report.argmax_match() < 1.0:
        print(f"FAIL: exceeds tolerance {args.tol}", file=sys.stderr)
        return VERIFY_EXIT
    print("PASS")
    return 0


def cmd_gradcheck(args) -> int:
    if args.eps < 1e-8:
        print(
            f"warning: eps {args.eps:g} is round-off dominated in float64; "
            "central differences lose accuracy below ~1e-7",
            file=sys.stderr,
        )
    report = gradcheck(args.preset, args.mode, seed=args.seed, eps=args.eps)
    print(
        f"gradcheck {report.preset}/{report.mode}: {report.n_params} parameters, "
        f"max rel err {report.max_rel_err:.3e} (worst {report.worst_param})"
    )
    if report.max_rel_err >= args.tol:
        print(f"FAIL: exceeds tolerance {args.tol}", file=sys.stderr)
        return VERIFY_EXIT
    print("PASS")
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "equiv-test": cmd_equiv_test,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ContractRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return REFUSAL_EXIT
    except (SchemaVersionError, CheckpointError, SceneFormatError, SceneValidationError) as exc:
        print(f"incompatible input: {exc}", file=sys.stderr)
        return COMPAT_EXIT
    except (EmptySetError, DataError) as exc:
        print(f"no usable input: {exc}", file=sys.stderr)
        return EMPTY_EXIT
    except (ConfigurationError, DomainError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return USAGE_EXIT


def console_entry() -> None:
    sys.exit(main())
