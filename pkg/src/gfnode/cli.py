"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error (including a failed
validation check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import analysis, validation
from .config import RunConfig
from .errors import ConfigError, GFNodeError
from .graph import build_graph, graph_spectrum
from .io import (Checkpoint, load_checkpoint, load_trajectory, save_checkpoint,
                 save_trajectory, write_csv)
from .model import GFNodeModel, ModelConfig, predict
from .training import TrainConfig, fit, make_optimizer, sample_instances

log = logging.getLogger("gfnode")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(message)


# Flags that override RunConfig fields: (flag, field, type).
_TRAIN_FLAGS = (
    ("--epochs", "epochs", int), ("--lr", "learning_rate", float),
    ("--batch-size", "batch_size", int), ("--seq-len", "seq_len", int),
    ("--delta-t", "delta_T", float), ("--num-modes", "num_modes", int),
    ("--hidden", "hidden", int), ("--cutoff", "cutoff", float),
    ("--num-instances", "num_instances", int), ("--sampling", "sampling", str),
    ("--time-scale", "time_scale", float), ("--seed", "seed", int),
)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gfnode", description="Graph Fourier neural ODE toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    tr = sub.add_parser("train", help="train a model and write a checkpoint")
    tr.add_argument("--config", help="JSON RunConfig")
    tr.add_argument("--data", help="extended-XYZ trajectory")
    tr.add_argument("--out", help="checkpoint path")
    for flag, dest, typ in _TRAIN_FLAGS:
        tr.add_argument(flag, dest=dest, type=typ)

    pr = sub.add_parser("predict", help="predict frames from an initial frame")
    pr.add_argument("--ckpt", required=True)
    pr.add_argument("--frame", required=True, help="XYZ file; its first frame is used")
    pr.add_argument("--times", required=True, help="comma-separated absolute times")
    pr.add_argument("--out", required=True)
    pr.add_argument("--method", choices=("dopri5", "rk4"))
    pr.add_argument("--rtol", type=float)
    pr.add_argument("--atol", type=float)

    an = sub.add_parser("analyze", help="trajectory analytics")
    asub = an.add_subparsers(dest="analysis", required=True, parser_class=_Parser)
    sp = asub.add_parser("spectrum", help="joint spatial-temporal spectrum")
    sp.add_argument("--data", required=True)
    sp.add_argument("--cutoff", type=float, default=1.6)
    sp.add_argument("--magnitude", choices=("squared_norm", "norm"), default="squared_norm")
    sp.add_argument("--window", choices=("none", "hann"), default="none")
    sp.add_argument("--out", required=True)
    rd = asub.add_parser("rdf", help="radial distribution function")
    rd.add_argument("--data", required=True)
    rd.add_argument("--pair", default="heavy", help="'heavy' or two atomic numbers, e.g. 6,8")
    rd.add_argument("--r-max", type=float, default=6.0)
    rd.add_argument("--bins", type=int, default=120)
    rd.add_argument("--out", required=True)
    st = asub.add_parser("structure", help="bond and angle errors against a reference")
    st.add_argument("--pred", required=True)
    st.add_argument("--truth", required=True)
    st.add_argument("--cutoff", type=float, default=1.6)
    st.add_argument("--out", required=True)

    va = sub.add_parser("validate", help="built-in numerical checks")
    vsub = va.add_subparsers(dest="check", required=True, parser_class=_Parser)
    for name, helptext in (("heat", "solver against the closed-form heat flow"),
                           ("grad", "autodiff against finite differences"),
                           ("equivariance", "rotation/translation equivariance of predict")):
        c = vsub.add_parser(name, help=helptext)
        c.add_argument("--seed", type=int, default=0)
        c.add_argument("--trials", type=int, default=None)
    return p


def _model_from_checkpoint(cp: Checkpoint) -> tuple[GFNodeModel, RunConfig]:
    run = RunConfig.from_dict(cp.config)
    model = GFNodeModel(run.model_config(), cp.num_atoms)
    state = {k: torch.as_tensor(v) for k, v in cp.params.items()}
    model.load_state_dict(state)
    return model, run


def _params(model: GFNodeModel) -> dict:
    return {k: v.detach().numpy().copy() for k, v in model.state_dict().items()}


def cmd_train(args) -> int:
    overrides = {dest: getattr(args, dest) for _, dest, _ in _TRAIN_FLAGS}
    overrides.update(data=args.data, out=args.out)
    run = RunConfig.resolve(args.config, overrides)
    if not run.data or not run.out:
        raise UsageError("train needs --data and --out (or data/out in the config)")
    out = Path(run.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    run.save(out.with_suffix(".config.json"))

    torch.manual_seed(run.seed)
    traj = load_trajectory(run.data)
    tc = run.train_config()
    rng = np.random.default_rng(run.seed)
    instances = sample_instances(traj, tc, rng=rng)
    n_val = int(round(run.val_fraction * len(instances)))
    train, val = instances[n_val:], instances[:n_val] or None
    model = GFNodeModel(run.model_config(), traj.num_atoms)
    optimizer = make_optimizer(model.parameters(), tc)

    def checkpoint(epoch, loss):
        save_checkpoint(out, Checkpoint(run.to_dict(), _params(model), traj.num_atoms, epoch,
                                        loss, optimizer.state_dict()))

    history = fit(model, train, tc, val, optimizer, on_improve=checkpoint)
    write_csv(out.with_suffix(".history.csv"), ["epoch", "train_loss", "val_loss"],
              [(i, a, b) for i, (a, b) in enumerate(zip(history.train_loss, history.val_loss))])
    if history.best_epoch < 0:
        checkpoint(-1, float("inf"))
    print(f"best epoch {history.best_epoch} loss {history.best_val_loss:.6g} -> {out}")
    return 0


def cmd_predict(args) -> int:
    cp = load_checkpoint(args.ckpt)
    model, run = _model_from_checkpoint(cp)
    try:
        times = [float(t) for t in args.times.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad --times {args.times!r}") from None
    if not times:
        raise UsageError("--times is empty")
    overrides = {k: getattr(args, k) for k in ("method", "rtol", "atol")}
    run = RunConfig.from_dict({**run.to_dict(), **{k: v for k, v in overrides.items()
                                                   if v is not None}})
    frame0 = load_trajectory(args.frame)[0]
    frames = predict(model, frame0, times, run.solver_config())
    save_trajectory(args.out, frames)
    print(f"wrote {len(frames)} frames to {args.out}")
    return 0


def cmd_analyze(args) -> int:
    if args.analysis == "spectrum":
        traj = load_trajectory(args.data)
        spec = graph_spectrum(build_graph(traj[0], args.cutoff))
        window = None if args.window == "none" else args.window
        js = analysis.joint_spectrum(traj, spec, args.magnitude, window)
        write_csv(args.out, ["mode", "eigenvalue", "centroid", "pearson_r", "slope"],
                  [(int(k), lam, c, js.pearson_r, js.slope)
                   for k, lam, c in zip(js.modes, js.eigenvalues, js.centroids)])
        print(f"r = {js.pearson_r:.4f}, alpha = {js.slope:.4f}")
    elif args.analysis == "rdf":
        traj = load_trajectory(args.data)
        pair = None
        if args.pair != "heavy":
            try:
                a, b = (int(x) for x in args.pair.split(","))
            except ValueError:
                raise UsageError(f"bad --pair {args.pair!r}") from None
            pair = (a, b)
        res = analysis.rdf(traj, pair, args.r_max, args.bins)
        write_csv(args.out, ["r", "g", "count"], zip(res.r, res.g, res.counts.tolist()))
    else:
        pred, truth = load_trajectory(args.pred), load_trajectory(args.truth)
        bonds = build_graph(truth[0], args.cutoff).edges
        m = analysis.structure_metrics(pred, truth, bonds)
        write_csv(args.out, ["metric", "value"], [
            ("bond_mae", m.bond_mae), ("bond_rel_percent", m.bond_rel_percent),
            ("angle_mae_deg", m.angle_mae_deg), ("angle_rel_percent", m.angle_rel_percent),
            ("skipped_angles", m.skipped_angles)])
    print(f"wrote {args.out}")
    return 0


def cmd_validate(args) -> int:
    check = {"heat": validation.heat_check, "grad": validation.grad_check_model,
             "equivariance": validation.equivariance_check}[args.check]
    kwargs = {"seed": args.seed}
    if args.trials is not None:
        kwargs["trials"] = args.trials
    result = check(**kwargs)
    print(json.dumps(result.to_dict()))
    return 0 if result.passed else 2


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"gfnode: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handlers = {"train": cmd_train, "predict": cmd_predict, "analyze": cmd_analyze,
                "validate": cmd_validate}
    try:
        return handlers[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"gfnode: error: {exc}", file=sys.stderr)
        return 1
    except (GFNodeError, OSError, ValueError, RuntimeError) as exc:
        print(f"gfnode: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
