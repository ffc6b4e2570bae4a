"""``countflow`` command line: gen-data, train, sample, transport, eval, bridge-viz.

Exit codes: 0 success, 1 usage/config/input error, 2 runtime or numerical abort.
"""
import argparse
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import io
from .bridge import EpsilonConfig
from .config import ConfigError, load_config
from .metrics import active_set, bridge_heatmap, conditional_metrics, evaluate_samples
from .net import RateNetwork, load_checkpoint, save_checkpoint
from .sampler import SampleConfig, simulate
from .sim import (
    ConditionalTaskSpec,
    GammaPoissonMixtureSpec,
    make_conditional_task,
    sample_discrete_uniform_source,
    sample_gamma_poisson_mixture,
)
from .train import NonFiniteLossError, TrainConfig, train

log = logging.getLogger("countflow")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
_STREAMS = {"gen-data": 1, "train": 2, "sample": 3, "transport": 4, "eval": 5, "bridge-viz": 6}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _eps(cfg):
    return EpsilonConfig(cfg.eps.eps_t, cfg.eps.eps_l, cfg.eps.eps_r, cfg.eps.eps_c)


def _rng(cfg, command):
    return np.random.default_rng([int(cfg.seed), _STREAMS[command]])


def _out(cfg):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _path(arg, cfg, default_name):
    return Path(arg) if arg else Path(cfg.out_dir) / default_name


def _read(path):
    if not Path(path).exists():
        raise UsageError(f"input file {path} does not exist")
    return io.read_counts(path)


def _label_codes(labels, names):
    index = {name: k for k, name in enumerate(names)}
    return np.array([index[lab] for lab in labels], dtype=np.int64)


def _sorted_labels(labels):
    uniq = set(labels)
    try:
        return sorted(uniq, key=int)
    except ValueError:
        return sorted(uniq)


def _conditional_spec(cfg):
    d = cfg.data
    return ConditionalTaskSpec(
        means=tuple(tuple(float(v) for v in m) for m in d.class_means),
        dispersion=float(d.dispersion),
        shared_var=float(d.shared_var),
        shared_coords=tuple(int(c) for c in d.shared_coords),
    )


def cmd_gen_data(cfg, args):
    out = _out(cfg)
    rng = _rng(cfg, "gen-data")
    d = cfg.data
    if d.kind == "mixture":
        spec = GammaPoissonMixtureSpec.from_dict(d.mixture)
        if len(d.source_lo) != spec.dim or len(d.source_hi) != spec.dim:
            raise ConfigError("data.source_lo/source_hi must match the mixture dimension")
        source = sample_discrete_uniform_source(d.n_source, d.source_lo, d.source_hi, rng)
        target = sample_gamma_poisson_mixture(spec, d.n_target, rng)
        heldout = sample_gamma_poisson_mixture(spec, d.n_heldout, rng)
        io.write_counts(out / "source.csv", source)
        io.write_counts(out / "target.csv", target)
        io.write_counts(out / "heldout.csv", heldout)
    else:
        spec = _conditional_spec(cfg)
        task = make_conditional_task(d.n_per_class, rng, spec)
        test = make_conditional_task(d.n_heldout_per_class, rng, spec)
        if len(d.source_hi) == spec.dim:
            lo, hi = d.source_lo, d.source_hi
        else:
            lo = np.zeros(spec.dim, dtype=np.int64)
            hi = np.quantile(task.counts, 0.99, axis=0).astype(np.int64)
        source = sample_discrete_uniform_source(len(task.counts), lo, hi, rng)
        io.write_counts(out / "source.csv", source)
        io.write_counts(out / "target.csv", task.counts, task.labels.tolist())
        io.write_counts(out / "heldout.csv", test.counts, test.labels.tolist())
    return ["source.csv", "target.csv", "heldout.csv"]


def cmd_train(cfg, args):
    out = _out(cfg)
    source, _ = _read(_path(args.source, cfg, "source.csv"))
    target, labels = _read(_path(args.target, cfg, "target.csv"))
    if source.shape[1] != target.shape[1]:
        raise UsageError(
            f"source has {source.shape[1]} columns but target has {target.shape[1]}"
        )
    m = cfg.model
    if args.resume:
        net = load_checkpoint(args.resume)
        if net.dim != target.shape[1]:
            raise UsageError(f"checkpoint dimension {net.dim} != data dimension {target.shape[1]}")
    else:
        scale = m.input_scale
        if scale is None:
            scale = 1.0 / max(int(source.max(initial=0)), int(target.max(initial=0)), 1)
        names = _sorted_labels(labels) if labels is not None else []
        net = RateNetwork(
            target.shape[1],
            hidden_widths=m.hidden_widths,
            n_time_freqs=m.n_time_freqs,
            n_conditions=len(names),
            cond_width=m.cond_width,
            input_scale=scale,
            condition_labels=names,
            rate_time_eps=m.rate_time_eps,
            seed=cfg.seed,
        )
    cond = None
    if labels is not None:
        if not net.conditional:
            raise UsageError("target has labels but the checkpoint has no condition table")
        unknown = set(labels) - set(net.condition_labels)
        if unknown:
            raise UsageError(f"labels {sorted(unknown)} not in checkpoint label set")
        cond = _label_codes(labels, net.condition_labels)
    t = cfg.train
    tcfg = TrainConfig(
        batch_size=t.batch_size,
        n_steps=t.n_steps,
        lr=t.lr,
        lr_schedule=t.lr_schedule,
        coupling_kind=t.coupling,
        cfg_dropout=t.cfg_dropout,
        eps=_eps(cfg),
        seed=cfg.seed,
    )
    start = net.step_count
    result = train(net, source, target, tcfg, target_condition=cond)
    save_checkpoint(net, out / "checkpoint.bin")
    io.write_loss(out / "loss.csv", result.losses, result.pair_costs, start_step=start)
    if t.n_steps:
        log.info(
            "trained %d steps (%s coupling): final loss %.4f, mean pair cost %.4f",
            t.n_steps, t.coupling, result.losses[-1], result.pair_costs.mean(),
        )
    return ["checkpoint.bin", "loss.csv"]


def _sample(cfg, args, transport):
    out = _out(cfg)
    command = "transport" if transport else "sample"
    rng = _rng(cfg, command)
    ckpt = _path(args.checkpoint, cfg, "checkpoint.bin")
    if not ckpt.exists():
        raise UsageError(f"checkpoint {ckpt} does not exist")
    net = load_checkpoint(ckpt)
    s = cfg.sample
    if transport:
        if not args.source:
            raise UsageError("transport needs --source")
        x0, _ = _read(args.source)
    elif args.source:
        pool, _ = _read(args.source)
        if len(pool) == 0 and s.n_samples > 0:
            raise UsageError("source file has no rows")
        x0 = pool[rng.integers(0, len(pool), s.n_samples)] if s.n_samples else pool[:0]
    else:
        lo, hi = cfg.data.source_lo, cfg.data.source_hi
        if len(lo) != net.dim or len(hi) != net.dim:
            raise UsageError("data.source_lo/source_hi do not match the model dimension; pass --source")
        x0 = sample_discrete_uniform_source(s.n_samples, lo, hi, rng)
    if x0.shape[1] != net.dim:
        raise UsageError(f"source dimension {x0.shape[1]} != model dimension {net.dim}")

    condition = None
    if s.condition is not None:
        if not net.conditional:
            raise UsageError("a condition was requested but the model has no condition support")
        condition = net.condition_index(s.condition)
    elif s.guidance != 1.0 and not net.conditional:
        raise UsageError("guidance requested on a model trained without condition support")

    scfg = SampleConfig(
        n_steps=s.n_steps,
        eps=_eps(cfg),
        guidance_scale=s.guidance,
        record_trajectory=s.trajectories,
        record_stride=s.record_stride,
        condition=condition,
    )
    final, traj = simulate(net, x0, scfg, rng)
    labels = None if s.condition is None else [str(s.condition)] * len(final)
    io.write_counts(out / "samples.csv", final, labels)
    written = ["samples.csv"]
    if traj is not None:
        io.write_trajectories(out / "trajectories.csv", traj)
        written.append("trajectories.csv")
    return written


def cmd_sample(cfg, args):
    return _sample(cfg, args, transport=False)


def cmd_transport(cfg, args):
    return _sample(cfg, args, transport=True)


def cmd_eval(cfg, args):
    out = _out(cfg)
    gen, gen_labels = _read(_path(args.generated, cfg, "samples.csv"))
    ref, ref_labels = _read(_path(args.reference, cfg, "heldout.csv"))
    if gen.shape[1] != ref.shape[1]:
        raise UsageError("generated and reference files have different dimensions")
    e = cfg.eval
    report = evaluate_samples(gen, ref, e.n_sub, e.n_repeats, e.bandwidth, cfg.seed)
    doc = {"format_version": io.FORMAT_VERSION}
    doc.update(report.to_dict())
    if args.floor_reference:
        other, _ = _read(args.floor_reference)
        floor = evaluate_samples(other, ref, e.n_sub, e.n_repeats, e.bandwidth, cfg.seed)
        doc["noise_floor"] = floor.to_dict()
    if gen_labels is not None and ref_labels is not None:
        true = {lab: ref[np.array(ref_labels) == lab] for lab in _sorted_labels(ref_labels)}
        genb = {lab: gen[np.array(gen_labels) == lab] for lab in true}
        cond = conditional_metrics(true, genb, active_set(ref, e.active_threshold))
        doc["conditional"] = cond.to_dict()
    io.write_json(out / "metrics.json", doc)
    return ["metrics.json"]


def cmd_bridge_viz(cfg, args):
    out = _out(cfg)
    rng = _rng(cfg, "bridge-viz")
    source, _ = _read(_path(args.source, cfg, "source.csv"))
    target, _ = _read(_path(args.target, cfg, "target.csv"))
    b = cfg.bridge_viz
    d = source.shape[1]
    coords = list(range(d)) if b.coords is None else [int(c) for c in b.coords]
    for c in coords:
        if not 0 <= c < d:
            raise UsageError(f"coordinate index {c} out of range for dimension {d}")
    z_max = b.z_max
    if z_max is None:
        z_max = int(max(source.max(initial=0), target.max(initial=0)))
    summary = {"format_version": io.FORMAT_VERSION, "coupling": b.coupling, "coords": {}}
    written = []
    for c in coords:
        res = bridge_heatmap(
            source, target, b.coupling, c, z_max, b.progress, b.n_draws, rng,
            batch_size=b.ot_batch_size, eps_c=cfg.eps.eps_c,
        )
        name = f"heatmap_x{c + 1}_{b.coupling}.csv"
        io.write_heatmap(out / name, res)
        written.append(name)
        summary["coords"][f"x_{c + 1}"] = {
            "progress": res.progress.tolist(),
            "column_sums": res.column_sums.tolist(),
            "truncated_mass": res.truncated_mass.tolist(),
        }
    name = f"heatmap_summary_{b.coupling}.json"
    io.write_json(out / name, summary)
    return written + [name]


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "transport": cmd_transport,
    "eval": cmd_eval,
    "bridge-viz": cmd_bridge_viz,
}


def build_parser():
    parser = _Parser(prog="countflow", description=__doc__.splitlines()[0])
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out-dir", help="output directory (overrides out_dir)")
    common.add_argument("--seed", type=int, help="global seed (overrides seed)")
    common.add_argument("--threads", type=int, help="cap BLAS worker threads")
    common.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("gen-data", parents=[common], help="write synthetic source/target CSVs")

    p = sub.add_parser("train", parents=[common], help="fit a rate network")
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--resume", help="checkpoint to continue training from")
    p.add_argument("--steps", type=int, help="overrides train.n_steps")
    p.add_argument("--coupling", choices=["independent", "ot"], help="overrides train.coupling")

    for name, help_ in (("sample", "generate samples"), ("transport", "push source rows through the model")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--checkpoint")
        p.add_argument("--source")
        p.add_argument("--n", type=int, help="overrides sample.n_samples")
        p.add_argument("--guidance", type=float, help="overrides sample.guidance")
        p.add_argument("--condition", help="overrides sample.condition")
        p.add_argument("--trajectories", action="store_true", help="also write trajectories.csv")

    p = sub.add_parser("eval", parents=[common], help="compare generated and reference samples")
    p.add_argument("--generated")
    p.add_argument("--reference")
    p.add_argument("--floor-reference", help="second independent reference draw for the noise floor")

    p = sub.add_parser("bridge-viz", parents=[common], help="bridge-marginal heatmaps")
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--coupling", choices=["independent", "ot"], help="overrides bridge_viz.coupling")
    return parser


def _overrides(args):
    ov = {}
    if args.out_dir is not None:
        ov["out_dir"] = args.out_dir
    if args.seed is not None:
        ov["seed"] = args.seed
    if args.command == "train":
        t = {}
        if args.steps is not None:
            t["n_steps"] = args.steps
        if args.coupling is not None:
            t["coupling"] = args.coupling
        if t:
            ov["train"] = t
    elif args.command in ("sample", "transport"):
        s = {}
        if args.n is not None:
            s["n_samples"] = args.n
        if args.guidance is not None:
            s["guidance"] = args.guidance
        if args.condition is not None:
            s["condition"] = args.condition
        if args.trajectories:
            s["trajectories"] = True
        if s:
            ov["sample"] = s
    elif args.command == "bridge-viz" and args.coupling is not None:
        ov["bridge_viz"] = {"coupling": args.coupling}
    return ov


def _thread_limit(n):
    if n is None:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("threadpoolctl not installed; --threads ignored")
        return nullcontext()
    return threadpool_limits(limits=n)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"countflow: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.print_config:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    try:
        with _thread_limit(args.threads):
            written = COMMANDS[args.command](cfg, args)
        io.write_json(_out(cfg) / f"resolved_config.{args.command}.json", cfg.to_dict())
    except (ConfigError, UsageError, io.DataFormatError, KeyError) as exc:
        print(f"countflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLossError as exc:
        print(f"countflow: numerical abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, FloatingPointError, ValueError) as exc:
        print(f"countflow: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for name in written:
        log.info("wrote %s", Path(cfg.out_dir) / name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
