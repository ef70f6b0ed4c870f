"""Command-line interface.

Subcommands: train, eval, sweep, export-binning, export-recon, bounds.
Flags override config-file keys, which override built-in defaults.  The
default output directory comes from --out-dir, else $WZSR_OUT_DIR, else ".".

Exit codes: 0 success, 1 unexpected failure, 2 invalid configuration,
3 numeric abort during training, 4 checkpoint version mismatch.
"""

import argparse
import logging
import os
import sys

import numpy as np

from wzsr import __version__, backend
from wzsr import checkpoint as ck
from wzsr import config as cfg_mod
from wzsr import evaluation, training
from wzsr.errors import (CheckpointVersionError, ConfigError, ContractError,
                         DomainError, TrainingDiverged, WzsrError)

log = logging.getLogger("wzsr")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VERSION = 4


def _add_common_train_flags(p):
    p.add_argument("--config", help="JSON run-config file")
    p.add_argument("--scenario", help="222, 44, or mono-N")
    p.add_argument("--prior", choices=["marginal", "conditional"], dest="prior_kind")
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", type=float, dest="lam")
    p.add_argument("--noise-var", type=float, dest="noise_variance")
    p.add_argument("--epochs", type=int)
    p.add_argument("--samples-per-epoch", type=int, dest="samples_per_epoch")
    p.add_argument("--eval-samples", type=int, dest="eval_samples")
    p.add_argument("--desk-scale", action="store_true",
                   help="reduced profile: 60 epochs, 5e4 samples/epoch, 1e6 eval samples")
    p.add_argument("--out-dir", dest="out_dir")


def _resolve_config(args):
    """config file < --desk-scale < explicit flags."""
    if args.config:
        cfg = cfg_mod.RunConfig.load(args.config)
    else:
        if not args.scenario:
            raise ConfigError("give --config or --scenario")
        cfg = cfg_mod.default_run_config(args.scenario, args.prior_kind or "conditional")
    if args.desk_scale:
        cfg = cfg_mod.apply_desk_scale(cfg)
    d = cfg.to_dict()
    for key in ("scenario", "prior_kind", "seed", "noise_variance", "epochs",
                "samples_per_epoch", "eval_samples", "out_dir"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if getattr(args, "lam", None) is not None:
        d["lambda"] = args.lam
    if args.scenario and args.config:
        d["scenario"] = args.scenario
    if d.get("scenario"):
        K, M = cfg_mod.scenario_dims(d["scenario"])
        d["K"], d["M"] = K, M
    if d["out_dir"] == ".":
        d["out_dir"] = os.environ.get("WZSR_OUT_DIR", ".")
    return cfg_mod.RunConfig.from_dict(d)


def _run_name(cfg):
    return f"{cfg.scenario}_{cfg.prior_kind}_lam{cfg.lam:g}_var{cfg.noise_variance:g}_seed{cfg.seed}"


def _meta_comment(cfg, extra=""):
    base = f"wzsr={__version__} seed={cfg.seed} scenario={cfg.scenario} " \
           f"prior={cfg.prior_kind} lambda={cfg.lam:g} noise_var={cfg.noise_variance:g}"
    return base + (" " + extra if extra else "")


def cmd_train(args):
    cfg = _resolve_config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    name = _run_name(cfg)
    ckpt_path = os.path.join(cfg.out_dir, name + ".wz")
    log_path = os.path.join(cfg.out_dir, name + "_train_log.csv")

    def progress(epoch, stage_rows):
        log.info("epoch %d  tau=%.4f lr=%.2e loss=%.5f", epoch,
                 stage_rows[0]["tau"], stage_rows[0]["lr"], stage_rows[0]["total_loss"])

    try:
        result = training.train_run(cfg.train_config(), progress=progress)
    except TrainingDiverged as exc:
        sys.stderr.write(f"training aborted: {exc}\n")
        if exc.model is not None:
            ck.from_model(exc.model, cfg, epochs_completed=exc.epoch,
                          final_tau=training.tau_at(exc.epoch, cfg.train_config())).save(ckpt_path)
            sys.stderr.write(f"last-good checkpoint written to {ckpt_path}\n")
        return EXIT_NUMERIC
    digest = ck.from_model(result.model, cfg, epochs_completed=result.epochs_completed,
                           final_tau=result.final_tau).save(ckpt_path)
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(training.format_train_log(result.log_rows, _meta_comment(cfg)))
    print(ckpt_path)
    print(log_path)
    log.info("checkpoint sha256 %s", digest)
    return 0


def cmd_eval(args):
    reports, loaded = evaluation.evaluate_checkpoint(args.checkpoint, args.eval_samples, args.seed)
    cfg = loaded.run_config
    comment = _meta_comment(cfg, f"checkpoint={ck.file_hash(args.checkpoint)} "
                                 f"eval_seed={args.seed if args.seed is not None else cfg.eval_seed}")
    text = evaluation.stage_report_csv(reports, comment)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(args.out)
    else:
        sys.stdout.write(text)
    hdr = f"{'stage':>5} {'rate_marg':>10} {'rate_cond':>10} {'mse':>12} {'dB':>8} {'sum_rate':>9}"
    print(hdr, file=sys.stderr)
    for r in reports:
        cond = f"{r.rate_conditional_bits:10.4f}" if not np.isnan(r.rate_conditional_bits) else "       ---"
        print(f"{r.stage:>5} {r.rate_marginal_bits:10.4f} {cond} "
              f"{r.distortion_mse:12.6g} {r.distortion_db:8.2f} {r.sum_rate_bits:9.4f}",
              file=sys.stderr)
    return 0


def cmd_sweep(args):
    cfg = _resolve_config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    lambdas = [float(s) for s in args.lambdas.split(",")] if args.lambdas \
        else list(cfg_mod.DEFAULT_LAMBDA_GRID)
    model_rows, bound_rows, paths = evaluation.rd_sweep(
        cfg, lambdas, train_missing=not args.no_train, checkpoint_dir=cfg.out_dir)
    out = args.out or os.path.join(cfg.out_dir, f"rd_{cfg.scenario}_{cfg.prior_kind}.csv")
    comment = _meta_comment(cfg, f"lambda_grid={','.join(f'{l:g}' for l in lambdas)}")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(evaluation.rd_csv(model_rows + bound_rows, comment))
    print(out)
    for p in paths:
        log.info("checkpoint %s", p)
    return 0


def cmd_export_binning(args):
    ckpt = ck.load(args.checkpoint)
    model = ckpt.build_model()
    x_range = (args.x_min, args.x_max) if args.x_min is not None else None
    binning = evaluation.export_binning(model, x_range=x_range, resolution=args.resolution,
                                        noise_variance=ckpt.run_config.noise_variance)
    comment = _meta_comment(ckpt.run_config, f"checkpoint={ck.file_hash(args.checkpoint)}")
    out = args.out or "binning.csv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(evaluation.binning_csv(binning, comment))
    msg_out = os.path.splitext(out)[0] + "_message.csv"
    with open(msg_out, "w", encoding="utf-8") as fh:
        fh.write(evaluation.complete_message_csv(binning, comment))
    print(out)
    print(msg_out)
    return 0


def cmd_export_recon(args):
    ckpt = ck.load(args.checkpoint)
    model = ckpt.build_model()
    prefixes = [tuple(int(c) for c in token) for token in args.prefixes.split(",")]
    maps = evaluation.export_reconstruction(model, (args.y_min, args.y_max),
                                            args.resolution, prefixes)
    comment = _meta_comment(ckpt.run_config, f"checkpoint={ck.file_hash(args.checkpoint)}")
    out = args.out or "reconstruction.csv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(evaluation.reconstruction_csv(maps, comment))
    print(out)
    return 0


def cmd_bounds(args):
    from wzsr import bounds

    if args.distortions:
        ds = [float(s) for s in args.distortions.split(",")]
    else:
        ds = list(np.geomspace(args.noise_variance * 2 ** (-2 * 3.5), 1.0 + args.noise_variance, 40))
    lines = [f"# wzsr={__version__} noise_var={args.noise_variance:g}", "label,distortion_mse,rate_bits"]
    for d in ds:
        lines.append(f"wz_bound,{d!r},{bounds.wz_rate(d, args.noise_variance)!r}")
    for d in ds:
        lines.append(f"no_side_info,{d!r},{bounds.rate_no_side_info(d, args.noise_variance)!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="wzsr",
                                description="Learned successive-refinement Wyner-Ziv coding")
    p.add_argument("--version", action="version", version=f"wzsr {__version__}")
    p.add_argument("--backend", choices=backend.available(),
                   help="force a kernel lane (default: compiled if built)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("train", help="train a model and write checkpoint + log")
    _add_common_train_flags(pt)
    pt.set_defaults(fn=cmd_train)

    pe = sub.add_parser("eval", help="evaluate a checkpoint (rates, distortions)")
    pe.add_argument("checkpoint")
    pe.add_argument("--eval-samples", type=int, dest="eval_samples")
    pe.add_argument("--seed", type=int)
    pe.add_argument("--out", help="write CSV here instead of stdout")
    pe.set_defaults(fn=cmd_eval)

    ps = sub.add_parser("sweep", help="train/evaluate a lambda sweep, emit RD CSV")
    _add_common_train_flags(ps)
    ps.add_argument("--lambdas", help="comma-separated lambda grid")
    ps.add_argument("--no-train", action="store_true", help="fail on missing checkpoints")
    ps.add_argument("--out")
    ps.set_defaults(fn=cmd_sweep)

    pb = sub.add_parser("export-binning", help="quantizer bins of a trained encoder")
    pb.add_argument("checkpoint")
    pb.add_argument("--resolution", type=int, default=4096)
    pb.add_argument("--x-min", type=float)
    pb.add_argument("--x-max", type=float)
    pb.add_argument("--out")
    pb.set_defaults(fn=cmd_export_binning)

    pr = sub.add_parser("export-recon", help="reconstruction maps for message prefixes")
    pr.add_argument("checkpoint")
    pr.add_argument("--prefixes", required=True, help="e.g. 0,1,00,01")
    pr.add_argument("--y-min", type=float, default=-3.0)
    pr.add_argument("--y-max", type=float, default=3.0)
    pr.add_argument("--resolution", type=int, default=1024)
    pr.add_argument("--out")
    pr.set_defaults(fn=cmd_export_recon)

    pc = sub.add_parser("bounds", help="closed-form RD curves as CSV")
    pc.add_argument("--noise-var", type=float, required=True, dest="noise_variance")
    pc.add_argument("--distortions", help="comma-separated distortion grid")
    pc.add_argument("--out")
    pc.set_defaults(fn=cmd_bounds)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.backend:
        backend.use(args.backend)
    try:
        return args.fn(args)
    except ConfigError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    except CheckpointVersionError as exc:
        sys.stderr.write(f"checkpoint error: {exc}\n")
        return EXIT_VERSION
    except (ContractError, DomainError, WzsrError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
