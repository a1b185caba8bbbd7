"""Command-line harness.

Exit status: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis, channels, codec, diffusion, experiments, gaussianity, prng, tensorio
from .config import ConfigError, ExperimentConfig, load_config
from .optimizer import optimize_scale
from .pipeline import Manifest, extract, hide
from .report import tradeoff_report
from .tables import fmt, to_csv

SUBCOMMANDS = ("hide", "extract", "attack", "robustness", "optimize-s", "kl-table", "spectrum",
               "residuals", "tradeoff-report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# --------------------------------------------------------------------------
# payload files


def read_payload(path: Path, raw: bool) -> np.ndarray:
    data = path.read_bytes()
    if raw:
        return np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    text = "".join(data.decode("ascii").split())
    if any(c not in "01" for c in text):
        raise ValueError(f"payload file {str(path)!r} must contain only 0/1 characters (or use --bytes)")
    return np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")


def write_bits(path: Path, bits: np.ndarray, raw: bool) -> None:
    bits = np.asarray(bits, dtype=np.uint8)
    if raw:
        if bits.size % 8:
            raise ValueError(f"{bits.size} bits do not fill whole bytes; drop --bytes")
        tensorio.atomic_write(path, np.packbits(bits).tobytes())
    else:
        tensorio.atomic_write(path, "".join(map(str, bits.tolist())) + "\n")


# --------------------------------------------------------------------------
# commands


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig.model_validate({**cfg.model_dump(), "seed": args.seed})
    return cfg


def _out(args, name: str) -> Path:
    return Path(args.out_dir or ".") / name


def _resolve(args, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() or args.out_dir is None else Path(args.out_dir) / p


def cmd_hide(args) -> int:
    cfg = _config(args)
    pc = cfg.build_pipeline()
    bits = read_payload(Path(args.payload), args.bytes)
    sample, manifest = hide(bits, pc)
    ext = {"manifest": manifest.__dict__ | {"shape": list(manifest.shape)},
           "prng_algorithm": prng.PRNG_ALGORITHM, "icdf_version": prng.ICDF_VERSION}
    tensorio.save(_resolve(args, args.out), sample, ext)
    return 0


def _manifest(ext: dict | None) -> Manifest | None:
    if not ext or "manifest" not in ext:
        return None
    d = dict(ext["manifest"])
    d["shape"] = tuple(d.get("shape", ()))
    return Manifest(**d)


def cmd_extract(args) -> int:
    cfg = _config(args)
    pc = cfg.build_pipeline()
    x, ext = tensorio.load(args.stego)
    if ext and ext.get("prng_algorithm", prng.PRNG_ALGORITHM) != prng.PRNG_ALGORITHM:
        raise RuntimeError(f"stego was written with PRNG {ext['prng_algorithm']}, "
                           f"this build uses {prng.PRNG_ALGORITHM}")
    bits = extract(x, pc, manifest=_manifest(ext))
    write_bits(_resolve(args, args.out), bits, args.bytes)
    return 0


def cmd_attack(args) -> int:
    spec = channels.parse_spec(args.spec)
    ae = None
    if spec.kind == "autoencoder_cycle":
        if not args.config:
            raise UsageError("attack: autoencoder_cycle needs --config with an autoencoder section")
        ae = _config(args).with_mode("latent").build_autoencoder()
    x, ext = tensorio.load(args.input)
    seed = args.seed if args.seed is not None else 0
    y = channels.apply_channel(spec, x, rng_seed=seed, ae=ae)
    tensorio.save(_resolve(args, args.out), y, ext)
    return 0


def cmd_robustness(args) -> int:
    cfg = _config(args)
    mode = args.pipeline or cfg.pipeline.mode
    caps = args.q or cfg.attacks.capacities
    s = args.s if args.s is not None else cfg.codec.S
    pcs = {f"{mode}-Q{q}": cfg.build_pipeline(Q=q, S=s, mode=mode) for q in caps}
    seeds = range(cfg.seed, cfg.seed + cfg.attacks.seeds)
    rows = experiments.robustness_rows(pcs, cfg.attacks.specs, seeds)
    tensorio.atomic_write(_out(args, "robustness.csv"), to_csv(rows))
    return 0


def cmd_optimize(args) -> int:
    cfg = _config(args)
    mode = args.pipeline or cfg.pipeline.mode
    oc = cfg.build_optimizer(Q=args.q, mode=mode)
    res = optimize_scale(oc)
    trace = [{"iter": st.iter, "S": st.S, "Acc_curr": st.Acc_curr, "L_retr": st.L_retr,
              "D_KL": st.D_KL, "beta_eff": st.beta_eff} for st in res.trace]
    tensorio.atomic_write(_out(args, f"optimize_{mode}_Q{oc.Q}_trace.csv"), to_csv(trace))
    if not res.feasible:
        print(f"no feasible S: {res.diagnostic}", file=sys.stderr)
        return 2
    best = next(st for st in res.trace if st.S == res.S_star)
    summary = [{"Q": oc.Q, "Acc_target": oc.Acc_target, "S_star": res.S_star,
                "L_retr": best.L_retr, "D_KL": gaussianity.analytic_kl(res.S_star, oc.Q)}]
    tensorio.atomic_write(_out(args, f"optimize_{mode}_Q{oc.Q}_summary.csv"), to_csv(summary))
    return 0


def cmd_kl_table(args) -> int:
    if args.s:
        points = [(q, s) for q in (args.q or [4]) for s in args.s]
    else:
        points = [(q, s) for q, s, _ in experiments.OPTIMIZED_ANCHORS + experiments.SWEEP_ANCHORS]
    rows = experiments.kl_table(points)
    text = to_csv(rows, experiments.KL_COLUMNS)
    tensorio.atomic_write(_out(args, "kl_table.csv"), text)
    if not args.quiet:
        sys.stdout.write(text)
    return 0


def cmd_spectrum(args) -> int:
    x, _ = tensorio.load(args.input)
    spec = analysis.mean_radial_spectrum(x)
    rows = [{"radius": 0.0, "power": spec.dc}]
    rows += [{"radius": r, "power": p} for r, p in zip(spec.radii, spec.power)]
    tensorio.atomic_write(_out(args, "spectrum.csv"), to_csv(rows))
    return 0


def cmd_residuals(args) -> int:
    cfg = _config(args)
    pc = cfg.build_pipeline(S=args.s)
    rep = experiments.residual_report(pc, batch=args.batch, seed=cfg.seed)
    rows = [{"bin_center": c, "stego_density": a, "control_density": b}
            for c, a, b in zip(rep.stego.centers, rep.stego.histogram, rep.control.histogram)]
    tensorio.atomic_write(_out(args, "residuals.csv"), to_csv(rows))
    print(f"wasserstein1={fmt(rep.shift)}")
    return 0


def cmd_tradeoff(args) -> int:
    cfg = _config(args)
    csv_text, md = tradeoff_report(cfg)
    tensorio.atomic_write(_out(args, "tradeoff.csv"), csv_text)
    tensorio.atomic_write(_out(args, "tradeoff.md"), md)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="artifact", description="Diffusion steganography desk-scale harness")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed; channel seed for attack")
    p.add_argument("--threads", type=int, default=1, help="BLAS/OpenMP thread cap")
    p.add_argument("--out-dir", default=None, help="directory for outputs")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("hide")
    s.add_argument("--payload", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--bytes", action="store_true", help="payload file is raw bytes")
    s.set_defaults(func=cmd_hide)

    s = sub.add_parser("extract")
    s.add_argument("--stego", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--bytes", action="store_true", help="write raw bytes")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("attack")
    s.add_argument("--spec", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("robustness")
    s.add_argument("--config", required=True)
    s.add_argument("--pipeline", choices=("pixel", "latent"))
    s.add_argument("--q", type=int, nargs="+")
    s.add_argument("--s", type=float)
    s.set_defaults(func=cmd_robustness)

    s = sub.add_parser("optimize-s")
    s.add_argument("--q", type=int, required=True)
    s.add_argument("--pipeline", choices=("pixel", "latent"))
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("kl-table")
    s.add_argument("--q", type=int, nargs="+")
    s.add_argument("--s", type=float, nargs="+")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_kl_table)

    s = sub.add_parser("spectrum")
    s.add_argument("--in", dest="input", required=True)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("residuals")
    s.add_argument("--config", required=True)
    s.add_argument("--s", type=float)
    s.add_argument("--batch", type=int, default=64)
    s.set_defaults(func=cmd_residuals)

    s = sub.add_parser("tradeoff-report")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_tradeoff)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + f"artifact: error: choose one of {', '.join(SUBCOMMANDS)}")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        if getattr(args, "q", None) is not None:
            qs = args.q if isinstance(args.q, list) else [args.q]
            if any(not 1 <= q <= codec.Q_MAX for q in qs):
                raise UsageError(f"--q must lie in [1, {codec.Q_MAX}]")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ConfigError, codec.CodecError, channels.ChannelError, diffusion.ScheduleMismatch,
            tensorio.TensorFormatError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
