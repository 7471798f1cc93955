"""Command-line pipeline: synth -> preprocess -> train -> generate -> evaluate.

Every command is a thin wrapper over library calls, driven by a resolved
:class:`~meshanim.config.RunConfig`; results are bitwise identical to making
the same library calls directly. Exit codes: 0 success, 1 usage error,
2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import datapipe, evalkit, manifest, synth
from .config import SCHEMA, RunConfig, resolve
from .errors import DataError, NumericError, UsageError
from .checkpoint import load_checkpoint, save_checkpoint
from .mesh import load_mesh
from .network import DenoiserConfig, DenoiserNetwork
from .sampling import SamplerConfig, SampleStats, generate_animation, sample_noise_bundle
from .schedule import linear_schedule
from .training import OptimizerState, TrainConfig, train

logger = logging.getLogger(__name__)

_COMMANDS = ("synth", "preprocess", "train", "generate", "evaluate")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="meshanim", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    for name in _COMMANDS:
        p = sub.add_parser(name, add_help=True)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("-v", "--verbose", action="store_true")
        for key in SCHEMA.values():
            p.add_argument(f"--{key.name}", default=None, help=key.help, metavar="V")
    return parser


def _gather_overrides(args) -> dict:
    return {
        name: getattr(args, name)
        for name in SCHEMA
        if getattr(args, name, None) is not None
    }


def _prepare_out_dir(cfg: RunConfig) -> Path:
    cfg.require("out_dir")
    out = Path(cfg.out_dir)
    if out.exists() and any(out.iterdir()) and not cfg.force:
        raise UsageError(f"output directory {out} is not empty (use --force true)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _denoiser_config(cfg: RunConfig) -> DenoiserConfig:
    return DenoiserConfig(
        widths=tuple(cfg.hidden_widths),
        lengths=tuple(cfg.spiral_lengths),
        d_idx=cfg.d_idx,
        d_t=cfg.d_t,
        n_classes=cfg.M,
        T=cfg.T,
        d_id=cfg.d_id if cfg.use_identity else 0,
    )


def _load_params_into(net: DenoiserNetwork, path):
    params, state, meta = load_checkpoint(path)
    if set(params) != set(net.params):
        raise DataError(
            "checkpoint parameters do not match the configured network "
            f"(missing {sorted(set(net.params) - set(params))[:3]}...)"
        )
    for name, arr in params.items():
        if arr.shape != net.params[name].shape:
            raise DataError(f"checkpoint tensor '{name}' has shape {arr.shape}, "
                            f"network expects {net.params[name].shape}")
        net.params[name][...] = arr
    return state, meta


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: RunConfig) -> int:
    out = _prepare_out_dir(cfg)
    clips = synth.synth_dataset(
        cfg.n_subjects, cfg.M, cfg.K, cfg.n_target, cfg.data_seed
    )
    for clip in clips:
        manifest.save_clip(clip, out / f"{clip.subject_id}_c{clip.expression_class:02d}")
    datapipe.save_landmarks(
        synth.synth_landmarks(cfg.M, cfg.n_target), out / "landmarks.txt"
    )
    cfg.echo(out)
    logger.info("wrote %d clips to %s", len(clips), out)
    return 0


def _resolve_landmarks(cfg: RunConfig, dataset_dir: Path) -> list[int]:
    if cfg.landmarks_path:
        return datapipe.load_landmarks(cfg.landmarks_path)
    default = dataset_dir / "landmarks.txt"
    if default.exists():
        return datapipe.load_landmarks(default)
    raise DataError(
        "no landmark file: pass --landmarks_path or put landmarks.txt in the dataset"
    )


def cmd_preprocess(cfg: RunConfig) -> int:
    cfg.require("dataset_dir")
    out = _prepare_out_dir(cfg)
    dataset_dir = Path(cfg.dataset_dir)
    landmarks = _resolve_landmarks(cfg, dataset_dir)
    clip_dirs = manifest.list_clip_dirs(dataset_dir)

    standardized = []
    skipped = []
    for d in clip_dirs:
        clip = manifest.load_clip(d, cfg.unit_scale)
        clip = datapipe.standardize_clip(clip, cfg.K)
        try:
            p = datapipe.progression_signal(clip)
        except DataError as exc:
            skipped.append((d.name, str(exc)))
            logger.warning("skipping %s: %s", d.name, exc)
            continue
        standardized.append((d.name, clip, p))

    if not standardized:
        raise DataError("no usable clips after preprocessing")

    maxima = datapipe.corpus_extremeness([c for _, c, _ in standardized], landmarks)
    mode = "local" if cfg.intensity_mode == "local" else "global"
    extreme_lines = []
    for name, clip, p in standardized:
        g = datapipe.extremeness_factor(clip, landmarks, maxima)
        signal = datapipe.make_expression_signal(
            clip.expression_class, p, g, mode, cfg.M
        )
        manifest.save_clip(clip, out / "clips" / name)
        (out / "signals").mkdir(exist_ok=True)
        datapipe.save_signal(signal, out / "signals" / f"{name}.sig")
        extreme_lines.append(
            f"{name} class={clip.expression_class} raw={g.raw:.9f} "
            f"normalized={g.normalized:.9f}"
        )
    (out / "extremeness.txt").write_text(
        "\n".join(extreme_lines) + "\n", encoding="utf-8"
    )

    subjects = sorted({clip.subject_id for _, clip, _ in standardized})
    n_train = cfg.n_train or max(1, round(0.75 * len(subjects)))
    split = datapipe.split_subjectwise(subjects, n_train, cfg.data_seed)
    split_lines = [f"train {s}" for s in split.train_subjects]
    split_lines += [f"test {s}" for s in split.test_subjects]
    (out / "split.txt").write_text("\n".join(split_lines) + "\n", encoding="utf-8")

    report = [f"clips: {len(standardized)}", f"skipped: {len(skipped)}"]
    report += [f"skipped {name}: {why}" for name, why in skipped]
    (out / "preprocess_report.txt").write_text("\n".join(report) + "\n", encoding="utf-8")
    cfg.echo(out)
    logger.info("preprocessed %d clips (%d skipped)", len(standardized), len(skipped))
    return 0


def _load_processed(cfg: RunConfig, split_part: str = "train"):
    """Clips + signals of one split part from a preprocessed directory."""
    root = Path(cfg.dataset_dir)
    clips_dir = root / "clips"
    signals_dir = root / "signals"
    split_path = root / "split.txt"
    for p in (clips_dir, signals_dir, split_path):
        if not p.exists():
            raise DataError(f"not a preprocessed dataset (missing {p})")
    wanted = set()
    for line in split_path.read_text(encoding="utf-8").splitlines():
        part, _, subject = line.strip().partition(" ")
        if part == split_part:
            wanted.add(subject)
    clips, signals = [], []
    for d in manifest.list_clip_dirs(clips_dir):
        clip = manifest.load_clip(d, cfg.unit_scale)
        if clip.subject_id not in wanted:
            continue
        sig_path = signals_dir / f"{d.name}.sig"
        if not sig_path.exists():
            raise DataError(f"missing signal file: {sig_path}")
        signals.append(datapipe.load_signal(sig_path))
        clips.append(clip)
    if not clips:
        raise DataError(f"no '{split_part}' clips in {root}")
    return clips, signals


def cmd_train(cfg: RunConfig) -> int:
    cfg.require("dataset_dir")
    out = _prepare_out_dir(cfg)
    clips, signals = _load_processed(cfg, "train")
    if signals[0].n_classes != cfg.M:
        raise DataError(
            f"signals have {signals[0].n_classes} classes, config says {cfg.M}"
        )
    neutral = clips[0].neutral
    net = DenoiserNetwork(
        neutral.faces, neutral.n_vertices, _denoiser_config(cfg), seed=cfg.init_seed
    )
    sched = linear_schedule(cfg.T, cfg.beta1, cfg.betaT)
    state = None
    start_epoch = 0
    if cfg.checkpoint:
        state, meta = _load_params_into(net, cfg.checkpoint)
        start_epoch = int(meta.get("epochs_done", 0))
        logger.info("resuming from %s at epoch %d", cfg.checkpoint, start_epoch)
    tc = TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        lr_initial=cfg.lr_initial,
        lr_final=cfg.lr_final,
        seed=cfg.train_seed,
        steps_per_epoch=cfg.steps_per_epoch or None,
    )
    csv_path = out / "loss.csv"
    rows = ["epoch,loss"]

    def on_epoch(epoch, loss):
        rows.append(f"{epoch},{loss:.9g}")

    result = train(clips, signals, tc, net, sched, state=state,
                   start_epoch=start_epoch, stop_epoch=cfg.stop_epoch or None,
                   on_epoch=on_epoch)
    csv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    save_checkpoint(
        net.params,
        result.state,
        out / "checkpoint.mdck",
        meta={"epochs_done": cfg.stop_epoch or cfg.epochs},
    )
    cfg.echo(out)
    logger.info("final loss %.6g; checkpoint at %s", result.epoch_losses[-1],
                out / "checkpoint.mdck")
    return 0


def _generation_signal(cfg: RunConfig) -> datapipe.ExpressionSignal:
    if cfg.signal_path:
        signal = datapipe.load_signal(cfg.signal_path)
        if signal.num_frames != cfg.K:
            raise DataError(
                f"signal file has {signal.num_frames} rows, config K={cfg.K}"
            )
        return signal
    if not 0 <= cfg.expression_class < cfg.M:
        raise DataError(f"expression_class {cfg.expression_class} out of range")
    p = np.linspace(0.0, 1.0, cfg.K)
    if cfg.intensity_mode == "local":
        return datapipe.make_expression_signal(
            cfg.expression_class, p, None, "local", cfg.M
        )
    return datapipe.make_expression_signal(
        cfg.expression_class, p, None, "varying", cfg.M, intensity=cfg.intensity
    )


def cmd_generate(cfg: RunConfig) -> int:
    cfg.require("checkpoint", "neutral_path")
    out = _prepare_out_dir(cfg)
    neutral = load_mesh(cfg.neutral_path, cfg.unit_scale)
    net = DenoiserNetwork(
        neutral.faces, neutral.n_vertices, _denoiser_config(cfg), seed=cfg.init_seed
    )
    _load_params_into(net, cfg.checkpoint)
    sched = linear_schedule(cfg.T, cfg.beta1, cfg.betaT)
    signal = _generation_signal(cfg)
    sampler = SamplerConfig(t_s=cfg.t_s, K=cfg.K, noise_mode=cfg.noise_mode)
    datapipe.save_signal(signal, out / "signal.sig")
    for i in range(cfg.count):
        stats = SampleStats()
        bundle = sample_noise_bundle(neutral.n_vertices, cfg.T, cfg.noise_seed + i)
        clip = generate_animation(
            neutral, signal, net, sched, sampler, bundle,
            threads=cfg.threads, subject_id=cfg.subject_id, stats=stats,
        )
        manifest.save_clip(clip, out / f"gen_{i:03d}")
        logger.info(
            "gen_%03d: %d denoiser evaluations (seed %d)",
            i, stats.denoiser_evals, cfg.noise_seed + i,
        )
        print(f"gen_{i:03d}: denoiser evaluations = {stats.denoiser_evals}")
    cfg.echo(out)
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    cfg.require("generated_dir", "reference_dir", "dataset_dir")
    out = _prepare_out_dir(cfg)

    train_clips, _ = _load_processed(cfg, "train")
    flat = np.stack(
        [f.offsets.reshape(-1) for c in train_clips for f in c.frames]
    )
    m = evalkit.choose_components(flat, cfg.pca_variance)
    enc = evalkit.fit_pca(flat, m)
    clf = evalkit.train_classifier(
        train_clips, enc, cfg.clf_epochs, cfg.eval_seed, hidden=cfg.clf_hidden
    )

    gen_dirs = manifest.list_clip_dirs(cfg.generated_dir)
    ref_clips = {}
    for d in manifest.list_clip_dirs(cfg.reference_dir):
        clip = manifest.load_clip(d, cfg.unit_scale)
        ref_clips.setdefault((clip.subject_id, clip.expression_class), clip)

    pairs = []
    missing = []
    for d in gen_dirs:
        clip = manifest.load_clip(d, cfg.unit_scale)
        key = (clip.subject_id, clip.expression_class)
        if key not in ref_clips:
            missing.append(f"{d.name} -> subject={key[0]} class={key[1]}")
            continue
        pairs.append((d.name, clip, ref_clips[key]))
    if missing:
        raise DataError("no reference for: " + "; ".join(missing))

    hits = 0
    per_frame_sum = None
    spec_values = []
    maps_dir = out / "error_maps"
    for name, gen, ref in pairs:
        predicted, _ = evalkit.classify(gen, enc, clf)
        hits += int(predicted == gen.expression_class)
        report = evalkit.specificity(gen, ref)
        spec_values.append(report.average)
        per_frame_sum = (
            report.per_frame if per_frame_sum is None else per_frame_sum + report.per_frame
        )
        clip_dir = maps_dir / name
        clip_dir.mkdir(parents=True, exist_ok=True)
        for i in range(gen.num_frames):
            em = evalkit.error_map(gen.frame_mesh(i), ref.frame_mesh(i))
            (clip_dir / f"frame_{i:03d}.err").write_text(
                "\n".join(f"{x:.9f}" for x in em) + "\n", encoding="utf-8"
            )

    accuracy = hits / len(pairs)
    per_frame = per_frame_sum / len(pairs)
    lines = [
        f"accuracy={accuracy:.6f}",
        f"specificity_avg_mm={np.mean(spec_values):.9f}",
        "per_frame_mm=" + ",".join(f"{x:.9f}" for x in per_frame),
    ]
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "per_frame.csv").write_text(
        "frame,specificity_mm\n"
        + "\n".join(f"{i},{x:.9f}" for i, x in enumerate(per_frame))
        + "\n",
        encoding="utf-8",
    )
    cfg.echo(out)
    print(f"accuracy={accuracy:.6f} specificity_avg_mm={np.mean(spec_values):.6f}")
    return 0


_HANDLERS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return 1
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
        cfg = resolve(args.config, _gather_overrides(args))
        return _HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
