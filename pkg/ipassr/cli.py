"""Command line entry point.

Exit codes: 0 on success, 1 on a runtime failure or a failed check, 2 when
arguments, inputs, weights or scene files are rejected before compute.
"""

import argparse
import asyncio
import logging
import os
import sys
from collections.abc import Callable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .archive import WeightArchive, load_archive, random_archive
from .bipam import BipamOutput, attention_profile
from .const import SUPPORTED_SCALES, THREADS_ENV
from .exceptions import (
    ArchiveError,
    ConfigError,
    ImageFormatError,
    SceneSpecError,
    StereoSrError,
)
from .imaging import evaluate_pair, load_png, save_gray_png, save_png
from .model import CheckResult, MetricReport, Protocol, RunConfig, StereoPair
from .network import ForwardResult, ipassr_attention, ipassr_forward
from .occlusion import occlusion_from_mask
from .selftest import run_selftest, run_toy
from .synthetic import default_scene_spec, load_scene_spec

__all__ = [
    "main",
    "cmd_sr",
    "cmd_masks",
    "cmd_toy",
    "cmd_eval",
    "evaluate_directories",
    "cmd_selftest",
]

_LOGGER = logging.getLogger(__name__)

_VALIDATION_ERRORS = (ConfigError, ArchiveError, ImageFormatError, SceneSpecError)

SIDES = ("L", "R")

StereoPaths = tuple[Path, Path]


def _threads_from_env(environ: Mapping[str, str]) -> int:
    value = environ.get(THREADS_ENV)
    if value is None:
        return 1
    try:
        threads = int(value)
    except ValueError as err:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from err
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be at least 1, got {threads}")
    return threads


def _prepare_out_dir(path: Path | None) -> Path:
    if path is None:
        raise ConfigError("An output directory is required")
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError(f"Unable to create output directory {path}: {err}") from err
    return path


def _load_weights(config: RunConfig) -> WeightArchive:
    if config.random_weights:
        return random_archive(config.scale, config.seed)
    if config.weights is None:
        raise ConfigError("Either --weights or --random-weights is required")
    archive = load_archive(config.weights)
    if archive.scale != config.scale:
        raise ArchiveError(
            f"Weights {config.weights} are for {archive.scale}x, requested {config.scale}x"
        )
    return archive


def _profile_row(config: RunConfig, height: int) -> int:
    row = height // 2 if config.profile_row is None else config.profile_row
    if not 0 <= row < height:
        raise ConfigError(f"Profile row {row} outside 0..{height - 1}")
    return row


def cmd_sr(config: RunConfig, reconstruct_outputs: bool = True) -> int:
    """Super-resolve one pair and write the images, masks and attention profile."""
    left_path, right_path = config.inputs
    left, right = load_png(left_path), load_png(right_path)
    if left.planes.shape != right.planes.shape:
        raise ConfigError(
            f"{left_path} is {left.height}x{left.width} but {right_path} is "
            f"{right.height}x{right.width}"
        )
    pair = StereoPair(left, right)
    row = _profile_row(config, pair.height)
    archive = _load_weights(config)
    out_dir = _prepare_out_dir(config.out_dir)

    written = []
    result: ForwardResult | BipamOutput
    if reconstruct_outputs:
        result = ipassr_forward(pair, archive)
        for name, img in (("sr_left.png", result.sr.left), ("sr_right.png", result.sr.right)):
            save_png(img, out_dir / name)
            written.append(name)
    else:
        result = ipassr_attention(pair, archive)
    for name, values in (
        ("valid_mask_left.png", result.v_l.values),
        ("valid_mask_right.png", result.v_r.values),
        ("attention_profile.png", attention_profile(result.maps, row)),
    ):
        save_gray_png(values, out_dir / name)
        written.append(name)
    for name in written:
        print(out_dir / name)
    return 0


def cmd_masks(config: RunConfig) -> int:
    """Like `cmd_sr`, stopping after the attention module."""
    return cmd_sr(config, reconstruct_outputs=False)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.9g}"
    text = str(value)
    return f'"{text}"' if " " in text else text


def _record(kind: str, fields: Mapping[str, Any]) -> str:
    parts = [f"record={kind}"]
    parts.extend(
        f"{key}={_format_value(value)}" for key, value in fields.items() if value is not None
    )
    return " ".join(parts)


def _check_line(check: CheckResult) -> str:
    status = "PASS" if check.passed else "FAIL"
    error = "" if check.max_error is None else f" max_error={check.max_error:.3g}"
    detail = f" ({check.detail})" if check.detail else ""
    return f"{status} {check.name}{error}{detail}"


def cmd_toy(config: RunConfig) -> int:
    """Render a synthetic scene and report every invariant check."""
    spec = default_scene_spec() if config.spec is None else load_scene_spec(config.spec)
    out_dir = _prepare_out_dir(config.out_dir)
    row = _profile_row(config, spec.height)
    run = run_toy(spec, config.scale)

    scene = run.scene
    save_png(scene.pair.left, out_dir / "left.png")
    save_png(scene.pair.right, out_dir / "right.png")
    save_png(run.warped_left, out_dir / "warped_left.png")
    save_gray_png(scene.occ_l.astype(np.float32), out_dir / "occlusion_left.png")
    save_gray_png(scene.occ_r.astype(np.float32), out_dir / "occlusion_right.png")
    save_gray_png(run.v_l.values, out_dir / "valid_mask_left.png")
    save_gray_png(run.v_r.values, out_dir / "valid_mask_right.png")
    save_gray_png(attention_profile(run.maps, row), out_dir / "attention_profile.png")

    lines = [
        _record(
            "scene",
            {
                "width": spec.width,
                "height": spec.height,
                "layers": len(spec.layers),
                "scale": config.scale,
                "occluded_left": int(scene.occ_l.sum()),
                "occluded_right": int(scene.occ_r.sum()),
                "detected_left": int(occlusion_from_mask(run.v_l).sum()),
                "detected_right": int(occlusion_from_mask(run.v_r).sum()),
            },
        ),
        _record("losses", run.losses.to_dict()),
    ]
    lines.extend(_record("check", check.to_dict()) for check in run.checks)
    report = out_dir / "report.txt"
    try:
        report.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"Unable to write report {report}: {err}") from err

    for check in run.checks:
        print(_check_line(check))
    passed = sum(check.passed for check in run.checks)
    print(f"{passed}/{len(run.checks)} checks passed")
    return 0 if passed == len(run.checks) else 1


def _pair_files(directory: Path) -> dict[str, dict[str, Path]]:
    """Group `<stem>_L.png` / `<stem>_R.png` files by stem."""
    pairs: dict[str, dict[str, Path]] = {}
    for path in sorted(directory.glob("*.png")):
        stem, _, side = path.stem.rpartition("_")
        if stem and side in SIDES:
            pairs.setdefault(stem, {})[side] = path
    return pairs


def _match_pairs(sr_dir: Path, gt_dir: Path) -> dict[str, tuple[StereoPaths, StereoPaths]]:
    sr_files = _pair_files(sr_dir)
    gt_files = _pair_files(gt_dir)
    missing = []
    for stem in sorted(sr_files.keys() | gt_files.keys()):
        for directory, files in ((sr_dir, sr_files), (gt_dir, gt_files)):
            for side in SIDES:
                if side not in files.get(stem, {}):
                    missing.append(str(directory / f"{stem}_{side}.png"))
    if missing:
        raise ConfigError(f"Missing counterpart: {', '.join(missing)}")
    if not sr_files:
        raise ConfigError(f"No <name>_L.png / <name>_R.png pairs in {sr_dir}")
    return {
        stem: (
            (sr_files[stem]["L"], sr_files[stem]["R"]),
            (gt_files[stem]["L"], gt_files[stem]["R"]),
        )
        for stem in sr_files
    }


def _evaluate_paths(sr: StereoPaths, gt: StereoPaths, protocol: Protocol) -> MetricReport:
    sr_pair = StereoPair(load_png(sr[0]), load_png(sr[1]))
    gt_pair = StereoPair(load_png(gt[0]), load_png(gt[1]))
    return evaluate_pair(sr_pair, gt_pair, protocol)


async def evaluate_directories(
    sr_dir: Path, gt_dir: Path, protocol: Protocol, threads: int = 1
) -> list[tuple[str, MetricReport]]:
    """Score every pair, at most `threads` pairs at a time on worker threads."""
    pairs = _match_pairs(sr_dir, gt_dir)
    semaphore = asyncio.Semaphore(threads)

    async def evaluate(stem: str, sr: StereoPaths, gt: StereoPaths) -> tuple[str, MetricReport]:
        async with semaphore:
            _LOGGER.debug("Evaluating %s", stem)
            return stem, await asyncio.to_thread(_evaluate_paths, sr, gt, protocol)

    return list(
        await asyncio.gather(*(evaluate(stem, sr, gt) for stem, (sr, gt) in pairs.items()))
    )


def _metric_table(rows: list[tuple[str, MetricReport]]) -> list[str]:
    width = max([len("pair"), len("mean")] + [len(stem) for stem, _ in rows])
    lines = [f"{'pair':<{width}}  {'psnr_db':>8}  {'ssim':>7}"]
    for stem, report in rows:
        lines.append(f"{stem:<{width}}  {report.psnr_db:>8.3f}  {report.ssim:>7.4f}")
    mean_psnr = sum(report.psnr_db for _, report in rows) / len(rows)
    mean_ssim = sum(report.ssim for _, report in rows) / len(rows)
    lines.append(f"{'mean':<{width}}  {mean_psnr:>8.3f}  {mean_ssim:>7.4f}")
    return lines


def cmd_eval(config: RunConfig) -> int:
    """Print PSNR / SSIM of every pair and their mean."""
    sr_dir, gt_dir = config.inputs
    rows = asyncio.run(
        evaluate_directories(sr_dir, gt_dir, config.protocol, config.threads)
    )
    print(f"protocol={config.protocol}")
    for line in _metric_table(rows):
        print(line)
    return 0


def cmd_selftest(config: RunConfig) -> int:
    """Run every oracle and invariant suite."""
    results = run_selftest(config.seed)
    for check in results:
        print(_check_line(check))
    failed = [check.name for check in results if not check.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "sr": cmd_sr,
    "masks": cmd_masks,
    "toy": cmd_toy,
    "eval": cmd_eval,
    "selftest": cmd_selftest,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="Enable debug logging")

    parser = argparse.ArgumentParser(
        prog="ipassr", description="Stereo image super-resolution with parallax attention."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("sr", "Super-resolve a stereo pair"),
        ("masks", "Write valid masks and the attention profile of a stereo pair"),
    ):
        sub = commands.add_parser(name, parents=[common], help=help_text)
        sub.add_argument("left", type=Path, help="Left view PNG")
        sub.add_argument("right", type=Path, help="Right view PNG")
        sub.add_argument("--scale", type=int, choices=SUPPORTED_SCALES, default=2)
        weights = sub.add_mutually_exclusive_group()
        weights.add_argument("--weights", type=Path, help="Weight archive")
        weights.add_argument(
            "--random-weights",
            action="store_true",
            help="Use seeded random weights instead of an archive",
        )
        sub.add_argument("--seed", type=int, default=0)
        sub.add_argument("--out-dir", type=Path, required=True)
        sub.add_argument(
            "--profile-row", type=int, help="Height row of the attention profile (default H // 2)"
        )

    toy = commands.add_parser("toy", parents=[common], help="Run the synthetic scene pipeline")
    toy.add_argument("--spec", type=Path, help="Scene file (default: built-in scene)")
    toy.add_argument("--out-dir", type=Path, required=True)
    toy.add_argument("--scale", type=int, choices=SUPPORTED_SCALES, default=2)
    toy.add_argument("--profile-row", type=int)

    evaluate = commands.add_parser("eval", parents=[common], help="Score SR pairs against GT")
    evaluate.add_argument("sr_dir", type=Path)
    evaluate.add_argument("gt_dir", type=Path)
    evaluate.add_argument(
        "--protocol",
        type=Protocol,
        choices=list(Protocol),
        default=Protocol.CROPPED_LEFT,
    )

    selftest = commands.add_parser("selftest", parents=[common], help="Run the self test")
    selftest.add_argument("--seed", type=int, default=0)
    return parser


def _run_config(args: argparse.Namespace, environ: Mapping[str, str]) -> RunConfig:
    inputs: list[Path] = []
    if args.command in ("sr", "masks"):
        inputs = [args.left, args.right]
    elif args.command == "eval":
        inputs = [args.sr_dir, args.gt_dir]
    return RunConfig(
        command=args.command,
        inputs=inputs,
        out_dir=getattr(args, "out_dir", None),
        scale=getattr(args, "scale", 2),
        weights=getattr(args, "weights", None),
        random_weights=getattr(args, "random_weights", False),
        protocol=getattr(args, "protocol", Protocol.CROPPED_LEFT),
        spec=getattr(args, "spec", None),
        seed=getattr(args, "seed", 0),
        profile_row=getattr(args, "profile_row", None),
        threads=_threads_from_env(environ),
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code."""
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        config = _run_config(args, os.environ)
        config.validate()
        return COMMANDS[config.command](config)
    except _VALIDATION_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except StereoSrError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
