"""Naive reference oracles and the invariant suites built on them.

The reference functions are explicit loops over every index. The vectorized
kernels are checked against them on small random instances, both by
`ipassr selftest` and by the unit tests.
"""

import itertools
import logging
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import numpy.typing as npt

from .archive import WeightArchive, dumps, loads, mirror_symmetric, random_archive
from .bipam import (
    attention_from_scores,
    convert_features,
    fuse_with_mask,
    is_row_stochastic,
    whiten,
)
from .const import (
    DELTA_MAX,
    LOSS_WEIGHT,
    MASK_OCCLUDED_MAX,
    MASK_VISIBLE_MIN,
)
from .exceptions import ArchiveError, StereoSrError
from .imaging import bicubic_resize, bicubic_upscale_pair
from .losses import (
    consistency_residual_loss,
    cycle_residual_loss,
    evaluate_losses,
    photometric_residual_loss,
    smoothness_loss,
    total_loss,
)
from .model import (
    AttentionMaps,
    CheckResult,
    LossReport,
    RgbImage,
    SceneSpec,
    StereoPair,
    ValidMask,
)
from .network import ipassr_forward, param_count
from .occlusion import cycle_probability, detect_occlusions, relaxed_cycle_probability
from .synthetic import (
    ToyScene,
    analytic_attention,
    default_scene_spec,
    disparity_warp,
    occlusion_runs,
    random_scene_spec,
    render_scene,
    scale_spec,
)
from .tensor import (
    Tensor,
    batch_matmul,
    conv2d,
    pixel_shuffle,
    pixel_unshuffle,
    softmax_lastdim,
    transpose_last2,
)

__all__ = [
    "reference_conv2d",
    "reference_batch_matmul",
    "reference_cycle_probability",
    "reference_relaxed_cycle_probability",
    "reference_photometric_loss",
    "reference_cycle_loss",
    "reference_smoothness_loss",
    "check_scene",
    "ToyRun",
    "run_toy",
    "run_selftest",
]

_LOGGER = logging.getLogger(__name__)

Array64 = npt.NDArray[np.float64]

PARAMETER_TARGETS = {2: 1.37e6, 4: 1.42e6}
PARAMETER_TOLERANCE = 0.10

KERNEL_TOLERANCE = 1e-6
ALGEBRA_TOLERANCE = 1e-6
WARP_TOLERANCE = 1e-6
LOSS_FIXED_POINT_TOLERANCE = 1e-7
LOSS_ORACLE_TOLERANCE = 1e-6
NETWORK_TOLERANCE = 1e-5


def reference_conv2d(x: Tensor, kernel: Tensor, bias: Tensor, groups: int = 1) -> Array64:
    """Same-size convolution as a loop over every output and kernel tap."""
    height, width, _ = x.shape
    k, _, group_in, c_out = kernel.shape
    group_out = c_out // groups
    pad = (k - 1) // 2
    out = np.zeros((height, width, c_out))
    for h, w, co in itertools.product(range(height), range(width), range(c_out)):
        g = co // group_out
        acc = float(bias[co])
        for i, j, ci in itertools.product(range(k), range(k), range(group_in)):
            hh, ww = h + i - pad, w + j - pad
            if 0 <= hh < height and 0 <= ww < width:
                acc += float(x[hh, ww, g * group_in + ci]) * float(kernel[i, j, ci, co])
        out[h, w, co] = acc
    return out


def reference_batch_matmul(a: Tensor, b: Tensor) -> Array64:
    batch, rows, inner = a.shape
    cols = b.shape[2]
    out = np.zeros((batch, rows, cols))
    for n, i, j in itertools.product(range(batch), range(rows), range(cols)):
        out[n, i, j] = sum(float(a[n, i, k]) * float(b[n, k, j]) for k in range(inner))
    return out


def reference_relaxed_cycle_probability(
    maps: AttentionMaps, delta_max: int = DELTA_MAX
) -> Array64:
    height, width = maps.height, maps.width
    out = np.zeros((height, width))
    for h, w1 in itertools.product(range(height), range(width)):
        acc = 0.0
        for delta in range(-delta_max, delta_max + 1):
            if not 0 <= w1 + delta < width:
                continue
            for w2 in range(width):
                acc += float(maps.m_rl[h, w1 + delta, w2]) * float(maps.m_lr[h, w2, w1])
        out[h, w1] = acc
    return out


def reference_cycle_probability(maps: AttentionMaps) -> Array64:
    return reference_relaxed_cycle_probability(maps, delta_max=0)


def _reference_warp_l1(v: ValidMask, a: Array64, warped: Array64) -> float:
    height, width, channels = a.shape
    total = 0.0
    for h, w, c in itertools.product(range(height), range(width), range(channels)):
        total += abs(float(v.values[h, w]) * (a[h, w, c] - warped[h, w, c]))
    return total / (height * width * channels)


def _reference_warp(m: Tensor, x: Array64) -> Array64:
    height, width, channels = x.shape
    out = np.zeros_like(x)
    for h, w1, c in itertools.product(range(height), range(width), range(channels)):
        out[h, w1, c] = sum(float(m[h, w1, w2]) * x[h, w2, c] for w2 in range(width))
    return out


def reference_photometric_loss(
    x_l: Tensor, x_r: Tensor, maps: AttentionMaps, v_l: ValidMask, v_r: ValidMask
) -> float:
    left, right = x_l.astype(np.float64), x_r.astype(np.float64)
    return _reference_warp_l1(
        v_l, left, _reference_warp(maps.m_rl, right)
    ) + _reference_warp_l1(v_r, right, _reference_warp(maps.m_lr, left))


def reference_cycle_loss(
    x_l: Tensor, x_r: Tensor, maps: AttentionMaps, v_l: ValidMask, v_r: ValidMask
) -> float:
    left, right = x_l.astype(np.float64), x_r.astype(np.float64)
    round_l = _reference_warp(maps.m_rl, _reference_warp(maps.m_lr, left))
    round_r = _reference_warp(maps.m_lr, _reference_warp(maps.m_rl, right))
    return _reference_warp_l1(v_l, left, round_l) + _reference_warp_l1(v_r, right, round_r)


def reference_smoothness_loss(maps: AttentionMaps) -> float:
    total = 0.0
    for m in (maps.m_rl, maps.m_lr):
        height, width, _ = m.shape
        if height > 1:
            vertical = sum(
                abs(float(m[i, j, k]) - float(m[i + 1, j, k]))
                for i, j, k in itertools.product(range(height - 1), range(width), range(width))
            )
            total += vertical / ((height - 1) * width * width)
        if width > 1:
            diagonal = sum(
                abs(float(m[i, j, k]) - float(m[i, j + 1, k + 1]))
                for i, j, k in itertools.product(
                    range(height), range(width - 1), range(width - 1)
                )
            )
            total += diagonal / (height * (width - 1) * (width - 1))
    return total


def _max_abs(a: npt.ArrayLike, b: npt.ArrayLike) -> float:
    diff = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    return float(diff.max()) if diff.size else 0.0


def _relative(value: float, reference: float) -> float:
    return abs(value - reference) / max(1.0, abs(reference))


def _check(name: str, error: float, tolerance: float, detail: str | None = None) -> CheckResult:
    return CheckResult(name=name, passed=bool(error <= tolerance), max_error=error, detail=detail)


def _merge(name: str, checks: Iterable[CheckResult]) -> CheckResult:
    """Fold repeated checks of one property into a single worst-case result."""
    merged = list(checks)
    errors = [c.max_error for c in merged if c.max_error is not None]
    failed = [c.detail for c in merged if not c.passed and c.detail]
    return CheckResult(
        name=name,
        passed=all(c.passed for c in merged),
        max_error=max(errors) if errors else None,
        detail=failed[0] if failed else f"{len(merged)} instances",
    )


def _random_maps(rng: np.random.Generator, height: int, width: int) -> AttentionMaps:
    return AttentionMaps(
        m_rl=softmax_lastdim(rng.normal(0, 2, (height, width, width)).astype(np.float32)),
        m_lr=softmax_lastdim(rng.normal(0, 2, (height, width, width)).astype(np.float32)),
    )


def _row_sum_error(m: Tensor) -> float:
    return _max_abs(m.astype(np.float64).sum(axis=-1), 1.0)


def check_scene(
    scene: ToyScene, maps: AttentionMaps | None = None, mask_thresholds: bool = True
) -> list[CheckResult]:
    """Invariant checks of one rendered scene against its analytic attention."""
    if maps is None:
        maps = analytic_attention(scene.disparity_l, scene.occ_l)
    width = maps.width
    right = scene.pair.right
    checks = [
        CheckResult(
            name="analytic_row_stochastic",
            passed=is_row_stochastic(maps.m_rl) and is_row_stochastic(maps.m_lr),
            max_error=max(_row_sum_error(maps.m_rl), _row_sum_error(maps.m_lr)),
        )
    ]

    converted = convert_features(maps.m_rl, right.planes)
    warped = disparity_warp(right, scene.disparity_l, scene.occ_l)
    visible = ~scene.occ_l
    checks.append(
        _check(
            "warp_equivalence",
            _max_abs(converted[visible], warped.planes[visible]),
            WARP_TOLERANCE,
        )
    )

    p = cycle_probability(maps)
    p_relaxed = relaxed_cycle_probability(maps)
    bound_error = max(
        float(np.max(-p, initial=0.0)),
        float(np.max(p - 1.0, initial=0.0)),
        float(np.max(p - p_relaxed, initial=0.0)),
        float(np.max(1.0 - p[visible], initial=0.0)),
        float(np.max(p[scene.occ_l] - 1.0 / width, initial=0.0)),
    )
    checks.append(_check("cycle_bounds", bound_error, ALGEBRA_TOLERANCE))

    v_l, v_r = detect_occlusions(maps)
    if mask_thresholds:
        for view, v, occ in (("left", v_l, scene.occ_l), ("right", v_r, scene.occ_r)):
            occluded_max = float(np.max(v.values[occ], initial=0.0))
            visible_min = float(np.min(v.values[~occ], initial=1.0))
            checks.append(
                CheckResult(
                    name=f"mask_thresholds_{view}",
                    passed=occluded_max < MASK_OCCLUDED_MAX and visible_min > MASK_VISIBLE_MIN,
                    detail=f"occluded max {occluded_max:.4f}, visible min {visible_min:.4f}",
                )
            )

    left = scene.pair.left.planes
    fused = fuse_with_mask(converted, left, v_l.values)
    lo = np.minimum(converted, left)
    hi = np.maximum(converted, left)
    convex_error = max(
        float(np.max(lo - fused, initial=0.0)), float(np.max(fused - hi, initial=0.0))
    )
    checks.append(_check("fusion_convex_bound", convex_error, WARP_TOLERANCE))
    return checks


def _band_width_mismatches(scene: ToyScene) -> tuple[int, int]:
    """Interior occlusion runs whose width differs from the disparity step around them."""
    checked = mismatched = 0
    width = scene.occ_l.shape[1]
    for h in range(scene.occ_l.shape[0]):
        for start, length in occlusion_runs(scene.occ_l[h]):
            if start == 0 or start + length == width:
                continue
            checked += 1
            near = scene.disparity_l[h, start + length]
            far = scene.disparity_l[h, start - 1]
            mismatched += int(length != near - far)
        for start, length in occlusion_runs(scene.occ_r[h]):
            if start == 0 or start + length == width:
                continue
            checked += 1
            near = scene.disparity_r[h, start - 1]
            far = scene.disparity_r[h, start + length]
            mismatched += int(length != near - far)
    return checked, mismatched


@dataclass(frozen=True, eq=False)
class ToyRun:
    """Everything the toy pipeline derives from one scene."""

    scene: ToyScene
    maps: AttentionMaps
    v_l: ValidMask
    v_r: ValidMask
    warped_left: RgbImage
    """Right view converted to the left view with the analytic map."""

    losses: LossReport
    checks: list[CheckResult]


def run_toy(spec: SceneSpec, scale: int = 2) -> ToyRun:
    """Render a scene, derive its masks and losses, and check every invariant.

    The loss terms use an HR rendering of the scaled scene, its bicubic
    downsampling as the LR pair and bicubic upsampling as the SR stand-in.
    """
    scene = render_scene(spec)
    maps = analytic_attention(scene.disparity_l, scene.occ_l)
    v_l, v_r = detect_occlusions(maps)
    warped = RgbImage(convert_features(maps.m_rl, scene.pair.right.planes))

    hr = render_scene(scale_spec(spec, scale)).pair
    down = Fraction(1, scale)
    lr = StereoPair(bicubic_resize(hr.left, down), bicubic_resize(hr.right, down))
    losses = evaluate_losses(bicubic_upscale_pair(lr, scale), hr, lr, maps, v_l, v_r, scale)

    checks = check_scene(scene, maps)
    checked, mismatched = _band_width_mismatches(scene)
    checks.append(
        CheckResult(
            name="occlusion_band_widths",
            passed=mismatched == 0,
            max_error=float(mismatched),
            detail=f"{checked} interior runs",
        )
    )
    return ToyRun(
        scene=scene,
        maps=maps,
        v_l=v_l,
        v_r=v_r,
        warped_left=warped,
        losses=losses,
        checks=checks,
    )


def _parameter_suite() -> list[CheckResult]:
    checks = []
    for scale, target in PARAMETER_TARGETS.items():
        count = param_count(random_archive(scale))
        deviation = abs(count - target) / target
        checks.append(
            _check(f"param_count_{scale}x", deviation, PARAMETER_TOLERANCE, f"{count} parameters")
        )
    return checks


def _kernel_suite(rng: np.random.Generator) -> list[CheckResult]:
    conv_checks = []
    for groups in (1, 2):
        for k in (1, 3):
            height, width = (int(n) for n in rng.integers(1, 6, 2))
            x = rng.uniform(-1, 1, (height, width, 4)).astype(np.float32)
            kernel = rng.uniform(-1, 1, (k, k, 4 // groups, 4)).astype(np.float32)
            bias = rng.uniform(-1, 1, 4).astype(np.float32)
            actual = conv2d(x, kernel, bias, groups=groups)
            error = _max_abs(actual, reference_conv2d(x, kernel, bias, groups))
            conv_checks.append(_check("conv2d_oracle", error, KERNEL_TOLERANCE))
    matmul_checks = []
    for _ in range(4):
        batch, rows, inner, cols = (int(n) for n in rng.integers(1, 6, 4))
        a = rng.uniform(-1, 1, (batch, rows, inner)).astype(np.float32)
        b = rng.uniform(-1, 1, (batch, inner, cols)).astype(np.float32)
        error = _max_abs(batch_matmul(a, b), reference_batch_matmul(a, b))
        matmul_checks.append(_check("batch_matmul_oracle", error, KERNEL_TOLERANCE))
    return [_merge("conv2d_oracle", conv_checks), _merge("batch_matmul_oracle", matmul_checks)]


def _algebra_suite(rng: np.random.Generator, instances: int = 100) -> list[CheckResult]:
    stochastic, shift, zero_mean, transpose, shuffle = [], [], [], [], []
    for _ in range(instances):
        height = int(rng.integers(1, 5))
        width = int(rng.integers(2, 9))
        # Scores on a 2^-10 grid so adding a half-integer offset is exact.
        s = (np.round(rng.normal(0, 3, (height, width, width)) * 1024) / 1024).astype(np.float32)
        maps = attention_from_scores(s)
        stochastic.append(
            CheckResult(
                name="row_stochastic",
                passed=is_row_stochastic(maps.m_rl, ALGEBRA_TOLERANCE)
                and is_row_stochastic(maps.m_lr, ALGEBRA_TOLERANCE),
                max_error=max(_row_sum_error(maps.m_rl), _row_sum_error(maps.m_lr)),
            )
        )
        offset = (rng.integers(-16, 17, (height, width, 1)) / 2).astype(np.float32)
        shifted = attention_from_scores(s + offset)
        shift.append(
            _check("softmax_shift_invariance", _max_abs(shifted.m_rl, maps.m_rl), ALGEBRA_TOLERANCE)
        )

        f = rng.normal(0, 1, (height, width, 5)).astype(np.float32)
        zero_mean.append(
            _check(
                "whiten_zero_mean",
                float(np.abs(whiten(f).astype(np.float64).mean(axis=1)).max()),
                ALGEBRA_TOLERANCE,
            )
        )
        transpose.append(
            CheckResult(
                name="transpose_involution",
                passed=bool(np.array_equal(transpose_last2(transpose_last2(s)), s)),
            )
        )
        r = int(rng.integers(1, 4))
        t = rng.normal(0, 1, (height, width, 3 * r * r)).astype(np.float32)
        shuffle.append(
            CheckResult(
                name="pixel_shuffle_involution",
                passed=bool(np.array_equal(pixel_unshuffle(pixel_shuffle(t, r), r), t)),
            )
        )
    return [
        _merge("row_stochastic", stochastic),
        _merge("softmax_shift_invariance", shift),
        _merge("whiten_zero_mean", zero_mean),
        _merge("transpose_involution", transpose),
        _merge("pixel_shuffle_involution", shuffle),
    ]


def _oracle_suite(seed: int, scenes: int = 25) -> list[CheckResult]:
    by_name: dict[str, list[CheckResult]] = {}
    for index in range(scenes):
        scene = render_scene(random_scene_spec(seed + index))
        for check in check_scene(scene, mask_thresholds=False):
            by_name.setdefault(check.name, []).append(check)
    return [_merge(f"random_scenes_{name}", checks) for name, checks in by_name.items()]


def _default_scene_suite() -> list[CheckResult]:
    scene = render_scene(default_scene_spec())
    checks = check_scene(scene)
    checked, mismatched = _band_width_mismatches(scene)
    checks.append(
        CheckResult(
            name="occlusion_band_widths",
            passed=checked > 0 and mismatched == 0,
            max_error=float(mismatched),
            detail=f"{checked} interior runs",
        )
    )
    return [
        CheckResult(
            name=f"default_scene_{c.name}",
            passed=c.passed,
            max_error=c.max_error,
            detail=c.detail,
        )
        for c in checks
    ]


def _cycle_suite(rng: np.random.Generator, instances: int = 100) -> list[CheckResult]:
    bounds, relaxed, exact, oracle = [], [], [], []
    for index in range(instances):
        maps = _random_maps(rng, int(rng.integers(1, 4)), int(rng.integers(2, 9)))
        p = cycle_probability(maps)
        p_relaxed = relaxed_cycle_probability(maps)
        bounds.append(
            _check(
                "cycle_probability_bounds",
                max(float(np.max(-p)), float(np.max(p - 1.0)), 0.0),
                ALGEBRA_TOLERANCE,
            )
        )
        relaxed.append(
            _check(
                "relaxed_dominates", max(float(np.max(p - p_relaxed)), 0.0), ALGEBRA_TOLERANCE
            )
        )
        exact.append(
            CheckResult(
                name="relaxed_delta0_exact",
                passed=bool(np.array_equal(relaxed_cycle_probability(maps, 0), p)),
            )
        )
        if index < 10:
            oracle.append(
                _check(
                    "cycle_probability_oracle",
                    max(
                        _max_abs(p, reference_cycle_probability(maps)),
                        _max_abs(p_relaxed, reference_relaxed_cycle_probability(maps)),
                    ),
                    ALGEBRA_TOLERANCE,
                )
            )
    return [
        _merge("cycle_probability_bounds", bounds),
        _merge("relaxed_dominates", relaxed),
        _merge("relaxed_delta0_exact", exact),
        _merge("cycle_probability_oracle", oracle),
    ]


def _identity_maps(height: int, width: int) -> AttentionMaps:
    eye = np.broadcast_to(np.eye(width, dtype=np.float32), (height, width, width)).copy()
    return AttentionMaps(m_rl=eye, m_lr=eye.copy())


def _circulant_maps(height: int, width: int, disparity: int) -> AttentionMaps:
    shift = np.roll(np.eye(width, dtype=np.float32), -disparity, axis=1)
    m_rl = np.broadcast_to(shift, (height, width, width)).copy()
    return AttentionMaps(m_rl=m_rl, m_lr=transpose_last2(m_rl))


def _loss_suite(rng: np.random.Generator) -> list[CheckResult]:
    height, width = 5, 6
    x = rng.uniform(0, 1, (height, width, 3)).astype(np.float32)
    ones = ValidMask(np.ones((height, width), dtype=np.float32))
    identity = _identity_maps(height, width)
    uniform = AttentionMaps(
        m_rl=np.full((height, width, width), 1.0 / width, dtype=np.float32),
        m_lr=np.full((height, width, width), 1.0 / width, dtype=np.float32),
    )
    constant = np.full((height, width, 3), 0.3, dtype=np.float32)
    zero = np.zeros_like(x)
    fixed_points = {
        "photometric_identity": photometric_residual_loss(x, x, identity, ones, ones),
        "cycle_identity": cycle_residual_loss(x, x, identity, ones, ones),
        "cycle_uniform_constant": cycle_residual_loss(constant, constant, uniform, ones, ones),
        "smoothness_identity": smoothness_loss(identity),
        "smoothness_uniform": smoothness_loss(uniform),
        "smoothness_constant_disparity": smoothness_loss(_circulant_maps(height, width, 2)),
        "consistency_perfect_sr": consistency_residual_loss(zero, zero, identity, ones, ones),
    }
    checks = [
        _check(f"loss_fixed_point_{name}", value, LOSS_FIXED_POINT_TOLERANCE)
        for name, value in fixed_points.items()
    ]
    report = total_loss(1.0, 1.0, 1.0, 1.0, 1.0, LOSS_WEIGHT)
    checks.append(_check("loss_total_weighting", abs(report.total - 1.4), 1e-6))

    oracle = []
    for _ in range(5):
        h, w = (int(n) for n in rng.integers(2, 7, 2))
        maps = _random_maps(rng, h, w)
        x_l, x_r = (rng.uniform(0, 1, (h, w, 3)).astype(np.float32) for _ in range(2))
        v_l, v_r = (ValidMask(rng.uniform(0, 1, (h, w)).astype(np.float32)) for _ in range(2))
        pairs = (
            (
                photometric_residual_loss(x_l, x_r, maps, v_l, v_r),
                reference_photometric_loss(x_l, x_r, maps, v_l, v_r),
            ),
            (
                cycle_residual_loss(x_l, x_r, maps, v_l, v_r),
                reference_cycle_loss(x_l, x_r, maps, v_l, v_r),
            ),
            (
                consistency_residual_loss(x_l, x_r, maps, v_l, v_r),
                reference_photometric_loss(x_l, x_r, maps, v_l, v_r),
            ),
            (smoothness_loss(maps), reference_smoothness_loss(maps)),
        )
        oracle.append(
            _check(
                "loss_oracle",
                max(_relative(value, ref) for value, ref in pairs),
                LOSS_ORACLE_TOLERANCE,
            )
        )
    checks.append(_merge("loss_oracle", oracle))
    return checks


def _random_pair(rng: np.random.Generator, height: int, width: int) -> StereoPair:
    return StereoPair(
        RgbImage(rng.uniform(0, 1, (height, width, 3)).astype(np.float32)),
        RgbImage(rng.uniform(0, 1, (height, width, 3)).astype(np.float32)),
    )


def _pair_error(a: StereoPair, b: StereoPair) -> float:
    return max(_max_abs(a.left.planes, b.left.planes), _max_abs(a.right.planes, b.right.planes))


def _network_suite(seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    archive = mirror_symmetric(random_archive(2, seed))
    pair = _random_pair(rng, 16, 24)
    out = ipassr_forward(pair, archive)
    again = ipassr_forward(pair, archive)
    swapped = ipassr_forward(pair.swapped(), archive)
    mirrored = ipassr_forward(pair.mirrored(), archive)
    same = ipassr_forward(StereoPair(pair.left, pair.left), archive)
    return [
        _check("network_swap_symmetry", _pair_error(swapped.sr, out.sr.swapped()), NETWORK_TOLERANCE),
        _check(
            "network_mirror_equivariance",
            _pair_error(mirrored.sr, out.sr.mirrored()),
            NETWORK_TOLERANCE,
        ),
        CheckResult(
            name="network_determinism",
            passed=bool(
                np.array_equal(again.sr.left.planes, out.sr.left.planes)
                and np.array_equal(again.sr.right.planes, out.sr.right.planes)
            ),
        ),
        _check(
            "network_identical_views",
            _max_abs(same.sr.left.planes, same.sr.right.planes),
            NETWORK_TOLERANCE,
        ),
        CheckResult(
            name="network_output_dims",
            passed=out.sr.height == 32 and out.sr.width == 48,
            detail=f"{out.sr.height}x{out.sr.width}",
        ),
    ]


def _expect_archive_error(name: str, data: bytes, fragment: str) -> CheckResult:
    try:
        loads(data)
    except ArchiveError as err:
        return CheckResult(name=name, passed=fragment in str(err), detail=str(err))
    return CheckResult(name=name, passed=False, detail="archive was accepted")


def _archive_suite(seed: int) -> list[CheckResult]:
    archive = random_archive(2, seed)
    data = dumps(archive)
    restored = loads(data)
    exact = restored.names == archive.names and all(
        restored.tensor(name).tobytes() == t.tobytes() for name, t in archive.items()
    )
    missing = random_archive(2, seed)
    truncated_names = {name: t for name, t in missing.items() if name != "conv2f.bias"}
    return [
        CheckResult(name="archive_round_trip", passed=exact),
        _expect_archive_error("archive_bad_magic", b"XXXX" + data[4:], "bad magic"),
        _expect_archive_error("archive_truncated", data[: len(data) // 2], "truncated"),
        _expect_archive_error(
            "archive_missing_slot",
            dumps(WeightArchive(2, truncated_names)),
            "conv2f.bias",
        ),
    ]


def run_selftest(seed: int = 0) -> list[CheckResult]:
    """Run every invariant and oracle suite."""
    rng = np.random.default_rng(seed)
    suites: list[tuple[str, Callable[[], list[CheckResult]]]] = [
        ("parameters", _parameter_suite),
        ("kernels", lambda: _kernel_suite(rng)),
        ("algebra", lambda: _algebra_suite(rng)),
        ("oracle", lambda: _oracle_suite(seed)),
        ("default_scene", _default_scene_suite),
        ("cycle", lambda: _cycle_suite(rng)),
        ("losses", lambda: _loss_suite(rng)),
        ("network", lambda: _network_suite(seed)),
        ("archive", lambda: _archive_suite(seed)),
    ]
    results: list[CheckResult] = []
    for name, suite in suites:
        _LOGGER.debug("Running %s suite", name)
        try:
            results.extend(suite())
        except StereoSrError as err:
            _LOGGER.debug("Suite %s raised %s", name, err)
            results.append(CheckResult(name=f"{name}_suite", passed=False, detail=str(err)))
    return results
