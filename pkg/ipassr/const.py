"""Constants for the stereo super-resolution engine."""

from fractions import Fraction

LEAKY_SLOPE = 0.1
"""Slope of the leaky rectifier used wherever the network needs an activation."""

BN_EPSILON = 1e-5
FEATURE_CHANNELS = 64
GROWTH_RATE = 24
FUSION_GROWTH_RATE = 32
RDB_LAYERS = 4
RDB_COUNT = 4
TRANSITION_GROUPS = 4
CALAYER_REDUCTION = 16

TAU = 5.0
"""Steepness of the tanh valid mask."""

DELTA_MAX = 2
"""Relaxation of the cycle-consistency check, in pixels."""

LOSS_WEIGHT = 0.1
"""Weight of the regularization terms in the total loss."""

SUPPORTED_SCALES = (2, 4)
RESIZE_SCALES = (Fraction(1, 4), Fraction(1, 2), Fraction(2), Fraction(4))
BICUBIC_A = -0.5

PSNR_SENTINEL_DB = 99.0
"""Reported in place of an infinite PSNR for identical images."""

CROP_LEFT_PIXELS = 64
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

ARCHIVE_MAGIC = b"IPSR"
ARCHIVE_VERSION = 1

THREADS_ENV = "IPASSR_THREADS"

MASK_OCCLUDED_MAX = 0.2
MASK_VISIBLE_MIN = 0.95
