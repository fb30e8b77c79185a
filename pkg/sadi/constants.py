"""
Numerical constants and defaults for surface-aware disparity inpainting.
"""

# Guard added to denominators / radicands that can reach zero
EPS = 1e-8

# Smoothing added to histogram masses before KL / JS
HIST_SMOOTHING = 1e-12

# Surface-normal stencil: central difference [-1/2, 0, 1/2]
CENTRAL_DIFFERENCE = (-0.5, 0.0, 0.5)

# Loss weights (beta: adversarial, phi: L1, alpha: vectorial)
DEFAULT_BETA = 0.001
DEFAULT_PHI = 1.0
DEFAULT_ALPHA = 1.0
DEFAULT_LAMBDA_GP = 10.0
DEFAULT_N_CRITIC = 5

# Adam moments as used by WGAN-GP training
ADAM_LR = 1e-4
ADAM_BETA1 = 0.5
ADAM_BETA2 = 0.9

# Attention branch
ATTENTION_PATCH = 3
ATTENTION_PROPAGATION_K = 3
ATTENTION_SOFTMAX_SCALE = 10.0
ATTENTION_STRIDE = 1

# Toy training geometry
DEFAULT_IMAGE_SIZE = 64
DEFAULT_HOLE_SIZE = 24
DEFAULT_BATCH_SIZE = 4
DEFAULT_WIDTH = 8
LEAKY_SLOPE = 0.2

# Evaluation binning
DEPTH_BINS = 256
SURFACE_BINS = 64
SURFACE_RANGE = (-1.0, 1.0)

# File formats
PGM_MAXVAL = 65535
PGM_DEFAULT_SCALE = 256.0
CITYSCAPES_SCALE = 256.0
CHECKPOINT_MAGIC = b"SADICKPT"
CHECKPOINT_VERSION = 1

# Training log columns
TRAIN_LOG_COLUMNS = [
    "step", "phase", "critic_iter",
    "g_total", "g_adv", "g_l1", "g_vec",
    "d_total", "d_wasserstein_estimate", "d_gp",
]

# Distance table layout
DISTANCE_METRICS = [
    "jensen_shannon",
    "kullback_leibler",
    "wasserstein",
    "hist_intersection",
    "hist_correlation",
]
DISTANCE_TITLES = {
    "jensen_shannon": "Jensen-Shannon",
    "kullback_leibler": "Kullback-Leibler",
    "wasserstein": "Wasserstein",
    "hist_intersection": "Hist. Intersection",
    "hist_correlation": "Hist. Correlation",
}

# Ablation rows: (name, vectorial_loss_on, surface_attention_on, surface_discrimination_on)
ABLATION_ROWS = [
    ("CA", False, False, False),
    ("CA + VL", True, False, False),
    ("SA + VL", True, True, False),
    ("Proposal", True, True, True),
]
