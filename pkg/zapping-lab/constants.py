from enum import Enum


# Enum for parameter partition labels
class Partition(Enum):
    conv = 0
    fc = 1


# Enum for pre-training methods
class Method(Enum):
    iid = 0
    asb = 1
    meta_asb = 2


# Enum for zap policy modes
class ZapMode(Enum):
    off = 0
    per_episode_class = 1
    iid_cadence = 2


# Enum for transfer protocols
class TransferMode(Enum):
    sequential = 0
    iid = 1


# Enum for metrics phases
class Phase(Enum):
    pretrain = 0
    transfer = 1


# Numerics
INSTANCE_NORM_EPS = 1e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
FD_STEP = 1e-5
FD_ABS_FLOOR = 1e-8

# Conv geometry (3x3, stride 1, zero pad 1; pool 2x2 stride 2)
KERNEL_SIZE = 3
POOL_SIZE = 2

# Named i.i.d. zap amounts, as fractions of the head width
ZAP_AMOUNTS = {
    'small': 0.1,
    'medium': 0.5,
    'large': 0.9,
}

# Learning-rate grids
PRETRAIN_LR_GRID = [0.1, 0.01, 0.001]
TRANSFER_LR_GRID = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1]

# Default seed counts for sweeps (pretrain x transfer = 30 trials)
N_PRETRAIN_SEEDS = 3
N_TRANSFER_SEEDS = 10

# Significance threshold used in comparison reports
P_VALUE_THRESHOLD = 0.05

# Number of randomized element tests and whole trials to run
N_ELEMENT_TESTS = 20
N_TRIAL_TESTS = 3
N_ZAP_EVENTS = 1000

# Random seed for testing
TEST_RANDOM_SEED = 124
