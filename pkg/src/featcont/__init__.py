"""featcont: feature-continuation training.

Gradually shift a learner's input distribution from a focused feature
subspace (grayscale digits, background-free shapes, heavily augmented
batches) to the full feature space, driven by a single per-epoch parameter
alpha in [0, 1].
"""

from .augment import MixedBatch, anneal_lambda, augmented_epoch, cutmix, mixup
from .datasets import (
    ColoredMnistSet,
    Palette,
    RawMnist,
    build_colored_mnist,
    colorize,
    load_paired,
    load_raw_mnist,
    make_composite_set,
    make_palette,
    nearest_mean_color_accuracy,
    save_paired,
    synthetic_digits,
    to_grayscale,
    write_ppm,
)
from .harness import (
    ExperimentData,
    MetricsRecord,
    RunConfig,
    RunResult,
    Summary,
    build_datasets,
    compare_policies,
    evaluate,
    run,
    synth_dataset,
)
from .network import (
    Conv2D,
    Dense,
    Flatten,
    MaxPool,
    Network,
    OptimizerConfig,
    ReLU,
    default_digit_net,
    forward,
    init_network,
    load_network,
    loss_and_grads,
    optimizer_step,
    save_network,
)
from .rng import KeyedRng
from .schedule import (
    AlphaSchedule,
    Constant,
    Linear,
    PiecewiseLinear,
    Step,
    alpha_at,
    identity_rate,
    parse_schedule,
)
from .streams import PairedDataset, StreamConfig, blend, epoch_stream, mix_draw

__version__ = "0.1.0"
