"""Diffusion-based facial expression animation on fixed-topology meshes.

The library generates temporally coherent deformation-field animations with
a spiral-convolution denoiser: one noise realization is shared by all frames
of an animation, and frames beyond the first start from a partially denoised
cached state, so they can be computed in parallel.
"""

from .mesh import (
    AnimationClip,
    DeformationField,
    TopologyReport,
    TriangleMesh,
    apply_deformation,
    compute_deformation,
    load_mesh,
    save_mesh,
    validate_topology,
)
from .spirals import SpiralTable, build_spirals
from .network import (
    ConditioningVector,
    DenoiserConfig,
    DenoiserNetwork,
    IdentityEncoder,
    denoise,
    encode_identity,
    spiral_conv,
)
from .schedule import NoiseSchedule, forward_sample, linear_schedule
from .sampling import (
    NoiseBundle,
    SamplerConfig,
    SampleStats,
    ddpm_step,
    generate_animation,
    sample_noise_bundle,
)
from .training import (
    OptimizerState,
    TrainConfig,
    adam_step,
    compute_gradients,
    lr_at,
    train,
    training_loss,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .datapipe import (
    DatasetSplit,
    ExpressionSignal,
    ExtremenessFactor,
    extremeness_factor,
    make_expression_signal,
    progression_signal,
    split_subjectwise,
    standardize_frames,
)
from .evalkit import (
    PcaEncoder,
    SequenceClassifier,
    SpecificityReport,
    classify,
    encode_pca,
    error_map,
    fit_pca,
    specificity,
    train_classifier,
)
from .synth import icosphere, synth_dataset

__version__ = "0.1.0"
