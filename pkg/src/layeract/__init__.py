"""Layer-level activation functions with exact gradients and analysis tools.

The layer-level mechanism gates each raw pre-activation by a bounded scale
evaluated at the layer-normalized input, ``a_i = y_i * s(n_i)``, keeping
per-sample mean/variance information in the outputs while making the gate
— and with it the noise response — depend on the whole layer.
"""

from .activations import (
    HardSiLU,
    LeakyReLU,
    Mish,
    PReLU,
    ReLU,
    ScaleFunction,
    SiLU,
    activation_names,
    elem_backward,
    elem_fluctuation,
    elem_forward,
    make_activation,
    scale_eval,
)
from .core import Rng, layer_stats, matvec_t, rng_normal
from .data import (
    BlurNoise,
    GaussianNoise,
    ImageSet,
    PoissonNoise,
    apply_noise,
    load_dataset,
    load_idx,
    paper_noise_suite,
    parse_noise_spec,
)
from .errors import (
    DivergenceError,
    FormatError,
    InvalidInput,
    LayerActError,
    ShapeError,
    Unsupported,
    VersionError,
)
from .layer_act import (
    LaHardSiLU,
    LaSiLU,
    LayerActState,
    bound_check,
    curve_emit,
    la_backward,
    la_fluctuation,
    la_forward,
    la_normalize,
)
from .network import Network, DenseLayer, build_mlp, forward_net, he_init
from .train import (
    Checkpoint,
    EpochMetrics,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
