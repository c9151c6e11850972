"""qclab: a desk-scale quantum adversarial machine-learning laboratory.

Train variational quantum classifiers on heterogeneous binary tasks, merge
them with EWC continual learning, and craft one universal adversarial
perturbation that deceives the merged classifier on both tasks.
"""
from .statevector import (
    GateKind,
    GateOp,
    Statevector,
    apply_gate,
    expectation_diagonal,
    fidelity,
    normalize,
)
from .circuit import (
    Architecture,
    CircuitModel,
    DecodingRule,
    build_fully_connected,
    build_qcnn,
    forward,
    forward_batch,
    init_params,
    predict,
)
from .gradients import GradientBundle, loss_and_gradients, mean_input_gradient
from .training import AdamState, TrainConfig, TrainReport, adam_step, evaluate, train
from .continual import (
    EwcConfig,
    FisherDiagonal,
    continual_train,
    ewc_penalty_gradient,
    fisher_information,
)
from .attack import (
    AttackConfig,
    AttackReport,
    export_adversarial_pairs,
    fgsm_per_sample,
    universal_qbim,
)
from .datasets import (
    Dataset,
    SptConfig,
    generate_spt,
    load_cache,
    load_grayscale_dir,
    load_mnist_idx,
    save_cache,
)

__version__ = "0.1.0"
