from .channels import (
    CPTReport,
    ChoiMatrix,
    InvalidStateError,
    KrausChannel,
    NotCompletelyPositiveError,
    Superoperator,
    apply_superop,
    as_matrix,
    batched_cpt_data,
    channel_convert,
    check_density_matrix,
    choi_to_kraus,
    choi_to_superop,
    cpt_check,
    haar_unitary,
    identity_superop,
    is_unitary,
    ket,
    kraus_to_choi,
    kraus_to_superop,
    projector,
    random_density_matrix,
    random_pure_state,
    superop_to_choi,
    trace_deviation,
    trace_distance,
    transpose_superop,
    unitary_superop,
)
from .linalg import DimensionError, expm, partial_trace, tensor, unvec, vec
from .operators import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    decay_lindbladian,
    exchange_hamiltonian,
    lindbladian,
    map_norm,
)
