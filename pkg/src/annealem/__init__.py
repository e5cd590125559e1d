"""Gaussian-mixture estimation by EM and two deterministic annealing variants.

The classical EM fixed point is kept while the E step is annealed, either by
tempering the posterior (DSAEM) or by coupling the component basis through an
off-diagonal quantum term that is switched off over iterations (DQAEM).  A
paired-trial benchmark harness measures how often each variant recovers the
generating means from random initializations.
"""

from .bench import (
    AlgorithmOutcome,
    BenchReport,
    SuccessCriterion,
    TrialRecord,
    emit_trace_table,
    is_success,
    match_components,
    run_benchmark,
    splitmix64,
    trial_seed,
)
from .data_io import (
    CsvFormatError,
    GeneratorSpec,
    fit_result_from_dict,
    fit_result_to_dict,
    params_from_dict,
    params_to_dict,
    read_csv,
    read_result_json,
    sample_gmm,
    three_cluster_spec,
    write_csv,
    write_result_json,
)
from .estimators import (
    FitConfig,
    FitResult,
    Schedule,
    TraceRow,
    default_schedule,
    fit,
    m_step,
    make_schedule,
    random_init,
)
from .linalg import SpectralDecomp, log_sum_exp, matexp_taylor_oracle, sym_eig, sym_eig_batch
from .model import (
    EPSILON_COV,
    WEIGHT_FLOOR,
    Dataset,
    GmmParams,
    InvalidParameterError,
    hamiltonian_diag,
    hamiltonian_diags,
    log_gaussian,
    log_likelihood,
)
from .posteriors import (
    QuantumEStepResult,
    check_responsibilities,
    classical_posterior,
    entropy_term,
    q_function,
    quantum_estep,
    responsibility_validation_count,
    set_responsibility_validation,
    tempered_posterior,
    u_function,
    uniform_coupling,
)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmOutcome",
    "BenchReport",
    "CsvFormatError",
    "Dataset",
    "EPSILON_COV",
    "FitConfig",
    "FitResult",
    "GeneratorSpec",
    "GmmParams",
    "InvalidParameterError",
    "QuantumEStepResult",
    "Schedule",
    "SpectralDecomp",
    "SuccessCriterion",
    "TraceRow",
    "TrialRecord",
    "WEIGHT_FLOOR",
    "check_responsibilities",
    "classical_posterior",
    "default_schedule",
    "emit_trace_table",
    "entropy_term",
    "fit",
    "fit_result_from_dict",
    "fit_result_to_dict",
    "hamiltonian_diag",
    "hamiltonian_diags",
    "is_success",
    "log_gaussian",
    "log_likelihood",
    "log_sum_exp",
    "m_step",
    "make_schedule",
    "match_components",
    "matexp_taylor_oracle",
    "params_from_dict",
    "params_to_dict",
    "q_function",
    "quantum_estep",
    "random_init",
    "responsibility_validation_count",
    "read_csv",
    "read_result_json",
    "run_benchmark",
    "sample_gmm",
    "set_responsibility_validation",
    "splitmix64",
    "sym_eig",
    "sym_eig_batch",
    "tempered_posterior",
    "three_cluster_spec",
    "trial_seed",
    "u_function",
    "uniform_coupling",
    "write_csv",
    "write_result_json",
]
