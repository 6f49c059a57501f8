"""Robust multiuser MISO downlink beamforming toolkit.

Builds worst-case rate-constrained power-minimization designs under bounded
channel uncertainty, solves them with a self-contained conic interior-point
solver, and evaluates a-priori/posterior certificates for when the optimal
transmit covariances are rank one (i.e. plain beamforming is optimal).
"""

from robust_miso.certificates import (
    CertificateReport,
    certificate_report,
    cur_probability_bound,
    direction_margin,
    fact3_check,
    model_margins,
    projector_gains,
    prop4_mu_bound,
    remark1_margin,
    song_margin,
    theorem1_margin,
)
from robust_miso.conic import (
    ConicProgram,
    NonNeg,
    Psd,
    SolveOutcome,
    SolverSettings,
    Status,
    cone_distance,
    solve,
)
from robust_miso.formulations import (
    BoxUncertainty,
    ChannelScenario,
    DesignSolution,
    EllipsoidUncertainty,
    FddUncertainty,
    LiftedChannel,
    SphereUncertainty,
    build_fixed_dual,
    build_fixed_sdp,
    build_mu_max_pair,
    build_robust_sdp,
    extract_solution,
    gamma_from_rate,
    worst_case_margin,
)
from robust_miso.harness import (
    CertificateStudyReport,
    CounterexampleRecord,
    DualityAuditReport,
    GapAuditReport,
    KktRankAuditReport,
    MmfResult,
    RankStudyReport,
    StudyConfig,
    certificate_study,
    counterexample_instance,
    duality_audit,
    gap_audit,
    kkt_rank_audit,
    mmf_rate,
    rank_study,
    sample_scenario,
)
from robust_miso.hermitian import (
    TrsInstance,
    eig_hermitian,
    hermitian_from_real_embedding,
    numerical_rank,
    orth_complement_projector,
    real_embedding,
    trs_maximize,
)

__all__ = [
    "BoxUncertainty",
    "CertificateReport",
    "CertificateStudyReport",
    "ChannelScenario",
    "ConicProgram",
    "CounterexampleRecord",
    "DesignSolution",
    "DualityAuditReport",
    "EllipsoidUncertainty",
    "FddUncertainty",
    "GapAuditReport",
    "KktRankAuditReport",
    "LiftedChannel",
    "MmfResult",
    "NonNeg",
    "Psd",
    "RankStudyReport",
    "SolveOutcome",
    "SolverSettings",
    "SphereUncertainty",
    "Status",
    "StudyConfig",
    "TrsInstance",
    "build_fixed_dual",
    "build_fixed_sdp",
    "build_mu_max_pair",
    "build_robust_sdp",
    "certificate_report",
    "certificate_study",
    "cone_distance",
    "counterexample_instance",
    "cur_probability_bound",
    "direction_margin",
    "duality_audit",
    "eig_hermitian",
    "extract_solution",
    "fact3_check",
    "gamma_from_rate",
    "gap_audit",
    "hermitian_from_real_embedding",
    "kkt_rank_audit",
    "mmf_rate",
    "model_margins",
    "numerical_rank",
    "orth_complement_projector",
    "projector_gains",
    "prop4_mu_bound",
    "rank_study",
    "real_embedding",
    "remark1_margin",
    "sample_scenario",
    "solve",
    "song_margin",
    "theorem1_margin",
    "trs_maximize",
    "worst_case_margin",
]

__version__ = "0.1.0"
