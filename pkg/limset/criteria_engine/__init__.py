from .eigen import EigenSystem, eigensystem, eigensystem_from_cov, jacobi_eigh
from .membership import (
    AlphaEstimate,
    BlockPlan,
    MembershipVerdict,
    MemberStatus,
    alpha0,
    build_plan,
    coordinate_alphas,
    function_membership,
    point_membership,
)
from .normalizers import NormalizerReport, NormalizerSeq, RegularityCheck, tail_summability, validate_normalizer
from .predicted import Ellipsoid, PointCloud, PredictedSets, predicted_sets
from .series import Classification, SeriesVerdict, classify_block_masses, series_classify
