from .base import MomentModel, StarSet
from .example8 import (
    BlockIdentityReport,
    BlockPosition,
    BlockSchedule,
    Example8Model,
    IdentityCheck,
    QMassReport,
    build_example8,
    envelope_check,
    q_mass_bound,
    q_of,
    slow_variation_profile,
    verify_block_identities,
)
from .factory import build_model, sample_X, trunc_cov
from .gaussian import GaussianModel
from .independent import IndependentComponentsModel, NormalLaw, RademacherLaw, StudentTLaw, make_law
from .sampling import AliasTable
