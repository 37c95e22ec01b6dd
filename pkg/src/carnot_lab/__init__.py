"""Numerical laboratory for sub-Finsler free Carnot groups of step two."""
from .abnormal import (AbnormalDistance, GrassmannPlane, abnormal_distance, abnormal_distance_batch,
                       abnormal_distance_rank3, in_tube, plane_distance)
from .controls import (Control, HorizontalPath, concat, concat_many, endpoint, evaluate, length)
from .distance import (DistanceEstimate, MetricConstants, OptimizerConfig, estimate_dcc, estimate_M,
                       exact_heisenberg_l1, heisenberg_l1_gap)
from .errors import *  # noqa: F401,F403
from .group import (AdequateProduct, GroupElement, GroupModel, dilate, inverse, multiply,
                    project_horizontal, radial_project, wedge)
from .heights import max_volume_certificate, min_height, span_coefficients, volume_m
from .norms import SubFinslerNorm, norm_equivalence_constant
from .surgery import (DerivedConstants, SurgeryPlan, central_correction_path, derived_constants,
                      lipschitz_competitor, tube_endpoint_check, wedge_decompose)

__version__ = "0.1.0"
