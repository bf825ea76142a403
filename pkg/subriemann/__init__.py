from ._version import __version__
from .FieldExpr import Expr, parse_expression, differentiate
from .StructureSpec import StructureSpec, parse_model, load_model
from .Geometry import Frame, GrowthVector, bracket_field, frame_matrix, growth_vector, horizontality_defect, \
    project_horizontal, structure_functions
from .Connection import christoffels, horizontal_divergence, horizontal_gradient, horizontal_hessian, \
    parallel_transport, covariant_derivative_along, sublaplacian
from .Geodesics import FrameCurve, HorizontalCurve, nonholonomic_geodesic, horizontal_exponential, \
    riemannian_geodesic, geodesic_from_constraints
from .Connectivity import MultiIndex, BrokenGeodesic, AdaptedFrame, adapted_frame, commutator_flow, F_map, \
    steer, dh_upper, dc_lower, ballbox_probe, segment_count
from .Models import builtin, heisenberg_area, heisenberg_lift, heisenberg_plan, heisenberg_dc, carnot_dilate, \
    PlanarPolyline
from .Convexity import ConvexityVerdict, nconvexity_by_hessian, nconvexity_by_geodesics, lower_bound_check, \
    lipschitz_estimate
from .core import enums
from .core.exceptions import SubRiemannError
