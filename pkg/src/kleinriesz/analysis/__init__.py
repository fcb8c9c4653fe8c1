from .continuation import ContinuationPath, alpha_grid, continue_alpha, endpoint_change
from .fields import FunctionField, GridField, ManifoldInterpolant, householder_to, unfolded_field
from .moving_plane import (INTERP_FLOOR, MovingPlaneReport, boundary_derivative, clearance,
                           moving_plane_scan, reflect)
from .rescaling import (BubbleFit, RescaledField, bubble_fit, chart_radius, kernel_limit_gap,
                        rescale, zeta_map)
