"""Numerical tolerances shared across modules."""

GRAVITY = 9.81

ROTATION_TOL = 1e-9  # ||R^T R - I||_F and |det R - 1|
SKEW_TOL = 1e-9
UNIT_TOL = 1e-9
SYMMETRY_TOL = 1e-9  # relative, Frobenius
SMALL_ANGLE = 1e-8  # Rodrigues switches to its Taylor series below this
MIN_RANGE = 1e-6  # m, below which a bearing is undefined
SINGULAR_GAMMA_TOL = 1e-9
PE_RELATIVE_THRESHOLD = 1e-6  # lambda_min >= threshold * lambda_max
LAMBDA_PI_COND_MAX = 1e12
UNSTABLE_EQ_TOL = 1e-3  # |tr(R^T R_hat) + 1|
