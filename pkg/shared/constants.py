from pathlib import Path

# Path constants

REPO_PATH = Path(__file__).resolve().parent.parent

SCENARIOS_DIR = REPO_PATH / "scenarios"
DEFAULT_OUT_DIR = REPO_PATH / "out"

TRAJECTORY_FILENAME_TEMPLATE = "{case_id}_trajectory.csv"
REPORT_FILENAME_TEMPLATE = "{case_id}_report.json"
SUMMARY_FILENAME = "summary.json"
UNCERTIFIED_MARKER_FILENAME = "UNCERTIFIED"

# Numerical tolerances

CONTAINS_TOL = 1e-9
FEASIBILITY_TOL = 1e-8
BOUNDARY_TOL = 1e-10
DEGENERATE_NORM = 1e-12
SYMMETRY_TOL = 1e-12
QP_SYMMETRY_TOL = 1e-10
QP_MIN_EIGENVALUE = 1e-10
QP_RIDGE = 1e-9
DUAL_TOL = 1e-9
STRICT_MARGIN_FLOOR = 1e-9
CONE_TOL = 1e-8

# Solver limits
LP_PIVOT_FACTOR = 10
QP_ITERATION_FACTOR = 100
DELTA_MAX = 1e6

# Defaults
DEFAULT_RHO = 0.5
DEFAULT_GAP_DIRECTIONS = 64
DEFAULT_VIOLATION_TOL = 1e-6
DEFAULT_CONE_BAND = 0.05
DEFAULT_ANGLE_TOL = 1e-6
DEFAULT_DEDUP_DISTANCE = 1e-6
MIN_ACCEPTANCE_RATE = 1e-4
MAX_SIM_STEPS = 10_000_000
GAUSS_NEWTON_ITERATIONS = 60
PLOT_CURVE_POINTS = 256
FEASIBILITY_INTERIOR_FRACTION = 0.9

# Certification defaults used by the CLI
DEFAULT_BOUNDARY_SAMPLES = 200
DEFAULT_SWEEP_SAMPLES = 500
DEFAULT_INTERSECTION_STARTS = 32


class FieldNames:
    """Standardized field names used in reports, CSV headers and scenario files"""

    # RunReport fields
    MAX_H = "max_h"
    MIN_CHEB_RADIUS = "min_cheb_radius"
    VIOLATIONS = "violations"
    EXIT_REASON = "exit_reason"
    EXIT_STEP = "exit_step"
    WALL_TIME = "wall_time"
    POLICY_EVENTS = "policy_events"
    CERTIFIED = "certified"
    GAMMA = "gamma"

    # CertificationReport fields
    STRICT_CBF = "strict_cbf"
    TRANSVERSALITY = "transversality"
    FEASIBILITY_SWEEP = "feasibility_sweep"
    GRADIENT_SIGMA_MIN = "gradient_sigma_min"
    PASSED = "passed"
    TOTAL = "total"

    # TransversalityReport fields
    POINT = "point"
    PAIR = "pair"
    COS_ANGLE = "cos_angle"
    PASS = "pass"
    DEGENERATE = "degenerate"

    # Summary fields
    CASES = "cases"
    CASE_ID = "case_id"
    POLICY = "policy"
    SEED = "seed"
    X0 = "x0"
    WORST_H = "worst_h"
    ALL_COMPLETED = "all_completed"

    # CSV column prefixes
    TIME = "t"
    STATE_PREFIX = "x"
    CONTROL_PREFIX = "u"
    BARRIER_PREFIX = "h"
    RADIUS = "rc"


class ExitReason:
    """Simulation exit reasons"""

    COMPLETED = "Completed"
    LEFT_OMEGA = "LeftOmega"
    INFEASIBLE_SELECTION = "InfeasibleSelection"


class SolveStatus:
    """Solver outcome status values"""

    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


class PolicyNames:
    """Policy variant names accepted by scenario files and --policy"""

    CHEBYSHEV_CENTER = "chebyshev_center"
    QP_TRACKING = "qp_tracking"
    LP_VERTEX = "lp_vertex"
    ROTATING_VERTEX = "rotating_vertex"
    SAFETY_PROGRAM = "safety_program"

    ALL = [
        CHEBYSHEV_CENTER,
        QP_TRACKING,
        LP_VERTEX,
        ROTATING_VERTEX,
        SAFETY_PROGRAM,
    ]


class PolicyEvents:
    """Tags recorded in Trajectory.policy_events"""

    GAMMA_FALLBACK = "gamma_fallback"
    COST_SWITCH = "cost_switch"


class ExitCodes:
    """Process exit codes for the runner"""

    SUCCESS = 0
    DOMAIN_FAILURE = 1
    IO_ERROR = 2
    FORCED_UNCERTIFIED = 3


# Error messages
class ErrorMessages:
    """Standard error messages"""

    DIMENSION_MISMATCH = "Dimension mismatch: {what} (expected {expected}, got {got})"
    EMPTY_POLYTOPE = "Polytope is empty: {context}"
    UNBOUNDED_RADIUS = "Polytope contains balls of arbitrary radius (non-compact)"
    UNBOUNDED_DIRECTION = "Polytope is unbounded in direction {direction}"
    SAMPLE_OUTSIDE_OMEGA = "Sampled state {x} lies outside Omega (radius {radius})"
    EMPTY_FEASIBLE_SET = "Contracted feasible set is empty at x={x} (gamma={gamma})"
    DEGENERATE_GRADIENT = "Gradient of barrier {index} vanishes at x={x}"
    SCENARIO_NOT_FOUND = "Error: Scenario file not found: {path}"
    SCENARIO_PARSE_FAILED = "Error: Failed to parse scenario {path}: {error}"
    CSV_NOT_FOUND = "Error: Trajectory CSV not found: {path}"
    CSV_EMPTY = "Error: Trajectory CSV is empty: {path}"
    OUT_DIR_UNWRITABLE = "Error: Output directory is not writable: {path}"
    CERTIFICATION_FAILED = "Certification failed: {reason}"
    PLANAR_ONLY = "plot supports planar scenarios only"
