"""Contact wrench and joint torque estimation from distributed tactile skin."""

from .estimator import (
    ContactSpec,
    assemble_problem,
    contact_columns,
    estimate_frame,
    joint_torques,
    single_body_external_wrench,
    solve_problem,
)
from .model import decompose, load_model, net_wrench, propagate_kinematics
from .skinfield import (
    PressureFrame,
    SkinPatch,
    Taxel,
    build_fields,
    detect_contacts,
    integrate_force,
    integrate_torque,
    normal_at,
    sample_taxel_disks,
    simplified_force,
)
from .spatial import (
    ProperKinematics,
    SpatialInertia,
    SpatialTransform,
    Twist,
    Wrench,
    apply_inertia,
    compose_transform,
    dual_cross,
    skew,
    transform_wrench,
)

__version__ = "0.1.0"
