"""Bijective conformal parameterisation of disk-type triangle meshes.

Typical use::

    from fastdisk import load_mesh, run_pipeline
    phi, report = run_pipeline(load_mesh("patch.obj"))

``phi`` holds one complex disk coordinate per vertex.
"""

from .beltrami import (
    beltrami_coefficient,
    compose_beltrami,
    inverse_beltrami,
    maximal_dilation,
)
from .estimator import DiskConformalMap, check_mesh
from .exceptions import *  # noqa: F401,F403
from .harmonic import cotangent_weights, harmonic_disk_map
from .lbs import BoundaryCondition, lbs_coefficients, lbs_solve
from .linalg import CG, DIRECT, SparseSystem, solve
from .mesh import TriangleMesh, load_mesh, load_uv, save_mesh, save_uv_csv, validate_topology
from .metrics import QualityReport, compute_report, export_report, load_report
from .pipeline import (
    cayley,
    inverse_cayley,
    north_pole_step,
    reflect,
    run_pipeline,
    south_pole_iteration,
    south_pole_step,
)

__version__ = "0.1.0"
