"""Model-based fault detection, isolation and operator explanation for a
liquid-sodium purification loop."""

__version__ = "0.1.0"

from .graph import (  # noqa: F401
    DependencyGraph,
    FaultSignatureMatrix,
    build_signature_matrix,
    dependency_closure,
    load_default_graph,
    load_system_config,
    validate_graph,
)
from .diagnosis import diagnose, forward_check, explanation_record  # noqa: F401
from .plant import FaultScenario, Simulator, steady_state, virtual_truth  # noqa: F401
from .residuals import calibrate, compute_virtual_sensors, evaluate_residuals  # noqa: F401
from .service import Pipeline, run_pipeline, replay  # noqa: F401
