"""ODE catalog, batched time-1 map integration and sampling."""
from .ode import IntegrationError, OrbitEnsemble, integrate, iterate_time1
from .sampling import hausdorff, hausdorff_profile, latin_hypercube, stabilization_index
from .systems import (HyperRectangle, SystemSpec, ellipsoid_transform, eval_field, get_system,
                      hill_neg, hill_pos, hill_system, load_hill_params, system_names)

__all__ = [
    "HyperRectangle", "SystemSpec", "OrbitEnsemble", "IntegrationError",
    "eval_field", "get_system", "system_names", "hill_neg", "hill_pos", "hill_system",
    "load_hill_params", "ellipsoid_transform", "integrate", "iterate_time1",
    "latin_hypercube", "hausdorff", "hausdorff_profile", "stabilization_index",
]
