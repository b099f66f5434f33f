"""
Error types for trajectoid-forge

Every domain failure is a ForgeError with a stable machine code and a details
dict, so the CLI can write it out as error JSON.
"""

from typing import Any, Dict, Optional


class ForgeError(Exception):
    """Base class for all domain errors"""

    code = "forge_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.code, "message": self.message, "details": self.details}


class InvalidInput(ForgeError):
    code = "invalid_input"


class NotFunctionLike(ForgeError):
    code = "not_function_like"


class DegenerateCurve(ForgeError):
    code = "degenerate_curve"


class NotC1Periodic(ForgeError):
    code = "not_c1_periodic"


class InvalidRadius(ForgeError):
    code = "invalid_radius"


class ResolutionExceeded(ForgeError):
    code = "resolution_exceeded"


class NoClosureInBracket(ForgeError):
    code = "no_closure_in_bracket"


class NoSimpleClosure(ForgeError):
    code = "no_simple_closure"


class SeamMismatch(ForgeError):
    code = "seam_mismatch"


class RequiresSimpleLoop(ForgeError):
    code = "requires_simple_loop"


class GrooveOverlap(ForgeError):
    code = "groove_overlap"


class MeshInvalid(ForgeError):
    code = "mesh_invalid"


class PoleSingularity(ForgeError):
    code = "pole_singularity"


class _TimedError(ForgeError):
    """Failure that happens at a simulation time t"""

    def __init__(self, message: str, t: Optional[float] = None, **details: Any):
        super().__init__(message, t=t, **details)
        self.t = t


class TrackingLost(_TimedError):
    code = "tracking_lost"


class StallDetected(_TimedError):
    code = "stall_detected"


class ContactLost(_TimedError):
    code = "contact_lost"
