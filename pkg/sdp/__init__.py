"""Dense semidefinite programming"""
from sdp.problem import InfeasibilityCertificate, SdpProblem, SdpSolution, SdpStatus
from sdp.solver import infeasibility_certificate, options, solve_sdp, verify_certificate

__all__ = [
    "InfeasibilityCertificate", "SdpProblem", "SdpSolution", "SdpStatus", "infeasibility_certificate",
    "options", "solve_sdp", "verify_certificate",
]
