"""Solutions of ODEs: certification, a closed-form solver, a CAS bridge and
a numeric integrator."""
from .certify import (CertReport, Certified, ComponentReport, FlowCandidate, NonMatchingFrames,
                      NotC1, c1_lipschitz_check, certify_flow, certify_solution)
from .solver import Recast, SolveTrace, decompose_independent, recast_higher_order, solve_sode
from .cas import (CASUnavailable, ParseError, UnknownOperator, field_request, from_ir,
                  ir_to_cas_request, parse_cas, parse_cas_solution, run_wolfram, to_fullform,
                  to_input_form, to_ir)
from .rk4 import IntegrationError, rk4_integrate
from ..lie import time_derivative

__all__ = [
    "CertReport", "Certified", "ComponentReport", "FlowCandidate", "NonMatchingFrames", "NotC1",
    "c1_lipschitz_check", "certify_flow", "certify_solution", "Recast", "SolveTrace",
    "decompose_independent", "recast_higher_order", "solve_sode", "CASUnavailable",
    "ParseError", "UnknownOperator", "field_request", "from_ir", "ir_to_cas_request",
    "parse_cas", "parse_cas_solution", "run_wolfram", "to_fullform", "to_input_form", "to_ir",
    "IntegrationError", "rk4_integrate", "time_derivative",
]
