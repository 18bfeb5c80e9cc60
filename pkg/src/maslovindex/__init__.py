"""Morse index of a geodesic from its curvature profile, computed by
crossing counts, Dirichlet eigenvalue counts and a discretized Hessian."""

from .errors import (
    CertificationFailure,
    ChartDomainError,
    DomainError,
    EndpointDegenerateError,
    InvalidInputError,
    InvalidLoopError,
    InvalidSpecError,
    MaslovError,
    NumericalFailure,
    SingularMatrixError,
)
from .jacobiflow import CurvatureProfile, FlowSettings
from .lagrangian import ChartCoords, LagrangianFrame
from .maslov import CrossingEvent, LagrangianPath
from .morse import IndexReport, RectangleSpec, Settings, morse_report

__all__ = [
    "CertificationFailure", "ChartDomainError", "DomainError", "EndpointDegenerateError",
    "InvalidInputError", "InvalidLoopError", "InvalidSpecError", "MaslovError",
    "NumericalFailure", "SingularMatrixError", "CurvatureProfile", "FlowSettings",
    "ChartCoords", "LagrangianFrame", "CrossingEvent", "LagrangianPath",
    "IndexReport", "RectangleSpec", "Settings", "morse_report",
]
