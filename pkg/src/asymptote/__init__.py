"""Numerical existence checks for n-parameter asymptotic solutions of ``x' = t**k f(x, t)``.

Pipeline: parse the system and a candidate family (:mod:`.expr`, :mod:`.family`),
fit the power-law exponents and test the sufficient conditions
(:mod:`.exponents`), build the remainder by successive approximation
(:mod:`.contraction`) and confirm its decay against an independent integrator
(:mod:`.verify`).  :class:`AsymptoticSolver` wraps the whole chain behind an
estimator-style interface; :mod:`.cli` drives it from problem files.
"""
from .contraction import (
    ContractionSetup,
    RemainderSolution,
    assemble,
    build_setup,
    picard_solve,
    select_T,
    weighted_norm,
)
from .errors import AsymptoteError
from .estimator import AsymptoticSolver
from .exponents import ConditionReport, ExponentProfile, check_conditions, estimate_exponent, profile
from .expr import differentiate, evaluate, parse, to_text
from .family import AsymptoticFamily, GridFunction, QuadratureSpec, SystemDef, forcing
from .problem import ProblemFile, load_fixture, load_problem
from .verify import UniformityReport, compare_decay, integrate_reference, sweep_uniformity

__all__ = [
    "AsymptoteError",
    "AsymptoticFamily",
    "AsymptoticSolver",
    "ConditionReport",
    "ContractionSetup",
    "ExponentProfile",
    "ProblemFile",
    "GridFunction",
    "QuadratureSpec",
    "RemainderSolution",
    "SystemDef",
    "UniformityReport",
    "assemble",
    "build_setup",
    "check_conditions",
    "compare_decay",
    "differentiate",
    "estimate_exponent",
    "evaluate",
    "forcing",
    "integrate_reference",
    "load_fixture",
    "load_problem",
    "parse",
    "picard_solve",
    "profile",
    "select_T",
    "sweep_uniformity",
    "to_text",
    "weighted_norm",
]
