"""Exact, message-passing and learned inference on discrete factor graphs."""
from .bp import BpConfig, BpResult, decode_map, log_score, map_bounds, run_bp
from .core import ZERO_LOG, FactorGraph, PermutationWitness, apply_witness, verify_witness
from .exact import ExactResult, StateSpaceTooLarge, enumerate_exact
from .uai import UAIFormatError, load_uai, read_uai, save_uai, write_uai

__all__ = [
    "ZERO_LOG", "FactorGraph", "PermutationWitness", "apply_witness", "verify_witness",
    "ExactResult", "StateSpaceTooLarge", "enumerate_exact",
    "BpConfig", "BpResult", "run_bp", "decode_map", "log_score", "map_bounds",
    "UAIFormatError", "read_uai", "write_uai", "load_uai", "save_uai",
]
__version__ = "0.1.0"
