"""Scenario configuration, manufactured solutions, studies and the CLI."""

from .config import Scenario, load_config, parse_config
from .mms import ConvergenceTable, MmsCase, default_case, mms_study, static_balance_error
from .studies import CompareResult, TransferRow, compare_study, transfer_study

__all__ = [
    "Scenario",
    "load_config",
    "parse_config",
    "MmsCase",
    "ConvergenceTable",
    "default_case",
    "mms_study",
    "static_balance_error",
    "TransferRow",
    "transfer_study",
    "CompareResult",
    "compare_study",
]
