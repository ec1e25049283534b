"""Simulation lab: data generators, identification checks and counterexamples."""
from .dgp import KINDS, DgpSpec, DrawSet, Law, generate, make_fn, observe
from .factor import FactorResult, factor_reconstruct
from .hetero import (HeteroIvResult, HeteroWeights, Rank1Result, TwinResult, hetero_iv_estimate,
                     hetero_weights, rank1_stat, split_uniform, symmetric_twin)
from .ica import IcaResult, excess_kurtosis, ica2d, recovered_effect, shock_effect
from .independence import (dcor_test, distance_correlation, energy_distance, energy_test,
                           independence_battery, ks_two_sample)
from .mte import MteResult, mte_reduced_form
from .report import EstimandReport, reports_csv

__all__ = [
    "KINDS", "DgpSpec", "DrawSet", "Law", "generate", "make_fn", "observe",
    "FactorResult", "factor_reconstruct",
    "HeteroIvResult", "HeteroWeights", "Rank1Result", "TwinResult", "hetero_iv_estimate",
    "hetero_weights", "rank1_stat", "split_uniform", "symmetric_twin",
    "IcaResult", "excess_kurtosis", "ica2d", "recovered_effect", "shock_effect",
    "dcor_test", "distance_correlation", "energy_distance", "energy_test",
    "independence_battery", "ks_two_sample",
    "MteResult", "mte_reduced_form",
    "EstimandReport", "reports_csv",
]
