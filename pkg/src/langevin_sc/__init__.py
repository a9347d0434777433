"""Probabilistic sparse coding with Langevin inference and two-timescale learning."""

__version__ = "0.1.0"

from .data import (ArraySource, BarsSource, BarsSpec, PatchSource, ZCATransform,
                   bars_dictionary, generate_bars, load_patches, sample_spike_slab,
                   whiten_zca)
from .dynamics import (LearnFlags, NestedEngine, SimultaneousEngine, SolverKind,
                       init_dictionary, init_latents, run_dsc, run_simultaneous,
                       step_dictionary, step_latents_langevin, step_latents_ode)
from .errors import (ConfigurationError, DimensionError, FormatError, LSCError,
                     NumericalError, UsageError)
from .learning import (RunArtifact, SweepSpec, TraceRecord, TrainConfig,
                       sweep_lambda_vs_pi, sweep_overcompleteness, train)
from .metrics import (activity_estimate, column_norms, dictionary_recovery,
                      duplicate_pairs, kl_to_prior, nl_mse)
from .model import (Batch, Dictionary, EnergyBreakdown, LatentState, ModelParams,
                    energy_l0, energy_l1, grad_a, grad_s_l1, grad_u0, grad_u_l0)
from .noise import NoiseSource

__all__ = [
    "activity_estimate",
    "ArraySource",
    "bars_dictionary",
    "BarsSource",
    "BarsSpec",
    "Batch",
    "column_norms",
    "ConfigurationError",
    "Dictionary",
    "dictionary_recovery",
    "DimensionError",
    "duplicate_pairs",
    "energy_l0",
    "energy_l1",
    "EnergyBreakdown",
    "FormatError",
    "generate_bars",
    "grad_a",
    "grad_s_l1",
    "grad_u0",
    "grad_u_l0",
    "init_dictionary",
    "init_latents",
    "kl_to_prior",
    "LatentState",
    "LearnFlags",
    "load_patches",
    "LSCError",
    "ModelParams",
    "NestedEngine",
    "nl_mse",
    "NoiseSource",
    "NumericalError",
    "PatchSource",
    "run_dsc",
    "run_simultaneous",
    "RunArtifact",
    "sample_spike_slab",
    "SimultaneousEngine",
    "SolverKind",
    "step_dictionary",
    "step_latents_langevin",
    "step_latents_ode",
    "sweep_lambda_vs_pi",
    "sweep_overcompleteness",
    "SweepSpec",
    "TraceRecord",
    "train",
    "TrainConfig",
    "UsageError",
    "whiten_zca",
    "ZCATransform",
]
