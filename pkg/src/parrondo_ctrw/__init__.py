"""Continuous-time random walks with sign memory and their Parrondo-like mixtures."""

from .jumpdist import JumpLaw, cf_jump, density, mean_jump, sample_jump
from .model import (
    MemorylessSpec,
    MixedSpec,
    SignMemorySpec,
    SignState,
    alpha,
    beta,
    drift,
    drift_a,
    drift_ab,
    drift_b,
    drift_derivative,
    fig1_spec,
    fig2_spec,
    fig3_spec,
    optimal_r,
    solve_unbiased_q0,
    solve_unbiased_q2,
)
from .simulate import InitialSign, SimConfig, empirical_sign_fraction, simulate_ensemble, simulate_path
from .spectral import Conditioning, characteristic_function, fl_propagator, invert_laplace, moment_from_cf

__version__ = "0.1.0"
