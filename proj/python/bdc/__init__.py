"""Bit-packed XNOR/popcount convolution library (toy occupancy harness)."""

from ._core import (
    BdcError,
    BitTensor,
    analytic_abs_error_constant,
    binarize_weights,
    bit_pack,
    check_equivalence,
    conv2d_bit,
    conv2d_fp,
    cost_of_layer,
    erf,
    generate_scene,
    gradient_error_experiment,
    miou,
    monte_carlo_abs_error,
    popcount_dot,
)

__all__ = [
    "BdcError",
    "BitTensor",
    "analytic_abs_error_constant",
    "binarize_weights",
    "bit_pack",
    "check_equivalence",
    "conv2d_bit",
    "conv2d_fp",
    "cost_of_layer",
    "erf",
    "generate_scene",
    "gradient_error_experiment",
    "miou",
    "monte_carlo_abs_error",
    "popcount_dot",
]
