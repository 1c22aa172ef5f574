"""Coded, secret-shared logistic regression over a prime field, with
subgroup MPC baselines and a deterministic multi-party simulator."""

from copml.errors import (ApproximationError, CopmlError, DatasetError, FieldError, ScaleMismatchError,
                          SharingError, ThresholdError, TransportError, WrapAroundError)
from copml.field import (DEFAULT_PRIME, FieldMatrix, FieldPrime, QuantParams, dequantize, matmul, phi,
                         phi_inv, quantize, round_half_up)
from copml.lagrange import (CodingPoints, aggregate_subgradients, decode_gradient_shares,
                            encode_dataset_shares, encode_model_shares, lagrange_basis, recovery_threshold)
from copml.mpc import (BGW, BH08, Dealer, ShareMatrix, add_local, dealer_generate, mul_const_local, mul_secure,
                       reconstruct, share, truncate_secure)
from copml.protocol import (BASELINE_BGW, BASELINE_BH08, COPML, IterationMetrics, ProtocolConfig, Session,
                            TrainResult, baseline_iteration, case_params, copml_iteration, setup, train)
from copml.sigmoid import PolyApprox, eval_poly_field, fit_sigmoid
from copml.simulator import LatencyModel, Network

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
