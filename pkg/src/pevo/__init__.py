"""Numerical experiments on Gevrey well-posedness thresholds for p-evolution equations."""
from .errors import (ConfigError, ContractError, NumericalError, PevoError, SizingError, StiffnessError,
                     TruncationError, WeightOverflowError)
from .grid import Field, Grid, Spectrum, forward_transform, inverse_transform, l2_norm, spectral_norm
from .gevrey import (DatumSpec, GevreyBump, GevreyParams, gevrey_norm, gevrey_weight, make_bump, make_phi)
from .symbols import PacketCutoffs, SampledSymbol, apply, dense_matrix, make_packet_cutoffs, seminorm
from .operator import (LowerCoeff, ModelOperator, ThresholdReport, c_lower, decompose_IJ, lower_symbol,
                       xi_threshold)
from .evolve import EvolutionState, SolveOptions, oracle_solve, solve, step
from .energy import (EnergyReport, ExperimentTemplate, WavePacketRun, bicharacteristic, boundedness_experiment,
                     compute_energy, compute_Nk, datum_decay_experiment, growth_experiment, gronwall_envelope,
                     make_run)

__version__ = "0.1.0"
