"""Wavepacket simulations of an atom released from an optical tweezer and
probed by repeated trap pulses acting as spatial measurements."""
from .errors import (ConfigError, ConvergenceError, FitError, GridOverflowError,
                     LostTrajectoryError, NumericalError, PhaseCapError, ZenoError)
from .fitting import (FitResult, fit_damped_sinusoid, fit_inverse_n, fit_quadratic_vertex,
                      DampedSinusoidRegressor, InverseNRegressor, QuadraticVertexRegressor)
from .grid import Grid, Wavefunction, gaussian_state, observables
from .measurement import composite_transport_operator, measure_finite, measure_unitary, project
from .potentials import PotentialTimeline, Segment, pulse_train
from .propagator import StepControl, evolve_free, evolve_timeline
from .protocols import (EnsembleSpec, RunSetup, ScanResult, first_order_zeno,
                        run_duration_scan, run_pulse_width_scan, run_strength_scan,
                        run_transport, run_zeno_scan)
from .units import PhysicalParams, ground_state_width, trap_angular_frequency
from .windows import MeasurementWindow

__version__ = "0.1.0"
