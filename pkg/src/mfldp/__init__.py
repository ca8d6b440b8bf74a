"""Mean-field boson dynamics: Hartree evolution, Bogoliubov fluctuations,
truncated Fock-space identities, exact N-body statistics and rate functions."""

from .errors import (ConfigError, DimensionCapError, FluctuationInstabilityError,
                     HartreeInstabilityError, KrylovBreakdownError, LatticeMismatchError,
                     MfldpError, NumericalError)
from .lattice import Lattice, Observable, PairPotential, WaveFunction

__all__ = [
    "Lattice", "WaveFunction", "PairPotential", "Observable",
    "MfldpError", "ConfigError", "LatticeMismatchError", "NumericalError",
    "HartreeInstabilityError", "FluctuationInstabilityError", "KrylovBreakdownError",
    "DimensionCapError",
]
