"""Feature-allocation and species-sampling priors with verifiable predictives.

Modules
-------
numerics
    Special functions, endpoint-aware double-exponential quadrature and
    tabulated densities.
levy
    Levy intensities and their moment integrals.
alloc
    Feature allocations, partitions and file formats.
crm
    Predictive laws, samplers and probabilities under CRM feature priors.
sp
    Scaled-process priors: the posterior of the latent scale and the
    scale-averaged predictive.
species
    Gibbs-type species models (Dirichlet, Pitman-Yor, custom weights).
harness
    Verification reports for closed forms, posterior dependence,
    exchangeability and Monte Carlo growth.
cli
    The ``featurelab`` command.
"""
from . import alloc, crm, harness, levy, numerics, sp, species
from .alloc import FeatureAllocation, Partition, SuffStats, suff_stats
from .levy import LevyIntensity, log_intensity, stable, stable_beta
from .numerics import DomainError, QuadratureError, QuadratureSpec, TabulatedDensity
from .sp import SPModel, exponential_prior, uniform_prior
from .species import GibbsModel, dirichlet, pitman_yor

__version__ = "0.1.0"

__all__ = [
    "alloc", "crm", "harness", "levy", "numerics", "sp", "species",
    "FeatureAllocation", "Partition", "SuffStats", "suff_stats",
    "LevyIntensity", "stable_beta", "stable", "log_intensity",
    "QuadratureSpec", "TabulatedDensity", "DomainError", "QuadratureError",
    "SPModel", "uniform_prior", "exponential_prior",
    "GibbsModel", "dirichlet", "pitman_yor",
]
