"""Joint carrier, direction-of-arrival and spectrum estimation from a delayed,
sub-Nyquist sampled antenna array via CP decomposition of lagged correlations.
"""
from .correlation import (CorrelationTensor, default_max_lag, denoise_zero_lag,
                          estimate_correlation_tensor, estimate_noise_power)
from .cpd import (DetectionError, FactorSet, congruence, cp_als, cp_als_regularized,
                  cp_reconstruct, factor_congruence, fit_residual, khatri_rao, refold, unfold)
from .crb import (CrbError, CrbModel, CrbReport, assemble_Rx, crb, fim,
                  model_from_scenario, partial_derivatives)
from .identifiability import (IdentifiabilityReport, k_rank, kruskal_check,
                              omega_condition_check, scenario_identifiability)
from .pipeline import (MetricsTable, PipelineOptions, estimate_from_samples,
                       estimate_from_tensor, estimate_scenario, monte_carlo, pair_estimates)
from .recovery import (EstimateReport, RecoveryError, SourceEstimate, Spectrum,
                       recover_all, recover_carrier, recover_doa, recover_spectrum)
from .scenario import (SPEED_OF_LIGHT, ArrayConfig, IdentifiabilityError, SamplingConfig,
                       Scenario, SourceSpec, ValidationReport, delay_condition_indices,
                       sources_from, steering_matrix, steering_vector, tau_of_theta,
                       validate_scenario)
from .simulate import (SampleMatrix, ScenarioError, exact_correlation_tensor,
                       synthesize_array_samples)

__version__ = "0.1.0"
