"""Mean-field Fokker-Planck solver by score-based transport.

A particle ensemble is propagated along the deterministic probability
flow whose velocity subtracts diffusion times a learned score from the
mean-field drift; a small swish MLP is retrained at every timestep on
the transport objective mean(|s|^2 + 2 div s) with a denoising estimate
of the divergence. Validation runs against Euler-Maruyama integration
and, for the harmonic trap, closed-form Gaussian moments.
"""

from .integrators import Ensemble, FlowCheckpointStore, em_step, \
    evaluate_density, mean_field_drift, msbtm_step, noise_free_step, run_msbtm
from .metrics import GridSpec, MetricsRecord, empirical_moments, \
    kl_rate_diagnostic, numerical_entropy_rate, relative_fisher, total_variation
from .mlp import AdamState, ScoreNet, adam_init, adam_step, backward, forward, \
    init_scorenet, load_net, save_net
from .numerics import NotSPDError, RngStream, gaussian_sample, \
    gaussian_sample_n, spd_inverse_det
from .oracle import GaussianState, analytic_entropy, analytic_entropy_rate, \
    exact_moments, gaussian_pdf, gaussian_score, moments_step, \
    stationary_covariance
from .problems import HarmonicParams, MeanFieldProblem, SwimmerParams, \
    harmonic_problem, swimmer_problem
from .training import InitialFitError, TrainConfig, TrainingError, \
    denoising_divergence, fit_initial_score, msbtm_loss_and_grad, \
    relative_l2_loss, train_step_score

__version__ = "0.1.0"
