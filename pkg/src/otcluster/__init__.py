"""Multilevel clustering of grouped data with optimal transport."""

from .measures import (DiscreteMeasure, GroupedDataset, MeasureError,
                       cost_matrix, load_dataset, make_empirical, save_dataset)
from .transport import (TransportError, TransportPlan, exact_ot_small,
                        sinkhorn, transport_cost, wasserstein)
from .geomedian import MedianError, MedianProblem, weighted_geometric_median
from .barycenter import (BarycenterError, BarycenterProblem,
                         barycenter_objective, fixed_support_barycenter,
                         free_support_barycenter_w1,
                         free_support_barycenter_w2, support_bound)
from .kmeans import KMeansError, kmeans_pp_init, lloyd_kmeans, three_stage_kmeans
from .metrics import (MetricError, ami, ari, min_matching_distance, nmi,
                      wasserstein_to_truth)
from .synthgen import GenError, GenParams, add_noise, gen_context, gen_lc, gen_nc
from .multilevel import (FitConfig, MultilevelError, MultilevelState,
                         assign_groups, equivalence_check, fit, fit_mwgm,
                         fit_mwm, fit_mwmc, fit_mwms, lambda_heuristic,
                         load_state, objective, save_state)
from .parallel import ParallelError, par_map, timed_fit

__version__ = "0.1.0"
