"""核心业务逻辑层 - NARMAX/POLYAR 估计、统计量、集合预报和产物"""

from .artifacts import ArtifactStore, check_provenance
from .forecast import (
    ForecastConfig,
    ForecastScore,
    NarmaxForecaster,
    PolyarForecaster,
    crossing_lead,
    run_forecast,
)
from .narmax import (
    FitOptions,
    FitReport,
    NarmaxParams,
    NarmaxStructure,
    fit,
    log_likelihood,
    residuals,
    simulate,
)
from .optimizer import OptProblem, OptResult, bfgs_maximize, least_squares
from .polyar import PolyarParams, fit_polyar, simulate_polyar
from .report_generator import ReportFormat, ReportGenerator
from .stats import StatsOptions, SummaryStats, summarize, summarize_series
