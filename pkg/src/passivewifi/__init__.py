"""Passive WiFi indoor localization toolkit.

Fingerprint databases of per-(reference point, access point) RSSI
densities, a sequential Bayesian localizer with CSI refinement, an LSTM
trajectory estimator, and a frame-level radio simulator to exercise the
whole pipeline end to end.
"""

from .airsim import (
    DEVICE_PROFILES,
    ArrivalMixture,
    DeviceProfile,
    FrameEvent,
    PhoneState,
    PropagationModel,
    TrajectoryRun,
    frame_stream,
    run_trajectory,
)
from .core import (
    AccessPoint,
    EmptyDatabaseError,
    Environment,
    FingerprintDatabase,
    FingerprintRecord,
    FingerprintVector,
    Location,
    ObservationBatch,
    Trajectory,
    UnknownReferencePointError,
    build_database,
    grid_environment,
    nearest_rp,
)
from .csi import (
    CsiImage,
    CsiScan,
    InsufficientCsiError,
    NoCsiCoverageError,
    PhaseDiffVector,
    ZeroVarianceError,
    build_image,
    pearson,
    phase_difference,
    refine,
)
from .evaluation import (
    ErrorReport,
    RunSpec,
    collect_training,
    compare_table,
    lawnmower_trajectory,
    random_trajectory,
    run_test,
)
from .kde import KernelSpec, NoSamplesError, RssiPdf, fit, fit_all_pdfs, pooled_fit
from .protocol import (
    Dispatcher,
    Fix,
    LocalizerConfig,
    Monitor,
    RtsSchedule,
    Track,
    rts_controller,
)
from .rnn import LstmConfig, LstmModel, TrainingSet, grad_check, load_model, save_model, train
from .scenario import Scenario, default_scenario, home_scenario, load_scenario, office_scenario, save_scenario
from .ssp import NoObservableApsError, Posterior, SspWindow, estimate, posterior, top_k

__version__ = "0.1.0"
