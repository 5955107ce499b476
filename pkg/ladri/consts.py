# Actuator envelope of a passenger car, m/s^2
A_MIN = -8.0
A_MAX = 3.0

# Feature caps
TTC_CAP = 60.0
HW_CAP = 10.0
DECEL_CAP = 12.0
# Below this ego speed the headway is reported as HW_CAP
HEADWAY_MIN_SPEED = 0.1

# Severity thresholds on projected impact dv, m/s (10 / 30 / 50 km/h)
SEVERITY_DV_THRESHOLDS = (2.78, 8.33, 13.89)
# Controllability thresholds on required deceleration, m/s^2
CONTROLLABILITY_DECEL_THRESHOLDS = (1.0, 3.0, 6.0)
TTC_FORCE_C3 = 1.0
TTC_RAISE_ONE = 2.0

# Rows C0..C3, columns S0..S3
STAGE_TABLE = (
    (0, 0, 1, 1),
    (0, 1, 1, 2),
    (1, 1, 2, 3),
    (1, 2, 3, 3),
)

NUM_STAGES = 4
STAGE_NAMES = ("Safe", "Warning", "Hazardous", "Critical")

# Versioned feature contract: column order in the dataset CSV and input order of the network.
FEATURE_CONTRACT_VERSION = 1
FEATURE_NAMES = (
    "rel_distance",
    "rel_speed",
    "ego_speed",
    "ttc",
    "headway",
    "required_decel",
    "throttle_pos",
    "brake_pos",
)

DATASET_COLUMNS = (
    ("scenario_id", "time") + FEATURE_NAMES + ("s_level", "c_level", "stage")
)

MODEL_FORMAT_VERSION = 1

# Env variable names
ENV_SEED = "LADRI_SEED"
ENV_LOG_LEVEL = "LADRI_LOG_LEVEL"
ENV_WORKERS = "LADRI_WORKERS"
ENV_OTEL_ENDPOINT = "LADRI_OTEL_ENDPOINT"
ENV_TRACES_FILE = "LADRI_TRACES_FILE"
LIVE_LOGS_FILE_PATH = "LADRI_LIVE_LOGS_FILE"

# Formatted resource attribute names
SEED = "ladri.seed"
LOG_LEVEL = "ladri.log.level"
WORKERS = "ladri.workers"
OTEL_ENDPOINT = "ladri.otel.endpoint"
TRACES_FILE = "ladri.traces.file"
LIVE_LOGS_FILE = "ladri.live.logs.file"
STAGE_ATTRIBUTE = "ladri.stage"
SERVICE_NAME_VALUE = "ladri"

# default env variables
DEFAULT_ENV_VARIABLES = {
    ENV_SEED: "",
    ENV_LOG_LEVEL: "INFO",
    ENV_WORKERS: "1",
    ENV_OTEL_ENDPOINT: "",
    ENV_TRACES_FILE: "",
    LIVE_LOGS_FILE_PATH: "",
}

ENV_VARIABLES_MAPPING = {
    ENV_SEED: SEED,
    ENV_LOG_LEVEL: LOG_LEVEL,
    ENV_WORKERS: WORKERS,
    ENV_OTEL_ENDPOINT: OTEL_ENDPOINT,
    ENV_TRACES_FILE: TRACES_FILE,
    LIVE_LOGS_FILE_PATH: LIVE_LOGS_FILE,
}

# Local traces output file
LOCAL_TRACES_FILE = "ladri_traces.json"
