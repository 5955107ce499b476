from ladri.scenario_engine import run_scenario, step_vehicle, acc_command, apply_fault, detect_collision
from ladri.sensor_sim import sample_sensors, SensorFrame, SceneTruth
from ladri.feature_extract import build_feature_vector, truth_features, FeatureVector, fit_normalizer, apply_normalizer
from ladri.hara_oracle import severity_level, controllability_level, risk_stage, label_trace, RiskStage
from ladri.ladri_model import forward, predict, loss_and_grad, gradient_check, train, train_baseline, evaluate, cross_validate
from ladri.dataset_io import generate_dataset, write_csv, read_csv, split_dataset, save_model, load_model
from ladri.telemetry import Telemetry, traced_function
