//! Config-driven stages shared by the command line tool and the tests.
//! Every stage writes into an output directory and records itself in
//! `manifest.json`; a failed stage leaves no partial files behind.

mod config;
mod manifest;
mod stages;

pub use config::{
    ClassifierConfig, ClassifierKind, CvChoice, CvConfig, DataConfig, Estimator, FeatureConfig, FeatureKind,
    MetadConfig, ReweightConfig, WorkflowConfig,
};
pub use manifest::{sha256_hex, RunManifest, Staging, StageRecord, MANIFEST_FILE, TIMINGS_FILE};
pub use stages::{
    cmd_cv, cmd_export, cmd_report, cmd_reweight, cmd_simulate, cmd_train, default_trajectories, fes_errors,
    read_training_frames, trajectory_file, training_samples, write_training_frames, StageSummary, HILLS_FILE,
    MODEL_FILE, PLUMED_FILE, REPORT_FILE, TRAINING_FRAMES_FILE, TRAJECTORY_FILE,
};
