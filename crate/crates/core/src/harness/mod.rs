//! Experiment orchestration: synthetic corpus, configuration, runs and reports.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod report;
pub mod synth;

pub use config::{quick_config, CorpusSource, ExperimentConfig, Precision, System, KEYS};
pub use experiment::{
    prepare_corpus, run_experiment, run_experiment_with, training_pairs, Corpus, ExperimentOutcome, Frontend,
    NamedSignal, TrainedModel,
};
pub use report::{render_report, ExperimentReport, ReportMetadata, ReportRecord, REPORT_HEADER};
pub use synth::{synth_car_noise, synth_corpus, synth_speech, SynthCorpus, CAR_NOISES};
