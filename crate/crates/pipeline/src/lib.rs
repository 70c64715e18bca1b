//! Model-service clients, the end-to-end editing pipeline, the benchmark
//! harness and report rendering behind the `river` command line.
//!
//! * [`config`]: `PipelineConfig` file and endpoint settings
//! * [`clients`]: service contracts and HTTP adapters
//! * [`mock`]: deterministic in-process services
//! * [`frames`]: frame-directory videos
//! * [`perception`]: twin building from fixtures or the perception service
//! * [`conditioning`]: editor payloads from edited twins
//! * [`run`]: `edit_video` and its stages
//! * [`scoring`]: per-sample metric suite
//! * [`bench`]: manifests, evaluation runs, reports

pub mod bench;
pub mod clients;
pub mod conditioning;
pub mod config;
pub mod frames;
pub mod mock;
pub mod perception;
pub mod run;
pub mod scoring;
