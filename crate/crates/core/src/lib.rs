//! Core of the river reasoning video editor.
//!
//! * [`twin`]: digital twin documents (parse, validate, serialize, diff, describe)
//! * [`mask`]: run-length encoded binary masks
//! * [`rollout`]: the `<think>/<execute>/<results>/<edit>` reasoner protocol
//! * [`twinql`]: the sandboxed query language run inside `<execute>` blocks
//! * [`reward`]: structured and performance rewards
//! * [`grpo`]: group-relative advantages, clipped KL objective, toy trainer
//! * [`metrics`]: PSNR/SSIM and client-backed score aggregation

pub mod canonical;
pub mod grpo;
pub mod mask;
pub mod metrics;
pub mod reward;
pub mod rollout;
pub mod twin;
pub mod twinql;
