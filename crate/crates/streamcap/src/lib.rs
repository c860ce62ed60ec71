//! Streaming toolkit for temporally localized captioning at desk scale.
//!
//! The crate has three layers:
//!
//! * a bounded **clustering memory** over per-frame token streams
//!   ([`memory`]), with its linearized backward view ([`grad`]);
//! * **decoding-point scheduling** of caption targets and prefixes over a
//!   stream ([`scheduler`]), with the time-token event codec ([`codec`]);
//! * **dense-captioning metrics** ([`metrics`]) and a synthetic
//!   planted-cluster pipeline ([`sim`]) that exercises everything
//!   end to end without a learned model.
//!
//! See the guide under `book/` for worked explanations of each piece; its
//! code snippets compile as doc-tests in the `guide-tests` crate.

pub mod codec;
pub mod error;
pub mod grad;
pub mod memory;
pub mod metrics;
pub mod scheduler;
pub mod sim;
pub mod stream;

pub use error::{Error, Result};

/// Paper-anchored defaults shared by the command-line tools.
pub mod defaults {
    /// Memory size in tokens.
    pub const MEMORY_TOKENS: usize = 514;
    /// K-means iterations per update.
    pub const KMEANS_ITERS: usize = 2;
    /// Momentum-weighted centroids.
    pub const MOMENTUM: bool = true;
    /// Decoding-point stride in frames.
    pub const STRIDE_FRAMES: usize = 32;
    /// Context passed between decoding points.
    pub const PREFIX_MODE: crate::scheduler::PrefixMode = crate::scheduler::PrefixMode::Captions;
    /// Temporal IoU thresholds for evaluation.
    pub const IOU_THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
    /// Time bins of the augmented vocabulary.
    pub const TIME_BINS: u32 = 100;
    /// EMA decay for the moving-average baseline.
    pub const EMA_DECAY: f64 = 0.9;
    /// Probability of moving a prefix event into the target during
    /// training augmentation.
    pub const PREFIX_DROP_PROB: f64 = 0.5;
}
