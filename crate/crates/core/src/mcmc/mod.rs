//! Posterior sampling and convergence diagnostics.

pub mod afss;
pub mod chains;
pub mod diagnostics;
pub mod latent;
pub mod sampler;
pub mod slice;

pub use afss::{AfssConfig, AfssKernel, AfssSampler, BlockTarget, FnTarget};
pub use chains::{run_chains, ChainConfig, ChainStats, InitPolicy, PosteriorSamples, SamplesMeta};
pub use diagnostics::{effective_sample_size, ess_of_chains, psrf, psrf_of_chains, summarize, ParameterSummary};
pub use latent::run_latent_chains;
pub use sampler::KernelSnapshot;
pub use slice::{slice_update_scalar, AdaptiveWidth, Bounds, SliceStep};
