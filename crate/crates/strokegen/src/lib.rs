//! Text-conditioned vector graphics generation trained purely from raster
//! images.
//!
//! The pipeline has two learned stages. A shape quantizer ([`vsq`]) maps
//! 128x128 raster patches onto a finite scalar-quantized codebook and decodes
//! each code back into a cubic Bezier stroke or closed shape, supervised by a
//! differentiable rasterizer ([`raster`]). A causal transformer ([`art`]) then
//! models sequences of interleaved position/shape tokens conditioned on text,
//! so whole documents can be sampled from a prompt or completed from context
//! strokes.
//!
//! The remaining modules are the supporting machinery: geometry and SVG
//! round-tripping ([`svg`]), corpus construction ([`dataprep`]), the token
//! vocabulary ([`codec`]), stroke joining post-processing ([`postproc`]) and
//! the metrics harness ([`eval`]).

pub mod art;
pub mod codec;
pub mod config;
pub mod dataprep;
pub mod eval;
pub mod fsq;
pub mod nn;
pub mod postproc;
pub mod raster;
pub mod svg;
pub mod vsq;

mod error;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
