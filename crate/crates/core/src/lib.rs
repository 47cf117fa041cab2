//! Lossy codec for trained neural-network parameter sets.
//!
//! Convolution kernels are coded with a 2D DCT at the filter's own size
//! followed by a uniform quantizer. Dense and 1×1 convolution weights are
//! chunked into 8×8 blocks and coded the same way. Biases and normalization
//! vectors are clustered with multi-start k-means into an explicit code
//! book. Every layer payload is entropy coded with BZip2 on its own.
//!
//! The numeric building blocks ([`prescale`], [`transform`], [`quantizer`],
//! [`codebook`]) are generic over [`Scalar`]; the aliases below fix them to
//! `f32`, which is what the file formats carry.

pub mod bitstream;
pub mod codebook;
pub mod codec;
pub mod harness;
pub mod inference;
pub mod model_io;
pub mod prescale;
pub mod quantizer;
pub mod scalar;
pub mod transform;

pub use codec::{
    compression_factor, decode_network, encode_network, CodecError, EncodeOptions, MethodSet,
};
pub use model_io::{read_model, write_model, LayerParams, ModelError, NetworkModel, ParamKind, TensorF32};
pub use quantizer::QuantizerConfig;
pub use scalar::Scalar;

pub type Block = transform::Block<f32>;
pub type QuantGrid = quantizer::QuantGrid<f32>;
pub type CodeBook = codebook::CodeBook<f32>;
pub type ClusterResult = codebook::ClusterResult<f32>;
pub type PrescaleFactor = prescale::PrescaleFactor<f32>;
