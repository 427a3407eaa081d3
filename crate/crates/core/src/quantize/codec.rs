//! Message codecs used by the solvers: the PPS encoder and the comparison
//! points (exact transmission, top-M, random-M), each with its bit cost.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    index_width, message_bits, pps_decode, pps_encode, pps_simplified_encode, random_m_encode, top_m_encode,
    QuantizedGradient,
};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Codec {
    /// PPS with `M` samples per part. With `simplified`, non-negative vectors
    /// use the one-part encoding.
    Pps {
        #[serde(default)]
        simplified: bool,
    },
    /// Dense transmission, `n` floats per message.
    Identity,
    TopM,
    RandomM,
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub decoded: Vec<f64>,
    pub bits: u64,
    pub message: Option<QuantizedGradient>,
}

impl Codec {
    /// Encodes `g` using `m` samples (PPS) or kept coordinates (top/random-M,
    /// clamped to the dimension).
    pub fn encode<R: Rng + ?Sized>(&self, g: &[f64], m: usize, float_bits: u32, rng: &mut R) -> Result<Encoded> {
        let n = g.len();
        let sparse_bits = |k: usize| k as u64 * (float_bits as u64 + index_width(n) as u64);
        match *self {
            Codec::Pps { simplified } => {
                let q = if simplified && g.iter().all(|&v| v >= 0.0) {
                    pps_simplified_encode(g, m, rng)?
                } else {
                    pps_encode(g, m, rng)?
                };
                Ok(Encoded { decoded: pps_decode(&q), bits: message_bits(&q, float_bits), message: Some(q) })
            }
            Codec::Identity => Ok(Encoded { decoded: g.to_vec(), bits: n as u64 * float_bits as u64, message: None }),
            Codec::TopM => {
                let k = m.min(n);
                Ok(Encoded { decoded: top_m_encode(g, k)?, bits: sparse_bits(k), message: None })
            }
            Codec::RandomM => {
                let k = m.min(n);
                Ok(Encoded { decoded: random_m_encode(g, k, rng)?, bits: sparse_bits(k), message: None })
            }
        }
    }
}
