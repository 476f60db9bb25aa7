//! Invertible mappings between two embedding spaces.
//!
//! A [`Mapper`] holds one bias-free network. The forward flow maps source
//! rows into the target space. The reverse flow runs the same layers in
//! reverse order with every weight matrix transposed, so one parameter set
//! serves both translation directions:
//!
//! | kind   | forward            | reverse            |
//! |--------|--------------------|--------------------|
//! | linear | `X W^T`            | `Y W`              |
//! | ffn    | `tanh(X W1^T) W2^T`| `tanh(Y W2) W1`    |
//!
//! Rows are vectors throughout, so `X W^T` applies `W` to every row of `X`.
//! In [`Sharing::Independent`] mode the reverse flow instead uses a second,
//! untied network evaluated with the forward formula.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"BDMA";
pub const MODEL_FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapperKind {
    Linear,
    Ffn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sharing {
    /// Reverse flow reuses the forward parameters, transposed.
    #[default]
    Shared,
    /// Reverse flow owns a second parameter set.
    Independent,
}

/// One bias-free network.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    /// `w` is `d x d`.
    Linear { w: Array2<f64> },
    /// `w1` is `h x d`, `w2` is `d x h`; `tanh` between them.
    Ffn { w1: Array2<f64>, w2: Array2<f64> },
}

/// Intermediate values kept from a flow for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    pub output: Array2<f64>,
    /// Post-`tanh` hidden activations for FFN networks.
    pub hidden: Option<Array2<f64>>,
}

/// Gradient tensors in the order of [`Mapper::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Array2<f64>>);

impl Gradients {
    pub fn zeros_like(m: &Mapper) -> Self {
        Self(m.params().iter().map(|p| Array2::zeros(p.raw_dim())).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.0 {
            a.mapv_inplace(|x| x * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute entry over all tensors.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Network {
    fn kind(&self) -> MapperKind {
        match self {
            Network::Linear { .. } => MapperKind::Linear,
            Network::Ffn { .. } => MapperKind::Ffn,
        }
    }

    fn dim(&self) -> usize {
        match self {
            Network::Linear { w } => w.nrows(),
            Network::Ffn { w1, .. } => w1.ncols(),
        }
    }

    fn hidden(&self) -> usize {
        match self {
            Network::Linear { .. } => 0,
            Network::Ffn { w1, .. } => w1.nrows(),
        }
    }

    fn params(&self) -> Vec<&Array2<f64>> {
        match self {
            Network::Linear { w } => vec![w],
            Network::Ffn { w1, w2 } => vec![w1, w2],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        match self {
            Network::Linear { w } => vec![w],
            Network::Ffn { w1, w2 } => vec![w1, w2],
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Network::Linear { w } => {
                if w.nrows() == 0 || w.nrows() != w.ncols() {
                    return Err(Error::InvalidDimensions(format!(
                        "linear weight must be square and non-empty, got {:?}",
                        w.shape()
                    )));
                }
            }
            Network::Ffn { w1, w2 } => {
                if w1.is_empty() || w1.nrows() != w2.ncols() || w1.ncols() != w2.nrows() {
                    return Err(Error::InvalidDimensions(format!(
                        "ffn weights {:?} and {:?} are inconsistent",
                        w1.shape(),
                        w2.shape()
                    )));
                }
            }
        }
        if self.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("mapper parameters"));
        }
        Ok(())
    }

    fn apply(&self, x: ArrayView2<f64>) -> Trace {
        match self {
            Network::Linear { w } => Trace {
                output: x.dot(&w.t()),
                hidden: None,
            },
            Network::Ffn { w1, w2 } => {
                let h = x.dot(&w1.t()).mapv_into(f64::tanh);
                Trace {
                    output: h.dot(&w2.t()),
                    hidden: Some(h),
                }
            }
        }
    }

    fn apply_transposed(&self, y: ArrayView2<f64>) -> Trace {
        match self {
            Network::Linear { w } => Trace {
                output: y.dot(w),
                hidden: None,
            },
            Network::Ffn { w1, w2 } => {
                let h = y.dot(w2).mapv_into(f64::tanh);
                Trace {
                    output: h.dot(w1),
                    hidden: Some(h),
                }
            }
        }
    }

    /// Accumulate parameter gradients of `apply` given `d_out = dL/d output`.
    fn backprop(&self, x: ArrayView2<f64>, trace: &Trace, d_out: ArrayView2<f64>, grads: &mut [Array2<f64>]) {
        match self {
            Network::Linear { .. } => {
                grads[0] += &d_out.t().dot(&x);
            }
            Network::Ffn { w2, .. } => {
                let h = trace.hidden.as_ref().expect("ffn trace has hidden activations");
                grads[1] += &d_out.t().dot(h);
                let mut d_pre = d_out.dot(w2);
                d_pre.zip_mut_with(h, |g, &a| *g *= 1.0 - a * a);
                grads[0] += &d_pre.t().dot(&x);
            }
        }
    }

    /// Accumulate parameter gradients of `apply_transposed`.
    fn backprop_transposed(
        &self,
        y: ArrayView2<f64>,
        trace: &Trace,
        d_out: ArrayView2<f64>,
        grads: &mut [Array2<f64>],
    ) {
        match self {
            Network::Linear { .. } => {
                grads[0] += &y.t().dot(&d_out);
            }
            Network::Ffn { w1, .. } => {
                let h = trace.hidden.as_ref().expect("ffn trace has hidden activations");
                grads[0] += &h.t().dot(&d_out);
                let mut d_pre = d_out.dot(&w1.t());
                d_pre.zip_mut_with(h, |g, &a| *g *= 1.0 - a * a);
                grads[1] += &y.t().dot(&d_pre);
            }
        }
    }

    fn init<R: Rng>(kind: MapperKind, d: usize, h: usize, rng: &mut R) -> Network {
        match kind {
            MapperKind::Linear => Network::Linear { w: Array2::eye(d) },
            MapperKind::Ffn => {
                let a = (6.0 / (d + h) as f64).sqrt();
                let w1 = Array2::from_shape_simple_fn((h, d), || rng.gen_range(-a..=a));
                let w2 = Array2::from_shape_simple_fn((d, h), || rng.gen_range(-a..=a));
                Network::Ffn { w1, w2 }
            }
        }
    }
}

/// Forward/reverse mapping with shared or independent parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mapper {
    net: Network,
    reverse_net: Option<Network>,
}

impl Mapper {
    /// Shared-transpose linear mapper with weight `w`.
    pub fn linear(w: Array2<f64>) -> Result<Self> {
        Self::from_networks(Network::Linear { w }, None)
    }

    /// Shared-transpose FFN mapper with `w1: h x d` and `w2: d x h`.
    pub fn ffn(w1: Array2<f64>, w2: Array2<f64>) -> Result<Self> {
        Self::from_networks(Network::Ffn { w1, w2 }, None)
    }

    pub fn from_networks(net: Network, reverse_net: Option<Network>) -> Result<Self> {
        net.validate()?;
        if let Some(r) = &reverse_net {
            r.validate()?;
            if r.kind() != net.kind() || r.dim() != net.dim() || r.hidden() != net.hidden() {
                return Err(Error::InvalidDimensions(
                    "independent reverse network must match the forward network".into(),
                ));
            }
        }
        Ok(Self { net, reverse_net })
    }

    /// Linear: identity. FFN: entries uniform in `[-a, a]`, `a = sqrt(6 / (d + h))`.
    pub fn init(kind: MapperKind, d: usize, h: usize, sharing: Sharing, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimensions("d must be at least 1".into()));
        }
        if kind == MapperKind::Ffn && h == 0 {
            return Err(Error::InvalidDimensions("hidden size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::init(kind, d, h, &mut rng);
        let reverse_net = match sharing {
            Sharing::Shared => None,
            Sharing::Independent => Some(Network::init(kind, d, h, &mut rng)),
        };
        Ok(Self { net, reverse_net })
    }

    pub fn kind(&self) -> MapperKind {
        self.net.kind()
    }

    pub fn sharing(&self) -> Sharing {
        if self.reverse_net.is_some() {
            Sharing::Independent
        } else {
            Sharing::Shared
        }
    }

    pub fn dim(&self) -> usize {
        self.net.dim()
    }

    /// Hidden size; 0 for linear mappers.
    pub fn hidden(&self) -> usize {
        self.net.hidden()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn reverse_network(&self) -> Option<&Network> {
        self.reverse_net.as_ref()
    }

    /// The linear weight, if this is a linear mapper.
    pub fn linear_weight(&self) -> Option<&Array2<f64>> {
        match &self.net {
            Network::Linear { w } => Some(w),
            Network::Ffn { .. } => None,
        }
    }

    /// Every parameter tensor: forward network first, then the independent
    /// reverse network if present.
    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut p = self.net.params();
        if let Some(r) = &self.reverse_net {
            p.extend(r.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut p = self.net.params_mut();
        if let Some(r) = &mut self.reverse_net {
            p.extend(r.params_mut());
        }
        p
    }

    /// Layers as seen by the orthogonal penalty (same order as `params`).
    pub fn layers(&self) -> Vec<&Array2<f64>> {
        self.params()
    }

    fn check(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, mapper expects {}",
                x.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Map source rows into the target space.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_trace(x)?.output)
    }

    /// Map target rows back into the source space.
    pub fn reverse(&self, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.reverse_trace(y)?.output)
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<Trace> {
        self.check(x)?;
        Ok(self.net.apply(x))
    }

    pub fn reverse_trace(&self, y: ArrayView2<f64>) -> Result<Trace> {
        self.check(y)?;
        Ok(match &self.reverse_net {
            None => self.net.apply_transposed(y),
            Some(r) => r.apply(y),
        })
    }

    /// Accumulate `dL/dθ` for a forward flow given `dL/d output`.
    pub fn backprop_forward(&self, x: ArrayView2<f64>, trace: &Trace, d_out: ArrayView2<f64>, grads: &mut Gradients) {
        let n = self.net.params().len();
        self.net.backprop(x, trace, d_out, &mut grads.0[..n]);
    }

    /// Accumulate `dL/dθ` for a reverse flow given `dL/d output`.
    pub fn backprop_reverse(&self, y: ArrayView2<f64>, trace: &Trace, d_out: ArrayView2<f64>, grads: &mut Gradients) {
        let n = self.net.params().len();
        match &self.reverse_net {
            None => self.net.backprop_transposed(y, trace, d_out, &mut grads.0[..n]),
            Some(r) => r.backprop(y, trace, d_out, &mut grads.0[n..]),
        }
    }

    /// For a shared linear mapper, the mapper whose forward flow is this one's
    /// reverse flow (weight `W^T`).
    pub fn transpose_dual(&self) -> Option<Mapper> {
        match (&self.net, &self.reverse_net) {
            (Network::Linear { w }, None) => Some(Mapper {
                net: Network::Linear { w: w.t().to_owned() },
                reverse_net: None,
            }),
            _ => None,
        }
    }

    /// Serialize to the binary model format.
    ///
    /// Layout: `"BDMA"`, version byte, kind byte (0 linear, 1 ffn), sharing
    /// byte (0 shared, 1 independent), `d` and `h` as little-endian `u32`,
    /// every parameter matrix row-major as little-endian `f64`, then a
    /// little-endian CRC32 of all preceding bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n_values: usize = self.params().iter().map(|p| p.len()).sum();
        let mut out = Vec::with_capacity(15 + 8 * n_values + 4);
        out.extend_from_slice(MODEL_MAGIC);
        out.push(MODEL_FORMAT_VERSION);
        out.push(match self.kind() {
            MapperKind::Linear => 0,
            MapperKind::Ffn => 1,
        });
        out.push(match self.sharing() {
            Sharing::Shared => 0,
            Sharing::Independent => 1,
        });
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden() as u32).to_le_bytes());
        for p in self.params() {
            for v in p.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const HEADER: usize = 4 + 3 + 8;
        if bytes.len() < 4 {
            return Err(Error::Checksum);
        }
        let (payload, crc) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(payload) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
            return Err(Error::Checksum);
        }
        if payload.len() < HEADER || &payload[..4] != MODEL_MAGIC {
            return Err(Error::CorruptHeader("bad magic".into()));
        }
        if payload[4] != MODEL_FORMAT_VERSION {
            return Err(Error::CorruptHeader(format!("unsupported version {}", payload[4])));
        }
        let kind = match payload[5] {
            0 => MapperKind::Linear,
            1 => MapperKind::Ffn,
            b => return Err(Error::CorruptHeader(format!("unknown kind byte {b}"))),
        };
        let sharing = match payload[6] {
            0 => Sharing::Shared,
            1 => Sharing::Independent,
            b => return Err(Error::CorruptHeader(format!("unknown sharing byte {b}"))),
        };
        let d = u32::from_le_bytes(payload[7..11].try_into().expect("4 bytes")) as usize;
        let h = u32::from_le_bytes(payload[11..15].try_into().expect("4 bytes")) as usize;

        let shapes: Vec<(usize, usize)> = match kind {
            MapperKind::Linear => vec![(d, d)],
            MapperKind::Ffn => vec![(h, d), (d, h)],
        };
        let copies = if sharing == Sharing::Independent { 2 } else { 1 };
        let expected: usize = shapes.iter().map(|(a, b)| a * b).sum::<usize>() * copies;
        let body = &payload[HEADER..];
        if body.len() != expected * 8 {
            return Err(Error::Shape(format!(
                "model body holds {} bytes, header implies {}",
                body.len(),
                expected * 8
            )));
        }

        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut read_net = || -> Result<Network> {
            let mut mats = Vec::new();
            for &(r, c) in &shapes {
                let data: Vec<f64> = values.by_ref().take(r * c).collect();
                mats.push(Array2::from_shape_vec((r, c), data).map_err(|e| Error::Shape(e.to_string()))?);
            }
            Ok(match kind {
                MapperKind::Linear => Network::Linear { w: mats.remove(0) },
                MapperKind::Ffn => {
                    let w1 = mats.remove(0);
                    Network::Ffn { w1, w2: mats.remove(0) }
                }
            })
        };
        let net = read_net()?;
        let reverse_net = match sharing {
            Sharing::Shared => None,
            Sharing::Independent => Some(read_net()?),
        };
        Self::from_networks(net, reverse_net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
