//! GCN backbone.
//!
//! Each layer computes `H' = relu(Â H W)` with `Â = D̃^-1/2 (A + I) D̃^-1/2`;
//! the last layer is linear. The encoder runs on each homogeneous view
//! separately with shared weights, and keeps enough forward state to
//! back-propagate an adjoint on the output embeddings into every weight.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::template::HomoView;

/// Sparse symmetric-normalized adjacency with self-loops, in row lists.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdj {
    rows: Vec<Vec<(usize, f64)>>,
}

impl NormAdj {
    pub fn new(view: &HomoView) -> NormAdj {
        let n = view.len();
        let mut nbrs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(a, b) in &view.edges {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        for list in &mut nbrs {
            list.sort_unstable();
            list.dedup();
        }
        let inv_sqrt: Vec<f64> = nbrs.iter().map(|l| 1.0 / (l.len() as f64).sqrt()).collect();
        let rows = nbrs
            .iter()
            .enumerate()
            .map(|(i, l)| l.iter().map(|&j| (j, inv_sqrt[i] * inv_sqrt[j])).collect())
            .collect();
        NormAdj { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|&&(c, _)| c == j).map_or(0.0, |&(_, w)| w)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.len();
        let mut m = Array2::zeros((n, n));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[[i, j]] = w;
            }
        }
        m
    }

    /// `Â · m`
    pub fn apply(&self, m: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), m.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = out.row_mut(i);
            for &(j, w) in row {
                acc.scaled_add(w, &m.row(j));
            }
        }
        out
    }
}

/// Backbone weights, one `in × out` matrix per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Array2<f64>>,
    pub seed: u64,
}

impl EncoderParams {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers.last().map_or(0, |w| w.ncols())
    }

    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|w| w.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Array2<f64>> {
        self.layers.iter().map(|w| Array2::zeros(w.raw_dim())).collect()
    }

    /// SHA-256 over the little-endian weight bytes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.layers {
            for x in w.iter() {
                h.update(x.to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }
}

/// Glorot-uniform weights, deterministic per seed.
pub fn init_params(feature_dim: usize, hidden_dim: usize, num_layers: usize, seed: u64) -> Result<EncoderParams> {
    if feature_dim == 0 || hidden_dim == 0 || num_layers == 0 {
        return Err(Error::arg("encoder dimensions must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = (0..num_layers)
        .map(|l| {
            let fan_in = if l == 0 { feature_dim } else { hidden_dim };
            let bound = (6.0 / (fan_in + hidden_dim) as f64).sqrt();
            Array2::from_shape_simple_fn((fan_in, hidden_dim), || rng.gen_range(-bound..bound))
        })
        .collect();
    Ok(EncoderParams { layers, seed })
}

/// Forward pass over one view with the state needed for the backward pass.
#[derive(Debug, Clone)]
pub struct ViewForward {
    adj: NormAdj,
    /// `Â H_l` per layer.
    propagated: Vec<Array2<f64>>,
    /// `Â H_l W_l` per layer.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ViewForward {
    pub fn embeddings(&self) -> &Array2<f64> {
        &self.output
    }

    /// Accumulates `∂L/∂W_l` into `grads` given `adjoint = ∂L/∂H_out`.
    pub fn backward(&self, adjoint: ArrayView2<f64>, params: &EncoderParams, grads: &mut [Array2<f64>]) -> Result<()> {
        if adjoint.dim() != self.output.dim() {
            return Err(Error::dim(format!("adjoint {:?} vs embeddings {:?}", adjoint.dim(), self.output.dim())));
        }
        if grads.len() != params.layers.len() || self.pre.len() != params.layers.len() {
            return Err(Error::dim("gradient buffers do not match encoder layers"));
        }
        if self.output.nrows() == 0 {
            return Ok(());
        }
        let last = params.layers.len() - 1;
        let mut g = adjoint.to_owned();
        for l in (0..=last).rev() {
            if l != last {
                g.zip_mut_with(&self.pre[l], |gi, &z| {
                    if z <= 0.0 {
                        *gi = 0.0;
                    }
                });
            }
            grads[l] += &self.propagated[l].t().dot(&g);
            if l > 0 {
                let back = g.dot(&params.layers[l].t());
                g = self.adj.apply(back.view());
            }
        }
        Ok(())
    }
}

/// Runs the encoder on one view. `features` rows align with `view.members`.
pub fn encode_view(view: &HomoView, features: ArrayView2<f64>, params: &EncoderParams) -> Result<ViewForward> {
    if features.nrows() != view.len() {
        return Err(Error::dim(format!("{} feature rows for {} view nodes", features.nrows(), view.len())));
    }
    if features.ncols() != params.input_dim() {
        return Err(Error::dim(format!(
            "feature dim {} but encoder expects {}",
            features.ncols(),
            params.input_dim()
        )));
    }
    let adj = NormAdj::new(view);
    let last = params.layers.len() - 1;
    let mut h = features.to_owned();
    let mut propagated = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    for (l, w) in params.layers.iter().enumerate() {
        let ah = adj.apply(h.view());
        let z = ah.dot(w);
        h = if l == last { z.clone() } else { z.mapv(|x| x.max(0.0)) };
        propagated.push(ah);
        pre.push(z);
    }
    Ok(ViewForward { adj, propagated, pre, output: h })
}

/// Encoder outputs for every view of a graph template.
#[derive(Debug, Clone)]
pub struct EncodedViews {
    pub views: Vec<HomoView>,
    pub forwards: Vec<ViewForward>,
}

impl EncodedViews {
    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn embeddings(&self, view: usize) -> &Array2<f64> {
        self.forwards[view].embeddings()
    }

    pub fn hidden_dim(&self) -> usize {
        self.forwards.first().map_or(0, |f| f.output.ncols())
    }

    /// Accumulates weight gradients from per-view adjoints, in view order.
    pub fn backward(&self, adjoints: &[Array2<f64>], params: &EncoderParams) -> Result<Vec<Array2<f64>>> {
        if adjoints.len() != self.forwards.len() {
            return Err(Error::dim("one adjoint per view required"));
        }
        let mut grads = params.zeros_like();
        for (fwd, adj) in self.forwards.iter().zip(adjoints) {
            fwd.backward(adj.view(), params, &mut grads)?;
        }
        Ok(grads)
    }

    pub fn zero_adjoints(&self) -> Vec<Array2<f64>> {
        self.forwards.iter().map(|f| Array2::zeros(f.output.raw_dim())).collect()
    }
}

/// Encodes each view independently with shared weights.
pub fn encode_all(views: &[HomoView], graph: &HeteroGraph, params: &EncoderParams) -> Result<EncodedViews> {
    let forwards = views
        .iter()
        .map(|view| {
            let feats = graph.features().select(Axis(0), &view.members);
            encode_view(view, feats.view(), params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncodedViews { views: views.to_vec(), forwards })
}

const MAGIC: &[u8; 8] = b"HGPCKPT\0";
const FORMAT_VERSION: u32 = 1;

/// Writes the checkpoint: magic, format version (u32), seed (u64), layer
/// count (u32), layer dims (u32 each), then row-major f64 weights. All
/// integers and floats little-endian.
pub fn save_checkpoint(params: &EncoderParams, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + 8 * params.num_weights());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&params.seed.to_le_bytes());
    buf.extend_from_slice(&(params.num_layers() as u32).to_le_bytes());
    buf.extend_from_slice(&(params.input_dim() as u32).to_le_bytes());
    for w in &params.layers {
        buf.extend_from_slice(&(w.ncols() as u32).to_le_bytes());
    }
    for w in &params.layers {
        for x in w.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length is N"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if &r.take::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let seed = u64::from_le_bytes(r.take()?);
    let num_layers = r.u32()? as usize;
    if num_layers == 0 {
        return Err(Error::Checkpoint("no layers".into()));
    }
    let dims = (0..=num_layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Checkpoint("zero dimension".into()));
    }
    let mut layers = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let (rows, cols) = (dims[l], dims[l + 1]);
        let data = (0..rows * cols)
            .map(|_| r.take::<8>().map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        layers.push(Array2::from_shape_vec((rows, cols), data).expect("length matches shape"));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(EncoderParams { layers, seed })
}
