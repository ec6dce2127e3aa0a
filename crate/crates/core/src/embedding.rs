//! Prompted readout, view aggregation, cosine similarity and prototypes.
//!
//! For an instance with per-view mean embeddings `m_i` the prompted
//! embedding is `s = p_feat ⊙ Σ_i (1 + p_het_i) m_i`: readout is the mean
//! of `p_feat ⊙ h_v` over a view's nodes and views are combined by a
//! weighted sum. The identity prompt (`p_feat = 1`, `p_het = 0`) gives the
//! unprompted pipeline.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::encoder::EncodedViews;
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::template::{template_of_subgraph, HomoView, Subgraph};

/// Norms below this are treated as zero by [`cosine_sim`].
pub const ZERO_NORM: f64 = 1e-12;

/// Feature prompt (one weight per hidden dimension) and heterogeneity
/// prompt (one weight per template view).
#[derive(Debug, Clone, PartialEq)]
pub struct PromptPair {
    pub feat: Array1<f64>,
    pub het: Array1<f64>,
}

impl PromptPair {
    pub fn identity(hidden_dim: usize, num_views: usize) -> Self {
        PromptPair { feat: Array1::ones(hidden_dim), het: Array1::zeros(num_views) }
    }

    pub fn num_params(&self) -> usize {
        self.feat.len() + self.het.len()
    }

    pub fn is_finite(&self) -> bool {
        self.feat.iter().chain(self.het.iter()).all(|x| x.is_finite())
    }
}

/// How an instance embedding is formed from view embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceMode {
    /// Single readout over view 0 (homogeneous treatment, no aggregation).
    Direct,
    /// Readout per template view, then prompt-weighted sum.
    Templated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphEmbedding {
    pub s: Array1<f64>,
    pub instance: usize,
}

/// Mean of `p_feat ⊙ h_v` over rows; zero vector for no rows.
pub fn readout(rows: ArrayView2<f64>, p_feat: Option<ArrayView1<f64>>) -> Result<Array1<f64>> {
    let dim = rows.ncols();
    if let Some(p) = p_feat {
        if p.len() != dim {
            return Err(Error::dim(format!("p_feat has {} entries, embeddings {dim}", p.len())));
        }
    }
    if rows.nrows() == 0 {
        return Ok(Array1::zeros(dim));
    }
    let mean = rows.mean_axis(Axis(0)).expect("non-empty");
    Ok(match p_feat {
        Some(p) => &mean * &p,
        None => mean,
    })
}

/// `Σ_i (1 + p_het_i) r_i`; `p_het = None` means all zeros.
pub fn aggregate_views(readouts: &[Array1<f64>], p_het: Option<ArrayView1<f64>>) -> Result<Array1<f64>> {
    let first = readouts.first().ok_or_else(|| Error::dim("no readouts to aggregate"))?;
    if let Some(p) = p_het {
        if p.len() != readouts.len() {
            return Err(Error::dim(format!("{} readouts for {} heterogeneity weights", readouts.len(), p.len())));
        }
    }
    let mut s = Array1::zeros(first.len());
    for (i, r) in readouts.iter().enumerate() {
        if r.len() != s.len() {
            return Err(Error::dim("readouts differ in length"));
        }
        let weight = 1.0 + p_het.map_or(0.0, |p| p[i]);
        s.scaled_add(weight, r);
    }
    Ok(s)
}

pub fn cosine_sim(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    if na < ZERO_NORM || nb < ZERO_NORM {
        return 0.0;
    }
    a.dot(&b) / (na * nb)
}

/// Cosine similarity with its gradients `(∂/∂a, ∂/∂b)`. Both gradients are
/// zero wherever the zero-norm convention applies.
pub fn cosine_with_grad(a: ArrayView1<f64>, b: ArrayView1<f64>) -> (f64, Array1<f64>, Array1<f64>) {
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    if na < ZERO_NORM || nb < ZERO_NORM {
        return (0.0, Array1::zeros(a.len()), Array1::zeros(b.len()));
    }
    let sim = a.dot(&b) / (na * nb);
    let ga = &b / (na * nb) - &a * (sim / (na * na));
    let gb = &a / (na * nb) - &b * (sim / (nb * nb));
    (sim, ga, gb)
}

/// Per-class mean of support embeddings. `groups[c]` holds class `c`'s supports.
pub fn class_prototypes(groups: &[Vec<Array1<f64>>]) -> Result<Vec<Array1<f64>>> {
    groups
        .iter()
        .enumerate()
        .map(|(c, members)| {
            let first = members
                .first()
                .ok_or_else(|| Error::arg(format!("class {c} has no support instances")))?;
            let mut sum = Array1::zeros(first.len());
            for m in members {
                sum += m;
            }
            Ok(sum / members.len() as f64)
        })
        .collect()
}

/// Index of the most cosine-similar prototype; ties go to the lowest index.
pub fn classify(query: ArrayView1<f64>, prototypes: &[Array1<f64>]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, p) in prototypes.iter().enumerate() {
        let sim = cosine_sim(query, p.view());
        if sim > best.1 {
            best = (c, sim);
        }
    }
    best.0
}

/// Rows of each encoded view that belong to an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceIndex {
    pub locals: Vec<Vec<usize>>,
}

impl InstanceIndex {
    /// Applies the graph template to `sub` and locates each view's members
    /// in the globally encoded views.
    pub fn new(sub: &Subgraph, graph: &HeteroGraph, encoded: &EncodedViews) -> Result<Self> {
        Self::from_views(sub, graph, &encoded.views)
    }

    /// As [`InstanceIndex::new`] against the leading `views.len()` template
    /// views (a single view means the direct, type-agnostic readout).
    pub fn from_views(sub: &Subgraph, graph: &HeteroGraph, views: &[HomoView]) -> Result<Self> {
        let sub_views = template_of_subgraph(sub, graph);
        if views.len() != sub_views.len() && views.len() != 1 {
            return Err(Error::dim(format!(
                "instance has {} views, encoder {}",
                sub_views.len(),
                views.len()
            )));
        }
        let locals = sub_views
            .iter()
            .zip(views)
            .map(|(sv, ev)| {
                sv.members
                    .iter()
                    .map(|&v| ev.local(v).ok_or(Error::InvalidNode(v)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InstanceIndex { locals })
    }

    /// Unprompted per-view readouts, one row per view.
    pub fn readouts(&self, encoded: &EncodedViews) -> Array2<f64> {
        let mut out = Array2::zeros((self.locals.len(), encoded.hidden_dim()));
        for (i, rows) in self.locals.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let emb = encoded.embeddings(i);
            let mut acc = out.row_mut(i);
            for &r in rows {
                acc += &emb.row(r);
            }
            acc /= rows.len() as f64;
        }
        out
    }

    /// Adds `∂L/∂h` for every member row given `∂L/∂m_i` per view.
    pub fn scatter_readout_grad(&self, d_readouts: ArrayView2<f64>, adjoints: &mut [Array2<f64>]) {
        for (i, rows) in self.locals.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let scale = 1.0 / rows.len() as f64;
            for &r in rows {
                adjoints[i].row_mut(r).scaled_add(scale, &d_readouts.row(i));
            }
        }
    }
}

/// Prompted embedding from unprompted per-view readouts.
pub fn embed_readouts(readouts: ArrayView2<f64>, prompts: &PromptPair, mode: InstanceMode) -> Array1<f64> {
    let u = combine(readouts, prompts, mode);
    &u * &prompts.feat
}

/// `Σ_i (1 + p_het_i) m_i` (templated) or `m_0` (direct), before `p_feat`.
fn combine(readouts: ArrayView2<f64>, prompts: &PromptPair, mode: InstanceMode) -> Array1<f64> {
    match mode {
        InstanceMode::Direct => readouts.row(0).to_owned(),
        InstanceMode::Templated => {
            let mut u = Array1::zeros(readouts.ncols());
            for (i, row) in readouts.rows().into_iter().enumerate() {
                u.scaled_add(1.0 + prompts.het[i], &row);
            }
            u
        }
    }
}

/// Gradients of a scalar through [`embed_readouts`] given `ds = ∂L/∂s`.
pub struct ReadoutGrads {
    pub feat: Array1<f64>,
    pub het: Array1<f64>,
    /// `∂L/∂m_i`, one row per view.
    pub readouts: Array2<f64>,
}

pub fn embed_readouts_backward(
    readouts: ArrayView2<f64>,
    prompts: &PromptPair,
    mode: InstanceMode,
    ds: ArrayView1<f64>,
) -> ReadoutGrads {
    let u = combine(readouts, prompts, mode);
    let feat = &ds * &u;
    let dsf = &ds * &prompts.feat;
    let mut het = Array1::zeros(prompts.het.len());
    let mut d_readouts = Array2::zeros(readouts.raw_dim());
    match mode {
        InstanceMode::Direct => d_readouts.row_mut(0).assign(&dsf),
        InstanceMode::Templated => {
            for (i, row) in readouts.rows().into_iter().enumerate() {
                het[i] = dsf.dot(&row);
                d_readouts.row_mut(i).assign(&(&dsf * (1.0 + prompts.het[i])));
            }
        }
    }
    ReadoutGrads { feat, het, readouts: d_readouts }
}

/// Full instance embedding: template the subgraph, read out each view with
/// the feature prompt, then aggregate with the heterogeneity prompt. With
/// `prompts = None` the unprompted path (plain readout, plain sum) is used.
pub fn embed_instance(
    sub: &Subgraph,
    instance: usize,
    graph: &HeteroGraph,
    encoded: &EncodedViews,
    prompts: Option<&PromptPair>,
    mode: InstanceMode,
) -> Result<SubgraphEmbedding> {
    let views = template_of_subgraph(sub, graph);
    let p_feat = prompts.map(|p| p.feat.view());
    let readout_of = |i: usize| -> Result<Array1<f64>> {
        let ev = &encoded.views[i];
        let rows: Vec<usize> = views[i]
            .members
            .iter()
            .map(|&v| ev.local(v).ok_or(Error::InvalidNode(v)))
            .collect::<Result<_>>()?;
        readout(encoded.embeddings(i).select(Axis(0), &rows).view(), p_feat)
    };
    if views.len() != encoded.num_views() {
        return Err(Error::dim("instance template does not match encoded views"));
    }
    let s = match mode {
        InstanceMode::Direct => readout_of(0)?,
        InstanceMode::Templated => {
            let rs = (0..views.len()).map(readout_of).collect::<Result<Vec<_>>>()?;
            aggregate_views(&rs, prompts.map(|p| p.het.view()))?
        }
    };
    Ok(SubgraphEmbedding { s, instance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn close(a: &Array1<f64>, b: &Array1<f64>, tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn readout_cases() {
        let one = array![[1.5, -2.0]];
        assert_eq!(readout(one.view(), Some(array![1.0, 1.0].view())).unwrap(), array![1.5, -2.0]);
        assert_eq!(readout(one.view(), Some(array![0.0, 0.0].view())).unwrap(), array![0.0, 0.0]);
        let two = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(readout(two.view(), Some(array![2.0, 0.0].view())).unwrap(), array![4.0, 0.0]);
        assert_eq!(readout(Array2::zeros((0, 3)).view(), None).unwrap(), Array1::zeros(3));
        assert!(readout(two.view(), Some(array![1.0].view())).is_err());
    }

    #[test]
    fn aggregation_cases() {
        let rs = vec![array![1.0, 0.0], array![0.0, 1.0]];
        assert_eq!(aggregate_views(&rs, None).unwrap(), array![1.0, 1.0]);
        assert_eq!(aggregate_views(&rs, Some(array![1.0, -1.0].view())).unwrap(), array![2.0, 0.0]);
        assert!(aggregate_views(&rs, Some(array![0.0].view())).is_err());
        assert!(aggregate_views(&[], None).is_err());
    }

    #[test]
    fn cosine_cases() {
        let x = array![0.3, -1.2, 2.0];
        assert!((cosine_sim(x.view(), x.view()) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(array![1.0, 0.0].view(), array![0.0, 3.0].view()), 0.0);
        let s = cosine_sim(array![1.0, 0.0].view(), array![1.0, 1.0].view());
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((s - 0.70711).abs() < 1e-5);
        assert_eq!(cosine_sim(array![0.0, 0.0].view(), x.slice(ndarray::s![..2])), 0.0);
    }

    #[test]
    fn cosine_gradient_matches_central_differences() {
        let a = array![0.4, -1.1, 0.7];
        let b = array![1.3, 0.2, -0.5];
        let (_, ga, gb) = cosine_with_grad(a.view(), b.view());
        let h = 1e-6;
        for i in 0..3 {
            let mut ap = a.clone();
            ap[i] += h;
            let mut am = a.clone();
            am[i] -= h;
            let fd = (cosine_sim(ap.view(), b.view()) - cosine_sim(am.view(), b.view())) / (2.0 * h);
            assert!((fd - ga[i]).abs() < 1e-8);
            let mut bp = b.clone();
            bp[i] += h;
            let mut bm = b.clone();
            bm[i] -= h;
            let fd = (cosine_sim(a.view(), bp.view()) - cosine_sim(a.view(), bm.view())) / (2.0 * h);
            assert!((fd - gb[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn prototypes_are_means() {
        let p = class_prototypes(&[vec![array![0.0, 2.0], array![2.0, 0.0]], vec![array![5.0, 1.0]]]).unwrap();
        assert_eq!(p, vec![array![1.0, 1.0], array![5.0, 1.0]]);
        assert!(class_prototypes(&[vec![array![1.0]], vec![]]).is_err());
    }

    #[test]
    fn classify_cases() {
        let protos = vec![array![0.0, 1.0, 0.0], array![2.0, 0.0, 0.0], array![0.0, 0.0, 1.0]];
        assert_eq!(classify(array![3.0, 0.0, 0.0].view(), &protos), 1);
        let protos = vec![array![1.0, 0.1], array![0.0, 1.0]];
        assert_eq!(classify(array![1.0, 0.0].view(), &protos), 0);
        let same = vec![array![1.0, 1.0]; 3];
        assert_eq!(classify(array![0.3, -2.0].view(), &same), 0);
    }

    #[test]
    fn readout_backward_is_linear_in_prompts() {
        let m = array![[1.0, 2.0], [0.5, -1.0], [0.0, 0.0]];
        let prompts = PromptPair { feat: array![0.5, 2.0], het: array![0.1, -0.3, 0.7] };
        let s = embed_readouts(m.view(), &prompts, InstanceMode::Templated);
        // s = feat ⊙ (1.1 m0 + 0.7 m1)
        assert!(close(&s, &array![0.5 * (1.1 + 0.35), 2.0 * (2.2 - 0.7)], 1e-12));
        let g = embed_readouts_backward(m.view(), &prompts, InstanceMode::Templated, array![1.0, 1.0].view());
        assert_eq!(g.het[2], 0.0);
        assert!((g.het[0] - (0.5 * 1.0 + 2.0 * 2.0)).abs() < 1e-12);
        assert!(close(&g.feat, &array![1.1 + 0.35, 2.2 - 0.7], 1e-12));

        let d = embed_readouts(m.view(), &prompts, InstanceMode::Direct);
        assert!(close(&d, &array![0.5, 4.0], 1e-12));
    }
}
