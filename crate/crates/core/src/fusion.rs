//! Modality fusion: summation, additive attention and normalized attention.
//!
//! Embeddings are channel-major: the audio embedding is `[D, 1]` and is
//! broadcast over frames, visual and mixture embeddings are `[D, T]`.

use tse_autodiff::{Graph, ParamStore, Real, Tensor, Var};

use crate::error::{CoreError, Result};

/// Additive attention parameters bound into a graph.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    /// Score vector `w`, stored as `[1, D_att]`.
    pub w: Var,
    /// Mixture projection `W`, `[D_att, D_e]`.
    pub mix_proj: Var,
    /// Clue projection `V`, `[D_att, D_e]`.
    pub clue_proj: Var,
    /// Bias `b`, `[D_att]`.
    pub bias: Var,
    pub epsilon_sharpen: f64,
}

impl AttentionParams {
    pub const PREFIX: &'static str = "fusion.attn";

    /// Parameter names and shapes for a given embedding width.
    pub fn shapes(embed_dim: usize) -> [(String, Vec<usize>); 4] {
        let p = Self::PREFIX;
        [
            (format!("{p}.w"), vec![1, embed_dim]),
            (format!("{p}.W"), vec![embed_dim, embed_dim]),
            (format!("{p}.V"), vec![embed_dim, embed_dim]),
            (format!("{p}.b"), vec![embed_dim]),
        ]
    }

    pub fn bind<F: Real>(g: &mut Graph<F>, store: &ParamStore<F>, epsilon_sharpen: f64) -> Result<Self> {
        if !(epsilon_sharpen > 0.0) {
            return Err(CoreError::InvalidConfig { field: "epsilon_sharpen", reason: "must be positive".into() });
        }
        let p = Self::PREFIX;
        Ok(AttentionParams {
            w: g.param_named(store, &format!("{p}.w"))?,
            mix_proj: g.param_named(store, &format!("{p}.W"))?,
            clue_proj: g.param_named(store, &format!("{p}.V"))?,
            bias: g.param_named(store, &format!("{p}.b"))?,
            epsilon_sharpen,
        })
    }
}

/// Graph handles of a fusion result.
#[derive(Clone, Copy, Debug)]
pub struct FusionVars {
    /// Fused clue `[D_e, T]`.
    pub fused: Var,
    /// Attention weights `[2, T]`; row 0 audio, row 1 visual.
    pub weights: Var,
    /// Per-frame scale `[1, T]`; all ones outside normalized mode.
    pub scale: Var,
}

/// Concrete fusion result read back from a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionOutput<F> {
    pub fused: Tensor<F>,
    /// Per-frame `(a_audio, a_visual)`.
    pub weights: Vec<[F; 2]>,
    pub scale: Vec<F>,
}

impl FusionVars {
    pub fn output<F: Real>(&self, g: &Graph<F>) -> FusionOutput<F> {
        let w = g.value(self.weights).data();
        let t = w.len() / 2;
        FusionOutput {
            fused: g.value(self.fused).clone(),
            weights: (0..t).map(|i| [w[i], w[t + i]]).collect(),
            scale: g.value(self.scale).data().to_vec(),
        }
    }
}

fn frames<F: Real>(g: &Graph<F>, z_a: Var, z_v: Var, z_m: Option<Var>) -> Result<(usize, usize)> {
    let (sa, sv) = (g.shape(z_a), g.shape(z_v));
    if sa.len() != 2 || sv.len() != 2 || sa[1] != 1 || sa[0] != sv[0] {
        return Err(CoreError::Shape(format!("fusion expects audio [D, 1] and visual [D, T], got {sa:?} and {sv:?}")));
    }
    if let Some(m) = z_m {
        let sm = g.shape(m);
        if sm != sv {
            return Err(CoreError::Shape(format!("mixture embedding {sm:?} does not match visual {sv:?}")));
        }
    }
    Ok((sv[0], sv[1]))
}

fn ones<F: Real>(g: &mut Graph<F>, t: usize) -> Var {
    g.constant(Tensor::full(&[1, t], F::one()))
}

/// Score `e_t = w . tanh(W z_M,t + V z_psi,t + b)` for every frame, `[1, T]`.
/// `z_psi` may be `[D, 1]` (broadcast) or `[D, T]`.
pub fn additive_score<F: Real>(g: &mut Graph<F>, z_m: Var, z_psi: Var, p: &AttentionParams) -> Result<Var> {
    let mixed = g.linear(z_m, p.mix_proj, Some(p.bias))?;
    let clue = g.linear(z_psi, p.clue_proj, None)?;
    let pre = g.add(mixed, clue)?;
    let h = g.tanh(pre)?;
    Ok(g.linear(h, p.w, None)?)
}

/// Softmax over the two modalities of the sharpened scores, `[2, T]`.
pub fn attention_weights<F: Real>(g: &mut Graph<F>, e_a: Var, e_v: Var, epsilon_sharpen: f64) -> Result<Var> {
    let e = g.concat(&[e_a, e_v], 0)?;
    let sharp = g.scale(e, epsilon_sharpen)?;
    Ok(g.softmax(sharp, 0)?)
}

fn convex<F: Real>(g: &mut Graph<F>, z_a: Var, z_v: Var, weights: Var, t: usize) -> Result<Var> {
    let a_a = g.slice(weights, 0, 0, 1)?;
    let a_v = g.slice(weights, 0, 1, 1)?;
    let part_a = g.mul(a_a, z_a)?;
    let part_v = g.mul(a_v, z_v)?;
    debug_assert_eq!(g.shape(part_v)[1], t);
    Ok(g.add(part_a, part_v)?)
}

/// Frame-wise convex combination with learned additive-attention weights.
pub fn attention_fuse<F: Real>(
    g: &mut Graph<F>,
    z_a: Var,
    z_v: Var,
    z_m: Var,
    p: &AttentionParams,
) -> Result<FusionVars> {
    let (_, t) = frames(g, z_a, z_v, Some(z_m))?;
    let e_a = additive_score(g, z_m, z_a, p)?;
    let e_v = additive_score(g, z_m, z_v, p)?;
    let weights = attention_weights(g, e_a, e_v, p.epsilon_sharpen)?;
    let fused = convex(g, z_a, z_v, weights, t)?;
    let scale = ones(g, t);
    Ok(FusionVars { fused, weights, scale })
}

/// Unit-normalize each frame (column). Returns `(z / |z|, |z|)` with the norm
/// floored at 1e-8.
pub fn normalize_clue<F: Real>(g: &mut Graph<F>, z: Var) -> Result<(Var, Var)> {
    let norm = g.l2_norm(z, 0)?;
    let unit = g.div(z, norm)?;
    Ok((unit, norm))
}

/// `l_t = 1 / (1/|z_A,t| + 1/|z_V,t|)` and `Z_t = l_t Z'_t`.
pub fn norm_rescale<F: Real>(g: &mut Graph<F>, fused_prime: Var, norm_a: Var, norm_v: Var) -> Result<(Var, Var)> {
    let one = g.constant(Tensor::full(&[1, 1], F::one()));
    let inv_a = g.div(one, norm_a)?;
    let inv_v = g.div(one, norm_v)?;
    let total = g.add(inv_a, inv_v)?;
    let mut l = g.div(one, total)?;
    let t = g.shape(fused_prime)[1];
    if g.shape(l)[1] != t {
        let o = ones(g, t);
        l = g.mul(l, o)?;
    }
    let fused = g.mul(fused_prime, l)?;
    Ok((fused, l))
}

/// Attention computed on unit-normalized clues, rescaled by `l_t`.
pub fn normalized_attention_fuse<F: Real>(
    g: &mut Graph<F>,
    z_a: Var,
    z_v: Var,
    z_m: Var,
    p: &AttentionParams,
) -> Result<FusionVars> {
    let (_, t) = frames(g, z_a, z_v, Some(z_m))?;
    let (u_a, n_a) = normalize_clue(g, z_a)?;
    let (u_v, n_v) = normalize_clue(g, z_v)?;
    let e_a = additive_score(g, z_m, u_a, p)?;
    let e_v = additive_score(g, z_m, u_v, p)?;
    let weights = attention_weights(g, e_a, e_v, p.epsilon_sharpen)?;
    let fused_prime = convex(g, u_a, u_v, weights, t)?;
    let (fused, scale) = norm_rescale(g, fused_prime, n_a, n_v)?;
    Ok(FusionVars { fused, weights, scale })
}

/// Convex combination with constant weights on the simplex.
pub fn forced_fuse<F: Real>(g: &mut Graph<F>, z_a: Var, z_v: Var, weights: [f64; 2]) -> Result<FusionVars> {
    let (_, t) = frames(g, z_a, z_v, None)?;
    check_simplex(weights)?;
    let mut w = vec![weights[0]; t];
    w.extend(std::iter::repeat(weights[1]).take(t));
    let weights = g.constant(Tensor::from_f64(&[2, t], &w)?);
    let fused = convex(g, z_a, z_v, weights, t)?;
    let scale = ones(g, t);
    Ok(FusionVars { fused, weights, scale })
}

/// Equal-weight average of the two clues.
pub fn summation_fuse<F: Real>(g: &mut Graph<F>, z_a: Var, z_v: Var) -> Result<FusionVars> {
    forced_fuse(g, z_a, z_v, [0.5, 0.5])
}

pub fn check_simplex(w: [f64; 2]) -> Result<()> {
    if w.iter().any(|&x| !(x >= -1e-6)) || (w[0] + w[1] - 1.0).abs() > 1e-6 {
        return Err(CoreError::OutOfRange(format!("weights {w:?} are not on the simplex")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(g: &mut Graph<f64>, d: &[f64]) -> Var {
        g.constant(Tensor::from_f64(&[d.len(), 1], d).unwrap())
    }

    fn mat(g: &mut Graph<f64>, rows: usize, d: &[f64]) -> Var {
        g.constant(Tensor::from_f64(&[rows, d.len() / rows], d).unwrap())
    }

    #[test]
    fn forced_endpoints_and_midpoint() {
        let mut g = Graph::<f64>::new();
        let za = col(&mut g, &[2.0, 0.0]);
        let zv = mat(&mut g, 2, &[0.0, 2.0]);
        let mid = summation_fuse(&mut g, za, zv).unwrap().output(&g);
        assert_eq!(mid.fused.data(), &[1.0, 1.0]);
        assert_eq!(mid.weights, vec![[0.5, 0.5]]);
        let audio = forced_fuse(&mut g, za, zv, [1.0, 0.0]).unwrap().output(&g);
        assert_eq!(audio.fused.data(), &[2.0, 0.0]);
        assert!(forced_fuse(&mut g, za, zv, [0.7, 0.7]).is_err());
    }

    #[test]
    fn sharpened_weights() {
        let mut g = Graph::<f64>::new();
        let ea = g.constant(Tensor::from_f64(&[1, 1], &[0.5]).unwrap());
        let ev = g.constant(Tensor::from_f64(&[1, 1], &[0.0]).unwrap());
        let w = attention_weights(&mut g, ea, ev, 2.0).unwrap();
        let a = g.value(w).data()[0];
        assert!((a - 1f64.exp() / (1f64.exp() + 1.0)).abs() < 1e-12);
        let w = attention_weights(&mut g, ea, ea, 2.0).unwrap();
        assert_eq!(g.value(w).data(), &[0.5, 0.5]);
    }

    #[test]
    fn rescale_values() {
        let mut g = Graph::<f64>::new();
        let z = mat(&mut g, 1, &[1.0, 1.0]);
        let na = mat(&mut g, 1, &[2.0, 1.0]);
        let nv = mat(&mut g, 1, &[2.0, 1.0]);
        let (_, l) = norm_rescale(&mut g, z, na, nv).unwrap();
        assert_eq!(g.value(l).data(), &[1.0, 0.5]);
    }

    #[test]
    fn normalize_three_four() {
        let mut g = Graph::<f64>::new();
        let z = col(&mut g, &[3.0, 4.0]);
        let (u, n) = normalize_clue(&mut g, z).unwrap();
        assert_eq!(g.value(n).data(), &[5.0]);
        let u = g.value(u).data();
        assert!((u[0] - 0.6).abs() < 1e-15 && (u[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut g = Graph::<f64>::new();
        let za = col(&mut g, &[1.0, 2.0, 3.0]);
        let zv = mat(&mut g, 2, &[1.0, 2.0]);
        assert!(summation_fuse(&mut g, za, zv).is_err());
    }
}
