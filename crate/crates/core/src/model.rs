//! The trainable completion network.
//!
//! Point proxies come from farthest-point-sampled patches of the input
//! cloud. They are pooled per planar segment into plane proxies, expanded
//! into ranked queries, refined by a small attention decoder, and finally
//! turned into planes, inlier points and confidences by three heads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffkit::{DiffError, Graph, ParamId, ParamStore, Tensor};
use crate::geom::{PlanePrimitive, Point3, EPS_D};
use crate::matchloss::PredictionTensors;
use crate::segment::{detect_planes, SegmentParams, Segmentation};
use crate::spatial::{farthest_point_sampling, PointIndex};
use crate::synth::resample;

/// Relative patch coordinates are multiplied by this before the point MLP,
/// bringing typical patch extents to order one.
const REL_SCALE: f64 = 10.0;
/// Hidden width of the shared per-point MLP.
const POINT_HIDDEN: usize = 32;
/// Additive attention logit for padded keys.
const MASKED: f64 = -1e9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expected {expected} input points, got {got}")]
    InputSize { expected: usize, got: usize },
    #[error("input contains non-finite coordinates")]
    NonFiniteInput,
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Feature width.
    pub f: usize,
    pub enc_depth: usize,
    pub dec_depth: usize,
    /// Plane proxies after padding.
    pub k: usize,
    /// Selected queries, i.e. predicted primitives.
    pub m: usize,
    /// Candidate queries generated from the global feature.
    pub global_queries: usize,
    /// Points per primitive.
    pub t: usize,
    /// Confidence threshold for inference-time selection.
    pub tau: f64,
    pub seed: u64,
    pub n_input: usize,
    pub n_proxies: usize,
    pub patch_k: usize,
    /// Hidden width of the point distributor.
    pub dist_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            f: 64,
            enc_depth: 2,
            dec_depth: 2,
            k: 20,
            m: 40,
            global_queries: 40,
            t: 128,
            tau: 0.5,
            seed: 0,
            n_input: 2048,
            n_proxies: 128,
            patch_k: 32,
            dist_hidden: 32,
        }
    }
}

impl ModelConfig {
    /// Small configuration for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            f: 8,
            m: 4,
            t: 8,
            k: 6,
            global_queries: 4,
            dist_hidden: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f", self.f),
            ("k", self.k),
            ("m", self.m),
            ("t", self.t),
            ("n_input", self.n_input),
            ("n_proxies", self.n_proxies),
            ("patch_k", self.patch_k),
            ("dist_hidden", self.dist_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if self.m > self.global_queries {
            return Err(ModelError::Config(format!(
                "m = {} exceeds the {} global queries",
                self.m, self.global_queries
            )));
        }
        if self.n_proxies > self.n_input || self.patch_k > self.n_input {
            return Err(ModelError::Config(
                "more proxies or patch points than input points".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(ModelError::Config("tau must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Mlp {
    l1: Linear,
    l2: Linear,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Attention {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct EncoderBlock {
    ln1: Norm,
    attn: Attention,
    ln2: Norm,
    ffn: Mlp,
}

#[derive(Debug, Clone, Copy)]
struct DecoderBlock {
    ln_self: Norm,
    self_attn: Attention,
    ln_cross: Norm,
    cross_attn: Attention,
    ln_ffn: Norm,
    ffn: Mlp,
}

#[derive(Debug, Clone)]
struct Layout {
    point_mlp: Mlp,
    pos_mlp: Mlp,
    encoder: Vec<EncoderBlock>,
    normal_embed: Mlp,
    memory_norm: Norm,
    query_input: Mlp,
    query_global: Mlp,
    query_score: Linear,
    decoder: Vec<DecoderBlock>,
    out_norm: Norm,
    param_head: Mlp,
    conf_head: Mlp,
    dist_feature: Linear,
    dist_embed: ParamId,
    dist_hidden: Linear,
    dist_out: Linear,
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: &str, rows: usize, cols: usize, bound: f64) -> Result<ParamId> {
        let v = (0..rows * cols)
            .map(|_| self.rng.random_range(-bound..=bound))
            .collect();
        Ok(self.store.add(name, rows, cols, v)?)
    }

    fn constant(&mut self, name: &str, rows: usize, cols: usize, c: f64) -> Result<ParamId> {
        Ok(self.store.add(name, rows, cols, vec![c; rows * cols])?)
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Ok(Linear {
            w: self.uniform(&format!("{name}.w"), fan_in, fan_out, bound)?,
            b: self.constant(&format!("{name}.b"), 1, fan_out, 0.0)?,
        })
    }

    fn mlp(&mut self, name: &str, a: usize, b: usize, c: usize) -> Result<Mlp> {
        Ok(Mlp {
            l1: self.linear(&format!("{name}.0"), a, b)?,
            l2: self.linear(&format!("{name}.1"), b, c)?,
        })
    }

    fn norm(&mut self, name: &str, f: usize) -> Result<Norm> {
        Ok(Norm {
            gamma: self.constant(&format!("{name}.gamma"), 1, f, 1.0)?,
            beta: self.constant(&format!("{name}.beta"), 1, f, 0.0)?,
        })
    }

    fn attention(&mut self, name: &str, f: usize) -> Result<Attention> {
        let bound = (3.0 / f as f64).sqrt();
        Ok(Attention {
            wq: self.uniform(&format!("{name}.q"), f, f, bound)?,
            wk: self.uniform(&format!("{name}.k"), f, f, bound)?,
            wv: self.uniform(&format!("{name}.v"), f, f, bound)?,
            wo: self.uniform(&format!("{name}.o"), f, f, bound)?,
        })
    }
}

/// Network parameters plus their configuration.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    layout: Layout,
}

/// Input cloud with its precomputed patch grouping and segmentation.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub points: Vec<Point3>,
    /// Point index of every patch center.
    pub centers: Vec<usize>,
    /// `patch_k` point indices per patch, flattened.
    pub patches: Vec<usize>,
    pub segmentation: Segmentation,
}

/// Assignment of point proxies to plane-proxy slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyLayout {
    /// Slot for each point proxy.
    pub slot_of_proxy: Vec<usize>,
    /// Segment index held by each real slot, in slot order.
    pub segments: Vec<usize>,
    /// Whether a null slot (unassigned centers) follows the real slots.
    pub has_null: bool,
    /// Padded slot count.
    pub k: usize,
}

impl ProxyLayout {
    pub fn valid(&self) -> usize {
        self.segments.len() + usize::from(self.has_null)
    }
}

/// Intermediate and final tensors of one forward pass.
pub struct ForwardOutput {
    pub point_proxies: Tensor,
    pub plane_proxies: Tensor,
    pub layout: ProxyLayout,
    /// Scores of all candidate queries.
    pub query_scores: Tensor,
    /// Candidate indices of the selected queries, in rank order.
    pub selected_queries: Vec<usize>,
    pub queries: Tensor,
    pub decoded: Tensor,
    /// Cross-attention weights (`M x K`) of each decoder block.
    pub attention: Vec<Tensor>,
    /// Raw parameter head outputs (`M x 3`).
    pub head_raw: Tensor,
    pub predictions: PredictionTensors,
}

/// Resamples a raw cloud to the input size, segments it and builds the
/// patch grouping.
pub fn prepare_cloud(
    points: &[Point3],
    seg: &SegmentParams,
    cfg: &ModelConfig,
) -> Result<PreparedInput> {
    if points.is_empty() {
        return Err(ModelError::InputSize {
            expected: cfg.n_input,
            got: 0,
        });
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(ModelError::NonFiniteInput);
    }
    let pts = if points.len() == cfg.n_input {
        points.to_vec()
    } else {
        resample(points, cfg.n_input)
    };
    let segmentation = detect_planes(&pts, seg);
    prepare_input(&pts, segmentation, cfg)
}

/// Builds the patch grouping for a cloud.
pub fn prepare_input(
    points: &[Point3],
    segmentation: Segmentation,
    cfg: &ModelConfig,
) -> Result<PreparedInput> {
    if points.len() != cfg.n_input {
        return Err(ModelError::InputSize {
            expected: cfg.n_input,
            got: points.len(),
        });
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(ModelError::NonFiniteInput);
    }
    let centers = farthest_point_sampling(points, cfg.n_proxies, 0);
    let index = PointIndex::new(points);
    let mut patches = Vec::with_capacity(centers.len() * cfg.patch_k);
    for &c in &centers {
        patches.extend(
            index
                .knn(points[c], cfg.patch_k)
                .into_iter()
                .map(|(i, _)| i),
        );
    }
    Ok(PreparedInput {
        points: points.to_vec(),
        centers,
        patches,
        segmentation,
    })
}

/// Maps every point proxy to the plane-proxy slot of its center's segment.
///
/// Centers outside any kept segment share one null slot. When there are
/// more segments than slots the best supported ones are kept.
pub fn proxy_layout(
    seg: &Segmentation,
    centers: &[usize],
    n_points: usize,
    k: usize,
) -> ProxyLayout {
    let labels = seg.labels(n_points);
    let any_unassigned = centers.iter().any(|&c| labels[c].is_none());
    let cap = if any_unassigned || seg.segments.len() > k {
        k - 1
    } else {
        k
    };
    let mut keep: Vec<usize> = (0..seg.segments.len()).collect();
    if keep.len() > cap {
        keep.sort_by(|&a, &b| {
            seg.segments[b]
                .members
                .len()
                .cmp(&seg.segments[a].members.len())
                .then(a.cmp(&b))
        });
        keep.truncate(cap);
        keep.sort_unstable();
    }
    let mut slot_of_segment = vec![usize::MAX; seg.segments.len()];
    for (slot, &s) in keep.iter().enumerate() {
        slot_of_segment[s] = slot;
    }
    let null = keep.len();
    let slot_of_proxy: Vec<usize> = centers
        .iter()
        .map(|&c| match labels[c] {
            Some(s) if slot_of_segment[s] != usize::MAX => slot_of_segment[s],
            _ => null,
        })
        .collect();
    let has_null = slot_of_proxy.contains(&null);
    ProxyLayout {
        slot_of_proxy,
        segments: keep,
        has_null,
        k,
    }
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut init = Init {
            store: &mut params,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        let f = config.f;
        let h = config.dist_hidden;
        let point_mlp = init.mlp("enc.point", 3, POINT_HIDDEN, f)?;
        let pos_mlp = init.mlp("enc.pos", 3, f, f)?;
        let encoder = (0..config.enc_depth)
            .map(|l| {
                Ok(EncoderBlock {
                    ln1: init.norm(&format!("enc.{l}.ln1"), f)?,
                    attn: init.attention(&format!("enc.{l}.attn"), f)?,
                    ln2: init.norm(&format!("enc.{l}.ln2"), f)?,
                    ffn: init.mlp(&format!("enc.{l}.ffn"), f, 2 * f, f)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let normal_embed = init.mlp("proxy.normal", 3, f, f)?;
        let memory_norm = init.norm("proxy.norm", f)?;
        let query_input = init.mlp("query.input", f, f, f)?;
        let query_global = init.mlp("query.global", f, f, config.global_queries * f)?;
        let query_score = init.linear("query.score", f, 1)?;
        let decoder = (0..config.dec_depth)
            .map(|l| {
                Ok(DecoderBlock {
                    ln_self: init.norm(&format!("dec.{l}.ln_self"), f)?,
                    self_attn: init.attention(&format!("dec.{l}.self"), f)?,
                    ln_cross: init.norm(&format!("dec.{l}.ln_cross"), f)?,
                    cross_attn: init.attention(&format!("dec.{l}.cross"), f)?,
                    ln_ffn: init.norm(&format!("dec.{l}.ln_ffn"), f)?,
                    ffn: init.mlp(&format!("dec.{l}.ffn"), f, 2 * f, f)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let out_norm = init.norm("dec.out_norm", f)?;
        let param_head = init.mlp("head.param", f, f, 3)?;
        let conf_head = init.mlp("head.conf", f, f, 1)?;
        let dist_feature = init.linear("dist.feature", f, h)?;
        let dist_embed = init.uniform("dist.embed", config.t, h, 1.0)?;
        let dist_hidden = init.linear("dist.hidden", h, h)?;
        let dist_out = init.linear("dist.out", h, 2)?;
        // Start planes at a distance typical of unit-diagonal shapes.
        let r_bias = (0.25f64.exp() - 1.0).ln();
        params.get_mut(param_head.l2.b).value[0] = r_bias;
        let layout = Layout {
            point_mlp,
            pos_mlp,
            encoder,
            normal_embed,
            memory_norm,
            query_input,
            query_global,
            query_score,
            decoder,
            out_norm,
            param_head,
            conf_head,
            dist_feature,
            dist_embed,
            dist_hidden,
            dist_out,
        };
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    /// Rebuilds a model around stored parameters, which must match the
    /// layout implied by `config`.
    pub fn with_params(config: ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut m = Self::new(config)?;
        m.params.copy_values_from(params)?;
        Ok(m)
    }

    fn p(&self, g: &mut Graph, id: ParamId) -> Result<Tensor> {
        Ok(g.param(&self.params, id)?)
    }

    fn linear(&self, g: &mut Graph, l: Linear, x: Tensor) -> Result<Tensor> {
        let w = self.p(g, l.w)?;
        let b = self.p(g, l.b)?;
        let y = g.matmul(x, w)?;
        Ok(g.add_bias(y, b)?)
    }

    fn mlp(&self, g: &mut Graph, m: Mlp, x: Tensor) -> Result<Tensor> {
        let h = self.linear(g, m.l1, x)?;
        let h = g.relu(h)?;
        self.linear(g, m.l2, h)
    }

    fn norm(&self, g: &mut Graph, n: Norm, x: Tensor) -> Result<Tensor> {
        let gamma = self.p(g, n.gamma)?;
        let beta = self.p(g, n.beta)?;
        Ok(g.layer_norm(x, gamma, beta)?)
    }

    /// Single-head scaled dot-product attention. Returns the output and the
    /// attention weights.
    fn attend(
        &self,
        g: &mut Graph,
        a: Attention,
        queries: Tensor,
        keys: Tensor,
        mask: Option<Tensor>,
    ) -> Result<(Tensor, Tensor)> {
        let wq = self.p(g, a.wq)?;
        let wk = self.p(g, a.wk)?;
        let wv = self.p(g, a.wv)?;
        let wo = self.p(g, a.wo)?;
        let q = g.matmul(queries, wq)?;
        let k = g.matmul(keys, wk)?;
        let v = g.matmul(keys, wv)?;
        let kt = g.transpose(k)?;
        let s = g.matmul(q, kt)?;
        let mut s = g.scale(s, 1.0 / (self.config.f as f64).sqrt())?;
        if let Some(m) = mask {
            s = g.add_bias(s, m)?;
        }
        let w = g.softmax(s)?;
        let o = g.matmul(w, v)?;
        Ok((g.matmul(o, wo)?, w))
    }

    /// Patch features: shared point MLP on relative coordinates, max-pooled
    /// per patch, plus a positional embedding of the center, then
    /// self-attention blocks.
    pub fn encode_point_proxies(&self, g: &mut Graph, input: &PreparedInput) -> Result<Tensor> {
        let kp = self.config.patch_k;
        let n = input.centers.len();
        let mut rel = Vec::with_capacity(n * kp * 3);
        let mut groups = Vec::with_capacity(n * kp);
        for (c, &center) in input.centers.iter().enumerate() {
            let o = input.points[center];
            for &i in &input.patches[c * kp..(c + 1) * kp] {
                rel.extend(((input.points[i] - o) * REL_SCALE).to_array());
                groups.push(c);
            }
        }
        let rel = g.leaf(n * kp, 3, rel)?;
        let h = self.mlp(g, self.layout.point_mlp, rel)?;
        let pooled = g.max_groups(h, &groups, n)?;
        let centers = g.leaf(
            n,
            3,
            input
                .centers
                .iter()
                .flat_map(|&c| input.points[c].to_array())
                .collect(),
        )?;
        let pos = self.mlp(g, self.layout.pos_mlp, centers)?;
        let mut x = g.add(pooled, pos)?;
        for blk in &self.layout.encoder {
            let y = self.norm(g, blk.ln1, x)?;
            let (a, _) = self.attend(g, blk.attn, y, y, None)?;
            x = g.add(x, a)?;
            let y = self.norm(g, blk.ln2, x)?;
            let y = self.mlp(g, blk.ffn, y)?;
            x = g.add(x, y)?;
        }
        Ok(x)
    }

    /// Sum-pools point proxies per segment and adds an embedding of the
    /// segment normal; pads with zero rows to `k`.
    pub fn build_plane_proxies(
        &self,
        g: &mut Graph,
        point_proxies: Tensor,
        input: &PreparedInput,
    ) -> Result<(Tensor, ProxyLayout)> {
        let k = self.config.k;
        let layout = proxy_layout(&input.segmentation, &input.centers, input.points.len(), k);
        let groups: Vec<Option<usize>> = layout.slot_of_proxy.iter().map(|&s| Some(s)).collect();
        let pooled = g.sum_groups(point_proxies, &groups, k)?;
        if layout.segments.is_empty() {
            return Ok((pooled, layout));
        }
        let normals: Vec<f64> = layout
            .segments
            .iter()
            .flat_map(|&s| {
                input.segmentation.segments[s]
                    .plane
                    .canonical()
                    .n
                    .to_array()
            })
            .collect();
        let normals = g.leaf(layout.segments.len(), 3, normals)?;
        let emb = self.mlp(g, self.layout.normal_embed, normals)?;
        let rest = k - layout.segments.len();
        let emb = if rest > 0 {
            let z = g.zeros(rest, self.config.f)?;
            g.concat_rows(&[emb, z])?
        } else {
            emb
        };
        Ok((g.add(pooled, emb)?, layout))
    }

    /// Layer norm over plane proxies; sums over many patches are otherwise
    /// far outside the range the attention and heads see at initialization.
    pub fn normalize_memory(&self, g: &mut Graph, plane_proxies: Tensor) -> Result<Tensor> {
        self.norm(g, self.layout.memory_norm, plane_proxies)
    }

    /// Candidate queries from every plane proxy and from the pooled global
    /// feature, ranked by a learned score. The top `m` non-padding candidates
    /// are kept (ties to the lower candidate index) and gated by the sigmoid
    /// of their score.
    pub fn generate_queries(
        &self,
        g: &mut Graph,
        plane_proxies: Tensor,
        valid: usize,
    ) -> Result<(Tensor, Tensor, Vec<usize>)> {
        let f = self.config.f;
        let qi = self.mlp(g, self.layout.query_input, plane_proxies)?;
        let rows: Vec<Option<usize>> = (0..self.config.k)
            .map(|i| (i < valid).then_some(0))
            .collect();
        let pooled = g.sum_groups(plane_proxies, &rows, 1)?;
        let pooled = g.scale(pooled, 1.0 / valid.max(1) as f64)?;
        let qg = self.mlp(g, self.layout.query_global, pooled)?;
        let qg = g.reshape(qg, self.config.global_queries, f)?;
        let cand = g.concat_rows(&[qi, qg])?;
        let scores = self.linear(g, self.layout.query_score, cand)?;
        // Padded proxies are identical rows; their queries are not eligible.
        let k = self.config.k;
        let eligible: Vec<usize> = (0..valid)
            .chain(k..k + self.config.global_queries)
            .collect();
        let eligible_scores: Vec<f64> = eligible.iter().map(|&i| g.value(scores)[i]).collect();
        let selected: Vec<usize> = top_m(&eligible_scores, self.config.m)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        let q = g.gather(cand, &selected)?;
        let s = g.gather(scores, &selected)?;
        let gate = g.sigmoid(s)?;
        Ok((g.mul_col(q, gate)?, scores, selected))
    }

    /// Query refinement: self-attention, cross-attention to the valid plane
    /// proxies, feed-forward. Returns refined queries and the cross-attention
    /// weights of each block.
    pub fn decode_proxies(
        &self,
        g: &mut Graph,
        plane_proxies: Tensor,
        valid: &[bool],
        queries: Tensor,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        let mask = g.leaf(
            1,
            valid.len(),
            valid
                .iter()
                .map(|&v| if v { 0.0 } else { MASKED })
                .collect(),
        )?;
        let mut x = queries;
        let mut weights = Vec::new();
        for blk in &self.layout.decoder {
            let y = self.norm(g, blk.ln_self, x)?;
            let (a, _) = self.attend(g, blk.self_attn, y, y, None)?;
            x = g.add(x, a)?;
            let y = self.norm(g, blk.ln_cross, x)?;
            let (a, w) = self.attend(g, blk.cross_attn, y, plane_proxies, Some(mask))?;
            weights.push(w);
            x = g.add(x, a)?;
            let y = self.norm(g, blk.ln_ffn, x)?;
            let y = self.mlp(g, blk.ffn, y)?;
            x = g.add(x, y)?;
        }
        Ok((self.norm(g, self.layout.out_norm, x)?, weights))
    }

    /// Polar plane parameters `(r, theta, phi)` per proxy (`M x 3`), with the
    /// raw head output.
    pub fn estimate_parameters(&self, g: &mut Graph, proxies: Tensor) -> Result<(Tensor, Tensor)> {
        let raw = self.mlp(g, self.layout.param_head, proxies)?;
        let planes = polar_activation(g, raw)?;
        Ok((planes, raw))
    }

    /// Confidence per proxy (`M x 1`).
    pub fn select_confidences(&self, g: &mut Graph, proxies: Tensor) -> Result<Tensor> {
        let logits = self.mlp(g, self.layout.conf_head, proxies)?;
        Ok(g.sigmoid(logits)?)
    }

    /// `T` points per plane. The head predicts in-plane offsets `(a, b)` in
    /// the tangent basis at the plane's foot point; the ray through
    /// `n + a e_theta + b e_phi` gives the polar angles of each point, and the
    /// point is placed on the plane at the radius implied by those angles.
    pub fn distribute_points(
        &self,
        g: &mut Graph,
        proxies: Tensor,
        planes: Tensor,
    ) -> Result<Tensor> {
        let m = proxies.rows();
        let t = self.config.t;
        let per_plane: Vec<usize> = (0..m * t).map(|i| i / t).collect();
        let per_slot: Vec<usize> = (0..m * t).map(|i| i % t).collect();

        let feat = self.linear(g, self.layout.dist_feature, proxies)?;
        let feat = g.gather(feat, &per_plane)?;
        let emb = self.p(g, self.layout.dist_embed)?;
        let emb = g.gather(emb, &per_slot)?;
        let h = g.add(feat, emb)?;
        let h = g.relu(h)?;
        let h = self.linear(g, self.layout.dist_hidden, h)?;
        let h = g.relu(h)?;
        let ab = self.linear(g, self.layout.dist_out, h)?;
        let a = g.slice_cols(ab, 0, 1)?;
        let b = g.slice_cols(ab, 1, 1)?;

        let planes = g.gather(planes, &per_plane)?;
        let r = g.slice_cols(planes, 0, 1)?;
        let theta = g.slice_cols(planes, 1, 1)?;
        let phi = g.slice_cols(planes, 2, 1)?;
        let (st, ct) = (g.sin(theta)?, g.cos(theta)?);
        let (sp, cp) = (g.sin(phi)?, g.cos(phi)?);

        // dir = n + a e_theta + b e_phi
        let nx = g.mul(st, cp)?;
        let ny = g.mul(st, sp)?;
        let etx = g.mul(ct, cp)?;
        let ety = g.mul(ct, sp)?;
        let dx = {
            let u = g.mul(a, etx)?;
            let v = g.mul(b, sp)?;
            let w = g.add(nx, u)?;
            g.sub(w, v)?
        };
        let dy = {
            let u = g.mul(a, ety)?;
            let v = g.mul(b, cp)?;
            let w = g.add(ny, u)?;
            g.add(w, v)?
        };
        let dz = {
            let u = g.mul(a, st)?;
            g.sub(ct, u)?
        };

        let dx2 = g.mul(dx, dx)?;
        let dy2 = g.mul(dy, dy)?;
        let rho2 = g.add(dx2, dy2)?;
        let rho = g.sqrt(rho2)?;
        let theta_ij = g.atan2(rho, dz)?;
        let phi_ij = g.atan2(dy, dx)?;

        // Rays nearly parallel to the plane fall back to the foot point.
        let denom = denominator(g, theta, phi, theta_ij, phi_ij)?;
        let bad: Vec<usize> = g
            .value(denom)
            .iter()
            .enumerate()
            .filter(|(_, d)| d.abs() < EPS_D)
            .map(|(i, _)| i)
            .collect();
        let (theta_ij, phi_ij, denom) = if bad.is_empty() {
            (theta_ij, phi_ij, denom)
        } else {
            let n = m * t;
            let mut pick: Vec<usize> = (0..n).collect();
            for &i in &bad {
                pick[i] = n + i;
            }
            let th = g.concat_rows(&[theta_ij, theta])?;
            let ph = g.concat_rows(&[phi_ij, phi])?;
            let th = g.gather(th, &pick)?;
            let ph = g.gather(ph, &pick)?;
            let d = denominator(g, theta, phi, th, ph)?;
            (th, ph, d)
        };

        let radius = g.div(r, denom)?;
        let (s2, c2) = (g.sin(theta_ij)?, g.cos(theta_ij)?);
        let (s3, c3) = (g.sin(phi_ij)?, g.cos(phi_ij)?);
        let ux = g.mul(s2, c3)?;
        let uy = g.mul(s2, s3)?;
        let x = g.mul(radius, ux)?;
        let y = g.mul(radius, uy)?;
        let z = g.mul(radius, c2)?;
        Ok(g.concat_cols(&[x, y, z])?)
    }

    /// Full pass from a prepared input to predictions.
    pub fn forward(&self, g: &mut Graph, input: &PreparedInput) -> Result<ForwardOutput> {
        let point_proxies = self.encode_point_proxies(g, input)?;
        let (plane_proxies, layout) = self.build_plane_proxies(g, point_proxies, input)?;
        let valid: Vec<bool> = (0..self.config.k).map(|i| i < layout.valid()).collect();
        let memory = self.normalize_memory(g, plane_proxies)?;
        let (queries, query_scores, selected_queries) =
            self.generate_queries(g, memory, layout.valid())?;
        let (decoded, attention) = self.decode_proxies(g, memory, &valid, queries)?;
        let (planes, head_raw) = self.estimate_parameters(g, decoded)?;
        let normals = normals_from_angles(g, planes)?;
        let points = self.distribute_points(g, decoded, planes)?;
        let kappa = self.select_confidences(g, decoded)?;
        let t = self.config.t;
        let ranges = (0..self.config.m).map(|j| j * t..(j + 1) * t).collect();
        Ok(ForwardOutput {
            point_proxies,
            plane_proxies,
            layout,
            query_scores,
            selected_queries,
            queries,
            decoded,
            attention,
            head_raw,
            predictions: PredictionTensors {
                planes,
                normals,
                points,
                ranges,
                kappa,
            },
        })
    }

    /// All `M` predicted primitives with their confidences.
    pub fn predict(&self, input: &PreparedInput) -> Result<Vec<PlanePrimitive>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, input)?;
        let mut prims = out.predictions.to_primitives(&g);
        for p in &mut prims {
            // tanh can round to exactly one.
            if p.plane.phi >= PI {
                p.plane.phi -= 2.0 * PI;
            }
        }
        Ok(prims)
    }
}

/// Indices of the `m` largest values; ties go to the lower index.
pub fn top_m(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// Primitives whose confidence reaches `tau`, in prediction order.
pub fn select_primitives(pred: &[PlanePrimitive], tau: f64) -> Vec<PlanePrimitive> {
    pred.iter()
        .filter(|p| p.confidence >= tau)
        .cloned()
        .collect()
}

/// `r = softplus(a)`, `theta = pi sigmoid(b)`, `phi = pi tanh(c)`.
pub fn polar_activation(g: &mut Graph, raw: Tensor) -> Result<Tensor> {
    let a = g.slice_cols(raw, 0, 1)?;
    let b = g.slice_cols(raw, 1, 1)?;
    let c = g.slice_cols(raw, 2, 1)?;
    let r = g.softplus(a)?;
    let th = g.sigmoid(b)?;
    let th = g.scale(th, PI)?;
    let ph = g.tanh(c)?;
    let ph = g.scale(ph, PI)?;
    Ok(g.concat_cols(&[r, th, ph])?)
}

/// Unit normals (`M x 3`) from plane angle columns.
pub fn normals_from_angles(g: &mut Graph, planes: Tensor) -> Result<Tensor> {
    let theta = g.slice_cols(planes, 1, 1)?;
    let phi = g.slice_cols(planes, 2, 1)?;
    let (st, ct) = (g.sin(theta)?, g.cos(theta)?);
    let (sp, cp) = (g.sin(phi)?, g.cos(phi)?);
    let x = g.mul(st, cp)?;
    let y = g.mul(st, sp)?;
    Ok(g.concat_cols(&[x, y, ct])?)
}

/// `cos(phi_ij - phi) sin(theta_ij) sin(theta) + cos(theta_ij) cos(theta)`.
fn denominator(
    g: &mut Graph,
    theta: Tensor,
    phi: Tensor,
    theta_ij: Tensor,
    phi_ij: Tensor,
) -> Result<Tensor> {
    let dphi = g.sub(phi_ij, phi)?;
    let c = g.cos(dphi)?;
    let s1 = g.sin(theta_ij)?;
    let s2 = g.sin(theta)?;
    let c1 = g.cos(theta_ij)?;
    let c2 = g.cos(theta)?;
    let a = g.mul(c, s1)?;
    let a = g.mul(a, s2)?;
    let b = g.mul(c1, c2)?;
    Ok(g.add(a, b)?)
}
