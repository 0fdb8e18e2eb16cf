//! Edge-convolution encoders, attention blocks and output heads.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::params::{AttentionLayout, EdgeConvLayout, HeadLayout, ModelParams};
use super::tape::{matmul, Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::{canonical_axis_angle, PointCloud, Pose};

/// Clouds as network inputs: the target re-centred on its centroid and
/// scaled into the unit ball; parts (already centred on their centre of
/// mass) scaled by the same factor.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub target: Mat,
    pub parts: Vec<Mat>,
    pub center: Vector3<f64>,
    pub scale: f64,
    /// Global rotation applied to the target cloud.
    pub rotation: UnitQuaternion<f64>,
}

/// Random rotation and positional jitter drawn for one training example.
pub struct Augmentation<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub rotate: bool,
    pub jitter: f64,
}

pub fn cloud_matrix(cloud: &PointCloud) -> Mat {
    let mut m = Mat::zeros(cloud.len(), 6);
    for (i, (p, n)) in cloud.points.iter().zip(&cloud.normals).enumerate() {
        m.row_mut(i).copy_from_slice(&[p.x, p.y, p.z, n.x, n.y, n.z]);
    }
    m
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    UnitQuaternion::new_normalize(nalgebra::Quaternion::new(
        b * (tau * u3).cos(),
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
    ))
}

fn render(cloud: &PointCloud, center: &Vector3<f64>, scale: f64, rot: &UnitQuaternion<f64>) -> Mat {
    let mut m = Mat::zeros(cloud.len(), 6);
    for (i, (p, n)) in cloud.points.iter().zip(&cloud.normals).enumerate() {
        let p = rot * ((p - center) / scale);
        let n = rot * n;
        m.row_mut(i).copy_from_slice(&[p.x, p.y, p.z, n.x, n.y, n.z]);
    }
    m
}

impl Prepared {
    pub fn new(target: &PointCloud, parts: &[PointCloud], augment: Option<Augmentation>) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::InvalidInput("empty target cloud".into()));
        }
        let center = target.centroid();
        let radius = target.points.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
        let scale = if radius > 0.0 { radius } else { 1.0 };
        let mut rotation = UnitQuaternion::identity();
        let mut jitter = None;
        if let Some(aug) = augment {
            if aug.rotate {
                rotation = random_rotation(aug.rng);
            }
            if aug.jitter > 0.0 {
                jitter = Some((aug.rng, aug.jitter));
            }
        }
        let mut out = Self {
            target: render(target, &center, scale, &rotation),
            parts: parts
                .iter()
                .map(|c| render(c, &Vector3::zeros(), scale, &UnitQuaternion::identity()))
                .collect(),
            center,
            scale,
            rotation,
        };
        if let Some((rng, sigma)) = jitter {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
            for m in std::iter::once(&mut out.target).chain(out.parts.iter_mut()) {
                for r in 0..m.rows {
                    for c in 0..3 {
                        m.data[r * 6 + c] += normal.sample(rng);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Pose target in network units: translation then canonical axis-angle.
    pub fn pose_target(&self, pose: &Pose) -> [f64; 6] {
        let t = self.rotation * ((pose.translation - self.center) / self.scale);
        let r = canonical_axis_angle(&(self.rotation * pose.rotation));
        [t.x, t.y, t.z, r.x, r.y, r.z]
    }

    /// Inverse of [`Prepared::pose_target`].
    pub fn pose_from_output(&self, out: &[f64]) -> Pose {
        let inv = self.rotation.inverse();
        let t = inv * Vector3::new(out[0], out[1], out[2]) * self.scale + self.center;
        let r = UnitQuaternion::from_scaled_axis(Vector3::new(out[3], out[4], out[5]));
        Pose::new(t, inv * r)
    }
}

/// Indices of the `k` nearest other rows of `x` (first `dims` columns),
/// row-major `rows x k`. Ties go to the lower index.
pub fn knn(x: &Mat, dims: usize, k: usize) -> Vec<usize> {
    let n = x.rows;
    let dist: Box<dyn Fn(usize, usize) -> f64> = if dims <= 4 {
        Box::new(|i, j| x.row(j)[..dims].iter().zip(&x.row(i)[..dims]).map(|(a, b)| (a - b) * (a - b)).sum())
    } else {
        // |a - b|^2 = |a|^2 + |b|^2 - 2 a.b with one product for all pairs.
        let y = if dims == x.cols {
            x.clone()
        } else {
            Mat::from_vec(n, dims, (0..n).flat_map(|r| x.row(r)[..dims].to_vec()).collect())
        };
        let gram = matmul(&y, &y, true);
        let sq: Vec<f64> = (0..n).map(|r| gram.get(r, r)).collect();
        Box::new(move |i, j| sq[i] + sq[j] - 2.0 * gram.get(i, j))
    };
    let mut out = Vec::with_capacity(n * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (dist(i, j), j)));
        if cand.len() > k {
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
        }
        cand.sort_unstable_by(cmp);
        out.extend(cand.iter().map(|c| c.1));
    }
    out
}

/// Parameter handles on a tape, in [`ModelParams`] order.
pub struct Bound<'p> {
    pub params: &'p ModelParams,
    pub vars: Vec<Var>,
}

impl<'p> Bound<'p> {
    pub fn new(tape: &mut Tape, params: &'p ModelParams, trainable: bool) -> Self {
        let vars = params
            .tensors
            .iter()
            .map(|t| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        Self { params, vars }
    }

    fn v(&self, i: usize) -> Var {
        self.vars[i]
    }
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
    let y = tape.matmul(x, w);
    tape.add_bias(y, b)
}

fn edge_conv(tape: &mut Tape, p: &Bound, l: &EdgeConvLayout, x: Var, nbrs: &[usize], k: usize) -> Var {
    // W [x_i, x_j - x_i] = (W_self - W_diff) x_i + W_diff x_j
    let a = tape.matmul(x, p.v(l.w_self));
    let b = tape.matmul(x, p.v(l.w_diff));
    let c = tape.sub(a, b);
    tape.edge_max(c, b, p.v(l.bias), nbrs, k)
}

/// Per-point features of a cloud matrix.
pub(crate) fn encode_points(tape: &mut Tape, p: &Bound, cloud: &Mat) -> Result<Var> {
    let k = p.params.config.k_nn;
    if cloud.rows < k + 1 {
        return Err(Error::InvalidInput(format!(
            "cloud has {} points, need at least {}",
            cloud.rows,
            k + 1
        )));
    }
    let x = tape.constant(cloud.clone());
    let [l0, l1] = p.params.layout.edge;
    let f1 = edge_conv(tape, p, &l0, x, &knn(cloud, 3, k), k);
    let nbrs = knn(tape.value(f1), p.params.config.hidden, k);
    Ok(edge_conv(tape, p, &l1, f1, &nbrs, k))
}

pub(crate) fn encode_pooled(tape: &mut Tape, p: &Bound, cloud: &Mat) -> Result<Var> {
    let f = encode_points(tape, p, cloud)?;
    let rows = tape.value(f).rows;
    Ok(tape.group_max(f, rows))
}

/// One attention application with its closing residual, layer norm and MLP.
/// Returns the output and the softmax weights of each head.
pub(crate) fn attend(tape: &mut Tape, p: &Bound, a: &AttentionLayout, q: Var, kv: Var) -> (Var, Vec<Var>) {
    let heads = p.params.config.heads;
    let dh = p.params.config.hidden / heads;
    let qp = tape.matmul(q, p.v(a.wq));
    let kp = tape.matmul(kv, p.v(a.wk));
    let vp = tape.matmul(kv, p.v(a.wv));
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (qp, kp, vp)
        } else {
            (
                tape.slice_cols(qp, h * dh, dh),
                tape.slice_cols(kp, h * dh, dh),
                tape.slice_cols(vp, h * dh, dh),
            )
        };
        let s = tape.matmul_t(qh, kh);
        let s = tape.scale(s, 1.0 / (dh as f64).sqrt());
        let w = tape.softmax(s);
        weights.push(w);
        outs.push(tape.matmul(w, vh));
    }
    let att = if heads == 1 { outs[0] } else { tape.concat_cols(&outs) };
    let x = tape.add(q, att);
    let y = tape.layer_norm(x, p.v(a.ln_gain), p.v(a.ln_shift));
    let m = linear(tape, y, p.v(a.w1), p.v(a.b1));
    let m = tape.gelu(m);
    let m = linear(tape, m, p.v(a.w2), p.v(a.b2));
    (tape.add(y, m), weights)
}

/// Self-attention on target and parts, then each attends to the other.
pub(crate) fn block(tape: &mut Tape, p: &Bound, i: usize, v: Var, u: Var) -> (Var, Var) {
    let b = p.params.layout.blocks[i];
    let (v1, _) = attend(tape, p, &b.target_self, v, v);
    let (u1, _) = attend(tape, p, &b.parts_self, u, u);
    let (v2, _) = attend(tape, p, &b.target_from_parts, v1, u1);
    let (u2, _) = attend(tape, p, &b.parts_from_target, u1, v1);
    (v2, u2)
}

fn head(tape: &mut Tape, p: &Bound, h: &HeadLayout, u: Var) -> Var {
    let x = linear(tape, u, p.v(h.w1), p.v(h.b1));
    let x = tape.gelu(x);
    linear(tape, x, p.v(h.w2), p.v(h.b2))
}

/// Probability column (parts x 1) and pose rows (parts x 6).
pub(crate) struct Outputs {
    pub probs: Var,
    pub poses: Var,
}

pub(crate) fn forward_graph(tape: &mut Tape, p: &Bound, input: &Prepared) -> Result<Outputs> {
    if input.parts.is_empty() {
        return Err(Error::InvalidInput("forward needs at least one remaining part".into()));
    }
    let mut v = encode_points(tape, p, &input.target)?;
    let pooled = input
        .parts
        .iter()
        .map(|c| encode_pooled(tape, p, c))
        .collect::<Result<Vec<_>>>()?;
    let mut u = tape.concat_rows(&pooled);
    for i in 0..p.params.config.blocks {
        (v, u) = block(tape, p, i, v, u);
    }
    let logits = head(tape, p, &p.params.layout.prob, u);
    let probs = tape.sigmoid(logits);
    let poses = head(tape, p, &p.params.layout.pose, u);
    Ok(Outputs { probs, poses })
}

/// Network output for one set of remaining parts.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    /// Predicted assembled pose of each part's centred frame.
    pub poses: Vec<Pose>,
}

pub fn forward_prepared(input: &Prepared, params: &ModelParams) -> Result<Prediction> {
    let mut tape = Tape::new();
    let p = Bound::new(&mut tape, params, false);
    let out = forward_graph(&mut tape, &p, input)?;
    let poses = tape.value(out.poses);
    Ok(Prediction {
        probabilities: tape.value(out.probs).data.clone(),
        poses: (0..poses.rows).map(|r| input.pose_from_output(poses.row(r))).collect(),
    })
}

/// Feasibility probability and assembled pose for each remaining part.
pub fn forward(target: &PointCloud, parts: &[PointCloud], params: &ModelParams) -> Result<Prediction> {
    forward_prepared(&Prepared::new(target, parts, None)?, params)
}

/// Per-point target features (`points x h`) of a raw cloud.
pub fn encode_target(cloud: &PointCloud, params: &ModelParams) -> Result<Mat> {
    let mut tape = Tape::new();
    let p = Bound::new(&mut tape, params, false);
    let f = encode_points(&mut tape, &p, &cloud_matrix(cloud))?;
    Ok(tape.value(f).clone())
}

/// Max-pooled feature vector of a raw part cloud.
pub fn encode_part(cloud: &PointCloud, params: &ModelParams) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let p = Bound::new(&mut tape, params, false);
    let f = encode_pooled(&mut tape, &p, &cloud_matrix(cloud))?;
    Ok(tape.value(f).data.clone())
}

/// Which of a block's four attention applications to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionSlot {
    TargetSelf,
    PartsSelf,
    TargetFromParts,
    PartsFromTarget,
}

#[derive(Clone, Debug)]
pub struct AttentionOutput {
    pub output: Mat,
    /// Softmax weights per head, `query rows x key rows`.
    pub weights: Vec<Mat>,
}

/// Queries `q` attending to keys and values `k` with the weights of
/// `block`'s `slot`.
pub fn attention(q: &Mat, k: &Mat, params: &ModelParams, block: usize, slot: AttentionSlot) -> AttentionOutput {
    let b = params.layout.blocks[block];
    let a = match slot {
        AttentionSlot::TargetSelf => b.target_self,
        AttentionSlot::PartsSelf => b.parts_self,
        AttentionSlot::TargetFromParts => b.target_from_parts,
        AttentionSlot::PartsFromTarget => b.parts_from_target,
    };
    let mut tape = Tape::new();
    let p = Bound::new(&mut tape, params, false);
    let qv = tape.constant(q.clone());
    let kv = tape.constant(k.clone());
    let (out, w) = attend(&mut tape, &p, &a, qv, kv);
    AttentionOutput {
        output: tape.value(out).clone(),
        weights: w.iter().map(|w| tape.value(*w).clone()).collect(),
    }
}

/// One block on target features `v` and part features `u`.
pub fn past_block(v: &Mat, u: &Mat, params: &ModelParams, index: usize) -> (Mat, Mat) {
    let mut tape = Tape::new();
    let p = Bound::new(&mut tape, params, false);
    let vv = tape.constant(v.clone());
    let uv = tape.constant(u.clone());
    let (a, b) = block(&mut tape, &p, index, vv, uv);
    (tape.value(a).clone(), tape.value(b).clone())
}
