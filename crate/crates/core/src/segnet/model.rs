//! Reduced DGCNN and PointNet segmentation networks.
//!
//! DGCNN: three EdgeConv layers (3→64→64→128), their outputs concatenated
//! (256) and lifted to 512 channels, a global max-pool, the pooled vector
//! broadcast back onto every point (256 + 512 = 768) and a shared head
//! 768→256→128→3. PointNet: a shared MLP 3→64→128→256, global max-pool,
//! broadcast concat (512) and the head 512→256→128→3. Hidden layers use
//! leaky ReLU; the final layer emits raw logits.

use super::edgeconv::{edgeconv, edgeconv_backward, EdgeConvCache};
use super::ops::{
    global_maxpool, global_maxpool_backward, leaky_relu, leaky_relu_backward, linear,
    linear_backward, DEFAULT_SLOPE,
};
use super::tensor::{broadcast_rows, concat_cols, split_cols, sum_rows, Tensor};
use crate::dataio::{Arch, Checkpoint, NamedTensor, PointCloud};
use crate::error::{Error, Result};
use crate::graph::{knn_bruteforce, knn_grid, KnnGraph};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

pub const N_CLASSES: usize = 3;
pub const INPUT_DIM: usize = 3;
pub const DEFAULT_K: usize = 20;

/// How point coordinates are presented to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputMode {
    /// `(y / range_max, z / range_max, vr_norm)`.
    #[default]
    Cartesian,
    /// `(phi / 90, range / range_max, vr_norm)`.
    Polar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Neighbours per point in every EdgeConv graph.
    pub k: usize,
    pub n_classes: usize,
    /// EdgeConv output widths (DGCNN) or shared-MLP widths (PointNet).
    pub feature_widths: Vec<usize>,
    /// Width of the lifted per-point feature that is max-pooled (DGCNN).
    pub global_width: usize,
    /// Hidden widths of the segmentation head.
    pub head_widths: Vec<usize>,
    /// Rebuild each EdgeConv graph in the current feature space; otherwise
    /// every layer uses the spatial graph over `(y_s, z_s)`.
    pub dynamic_graph: bool,
    pub input_mode: InputMode,
    pub slope: f64,
}

impl ModelConfig {
    pub fn dgcnn() -> Self {
        Self {
            arch: Arch::Dgcnn,
            k: DEFAULT_K,
            n_classes: N_CLASSES,
            feature_widths: vec![64, 64, 128],
            global_width: 512,
            head_widths: vec![256, 128],
            dynamic_graph: true,
            input_mode: InputMode::Cartesian,
            slope: DEFAULT_SLOPE,
        }
    }

    pub fn pointnet() -> Self {
        Self {
            arch: Arch::PointNet,
            k: DEFAULT_K,
            n_classes: N_CLASSES,
            feature_widths: vec![64, 128, 256],
            global_width: 256,
            head_widths: vec![256, 128],
            dynamic_graph: false,
            input_mode: InputMode::Cartesian,
            slope: DEFAULT_SLOPE,
        }
    }

    pub fn for_arch(arch: Arch) -> Self {
        match arch {
            Arch::Dgcnn => Self::dgcnn(),
            Arch::PointNet => Self::pointnet(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.n_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if self.feature_widths.is_empty()
            || self.feature_widths.iter().chain(&self.head_widths).any(|&w| w == 0)
            || self.global_width == 0
        {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if self.arch == Arch::PointNet && self.global_width != *self.feature_widths.last().unwrap() {
            return Err(Error::invalid("PointNet pools its last shared-MLP layer"));
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(Error::invalid("leaky ReLU slope must be in (0, 1)"));
        }
        Ok(())
    }

    /// Names and shapes of every parameter, in a fixed order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut push = |prefix: String, d_in: usize, d_out: usize| {
            out.push((format!("{prefix}.weight"), vec![d_in, d_out]));
            out.push((format!("{prefix}.bias"), vec![d_out]));
        };
        let mut d = INPUT_DIM;
        let per_point = match self.arch {
            Arch::Dgcnn => {
                for (i, &w) in self.feature_widths.iter().enumerate() {
                    push(format!("edge{}", i + 1), 2 * d, w);
                    d = w;
                }
                let concat: usize = self.feature_widths.iter().sum();
                push("global".into(), concat, self.global_width);
                concat
            }
            Arch::PointNet => {
                for (i, &w) in self.feature_widths.iter().enumerate() {
                    push(format!("mlp{}", i + 1), d, w);
                    d = w;
                }
                d
            }
        };
        let mut d = per_point + self.global_width;
        for (i, &w) in self.head_widths.iter().enumerate() {
            push(format!("head{}", i + 1), d, w);
            d = w;
        }
        push(format!("head{}", self.head_widths.len() + 1), d, self.n_classes);
        out
    }
}

/// Named parameter tensors in [`ModelConfig::layout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    fn req(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .ok_or_else(|| Error::shape(format!("missing parameter {name}")))
    }

    pub fn convert<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.convert()).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ParamSet<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            t.scale(s);
        }
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

/// Per-cloud network input.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput<T> {
    /// `n × 3` input features.
    pub features: Tensor<T>,
    /// `n × 2` scaled Cartesian coordinates for the static graph.
    pub spatial: Vec<T>,
}

impl<T: Scalar> ModelInput<T> {
    pub fn from_cloud(cloud: &PointCloud, mode: InputMode) -> Result<Self> {
        let scale = cloud.geom.range_max;
        let mut features = Vec::with_capacity(cloud.len() * INPUT_DIM);
        let mut spatial = Vec::with_capacity(cloud.len() * 2);
        for p in &cloud.points {
            let ys = p.y / scale;
            let zs = p.z / scale;
            let (a, b) = match mode {
                InputMode::Cartesian => (ys, zs),
                InputMode::Polar => (p.phi / 90.0, p.range / scale),
            };
            features.extend([T::lit(a), T::lit(b), T::lit(p.vr_norm)]);
            spatial.extend([T::lit(ys), T::lit(zs)]);
        }
        Ok(Self {
            features: Tensor::matrix(cloud.len(), INPUT_DIM, features)?,
            spatial,
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    /// Reorders points: row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let d = self.features.cols();
        let mut f = Vec::with_capacity(self.features.len());
        let mut s = Vec::with_capacity(self.spatial.len());
        for &p in perm {
            f.extend_from_slice(self.features.row(p));
            s.extend_from_slice(&self.spatial[2 * p..2 * p + 2]);
        }
        Self {
            features: Tensor::matrix(perm.len(), d, f).expect("permutation length"),
            spatial: s,
        }
    }
}

struct DenseCache<T> {
    input: Tensor<T>,
    /// Pre-activation when the layer is followed by leaky ReLU.
    pre: Option<Tensor<T>>,
}

struct EdgeCache<T> {
    input: Tensor<T>,
    cache: EdgeConvCache<T>,
}

/// Intermediate values retained by [`SegModel::forward_tape`].
pub struct Tape<T> {
    edges: Vec<EdgeCache<T>>,
    mlp: Vec<DenseCache<T>>,
    global: Option<DenseCache<T>>,
    pool_argmax: Vec<usize>,
    per_point_width: usize,
    head: Vec<DenseCache<T>>,
    n: usize,
}

/// A segmentation network with parameters of element type `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegModel<T> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
}

fn dense<T: Scalar>(
    x: Tensor<T>,
    params: &ParamSet<T>,
    prefix: &str,
    activate: bool,
    slope: T,
) -> Result<(Tensor<T>, DenseCache<T>)> {
    let w = params.req(&format!("{prefix}.weight"))?;
    let b = params.req(&format!("{prefix}.bias"))?;
    let pre = linear(&x, w, b)?;
    if activate {
        let y = leaky_relu(&pre, slope);
        Ok((y, DenseCache { input: x, pre: Some(pre) }))
    } else {
        Ok((pre, DenseCache { input: x, pre: None }))
    }
}

fn dense_backward<T: Scalar>(
    cache: &DenseCache<T>,
    dy: &Tensor<T>,
    params: &ParamSet<T>,
    grads: &mut ParamSet<T>,
    prefix: &str,
    slope: T,
) -> Result<Tensor<T>> {
    let w = params.req(&format!("{prefix}.weight"))?;
    let d_pre = match &cache.pre {
        Some(pre) => leaky_relu_backward(pre, dy, slope),
        None => dy.clone(),
    };
    let g = linear_backward(&cache.input, w, &d_pre)?;
    *grads.get_mut(&format!("{prefix}.weight")).expect("grad slot") = g.dw;
    *grads.get_mut(&format!("{prefix}.bias")).expect("grad slot") = g.db;
    Ok(g.dx)
}

impl<T: Scalar> SegModel<T> {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape) in config.layout() {
            let t = if shape.len() == 2 {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                let data = (0..shape[0] * shape[1])
                    .map(|_| T::lit(rng.uniform(-limit, limit)))
                    .collect();
                Tensor::new(shape, data)?
            } else {
                Tensor::zeros(&shape)
            };
            names.push(name);
            tensors.push(t);
        }
        Ok(Self {
            config,
            params: ParamSet { names, tensors },
        })
    }

    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != params.tensors.len() {
            return Err(Error::shape(format!(
                "{} parameters for a layout of {}",
                params.tensors.len(),
                layout.len()
            )));
        }
        for ((name, shape), (pname, t)) in layout.iter().zip(params.names.iter().zip(&params.tensors)) {
            if name != pname || shape.as_slice() != t.shape() {
                return Err(Error::shape(format!(
                    "parameter {pname} {:?} does not match {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn convert<U: Scalar>(&self) -> SegModel<U> {
        SegModel {
            config: self.config.clone(),
            params: self.params.convert(),
        }
    }

    fn slope(&self) -> T {
        T::lit(self.config.slope)
    }

    fn static_graph(&self, input: &ModelInput<T>) -> Result<KnnGraph> {
        knn_grid(&input.spatial, input.n(), self.config.k)
    }

    pub fn forward(&self, input: &ModelInput<T>) -> Result<Tensor<T>> {
        Ok(self.forward_tape(input)?.0)
    }

    /// Forward pass retaining what the backward pass needs.
    pub fn forward_tape(&self, input: &ModelInput<T>) -> Result<(Tensor<T>, Tape<T>)> {
        let n = input.n();
        if input.features.cols() != INPUT_DIM || input.spatial.len() != 2 * n {
            return Err(Error::shape("model input must be n×3 features with n×2 coordinates"));
        }
        if n == 0 {
            return Err(Error::invalid("empty point cloud"));
        }
        let slope = self.slope();
        let mut tape = Tape {
            edges: Vec::new(),
            mlp: Vec::new(),
            global: None,
            pool_argmax: Vec::new(),
            per_point_width: 0,
            head: Vec::new(),
            n,
        };
        let per_point = match self.config.arch {
            Arch::Dgcnn => {
                if self.config.k >= n {
                    return Err(Error::invalid(format!(
                        "k = {} needs more than {n} points",
                        self.config.k
                    )));
                }
                let fixed = if self.config.dynamic_graph {
                    None
                } else {
                    Some(self.static_graph(input)?)
                };
                let mut current = input.features.clone();
                let mut outputs = Vec::with_capacity(self.config.feature_widths.len());
                for i in 0..self.config.feature_widths.len() {
                    let graph = match &fixed {
                        Some(g) => g.clone(),
                        None => knn_bruteforce(current.data(), n, current.cols(), self.config.k)?,
                    };
                    let w = self.params.req(&format!("edge{}.weight", i + 1))?;
                    let b = self.params.req(&format!("edge{}.bias", i + 1))?;
                    let (h, cache) = edgeconv(&current, &graph, w, b, slope)?;
                    tape.edges.push(EdgeCache {
                        input: current,
                        cache,
                    });
                    outputs.push(h.clone());
                    current = h;
                }
                let refs: Vec<&Tensor<T>> = outputs.iter().collect();
                let concat = concat_cols(&refs)?;
                let (lifted, cache) = dense(concat.clone(), &self.params, "global", true, slope)?;
                tape.global = Some(cache);
                let (pooled, argmax) = global_maxpool(&lifted)?;
                tape.pool_argmax = argmax;
                tape.per_point_width = concat.cols();
                concat_cols(&[&concat, &broadcast_rows(&pooled, n)])?
            }
            Arch::PointNet => {
                let mut current = input.features.clone();
                for i in 0..self.config.feature_widths.len() {
                    let (h, cache) = dense(current, &self.params, &format!("mlp{}", i + 1), true, slope)?;
                    tape.mlp.push(cache);
                    current = h;
                }
                let (pooled, argmax) = global_maxpool(&current)?;
                tape.pool_argmax = argmax;
                tape.per_point_width = current.cols();
                concat_cols(&[&current, &broadcast_rows(&pooled, n)])?
            }
        };
        let mut current = per_point;
        let n_head = self.config.head_widths.len() + 1;
        for i in 0..n_head {
            let last = i + 1 == n_head;
            let (h, cache) = dense(current, &self.params, &format!("head{}", i + 1), !last, slope)?;
            tape.head.push(cache);
            current = h;
        }
        Ok((current, tape))
    }

    /// Parameter gradients (and the input-feature gradient) for the upstream
    /// logit gradient `d_logits`.
    pub fn backward(&self, tape: &Tape<T>, d_logits: &Tensor<T>) -> Result<(ParamSet<T>, Tensor<T>)> {
        let slope = self.slope();
        let mut grads = self.params.zeros_like();
        let mut d = d_logits.clone();
        for (i, cache) in tape.head.iter().enumerate().rev() {
            d = dense_backward(cache, &d, &self.params, &mut grads, &format!("head{}", i + 1), slope)?;
        }
        let width = tape.per_point_width;
        let pooled_width = tape.pool_argmax.len();
        let mut parts = split_cols(&d, &[width, pooled_width])?.into_iter();
        let mut d_point = parts.next().expect("two blocks");
        let d_pooled = sum_rows(&parts.next().expect("two blocks"));
        let d_lifted = global_maxpool_backward(&d_pooled, &tape.pool_argmax, tape.n);
        let d_input = match self.config.arch {
            Arch::Dgcnn => {
                let global = tape.global.as_ref().expect("dgcnn tape");
                let d_concat = dense_backward(global, &d_lifted, &self.params, &mut grads, "global", slope)?;
                d_point.add_assign(&d_concat);
                let widths = &self.config.feature_widths;
                let mut blocks = split_cols(&d_point, widths)?;
                let mut carry: Option<Tensor<T>> = None;
                for i in (0..widths.len()).rev() {
                    let mut dy = std::mem::replace(&mut blocks[i], Tensor::zeros(&[0]));
                    if let Some(c) = carry.take() {
                        dy.add_assign(&c);
                    }
                    let edge = &tape.edges[i];
                    let w = self.params.req(&format!("edge{}.weight", i + 1))?;
                    let g = edgeconv_backward(&edge.input, w, &edge.cache, &dy, slope)?;
                    *grads.get_mut(&format!("edge{}.weight", i + 1)).expect("slot") = g.dw;
                    *grads.get_mut(&format!("edge{}.bias", i + 1)).expect("slot") = g.db;
                    carry = Some(g.dx);
                }
                carry.expect("at least one edge layer")
            }
            Arch::PointNet => {
                d_point.add_assign(&d_lifted);
                let mut d = d_point;
                for (i, cache) in tape.mlp.iter().enumerate().rev() {
                    d = dense_backward(cache, &d, &self.params, &mut grads, &format!("mlp{}", i + 1), slope)?;
                }
                d
            }
        };
        Ok((grads, d_input))
    }

    /// Class with the largest logit per point; ties go to the lower class.
    pub fn predict_ids(&self, input: &ModelInput<T>) -> Result<Vec<u8>> {
        let logits = self.forward(input)?;
        Ok(argmax_rows(&logits))
    }
}

pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<u8> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (c, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

const META_DYNAMIC: &str = "meta.dynamic_graph";
const META_INPUT_MODE: &str = "meta.input_mode";

impl SegModel<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<NamedTensor> = self
            .params
            .names
            .iter()
            .zip(&self.params.tensors)
            .map(|(name, t)| NamedTensor {
                name: name.clone(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        let flag = |name: &str, v: f32| NamedTensor {
            name: name.into(),
            shape: vec![1],
            data: vec![v],
        };
        tensors.push(flag(META_DYNAMIC, if self.config.dynamic_graph { 1.0 } else { 0.0 }));
        tensors.push(flag(
            META_INPUT_MODE,
            match self.config.input_mode {
                InputMode::Cartesian => 0.0,
                InputMode::Polar => 1.0,
            },
        ));
        Checkpoint {
            arch: self.config.arch,
            k: self.config.k as u16,
            n_classes: self.config.n_classes as u16,
            tensors,
        }
    }

    /// Rebuilds a model, inferring layer widths from the tensor shapes.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.validate()?;
        let width_of = |name: String| -> Option<usize> {
            ckpt.tensor(&name)
                .filter(|t| t.shape.len() == 2)
                .map(|t| t.shape[1])
        };
        let prefix = match ckpt.arch {
            Arch::Dgcnn => "edge",
            Arch::PointNet => "mlp",
        };
        let feature_widths: Vec<usize> = (1..)
            .map_while(|i| width_of(format!("{prefix}{i}.weight")))
            .collect();
        let head_all: Vec<usize> = (1..)
            .map_while(|i| width_of(format!("head{i}.weight")))
            .collect();
        if feature_widths.is_empty() || head_all.is_empty() {
            return Err(Error::shape("checkpoint is missing feature or head layers"));
        }
        let head_widths = head_all[..head_all.len() - 1].to_vec();
        let global_width = match ckpt.arch {
            Arch::Dgcnn => width_of("global.weight".into())
                .ok_or_else(|| Error::shape("checkpoint is missing global.weight"))?,
            Arch::PointNet => *feature_widths.last().expect("non-empty"),
        };
        let flag = |name: &str| ckpt.tensor(name).and_then(|t| t.data.first().copied());
        let defaults = ModelConfig::for_arch(ckpt.arch);
        let config = ModelConfig {
            arch: ckpt.arch,
            k: ckpt.k as usize,
            n_classes: ckpt.n_classes as usize,
            feature_widths,
            global_width,
            head_widths,
            dynamic_graph: flag(META_DYNAMIC).map(|v| v != 0.0).unwrap_or(defaults.dynamic_graph),
            input_mode: match flag(META_INPUT_MODE) {
                Some(v) if v != 0.0 => InputMode::Polar,
                _ => InputMode::Cartesian,
            },
            slope: DEFAULT_SLOPE,
        };
        config.validate()?;
        let layout = config.layout();
        let known = layout.len() + [META_DYNAMIC, META_INPUT_MODE].iter().filter(|m| ckpt.tensor(m).is_some()).count();
        if known != ckpt.tensors.len() {
            return Err(Error::shape("checkpoint holds tensors outside the architecture"));
        }
        let mut names = Vec::with_capacity(layout.len());
        let mut tensors = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let t = ckpt
                .tensor(&name)
                .ok_or_else(|| Error::shape(format!("checkpoint is missing {name}")))?;
            if t.shape != shape {
                return Err(Error::shape(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            tensors.push(Tensor::new(shape, t.data.clone())?);
            names.push(name);
        }
        Self::from_params(config, ParamSet { names, tensors })
    }
}
